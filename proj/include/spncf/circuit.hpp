#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "spncf/errors.hpp"

namespace spncf {

inline constexpr int kFormatVersion = 1;
inline constexpr double kDefaultVarianceFloor = 1e-3;
inline constexpr double kNormalizationTolerance = 1e-9;

struct NodeId {
  std::uint32_t index = 0;

  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

// Evidence is a length-d vector; NaN marks a missing (marginalized) variable.
using Evidence = Eigen::VectorXd;

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double value) { return std::isnan(value); }

// A sorted set of variable indices.
class Scope {
 public:
  Scope() = default;
  explicit Scope(std::vector<int> variables);

  const std::vector<int>& variables() const { return variables_; }
  std::size_t size() const { return variables_.size(); }
  bool empty() const { return variables_.empty(); }
  bool contains(int variable) const;
  bool disjoint(const Scope& other) const;
  Scope merged(const Scope& other) const;

  friend bool operator==(const Scope&, const Scope&) = default;

 private:
  std::vector<int> variables_;
};

struct GaussianLeaf {
  int variable = 0;
  double mean = 0.0;
  double variance = 1.0;
};

struct CategoricalLeaf {
  int variable = 0;
  Eigen::VectorXd probabilities;
};

struct BernoulliLeaf {
  int variable = 0;
  double p = 0.5;
};

struct SumNode {
  std::vector<NodeId> children;
  Eigen::VectorXd log_weights;
};

struct ProductNode {
  std::vector<NodeId> children;
};

using Node =
    std::variant<GaussianLeaf, CategoricalLeaf, BernoulliLeaf, SumNode, ProductNode>;

bool is_leaf(const Node& node);
// Variable index of a leaf; -1 for inner nodes.
int leaf_variable(const Node& node);
const std::vector<NodeId>* children_of(const Node& node);

// Log-density of a leaf at an observed value (log 1 when the value is missing).
double leaf_log_density(const Node& leaf, double value);
// d/dx of leaf_log_density; zero for discrete families and missing values.
double leaf_log_density_derivative(const Node& leaf, double value);

// A multi-rooted sum-product network. Nodes live in a flat arena in
// topological order (children before parents). Each class root represents a
// class-conditional density S(x | y); the mixture over classes with
// `log_prior` is implicit.
struct Circuit {
  std::vector<Node> nodes;
  std::vector<NodeId> class_roots;
  Eigen::VectorXd log_prior;
  int num_variables = 0;
  int format_version = kFormatVersion;
  double variance_floor = kDefaultVarianceFloor;

  std::size_t size() const { return nodes.size(); }
  int num_classes() const { return static_cast<int>(class_roots.size()); }
  const Node& node(NodeId id) const { return nodes.at(id.index); }

  // Appends a node and returns its id. Children must already exist.
  NodeId add(Node node);
  NodeId add_gaussian(int variable, double mean, double variance);
  NodeId add_bernoulli(int variable, double p);
  NodeId add_categorical(int variable, Eigen::VectorXd probabilities);
  NodeId add_product(std::vector<NodeId> children);
  // Uniform weights when log_weights is empty.
  NodeId add_sum(std::vector<NodeId> children, Eigen::VectorXd log_weights = {});

  // Sets a single class root with prior 1.
  void set_root(NodeId root);
  // Sets class roots with a uniform prior.
  void set_class_roots(std::vector<NodeId> roots);
};

enum class ViolationKind {
  kDanglingReference,
  kAcyclicity,
  kTopologicalOrder,
  kSmoothness,
  kDecomposability,
  kWeightNormalization,
  kArity,
  kLeafParameters,
  kRootScope,
  kPrior,
};

std::string to_string(ViolationKind kind);

struct Violation {
  NodeId node;
  ViolationKind kind;
  std::string message;
};

struct ValidationReport {
  bool ok = true;
  std::vector<Violation> violations;

  bool has(ViolationKind kind) const;
  std::string summary() const;
};

ValidationReport validate(const Circuit& circuit);

// Thrown when a circuit that must be valid is not.
class ValidationError : public InputError {
 public:
  explicit ValidationError(ValidationReport report)
      : InputError("circuit validation failed: " + report.summary()),
        report_(std::move(report)) {}
  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

// Throws ValidationError when validate() reports violations.
void require_valid(const Circuit& circuit);

// Scope of every node, indexed by NodeId. Requires an acyclic circuit with
// resolvable references.
std::vector<Scope> node_scopes(const Circuit& circuit);

// Indices of all nodes reachable from `roots`, ascending (hence topological).
std::vector<std::uint32_t> evaluation_schedule(const Circuit& circuit,
                                               const std::vector<NodeId>& roots);

// Bottom-up log-space pass over `schedule` (all nodes when empty). Writes the
// log value of each scheduled node into `out`, which must have circuit.size()
// entries. No input checking; callers validate evidence first.
void forward(const Circuit& circuit, const Eigen::Ref<const Evidence>& x,
             Eigen::Ref<Eigen::VectorXd> out,
             const std::vector<std::uint32_t>& schedule = {});

// Throws InputError unless x has length d and every present value is finite.
void check_evidence(const Circuit& circuit, const Eigen::Ref<const Evidence>& x);

// log S_root(x), in nats.
double log_value(const Circuit& circuit, NodeId root, const Eigen::Ref<const Evidence>& x);

}  // namespace spncf
