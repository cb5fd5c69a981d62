#include "spncf/circuit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "spncf/numeric.hpp"

namespace spncf {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

// Integer level of a discrete observation, or -1 if the value is not one.
long discrete_level(double value) {
  const double rounded = std::round(value);
  if (rounded != value || rounded < 0.0) return -1;
  return static_cast<long>(rounded);
}

}  // namespace

// ---------------------------------------------------------------------------
// Scope

Scope::Scope(std::vector<int> variables) : variables_(std::move(variables)) {
  std::sort(variables_.begin(), variables_.end());
  variables_.erase(std::unique(variables_.begin(), variables_.end()), variables_.end());
}

bool Scope::contains(int variable) const {
  return std::binary_search(variables_.begin(), variables_.end(), variable);
}

bool Scope::disjoint(const Scope& other) const {
  auto a = variables_.begin();
  auto b = other.variables_.begin();
  while (a != variables_.end() && b != other.variables_.end()) {
    if (*a == *b) return false;
    if (*a < *b) {
      ++a;
    } else {
      ++b;
    }
  }
  return true;
}

Scope Scope::merged(const Scope& other) const {
  Scope out;
  out.variables_.reserve(size() + other.size());
  std::set_union(variables_.begin(), variables_.end(), other.variables_.begin(),
                 other.variables_.end(), std::back_inserter(out.variables_));
  return out;
}

// ---------------------------------------------------------------------------
// Node helpers

bool is_leaf(const Node& node) {
  return !std::holds_alternative<SumNode>(node) && !std::holds_alternative<ProductNode>(node);
}

int leaf_variable(const Node& node) {
  return std::visit(Overloaded{
                        [](const GaussianLeaf& n) { return n.variable; },
                        [](const CategoricalLeaf& n) { return n.variable; },
                        [](const BernoulliLeaf& n) { return n.variable; },
                        [](const auto&) { return -1; },
                    },
                    node);
}

const std::vector<NodeId>* children_of(const Node& node) {
  if (const auto* sum = std::get_if<SumNode>(&node)) return &sum->children;
  if (const auto* product = std::get_if<ProductNode>(&node)) return &product->children;
  return nullptr;
}

double leaf_log_density(const Node& leaf, double value) {
  if (is_missing(value)) return 0.0;
  return std::visit(
      Overloaded{
          [value](const GaussianLeaf& n) {
            const double diff = value - n.mean;
            return -0.5 * (kLogTwoPi + std::log(n.variance) + diff * diff / n.variance);
          },
          [value](const BernoulliLeaf& n) {
            const long level = discrete_level(value);
            if (level == 1) return std::log(n.p);
            if (level == 0) return std::log1p(-n.p);
            throw InputError("Bernoulli leaf on variable " + std::to_string(n.variable) +
                             " observed non-binary value");
          },
          [value](const CategoricalLeaf& n) {
            const long level = discrete_level(value);
            if (level < 0 || level >= n.probabilities.size()) {
              throw InputError("categorical leaf on variable " + std::to_string(n.variable) +
                               " observed invalid level");
            }
            return std::log(n.probabilities[level]);
          },
          [](const auto&) -> double { throw Error("leaf_log_density on inner node"); },
      },
      leaf);
}

double leaf_log_density_derivative(const Node& leaf, double value) {
  if (is_missing(value)) return 0.0;
  if (const auto* g = std::get_if<GaussianLeaf>(&leaf)) {
    return -(value - g->mean) / g->variance;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Circuit construction

NodeId Circuit::add(Node node) {
  if (const auto* children = children_of(node)) {
    for (NodeId child : *children) {
      if (child.index >= nodes.size()) {
        throw InputError("child " + std::to_string(child.index) + " does not exist yet");
      }
    }
  }
  nodes.push_back(std::move(node));
  return NodeId{static_cast<std::uint32_t>(nodes.size() - 1)};
}

NodeId Circuit::add_gaussian(int variable, double mean, double variance) {
  return add(GaussianLeaf{variable, mean, variance});
}

NodeId Circuit::add_bernoulli(int variable, double p) { return add(BernoulliLeaf{variable, p}); }

NodeId Circuit::add_categorical(int variable, Eigen::VectorXd probabilities) {
  return add(CategoricalLeaf{variable, std::move(probabilities)});
}

NodeId Circuit::add_product(std::vector<NodeId> children) {
  return add(ProductNode{std::move(children)});
}

NodeId Circuit::add_sum(std::vector<NodeId> children, Eigen::VectorXd log_weights) {
  if (log_weights.size() == 0) {
    const auto n = static_cast<Eigen::Index>(children.size());
    log_weights = Eigen::VectorXd::Constant(n, -std::log(static_cast<double>(n)));
  }
  return add(SumNode{std::move(children), std::move(log_weights)});
}

void Circuit::set_root(NodeId root) { set_class_roots({root}); }

void Circuit::set_class_roots(std::vector<NodeId> roots) {
  class_roots = std::move(roots);
  const auto c = static_cast<Eigen::Index>(class_roots.size());
  log_prior = Eigen::VectorXd::Constant(c, -std::log(static_cast<double>(c)));
}

// ---------------------------------------------------------------------------
// Validation

std::string to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kDanglingReference: return "dangling_reference";
    case ViolationKind::kAcyclicity: return "acyclicity";
    case ViolationKind::kTopologicalOrder: return "topological_order";
    case ViolationKind::kSmoothness: return "smoothness";
    case ViolationKind::kDecomposability: return "decomposability";
    case ViolationKind::kWeightNormalization: return "weight_normalization";
    case ViolationKind::kArity: return "arity";
    case ViolationKind::kLeafParameters: return "leaf_parameters";
    case ViolationKind::kRootScope: return "root_scope";
    case ViolationKind::kPrior: return "prior";
  }
  return "unknown";
}

bool ValidationReport::has(ViolationKind kind) const {
  return std::any_of(violations.begin(), violations.end(),
                     [kind](const Violation& v) { return v.kind == kind; });
}

std::string ValidationReport::summary() const {
  if (violations.empty()) return "ok";
  std::ostringstream os;
  for (std::size_t i = 0; i < violations.size() && i < 5; ++i) {
    const auto& v = violations[i];
    if (i) os << "; ";
    os << "node " << v.node.index << " " << to_string(v.kind) << ": " << v.message;
  }
  if (violations.size() > 5) os << "; ... (" << violations.size() << " total)";
  return os.str();
}

namespace {

// Scope per node via memoized post-order traversal. Assumes references resolve
// and the graph is acyclic.
std::vector<Scope> compute_scopes(const Circuit& circuit) {
  const std::size_t n = circuit.size();
  std::vector<Scope> scopes(n);
  std::vector<char> done(n, 0);
  std::vector<std::pair<std::uint32_t, bool>> stack;
  for (std::uint32_t start = 0; start < n; ++start) {
    if (done[start]) continue;
    stack.emplace_back(start, false);
    while (!stack.empty()) {
      auto [id, expanded] = stack.back();
      stack.pop_back();
      if (done[id]) continue;
      const Node& node = circuit.nodes[id];
      const auto* children = children_of(node);
      if (!children) {
        scopes[id] = Scope({leaf_variable(node)});
        done[id] = 1;
        continue;
      }
      if (!expanded) {
        stack.emplace_back(id, true);
        for (NodeId child : *children) {
          if (!done[child.index]) stack.emplace_back(child.index, false);
        }
        continue;
      }
      Scope scope;
      for (NodeId child : *children) scope = scope.merged(scopes[child.index]);
      scopes[id] = std::move(scope);
      done[id] = 1;
    }
  }
  return scopes;
}

bool has_cycle(const Circuit& circuit, std::vector<Violation>& violations) {
  const std::size_t n = circuit.size();
  // 0 = unvisited, 1 = on stack, 2 = finished
  std::vector<char> state(n, 0);
  bool found = false;
  std::vector<std::pair<std::uint32_t, std::size_t>> stack;
  for (std::uint32_t start = 0; start < n; ++start) {
    if (state[start]) continue;
    stack.emplace_back(start, 0);
    state[start] = 1;
    while (!stack.empty()) {
      auto& [id, next] = stack.back();
      const auto* children = children_of(circuit.nodes[id]);
      if (children && next < children->size()) {
        const std::uint32_t child = (*children)[next++].index;
        if (state[child] == 1) {
          violations.push_back({NodeId{id}, ViolationKind::kAcyclicity,
                                "edge to node " + std::to_string(child) + " closes a cycle"});
          found = true;
        } else if (state[child] == 0) {
          state[child] = 1;
          stack.emplace_back(child, 0);
        }
      } else {
        state[id] = 2;
        stack.pop_back();
      }
    }
  }
  return found;
}

void check_leaf(const Circuit& circuit, std::uint32_t id, std::vector<Violation>& out) {
  const Node& node = circuit.nodes[id];
  const int variable = leaf_variable(node);
  auto report = [&](std::string message) {
    out.push_back({NodeId{id}, ViolationKind::kLeafParameters, std::move(message)});
  };
  if (variable < 0 || variable >= circuit.num_variables) {
    report("variable " + std::to_string(variable) + " outside [0, " +
           std::to_string(circuit.num_variables) + ")");
  }
  if (const auto* g = std::get_if<GaussianLeaf>(&node)) {
    if (!std::isfinite(g->mean)) report("non-finite mean");
    if (!std::isfinite(g->variance) || g->variance < circuit.variance_floor ||
        g->variance <= 0.0) {
      report("variance below floor");
    }
  } else if (const auto* b = std::get_if<BernoulliLeaf>(&node)) {
    if (!(b->p >= 0.0 && b->p <= 1.0)) report("p outside [0, 1]");
  } else if (const auto* c = std::get_if<CategoricalLeaf>(&node)) {
    const auto& p = c->probabilities;
    if (p.size() == 0 || !p.allFinite() || (p.array() < 0.0).any() ||
        std::abs(p.sum() - 1.0) > kNormalizationTolerance) {
      report("probabilities not on the simplex");
    }
  }
}

}  // namespace

ValidationReport validate(const Circuit& circuit) {
  ValidationReport report;
  auto& v = report.violations;
  const std::size_t n = circuit.size();

  bool references_ok = true;
  for (std::uint32_t id = 0; id < n; ++id) {
    const Node& node = circuit.nodes[id];
    const auto* children = children_of(node);
    if (!children) {
      check_leaf(circuit, id, v);
      continue;
    }
    if (children->empty()) {
      v.push_back({NodeId{id}, ViolationKind::kArity, "inner node without children"});
    }
    for (NodeId child : *children) {
      if (child.index >= n) {
        v.push_back({NodeId{id}, ViolationKind::kDanglingReference,
                     "child " + std::to_string(child.index) + " does not exist"});
        references_ok = false;
      } else if (child.index >= id) {
        v.push_back({NodeId{id}, ViolationKind::kTopologicalOrder,
                     "child " + std::to_string(child.index) + " does not precede its parent"});
      }
    }
    if (const auto* sum = std::get_if<SumNode>(&node)) {
      const auto& w = sum->log_weights;
      if (static_cast<std::size_t>(w.size()) != sum->children.size()) {
        v.push_back({NodeId{id}, ViolationKind::kWeightNormalization,
                     "weight count differs from child count"});
      } else if (w.size() > 0) {
        const bool bad_entry = (w.array().isNaN() || w.array() == std::numeric_limits<double>::infinity()).any();
        const double total = w.array().exp().sum();
        if (bad_entry || std::abs(total - 1.0) > kNormalizationTolerance) {
          v.push_back({NodeId{id}, ViolationKind::kWeightNormalization,
                       "weights sum to " + std::to_string(total)});
        }
      }
    }
  }

  for (std::size_t c = 0; c < circuit.class_roots.size(); ++c) {
    if (circuit.class_roots[c].index >= n) {
      v.push_back({circuit.class_roots[c], ViolationKind::kDanglingReference,
                   "class root " + std::to_string(c) + " does not exist"});
      references_ok = false;
    }
  }
  if (circuit.class_roots.empty()) {
    v.push_back({NodeId{}, ViolationKind::kRootScope, "circuit has no class roots"});
  }
  const auto& prior = circuit.log_prior;
  if (static_cast<std::size_t>(prior.size()) != circuit.class_roots.size()) {
    v.push_back({NodeId{}, ViolationKind::kPrior, "log_prior length differs from class count"});
  } else if (prior.size() > 0 &&
             ((prior.array().isNaN()).any() ||
              std::abs(prior.array().exp().sum() - 1.0) > kNormalizationTolerance)) {
    v.push_back({NodeId{}, ViolationKind::kPrior, "prior does not sum to 1"});
  }

  if (references_ok && !has_cycle(circuit, v)) {
    const auto scopes = compute_scopes(circuit);
    for (std::uint32_t id = 0; id < n; ++id) {
      const Node& node = circuit.nodes[id];
      if (const auto* sum = std::get_if<SumNode>(&node)) {
        for (NodeId child : sum->children) {
          if (scopes[child.index] != scopes[sum->children.front().index]) {
            v.push_back({NodeId{id}, ViolationKind::kSmoothness,
                         "children have different scopes"});
            break;
          }
        }
      } else if (const auto* product = std::get_if<ProductNode>(&node)) {
        Scope seen;
        for (NodeId child : product->children) {
          if (!seen.disjoint(scopes[child.index])) {
            v.push_back({NodeId{id}, ViolationKind::kDecomposability,
                         "children have overlapping scopes"});
            break;
          }
          seen = seen.merged(scopes[child.index]);
        }
      }
    }
    for (NodeId root : circuit.class_roots) {
      const auto& scope = scopes[root.index];
      if (static_cast<int>(scope.size()) != circuit.num_variables ||
          (!scope.empty() && (scope.variables().front() != 0 ||
                              scope.variables().back() != circuit.num_variables - 1))) {
        v.push_back({root, ViolationKind::kRootScope, "class root does not cover all variables"});
      }
    }
  }

  report.ok = v.empty();
  return report;
}

void require_valid(const Circuit& circuit) {
  auto report = validate(circuit);
  if (!report.ok) throw ValidationError(std::move(report));
}

std::vector<Scope> node_scopes(const Circuit& circuit) { return compute_scopes(circuit); }

// ---------------------------------------------------------------------------
// Evaluation

std::vector<std::uint32_t> evaluation_schedule(const Circuit& circuit,
                                               const std::vector<NodeId>& roots) {
  std::vector<char> reached(circuit.size(), 0);
  for (NodeId root : roots) reached.at(root.index) = 1;
  for (std::size_t i = circuit.size(); i-- > 0;) {
    if (!reached[i]) continue;
    if (const auto* children = children_of(circuit.nodes[i])) {
      for (NodeId child : *children) reached[child.index] = 1;
    }
  }
  std::vector<std::uint32_t> schedule;
  for (std::uint32_t i = 0; i < circuit.size(); ++i) {
    if (reached[i]) schedule.push_back(i);
  }
  return schedule;
}

namespace {

inline double evaluate_node(const Node& node, const Eigen::Ref<const Evidence>& x,
                            const Eigen::Ref<Eigen::VectorXd>& values) {
  if (const auto* sum = std::get_if<SumNode>(&node)) {
    const auto& children = sum->children;
    double max = kNegInf;
    for (std::size_t k = 0; k < children.size(); ++k) {
      max = std::max(max, sum->log_weights[k] + values[children[k].index]);
    }
    if (!std::isfinite(max)) return max;
    double total = 0.0;
    for (std::size_t k = 0; k < children.size(); ++k) {
      total += std::exp(sum->log_weights[k] + values[children[k].index] - max);
    }
    return max + std::log(total);
  }
  if (const auto* product = std::get_if<ProductNode>(&node)) {
    double total = 0.0;
    for (NodeId child : product->children) total += values[child.index];
    return total;
  }
  return leaf_log_density(node, x[leaf_variable(node)]);
}

}  // namespace

void forward(const Circuit& circuit, const Eigen::Ref<const Evidence>& x,
             Eigen::Ref<Eigen::VectorXd> out, const std::vector<std::uint32_t>& schedule) {
  if (schedule.empty()) {
    for (std::size_t i = 0; i < circuit.size(); ++i) {
      out[i] = evaluate_node(circuit.nodes[i], x, out);
    }
  } else {
    for (std::uint32_t i : schedule) out[i] = evaluate_node(circuit.nodes[i], x, out);
  }
}

void check_evidence(const Circuit& circuit, const Eigen::Ref<const Evidence>& x) {
  if (x.size() != circuit.num_variables) {
    throw InputError("evidence has length " + std::to_string(x.size()) + ", expected " +
                     std::to_string(circuit.num_variables));
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (std::isinf(x[i])) {
      throw InputError("evidence value " + std::to_string(i) + " is infinite");
    }
  }
}

double log_value(const Circuit& circuit, NodeId root, const Eigen::Ref<const Evidence>& x) {
  if (root.index >= circuit.size()) {
    throw InputError("root " + std::to_string(root.index) + " does not exist");
  }
  check_evidence(circuit, x);
  Eigen::VectorXd values(circuit.size());
  forward(circuit, x, values, evaluation_schedule(circuit, {root}));
  return values[root.index];
}

}  // namespace spncf
