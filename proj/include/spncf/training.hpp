#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spncf/circuit.hpp"
#include "spncf/data.hpp"
#include "spncf/structure.hpp"

namespace spncf {

enum class Optimizer { kSgd, kAdam };

std::string to_string(Optimizer optimizer);
Optimizer optimizer_from_string(const std::string& name);

struct TrainConfig {
  double learning_rate = 0.05;
  int epochs = 200;
  int batch_size = 128;
  double variance_floor = kDefaultVarianceFloor;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;
  int patience = 10;
  Optimizer optimizer = Optimizer::kAdam;
};

struct TrainReport {
  // Mean of log S(x|y) + log P(y) over the training rows, per epoch.
  std::vector<double> train_log_likelihood;
  // Best held-out mean log-likelihood (or the final full training-set value
  // when no validation rows were held out).
  double validation_log_likelihood = 0.0;
  bool has_validation = false;
  int epochs_run = 0;
  int best_epoch = 0;
  // True when early stopping ended training.
  bool converged = false;
};

std::string to_json_string(const TrainReport& report);

struct FitResult {
  Circuit circuit;
  TrainReport report;
};

// Maximum-likelihood fit of every parameter by mini-batch gradient ascent on
// the mean generative log-likelihood. Sum weights and categorical
// probabilities are softmax logits, Bernoulli p a sigmoid logit and Gaussian
// variances floor + exp(raw). The prior is set to the empirical class
// frequencies.
FitResult fit(Circuit circuit, const Dataset& dataset, const TrainConfig& config);

// Flat parameter vector over the unconstrained parameterization above.
struct ParameterLayout {
  std::vector<Eigen::Index> offset;  // per node; -1 for product nodes
  Eigen::Index size = 0;
};

ParameterLayout parameter_layout(const Circuit& circuit);
Eigen::VectorXd pack_parameters(const Circuit& circuit, const ParameterLayout& layout);
void unpack_parameters(const Eigen::VectorXd& params, const ParameterLayout& layout, Circuit& circuit);

// Mean of log S(x_n | y_n) + log P(y_n) over `rows` of (features, labels).
// When `grad` is non-null it receives the gradient with respect to the packed
// parameters.
double mean_log_likelihood(const Circuit& circuit, const ParameterLayout& layout,
                           const Eigen::MatrixXd& features, const Eigen::VectorXi& labels,
                           const std::vector<Eigen::Index>& rows, Eigen::VectorXd* grad);

// Same objective over a whole dataset, no gradient.
double mean_log_likelihood(const Circuit& circuit, const Dataset& dataset);

struct CvScore {
  StructureConfig structure;
  TrainConfig train;
  double score = 0.0;  // mean held-out log-likelihood over folds
};

struct CvResult {
  std::vector<CvScore> scores;
  std::size_t best = 0;

  const CvScore& best_score() const { return scores.at(best); }
};

// k-fold cross validation over the cartesian product of both grids. The
// structure's class count comes from the dataset. Fold assignment is
// stratified and deterministic in `seed`.
CvResult cross_validate(const Dataset& dataset, const std::vector<StructureConfig>& structure_grid,
                        const std::vector<TrainConfig>& train_grid, int folds, std::uint64_t seed);

}  // namespace spncf
