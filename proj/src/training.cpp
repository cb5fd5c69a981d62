#include "spncf/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "spncf/numeric.hpp"
#include "spncf/random.hpp"
#include "spncf/sweep.hpp"

namespace spncf {

std::string to_string(Optimizer optimizer) {
  return optimizer == Optimizer::kAdam ? "adam" : "sgd";
}

Optimizer optimizer_from_string(const std::string& name) {
  if (name == "adam") return Optimizer::kAdam;
  if (name == "sgd") return Optimizer::kSgd;
  throw InputError("unknown optimizer '" + name + "'");
}

std::string to_json_string(const TrainReport& report) {
  nlohmann::json j = {{"train_log_likelihood", report.train_log_likelihood},
                      {"validation_log_likelihood", report.validation_log_likelihood},
                      {"has_validation", report.has_validation},
                      {"epochs_run", report.epochs_run},
                      {"best_epoch", report.best_epoch},
                      {"converged", report.converged}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Parameterization

namespace {

// Smallest representable excess of a variance over its floor.
constexpr double kMinVarianceExcess = 1e-12;
constexpr double kProbabilityClamp = 1e-12;

double logit(double p) {
  p = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return std::log(p) - std::log1p(-p);
}

}  // namespace

ParameterLayout parameter_layout(const Circuit& circuit) {
  ParameterLayout layout;
  layout.offset.assign(circuit.size(), -1);
  for (std::size_t i = 0; i < circuit.size(); ++i) {
    const Node& node = circuit.nodes[i];
    Eigen::Index count = 0;
    if (const auto* sum = std::get_if<SumNode>(&node)) {
      count = static_cast<Eigen::Index>(sum->children.size());
    } else if (std::holds_alternative<GaussianLeaf>(node)) {
      count = 2;
    } else if (std::holds_alternative<BernoulliLeaf>(node)) {
      count = 1;
    } else if (const auto* cat = std::get_if<CategoricalLeaf>(&node)) {
      count = cat->probabilities.size();
    }
    if (count > 0) {
      layout.offset[i] = layout.size;
      layout.size += count;
    }
  }
  return layout;
}

Eigen::VectorXd pack_parameters(const Circuit& circuit, const ParameterLayout& layout) {
  Eigen::VectorXd params(layout.size);
  for (std::size_t i = 0; i < circuit.size(); ++i) {
    const Eigen::Index o = layout.offset[i];
    if (o < 0) continue;
    const Node& node = circuit.nodes[i];
    if (const auto* sum = std::get_if<SumNode>(&node)) {
      params.segment(o, sum->log_weights.size()) = sum->log_weights;
    } else if (const auto* g = std::get_if<GaussianLeaf>(&node)) {
      params[o] = g->mean;
      params[o + 1] = std::log(std::max(g->variance - circuit.variance_floor, kMinVarianceExcess));
    } else if (const auto* b = std::get_if<BernoulliLeaf>(&node)) {
      params[o] = logit(b->p);
    } else if (const auto* c = std::get_if<CategoricalLeaf>(&node)) {
      params.segment(o, c->probabilities.size()) =
          c->probabilities.array().max(kProbabilityClamp).log().matrix();
    }
  }
  return params;
}

void unpack_parameters(const Eigen::VectorXd& params, const ParameterLayout& layout,
                       Circuit& circuit) {
  for (std::size_t i = 0; i < circuit.size(); ++i) {
    const Eigen::Index o = layout.offset[i];
    if (o < 0) continue;
    Node& node = circuit.nodes[i];
    if (auto* sum = std::get_if<SumNode>(&node)) {
      const auto theta = params.segment(o, sum->log_weights.size());
      sum->log_weights = theta.array() - log_sum_exp(theta);
    } else if (auto* g = std::get_if<GaussianLeaf>(&node)) {
      g->mean = params[o];
      g->variance = circuit.variance_floor + std::exp(params[o + 1]);
    } else if (auto* b = std::get_if<BernoulliLeaf>(&node)) {
      b->p = 1.0 / (1.0 + std::exp(-params[o]));
    } else if (auto* c = std::get_if<CategoricalLeaf>(&node)) {
      const auto theta = params.segment(o, c->probabilities.size());
      c->probabilities = (theta.array() - log_sum_exp(theta)).exp();
    }
  }
}

// ---------------------------------------------------------------------------
// Objective

namespace {

// Per-class evaluation schedules plus reusable buffers.
struct Workspace {
  std::vector<std::vector<std::uint32_t>> schedules;
  Eigen::VectorXd values;
  Eigen::VectorXd adjoint;

  explicit Workspace(const Circuit& circuit)
      : values(circuit.size()), adjoint(Eigen::VectorXd::Zero(circuit.size())) {
    for (NodeId root : circuit.class_roots) {
      schedules.push_back(evaluation_schedule(circuit, {root}));
    }
  }
};

// Accumulates d/d(params) of log S(x | y) into grad and returns log S(x | y).
double accumulate_sample(const Circuit& circuit, const ParameterLayout& layout, Workspace& ws,
                         const Eigen::Ref<const Eigen::VectorXd>& x, int y, double scale,
                         Eigen::VectorXd* grad) {
  const auto& schedule = ws.schedules[y];
  const std::uint32_t root = circuit.class_roots[y].index;
  forward(circuit, x, ws.values, schedule);
  const double value = ws.values[root];
  if (!grad) return value;

  for (std::uint32_t i : schedule) ws.adjoint[i] = 0.0;
  ws.adjoint[root] = scale;
  auto& g = *grad;
  backward_sweep(
      circuit, ws.values, ws.adjoint, schedule,
      [&](std::uint32_t node, std::size_t k, double a, double r) {
        const auto& sum = std::get<SumNode>(circuit.nodes[node]);
        g[layout.offset[node] + static_cast<Eigen::Index>(k)] +=
            a * (r - std::exp(sum.log_weights[static_cast<Eigen::Index>(k)]));
      },
      [&](std::uint32_t node, double a) {
        if (a == 0.0) return;
        const Node& leaf = circuit.nodes[node];
        const double v = x[leaf_variable(leaf)];
        if (is_missing(v)) return;
        const Eigen::Index o = layout.offset[node];
        if (const auto* gauss = std::get_if<GaussianLeaf>(&leaf)) {
          const double diff = v - gauss->mean;
          const double var = gauss->variance;
          g[o] += a * diff / var;
          const double d_var = -0.5 / var + 0.5 * diff * diff / (var * var);
          g[o + 1] += a * d_var * (var - circuit.variance_floor);
        } else if (const auto* b = std::get_if<BernoulliLeaf>(&leaf)) {
          g[o] += a * (v - b->p);
        } else if (const auto* c = std::get_if<CategoricalLeaf>(&leaf)) {
          const auto level = static_cast<Eigen::Index>(v);
          g.segment(o, c->probabilities.size()) -= a * c->probabilities;
          g[o + level] += a;
        }
      });
  return value;
}

}  // namespace

double mean_log_likelihood(const Circuit& circuit, const ParameterLayout& layout,
                           const Eigen::MatrixXd& features, const Eigen::VectorXi& labels,
                           const std::vector<Eigen::Index>& rows, Eigen::VectorXd* grad) {
  if (rows.empty()) throw InputError("objective over zero rows");
  Workspace ws(circuit);
  if (grad) *grad = Eigen::VectorXd::Zero(layout.size);
  const double scale = 1.0 / static_cast<double>(rows.size());
  double total = 0.0;
  Eigen::VectorXd x(features.cols());
  for (Eigen::Index r : rows) {
    const int y = labels[r];
    x = features.row(r).transpose();
    total += accumulate_sample(circuit, layout, ws, x, y, scale, grad) + circuit.log_prior[y];
  }
  return total * scale;
}

double mean_log_likelihood(const Circuit& circuit, const Dataset& dataset) {
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(dataset.size()));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  return mean_log_likelihood(circuit, parameter_layout(circuit), dataset.features, dataset.labels,
                             rows, nullptr);
}

// ---------------------------------------------------------------------------
// Fitting

namespace {

void check_train_config(const TrainConfig& c) {
  if (!(c.learning_rate > 0.0)) throw InputError("learning_rate must be positive");
  if (c.epochs < 1) throw InputError("epochs must be at least 1");
  if (c.batch_size < 1) throw InputError("batch_size must be at least 1");
  if (!(c.variance_floor > 0.0)) throw InputError("variance_floor must be positive");
  if (!(c.validation_fraction >= 0.0 && c.validation_fraction < 1.0)) {
    throw InputError("validation_fraction must lie in [0, 1)");
  }
  if (c.patience < 0) throw InputError("patience must be non-negative");
}

void check_dataset(const Circuit& circuit, const Dataset& dataset) {
  if (dataset.size() == 0) throw InputError("cannot fit on an empty dataset");
  if (dataset.num_features() != circuit.num_variables) {
    throw InputError("dataset has " + std::to_string(dataset.num_features()) +
                     " features, circuit expects " + std::to_string(circuit.num_variables));
  }
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    if (dataset.labels[i] < 0 || dataset.labels[i] >= circuit.num_classes()) {
      throw InputError("label " + std::to_string(dataset.labels[i]) + " at row " +
                       std::to_string(i) + " outside [0, " +
                       std::to_string(circuit.num_classes()) + ")");
    }
  }
  if (!dataset.features.allFinite()) throw InputError("dataset contains non-finite features");
}

class AdamState {
 public:
  explicit AdamState(Eigen::Index n) : m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

  // Ascent step on params along grad.
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) {
    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kEps = 1e-8;
    ++t_;
    m_ = kBeta1 * m_ + (1.0 - kBeta1) * grad;
    v_ = kBeta2 * v_ + (1.0 - kBeta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    params.array() += lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + kEps);
  }

 private:
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  int t_ = 0;
};

}  // namespace

FitResult fit(Circuit circuit, const Dataset& dataset, const TrainConfig& config) {
  check_train_config(config);
  require_valid(circuit);
  check_dataset(circuit, dataset);

  const int num_classes = circuit.num_classes();
  circuit.variance_floor = config.variance_floor;
  for (Node& node : circuit.nodes) {
    if (auto* g = std::get_if<GaussianLeaf>(&node)) {
      g->variance = std::max(g->variance, config.variance_floor + kMinVarianceExcess);
    }
  }

  Eigen::VectorXd counts = Eigen::VectorXd::Zero(num_classes);
  for (Eigen::Index i = 0; i < dataset.size(); ++i) counts[dataset.labels[i]] += 1.0;
  circuit.log_prior = (counts / counts.sum()).array().log();

  // Held-out rows for early stopping.
  std::vector<Eigen::Index> train_rows;
  std::vector<Eigen::Index> validation_rows;
  if (config.validation_fraction > 0.0) {
    try {
      std::tie(train_rows, validation_rows) = split_indices(
          dataset.labels, num_classes, 1.0 - config.validation_fraction, config.seed);
    } catch (const InputError&) {
      train_rows.clear();
      validation_rows.clear();
    }
  }
  if (train_rows.empty()) {
    train_rows.resize(static_cast<std::size_t>(dataset.size()));
    std::iota(train_rows.begin(), train_rows.end(), Eigen::Index{0});
  }

  const ParameterLayout layout = parameter_layout(circuit);
  Eigen::VectorXd params = pack_parameters(circuit, layout);
  unpack_parameters(params, layout, circuit);
  AdamState adam(layout.size);
  Rng rng(config.seed);
  Workspace ws(circuit);

  FitResult result;
  TrainReport& report = result.report;
  report.has_validation = !validation_rows.empty();
  double best_validation = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_params = params;
  int stale_epochs = 0;

  Eigen::VectorXd grad(layout.size);
  Eigen::VectorXd x(dataset.num_features());
  std::size_t batch_index = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<Eigen::Index>(train_rows));
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < train_rows.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(train_rows.size(), start + config.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      grad.setZero();
      double batch_total = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const Eigen::Index r = train_rows[k];
        const int y = dataset.labels[r];
        x = dataset.features.row(r).transpose();
        batch_total += accumulate_sample(circuit, layout, ws, x, y, scale, &grad) + circuit.log_prior[y];
      }
      if (!std::isfinite(batch_total) || !grad.allFinite()) {
        throw NumericError("non-finite training objective at batch " + std::to_string(batch_index) +
                           " (epoch " + std::to_string(epoch) + ")");
      }
      epoch_total += batch_total;
      if (config.optimizer == Optimizer::kAdam) {
        adam.step(params, grad, config.learning_rate);
      } else {
        params += config.learning_rate * grad;
      }
      unpack_parameters(params, layout, circuit);
    }
    report.train_log_likelihood.push_back(epoch_total / static_cast<double>(train_rows.size()));
    report.epochs_run = epoch + 1;

    if (!report.has_validation) continue;
    const double validation = mean_log_likelihood(circuit, layout, dataset.features,
                                                  dataset.labels, validation_rows, nullptr);
    if (validation > best_validation) {
      best_validation = validation;
      best_params = params;
      report.best_epoch = epoch + 1;
      stale_epochs = 0;
    } else if (++stale_epochs >= config.patience) {
      report.converged = true;
      break;
    }
  }

  if (report.has_validation) {
    unpack_parameters(best_params, layout, circuit);
    report.validation_log_likelihood = best_validation;
  } else {
    report.best_epoch = report.epochs_run;
    report.validation_log_likelihood = mean_log_likelihood(
        circuit, layout, dataset.features, dataset.labels, train_rows, nullptr);
  }
  if (auto check = validate(circuit); !check.ok) {
    throw Error("internal fault: fitted circuit is invalid: " + check.summary());
  }
  result.circuit = std::move(circuit);
  return result;
}

// ---------------------------------------------------------------------------
// Cross validation

CvResult cross_validate(const Dataset& dataset, const std::vector<StructureConfig>& structure_grid,
                        const std::vector<TrainConfig>& train_grid, int folds, std::uint64_t seed) {
  if (structure_grid.empty() || train_grid.empty()) throw InputError("empty search grid");
  if (folds < 2) throw InputError("cross validation needs at least two folds");
  if (folds > dataset.size()) throw InputError("more folds than rows");

  // Stratified round-robin fold assignment over a seeded shuffle per class.
  std::vector<int> fold_of(static_cast<std::size_t>(dataset.size()));
  {
    Rng rng(seed);
    std::vector<std::vector<Eigen::Index>> by_class(static_cast<std::size_t>(dataset.num_classes));
    for (Eigen::Index i = 0; i < dataset.size(); ++i) by_class.at(dataset.labels[i]).push_back(i);
    int next = 0;
    for (auto& rows : by_class) {
      rng.shuffle(std::span<Eigen::Index>(rows));
      for (Eigen::Index r : rows) fold_of[static_cast<std::size_t>(r)] = next++ % folds;
    }
  }

  CvResult result;
  for (const auto& structure : structure_grid) {
    for (const auto& train : train_grid) {
      StructureConfig s = structure;
      s.num_classes = dataset.num_classes;
      s.variance_floor = train.variance_floor;
      double total = 0.0;
      for (int f = 0; f < folds; ++f) {
        std::vector<Eigen::Index> fit_rows;
        std::vector<Eigen::Index> held_rows;
        for (Eigen::Index i = 0; i < dataset.size(); ++i) {
          (fold_of[static_cast<std::size_t>(i)] == f ? held_rows : fit_rows).push_back(i);
        }
        if (fit_rows.empty() || held_rows.empty()) throw InputError("fold leaves one side empty");
        FitResult fitted = fit(build_rat_spn(dataset.num_features(), s), dataset.subset(fit_rows), train);
        total += mean_log_likelihood(fitted.circuit, dataset.subset(held_rows));
      }
      result.scores.push_back({s, train, total / folds});
    }
  }
  for (std::size_t i = 1; i < result.scores.size(); ++i) {
    if (result.scores[i].score > result.scores[result.best].score) result.best = i;
  }
  return result;
}

}  // namespace spncf
