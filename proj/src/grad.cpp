#include "spncf/grad.hpp"

#include <limits>

#include "spncf/numeric.hpp"
#include "spncf/sweep.hpp"

namespace spncf {

std::string to_string(GradMode mode) {
  return mode == GradMode::kDensity ? "density" : "log_density";
}

GradMode grad_mode_from_string(const std::string& name) {
  if (name == "density") return GradMode::kDensity;
  if (name == "log_density" || name == "log") return GradMode::kLogDensity;
  throw InputError("unknown gradient mode '" + name + "'");
}

namespace {

void check_class(const Circuit& circuit, int y) {
  if (y < 0 || y >= circuit.num_classes()) {
    throw InputError("class index " + std::to_string(y) + " outside [0, " +
                     std::to_string(circuit.num_classes()) + ")");
  }
}

void check_full(const Circuit& circuit, const Eigen::Ref<const Evidence>& x) {
  check_evidence(circuit, x);
  if (x.array().isNaN().any()) throw InputError("gradient requires fully observed input");
}

// Backward pass from class-root seeds over precomputed node values.
Eigen::VectorXd sweep_inputs(const Circuit& circuit, const Eigen::Ref<const Evidence>& x,
                             const Eigen::VectorXd& values, const Eigen::VectorXd& root_seeds) {
  Eigen::VectorXd adjoint = Eigen::VectorXd::Zero(circuit.size());
  for (int c = 0; c < circuit.num_classes(); ++c) {
    adjoint[circuit.class_roots[c].index] += root_seeds[c];
  }
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(circuit.num_variables);
  backward_sweep(
      circuit, values, adjoint, {}, [](std::uint32_t, std::size_t, double, double) {},
      [&](std::uint32_t i, double a) {
        if (a == 0.0) return;
        const Node& leaf = circuit.nodes[i];
        const int v = leaf_variable(leaf);
        grad[v] += a * leaf_log_density_derivative(leaf, x[v]);
      });
  return grad;
}

Eigen::VectorXd forward_all(const Circuit& circuit, const Eigen::Ref<const Evidence>& x) {
  Eigen::VectorXd values(circuit.size());
  forward(circuit, x, values);
  return values;
}

Eigen::VectorXd unit_seed(const Circuit& circuit, int y) {
  Eigen::VectorXd seeds = Eigen::VectorXd::Zero(circuit.num_classes());
  seeds[y] = 1.0;
  return seeds;
}

}  // namespace

Eigen::VectorXd input_gradient(const Circuit& circuit, const Eigen::Ref<const Evidence>& x,
                               const Eigen::Ref<const Eigen::VectorXd>& root_seeds) {
  check_evidence(circuit, x);
  if (root_seeds.size() != circuit.num_classes()) {
    throw InputError("one seed per class root required");
  }
  return sweep_inputs(circuit, x, forward_all(circuit, x), root_seeds);
}

Eigen::VectorXd grad_log_class(const Circuit& circuit, const Eigen::Ref<const Evidence>& x, int y) {
  check_class(circuit, y);
  return input_gradient(circuit, x, unit_seed(circuit, y));
}

Eigen::VectorXd grad_log_ratio(const Circuit& circuit, const Eigen::Ref<const Evidence>& x, int y,
                               int y_prime) {
  check_class(circuit, y);
  check_class(circuit, y_prime);
  check_full(circuit, x);
  const Eigen::VectorXd values = forward_all(circuit, x);
  const Eigen::VectorXd toward = sweep_inputs(circuit, x, values, unit_seed(circuit, y_prime));
  const Eigen::VectorXd away = sweep_inputs(circuit, x, values, unit_seed(circuit, y));
  return toward - away;
}

DensityGradient grad_density(const Circuit& circuit, const Eigen::Ref<const Evidence>& u,
                             GradMode mode) {
  check_full(circuit, u);
  const Eigen::VectorXd values = forward_all(circuit, u);
  Eigen::VectorXd joint(circuit.num_classes());
  for (int c = 0; c < circuit.num_classes(); ++c) {
    joint[c] = values[circuit.class_roots[c].index] + circuit.log_prior[c];
  }
  DensityGradient out;
  out.log_density = log_sum_exp(joint);
  // d log S / d log S_c is the class posterior.
  const Eigen::VectorXd seeds = (joint.array() - out.log_density).exp();
  out.values = sweep_inputs(circuit, u, values, seeds);
  if (mode == GradMode::kDensity) {
    if (out.log_density < std::log(std::numeric_limits<double>::min())) {
      out.values.setZero();
      out.underflow = true;
    } else {
      out.values *= std::exp(out.log_density);
    }
  }
  return out;
}

Eigen::VectorXd grad_log_posterior(const Circuit& circuit, const Eigen::Ref<const Evidence>& z,
                                   int y_prime, Eigen::VectorXd* log_posterior) {
  check_class(circuit, y_prime);
  check_full(circuit, z);
  const Eigen::VectorXd values = forward_all(circuit, z);
  Eigen::VectorXd joint(circuit.num_classes());
  for (int c = 0; c < circuit.num_classes(); ++c) {
    joint[c] = values[circuit.class_roots[c].index] + circuit.log_prior[c];
  }
  // log S(y'|z) = log S_y'(z) + log P(y') - log S(z)
  const Eigen::VectorXd post = joint.array() - log_sum_exp(joint);
  if (log_posterior) *log_posterior = post;
  Eigen::VectorXd seeds = -post.array().exp();
  seeds[y_prime] += 1.0;
  return sweep_inputs(circuit, z, values, seeds);
}

}  // namespace spncf
