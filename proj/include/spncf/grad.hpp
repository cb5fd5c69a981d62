#pragma once

#include <string>

#include <Eigen/Dense>

#include "spncf/circuit.hpp"

namespace spncf {

enum class GradMode { kDensity, kLogDensity };

std::string to_string(GradMode mode);
GradMode grad_mode_from_string(const std::string& name);

// Gradient of sum_c seeds[c] * log S(x | c) with respect to x. Entries at
// missing positions are zero.
Eigen::VectorXd input_gradient(const Circuit& circuit, const Eigen::Ref<const Evidence>& x,
                               const Eigen::Ref<const Eigen::VectorXd>& root_seeds);

// d/dx log S(x | y).
Eigen::VectorXd grad_log_class(const Circuit& circuit, const Eigen::Ref<const Evidence>& x, int y);

// d/dx [log S(x | y_prime) - log S(x | y)]. x must be fully observed.
Eigen::VectorXd grad_log_ratio(const Circuit& circuit, const Eigen::Ref<const Evidence>& x, int y,
                               int y_prime);

struct DensityGradient {
  Eigen::VectorXd values;
  double log_density = 0.0;
  // Density mode only: S(u) is below the smallest normal double, so the
  // gradient was reported as zero.
  bool underflow = false;
};

// Density mode: d/du S(u) = S(u) * d/du log S(u). Log mode: d/du log S(u).
// u must be fully observed.
DensityGradient grad_density(const Circuit& circuit, const Eigen::Ref<const Evidence>& u,
                             GradMode mode);

// d/dz log S(y_prime | z), the posterior of the target class. When
// `log_posterior` is non-null it receives log S(. | z) from the same pass.
Eigen::VectorXd grad_log_posterior(const Circuit& circuit, const Eigen::Ref<const Evidence>& z,
                                   int y_prime, Eigen::VectorXd* log_posterior = nullptr);

}  // namespace spncf
