#pragma once

#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace spncf {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(sum(exp(v))) without overflow. Returns -inf for an empty input or when
// every entry is -inf.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::DenseBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  if (v.size() == 0) return -std::numeric_limits<Scalar>::infinity();
  const Scalar max = v.maxCoeff();
  if (!std::isfinite(max)) return max;
  return max + std::log((v.derived().array() - max).exp().sum());
}

// Two-argument form, used in hot loops.
template <typename Scalar>
Scalar log_add_exp(Scalar a, Scalar b) {
  if (a < b) std::swap(a, b);
  if (a == -std::numeric_limits<Scalar>::infinity()) return a;
  return a + std::log1p(std::exp(b - a));
}

// Normalizes a vector of log-weights in place so that exp(v) sums to one.
template <typename Derived>
void log_normalize(Eigen::MatrixBase<Derived>& v) {
  v.array() -= log_sum_exp(v);
}

}  // namespace spncf
