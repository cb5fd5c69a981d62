#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "spncf/circuit.hpp"

namespace spncf {

struct Posterior {
  Eigen::VectorXd log_probs;

  // std::exp keeps exp(-inf) == 0 exactly; Eigen's vectorized exp clamps.
  Eigen::VectorXd probs() const {
    return log_probs.unaryExpr([](double v) { return std::exp(v); });
  }
};

// log S(x | y) for class y.
double class_log_density(const Circuit& circuit, int y, const Eigen::Ref<const Evidence>& x);

// log S(x | y) for every class, from one shared forward pass.
Eigen::VectorXd class_log_densities(const Circuit& circuit, const Eigen::Ref<const Evidence>& x);

// log S(x) = log sum_y S(x | y) P(y).
double log_density(const Circuit& circuit, const Eigen::Ref<const Evidence>& x);

// log S(y | x) by Bayes' rule.
Posterior posterior(const Circuit& circuit, const Eigen::Ref<const Evidence>& x);

// Posterior argmax; ties go to the lowest class index.
int predict(const Circuit& circuit, const Eigen::Ref<const Evidence>& x);
int argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& scores);

// Row-batched forms. Each row of `rows` is one evidence vector.
Eigen::MatrixXd class_log_densities_rows(const Circuit& circuit, const Eigen::MatrixXd& rows);
Eigen::VectorXd class_log_density_rows(const Circuit& circuit, int y, const Eigen::MatrixXd& rows);
Eigen::VectorXd log_density_rows(const Circuit& circuit, const Eigen::MatrixXd& rows);
// N x C matrix of log posteriors.
Eigen::MatrixXd posterior_rows(const Circuit& circuit, const Eigen::MatrixXd& rows);
Eigen::VectorXi predict_rows(const Circuit& circuit, const Eigen::MatrixXd& rows);

// Fraction of rows whose prediction equals the label.
double accuracy(const Circuit& circuit, const Eigen::MatrixXd& rows, const Eigen::VectorXi& labels);

}  // namespace spncf
