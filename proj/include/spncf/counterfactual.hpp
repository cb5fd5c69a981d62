#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spncf/circuit.hpp"
#include "spncf/data.hpp"
#include "spncf/grad.hpp"

namespace spncf {

struct CfConfig {
  double epsilon1 = 10.0;
  double epsilon2 = 1.0;
  GradMode grad_mode = GradMode::kDensity;
  bool clip_to_unit = true;
  // When a query fails, double epsilon1 (up to three times) and redo step 2.
  bool retry_epsilon_schedule = false;
};

struct BaselineConfig {
  double lambda = 0.1;
  double learning_rate = 0.05;
  int max_iters = 1000;
  bool early_stop = true;
  bool clip_to_unit = true;
};

struct CfResult {
  std::string method;
  Eigen::VectorXd x;
  Eigen::VectorXd u;
  Eigen::VectorXd x_prime;
  int y = 0;
  int y_prime = 0;
  int pred_x = 0;
  int pred_u = 0;
  int pred_x_prime = 0;
  double logdens_x = 0.0;
  double logdens_u = 0.0;
  double logdens_x_prime = 0.0;
  // Wall-clock seconds. step2 is zero for methods without a second stage.
  double elapsed_step1 = 0.0;
  double elapsed_step2 = 0.0;
  double elapsed_total = 0.0;
  bool success = false;
  int gradient_evaluations = 0;
  // Descent iterations (baseline) or epsilon1 retries (two-step).
  int iterations = 0;
  bool density_underflow = false;
};

// Two gradient steps: u = x + eps1 * grad[log S(x|y') - log S(x|y)], then
// x' = u + eps2 * grad S(u) (or grad log S(u) in log mode).
CfResult generate(const Circuit& circuit, const Eigen::Ref<const Evidence>& x, int y, int y_prime,
                  const CfConfig& config);

// Only the first step; x' = u.
CfResult generate_step_one(const Circuit& circuit, const Eigen::Ref<const Evidence>& x, int y,
                           int y_prime, const CfConfig& config);

// Proximal gradient descent on -log S(y'|z) + lambda * |z - x|_1 from z = x.
CfResult wachter_baseline(const Circuit& circuit, const Eigen::Ref<const Evidence>& x, int y_prime,
                          const BaselineConfig& config);

enum class CfMethod { kTwoStep, kStepOneOnly, kWachter };

std::string to_string(CfMethod method);
CfMethod cf_method_from_string(const std::string& name);

struct CfQuery {
  Eigen::VectorXd x;
  int y = 0;
  int y_prime = 1;
};

struct CfMetrics {
  double mean_log_density = 0.0;
  double success_rate = 0.0;
  double mean_time = 0.0;
  std::size_t n = 0;
  double mean_gradient_evaluations = 0.0;
};

CfMetrics summarize(const std::vector<CfResult>& results);

struct CfEvaluation {
  CfMetrics metrics;
  std::vector<CfResult> results;
};

// Runs `method` on every query; timing is measured per query.
CfEvaluation evaluate(const Circuit& circuit, const std::vector<CfQuery>& queries, CfMethod method,
                      const CfConfig& cf_config, const BaselineConfig& baseline_config);

struct OneHotConsistency {
  // results x groups matrix of sum_{j in group} (x'_j - x_j).
  Eigen::MatrixXd group_sums;
  double median_abs_sum = 0.0;
};

OneHotConsistency one_hot_consistency(const std::vector<CfResult>& results, const FeatureMeta& meta);

std::string to_json_string(const CfResult& result);
CfResult cf_result_from_json_string(const std::string& text);
std::string to_json_string(const CfMetrics& metrics);

}  // namespace spncf
