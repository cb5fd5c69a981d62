#include "spncf/counterfactual.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "spncf/inference.hpp"

namespace spncf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void check_query(const Circuit& circuit, const Eigen::Ref<const Evidence>& x, int y, int y_prime) {
  const int c = circuit.num_classes();
  if (y < 0 || y >= c || y_prime < 0 || y_prime >= c) {
    throw InputError("class index outside [0, " + std::to_string(c) + ")");
  }
  if (y == y_prime) throw InputError("target class equals the original class");
  check_evidence(circuit, x);
  if (x.array().isNaN().any()) throw InputError("counterfactual query must be fully observed");
}

void require_finite(const Eigen::VectorXd& g, const char* what) {
  if (!g.allFinite()) throw NumericError(std::string("non-finite gradient in ") + what);
}

void clip(Eigen::VectorXd& v) { v = v.cwiseMax(0.0).cwiseMin(1.0); }

// Fills predictions, densities and success for x, u and x'.
void diagnose(const Circuit& circuit, CfResult& r) {
  const auto post_x = posterior(circuit, r.x).log_probs;
  r.pred_x = argmax_lowest(post_x);
  r.logdens_x = log_density(circuit, r.x);
  r.pred_u = predict(circuit, r.u);
  r.logdens_u = log_density(circuit, r.u);
  r.pred_x_prime = predict(circuit, r.x_prime);
  r.logdens_x_prime = log_density(circuit, r.x_prime);
  r.success = r.pred_x_prime == r.y_prime;
}

CfResult run_two_step(const Circuit& circuit, const Eigen::Ref<const Evidence>& x, int y,
                      int y_prime, const CfConfig& config, bool second_step) {
  check_query(circuit, x, y, y_prime);
  if (!(config.epsilon1 > 0.0) || (second_step && !(config.epsilon2 > 0.0))) {
    throw InputError("step sizes must be positive");
  }
  CfResult r;
  r.method = second_step ? "ours" : "step1";
  r.x = x;
  r.y = y;
  r.y_prime = y_prime;

  const auto start = Clock::now();
  const Eigen::VectorXd g1 = grad_log_ratio(circuit, x, y, y_prime);
  ++r.gradient_evaluations;
  require_finite(g1, "step 1");
  double epsilon1 = config.epsilon1;
  auto take_step1 = [&] {
    r.u = r.x + epsilon1 * g1;
    if (config.clip_to_unit) clip(r.u);
  };
  take_step1();
  r.elapsed_step1 = seconds_since(start);

  if (!second_step) {
    r.x_prime = r.u;
    r.elapsed_total = seconds_since(start);
    diagnose(circuit, r);
    return r;
  }

  const auto step2_start = Clock::now();
  auto take_step2 = [&] {
    const DensityGradient g2 = grad_density(circuit, r.u, config.grad_mode);
    ++r.gradient_evaluations;
    require_finite(g2.values, "step 2");
    r.density_underflow = g2.underflow;
    r.x_prime = r.u + config.epsilon2 * g2.values;
    if (config.clip_to_unit) clip(r.x_prime);
  };
  take_step2();
  if (config.retry_epsilon_schedule) {
    for (int retry = 0; retry < 3 && predict(circuit, r.x_prime) != y_prime; ++retry) {
      epsilon1 *= 2.0;
      take_step1();
      take_step2();
      ++r.iterations;
    }
  }
  r.elapsed_step2 = seconds_since(step2_start);
  r.elapsed_total = seconds_since(start);
  diagnose(circuit, r);
  return r;
}

}  // namespace

CfResult generate(const Circuit& circuit, const Eigen::Ref<const Evidence>& x, int y, int y_prime,
                  const CfConfig& config) {
  return run_two_step(circuit, x, y, y_prime, config, true);
}

CfResult generate_step_one(const Circuit& circuit, const Eigen::Ref<const Evidence>& x, int y,
                           int y_prime, const CfConfig& config) {
  return run_two_step(circuit, x, y, y_prime, config, false);
}

CfResult wachter_baseline(const Circuit& circuit, const Eigen::Ref<const Evidence>& x, int y_prime,
                          const BaselineConfig& config) {
  if (config.max_iters < 1) throw InputError("max_iters must be at least 1");
  if (!(config.learning_rate > 0.0)) throw InputError("learning_rate must be positive");
  if (!(config.lambda >= 0.0)) throw InputError("lambda must be non-negative");
  const int y = predict(circuit, x);
  check_query(circuit, x, y, y_prime);

  CfResult r;
  r.method = "wachter";
  r.x = x;
  r.u = x;
  r.y = y;
  r.y_prime = y_prime;

  const auto start = Clock::now();
  const double threshold = config.learning_rate * config.lambda;
  Eigen::VectorXd z = x;
  Eigen::VectorXd log_post;
  for (int it = 0; it < config.max_iters; ++it) {
    const Eigen::VectorXd g = grad_log_posterior(circuit, z, y_prime, &log_post);
    ++r.gradient_evaluations;
    if (config.early_stop && argmax_lowest(log_post) == y_prime) break;
    require_finite(g, "baseline descent");
    // Gradient step on -log S(y'|z), then the L1 proximal map around x.
    const Eigen::ArrayXd shifted = (z + config.learning_rate * g - r.x).array();
    z = r.x.array() + shifted.sign() * (shifted.abs() - threshold).max(0.0);
    if (config.clip_to_unit) clip(z);
    ++r.iterations;
  }
  r.x_prime = z;
  r.elapsed_step1 = seconds_since(start);
  r.elapsed_total = r.elapsed_step1;
  diagnose(circuit, r);
  return r;
}

std::string to_string(CfMethod method) {
  switch (method) {
    case CfMethod::kTwoStep: return "ours";
    case CfMethod::kStepOneOnly: return "step1";
    case CfMethod::kWachter: return "wachter";
  }
  return "unknown";
}

CfMethod cf_method_from_string(const std::string& name) {
  if (name == "ours" || name == "two_step") return CfMethod::kTwoStep;
  if (name == "step1" || name == "step1_only") return CfMethod::kStepOneOnly;
  if (name == "wachter") return CfMethod::kWachter;
  throw InputError("unknown method '" + name + "'");
}

CfMetrics summarize(const std::vector<CfResult>& results) {
  if (results.empty()) throw InputError("no counterfactual results to summarize");
  CfMetrics m;
  m.n = results.size();
  double successes = 0.0;
  for (const auto& r : results) {
    m.mean_log_density += r.logdens_x_prime;
    m.mean_time += r.elapsed_total;
    m.mean_gradient_evaluations += r.gradient_evaluations;
    successes += r.success ? 1.0 : 0.0;
  }
  const auto n = static_cast<double>(m.n);
  m.mean_log_density /= n;
  m.mean_time /= n;
  m.mean_gradient_evaluations /= n;
  m.success_rate = successes / n;
  return m;
}

CfEvaluation evaluate(const Circuit& circuit, const std::vector<CfQuery>& queries, CfMethod method,
                      const CfConfig& cf_config, const BaselineConfig& baseline_config) {
  if (queries.empty()) throw InputError("evaluate needs at least one query");
  CfEvaluation out;
  out.results.reserve(queries.size());
  for (const auto& q : queries) {
    switch (method) {
      case CfMethod::kTwoStep:
        out.results.push_back(generate(circuit, q.x, q.y, q.y_prime, cf_config));
        break;
      case CfMethod::kStepOneOnly:
        out.results.push_back(generate_step_one(circuit, q.x, q.y, q.y_prime, cf_config));
        break;
      case CfMethod::kWachter:
        out.results.push_back(wachter_baseline(circuit, q.x, q.y_prime, baseline_config));
        break;
    }
  }
  out.metrics = summarize(out.results);
  return out;
}

OneHotConsistency one_hot_consistency(const std::vector<CfResult>& results, const FeatureMeta& meta) {
  if (meta.groups.empty()) throw InputError("feature metadata has no one-hot groups");
  OneHotConsistency out;
  const auto groups = static_cast<Eigen::Index>(meta.groups.size());
  out.group_sums.resize(static_cast<Eigen::Index>(results.size()), groups);
  std::vector<double> magnitudes;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const Eigen::VectorXd delta = results[i].x_prime - results[i].x;
    for (Eigen::Index g = 0; g < groups; ++g) {
      const auto& group = meta.groups[static_cast<std::size_t>(g)];
      if (group.first_column + group.size() > delta.size()) {
        throw InputError("one-hot group exceeds the result length");
      }
      const double s = delta.segment(group.first_column, group.size()).sum();
      out.group_sums(static_cast<Eigen::Index>(i), g) = s;
      magnitudes.push_back(std::abs(s));
    }
  }
  if (!magnitudes.empty()) {
    std::sort(magnitudes.begin(), magnitudes.end());
    const std::size_t mid = magnitudes.size() / 2;
    out.median_abs_sum = magnitudes.size() % 2 ? magnitudes[mid]
                                               : 0.5 * (magnitudes[mid - 1] + magnitudes[mid]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

using nlohmann::json;

json real(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double real_from(const json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::numeric_limits<double>::quiet_NaN();
}

json vec(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(real(v[i]));
  return out;
}

Eigen::VectorXd vec_from(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = real_from(j[i]);
  return v;
}

}  // namespace

std::string to_json_string(const CfResult& r) {
  json j = {{"method", r.method},
            {"x", vec(r.x)},
            {"u", vec(r.u)},
            {"x_prime", vec(r.x_prime)},
            {"y", r.y},
            {"y_prime", r.y_prime},
            {"pred_x", r.pred_x},
            {"pred_u", r.pred_u},
            {"pred_x_prime", r.pred_x_prime},
            {"logdens_x", real(r.logdens_x)},
            {"logdens_u", real(r.logdens_u)},
            {"logdens_x_prime", real(r.logdens_x_prime)},
            {"elapsed", {{"step1", r.elapsed_step1}, {"step2", r.elapsed_step2}, {"total", r.elapsed_total}}},
            {"success", r.success},
            {"gradient_evaluations", r.gradient_evaluations},
            {"iterations", r.iterations},
            {"density_underflow", r.density_underflow}};
  return j.dump();
}

CfResult cf_result_from_json_string(const std::string& text) {
  CfResult r;
  try {
    const json j = json::parse(text);
    r.method = j.at("method").get<std::string>();
    r.x = vec_from(j.at("x"));
    r.u = vec_from(j.at("u"));
    r.x_prime = vec_from(j.at("x_prime"));
    r.y = j.at("y").get<int>();
    r.y_prime = j.at("y_prime").get<int>();
    r.pred_x = j.at("pred_x").get<int>();
    r.pred_u = j.at("pred_u").get<int>();
    r.pred_x_prime = j.at("pred_x_prime").get<int>();
    r.logdens_x = real_from(j.at("logdens_x"));
    r.logdens_u = real_from(j.at("logdens_u"));
    r.logdens_x_prime = real_from(j.at("logdens_x_prime"));
    const auto& elapsed = j.at("elapsed");
    r.elapsed_step1 = elapsed.at("step1").get<double>();
    r.elapsed_step2 = elapsed.at("step2").get<double>();
    r.elapsed_total = elapsed.at("total").get<double>();
    r.success = j.at("success").get<bool>();
    r.gradient_evaluations = j.at("gradient_evaluations").get<int>();
    r.iterations = j.at("iterations").get<int>();
    r.density_underflow = j.at("density_underflow").get<bool>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed counterfactual record: ") + e.what());
  }
  return r;
}

std::string to_json_string(const CfMetrics& m) {
  json j = {{"n", m.n},
            {"mean_log_density", real(m.mean_log_density)},
            {"success_rate", m.success_rate},
            {"mean_time_seconds", m.mean_time},
            {"mean_gradient_evaluations", m.mean_gradient_evaluations}};
  return j.dump();
}

}  // namespace spncf
