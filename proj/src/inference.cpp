#include "spncf/inference.hpp"

#include "spncf/numeric.hpp"

namespace spncf {

namespace {

void check_class(const Circuit& circuit, int y) {
  if (y < 0 || y >= circuit.num_classes()) {
    throw InputError("class index " + std::to_string(y) + " outside [0, " +
                     std::to_string(circuit.num_classes()) + ")");
  }
}

Eigen::VectorXd roots_from(const Circuit& circuit, const Eigen::VectorXd& values) {
  Eigen::VectorXd out(circuit.num_classes());
  for (int c = 0; c < circuit.num_classes(); ++c) out[c] = values[circuit.class_roots[c].index];
  return out;
}

Posterior posterior_from(const Circuit& circuit, const Eigen::VectorXd& conditionals) {
  Eigen::VectorXd joint = conditionals + circuit.log_prior;
  const double total = log_sum_exp(joint);
  return Posterior{joint.array() - total};
}

}  // namespace

double class_log_density(const Circuit& circuit, int y, const Eigen::Ref<const Evidence>& x) {
  check_class(circuit, y);
  return log_value(circuit, circuit.class_roots[y], x);
}

Eigen::VectorXd class_log_densities(const Circuit& circuit, const Eigen::Ref<const Evidence>& x) {
  check_evidence(circuit, x);
  Eigen::VectorXd values(circuit.size());
  forward(circuit, x, values);
  return roots_from(circuit, values);
}

double log_density(const Circuit& circuit, const Eigen::Ref<const Evidence>& x) {
  return log_sum_exp(class_log_densities(circuit, x) + circuit.log_prior);
}

Posterior posterior(const Circuit& circuit, const Eigen::Ref<const Evidence>& x) {
  return posterior_from(circuit, class_log_densities(circuit, x));
}

int argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& scores) {
  int best = 0;
  for (Eigen::Index c = 1; c < scores.size(); ++c) {
    if (scores[c] > scores[best]) best = static_cast<int>(c);
  }
  return best;
}

int predict(const Circuit& circuit, const Eigen::Ref<const Evidence>& x) {
  return argmax_lowest(posterior(circuit, x).log_probs);
}

Eigen::MatrixXd class_log_densities_rows(const Circuit& circuit, const Eigen::MatrixXd& rows) {
  if (rows.cols() != circuit.num_variables) {
    throw InputError("rows have " + std::to_string(rows.cols()) + " columns, expected " +
                     std::to_string(circuit.num_variables));
  }
  Eigen::MatrixXd out(rows.rows(), circuit.num_classes());
  Eigen::VectorXd values(circuit.size());
  Evidence x(rows.cols());
  for (Eigen::Index n = 0; n < rows.rows(); ++n) {
    x = rows.row(n).transpose();
    check_evidence(circuit, x);
    forward(circuit, x, values);
    out.row(n) = roots_from(circuit, values).transpose();
  }
  return out;
}

Eigen::VectorXd class_log_density_rows(const Circuit& circuit, int y, const Eigen::MatrixXd& rows) {
  check_class(circuit, y);
  if (rows.cols() != circuit.num_variables) {
    throw InputError("rows have " + std::to_string(rows.cols()) + " columns, expected " +
                     std::to_string(circuit.num_variables));
  }
  const NodeId root = circuit.class_roots[y];
  const auto schedule = evaluation_schedule(circuit, {root});
  Eigen::VectorXd out(rows.rows());
  Eigen::VectorXd values(circuit.size());
  Evidence x(rows.cols());
  for (Eigen::Index n = 0; n < rows.rows(); ++n) {
    x = rows.row(n).transpose();
    check_evidence(circuit, x);
    forward(circuit, x, values, schedule);
    out[n] = values[root.index];
  }
  return out;
}

Eigen::VectorXd log_density_rows(const Circuit& circuit, const Eigen::MatrixXd& rows) {
  const Eigen::MatrixXd conditionals = class_log_densities_rows(circuit, rows);
  Eigen::VectorXd out(rows.rows());
  for (Eigen::Index n = 0; n < rows.rows(); ++n) {
    out[n] = log_sum_exp(conditionals.row(n).transpose() + circuit.log_prior);
  }
  return out;
}

Eigen::MatrixXd posterior_rows(const Circuit& circuit, const Eigen::MatrixXd& rows) {
  const Eigen::MatrixXd conditionals = class_log_densities_rows(circuit, rows);
  Eigen::MatrixXd out(rows.rows(), circuit.num_classes());
  for (Eigen::Index n = 0; n < rows.rows(); ++n) {
    out.row(n) = posterior_from(circuit, conditionals.row(n).transpose()).log_probs.transpose();
  }
  return out;
}

Eigen::VectorXi predict_rows(const Circuit& circuit, const Eigen::MatrixXd& rows) {
  const Eigen::MatrixXd post = posterior_rows(circuit, rows);
  Eigen::VectorXi out(rows.rows());
  for (Eigen::Index n = 0; n < rows.rows(); ++n) out[n] = argmax_lowest(post.row(n).transpose());
  return out;
}

double accuracy(const Circuit& circuit, const Eigen::MatrixXd& rows, const Eigen::VectorXi& labels) {
  if (rows.rows() == 0) throw InputError("accuracy of an empty set");
  const Eigen::VectorXi predicted = predict_rows(circuit, rows);
  return static_cast<double>((predicted.array() == labels.array()).count()) /
         static_cast<double>(rows.rows());
}

}  // namespace spncf
