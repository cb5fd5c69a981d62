#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "spncf/circuit.hpp"

namespace spncf {

// Reverse-mode sweep in log space. On entry `adjoint` holds d(objective)/d(log
// node) seeds at the roots and zeros elsewhere on the schedule; on exit it
// holds the adjoint of every scheduled node. `values` comes from forward().
//
// on_sum_edge(node, k, adjoint_of_node, responsibility_k) fires for every sum
// edge with a non-zero parent adjoint; on_leaf(node, adjoint) fires for every
// leaf. Both run in reverse topological order.
template <typename SumEdgeFn, typename LeafFn>
void backward_sweep(const Circuit& circuit, const Eigen::VectorXd& values,
                    Eigen::VectorXd& adjoint, const std::vector<std::uint32_t>& schedule,
                    SumEdgeFn&& on_sum_edge, LeafFn&& on_leaf) {
  auto visit = [&](std::uint32_t i) {
    const double a = adjoint[i];
    const Node& node = circuit.nodes[i];
    if (const auto* sum = std::get_if<SumNode>(&node)) {
      if (a == 0.0 || !std::isfinite(values[i])) return;
      const double log_total = values[i];
      for (std::size_t k = 0; k < sum->children.size(); ++k) {
        const std::uint32_t child = sum->children[k].index;
        const double r = std::exp(sum->log_weights[k] + values[child] - log_total);
        adjoint[child] += a * r;
        on_sum_edge(i, k, a, r);
      }
    } else if (const auto* product = std::get_if<ProductNode>(&node)) {
      if (a == 0.0) return;
      for (NodeId child : product->children) adjoint[child.index] += a;
    } else {
      on_leaf(i, a);
    }
  };
  if (schedule.empty()) {
    for (std::size_t i = circuit.size(); i-- > 0;) visit(static_cast<std::uint32_t>(i));
  } else {
    for (auto it = schedule.rbegin(); it != schedule.rend(); ++it) visit(*it);
  }
}

}  // namespace spncf
