#include "spncf/structure.hpp"

#include <algorithm>
#include <numeric>

#include "spncf/random.hpp"

namespace spncf {

std::vector<int> RegionGraph::leaf_regions() const {
  std::vector<char> split(regions.size(), 0);
  for (const auto& p : partitions) split[p.parent] = 1;
  std::vector<int> out;
  for (std::size_t r = 0; r < regions.size(); ++r) {
    if (!split[r]) out.push_back(static_cast<int>(r));
  }
  return out;
}

std::vector<int> RegionGraph::partitions_of(int region) const {
  std::vector<int> out;
  for (std::size_t p = 0; p < partitions.size(); ++p) {
    if (partitions[p].parent == region) out.push_back(static_cast<int>(p));
  }
  return out;
}

std::string to_string(LeafFamily family) {
  switch (family) {
    case LeafFamily::kGaussian: return "gaussian";
    case LeafFamily::kBernoulli: return "bernoulli";
    case LeafFamily::kCategorical: return "categorical";
  }
  return "unknown";
}

LeafFamily leaf_family_from_string(const std::string& name) {
  if (name == "gaussian") return LeafFamily::kGaussian;
  if (name == "bernoulli") return LeafFamily::kBernoulli;
  if (name == "categorical") return LeafFamily::kCategorical;
  throw InputError("unknown leaf family '" + name + "'");
}

namespace {

void split_region(RegionGraph& graph, int region, int level, Rng& rng) {
  if (level == graph.depth) return;
  std::vector<int> vars = graph.regions[region].variables();
  rng.shuffle(std::span<int>(vars));
  const auto left_size = static_cast<std::ptrdiff_t>((vars.size() + 1) / 2);
  Scope left(std::vector<int>(vars.begin(), vars.begin() + left_size));
  Scope right(std::vector<int>(vars.begin() + left_size, vars.end()));
  const int left_id = static_cast<int>(graph.regions.size());
  graph.regions.push_back(std::move(left));
  const int right_id = static_cast<int>(graph.regions.size());
  graph.regions.push_back(std::move(right));
  graph.partitions.push_back({region, {left_id, right_id}});
  split_region(graph, left_id, level + 1, rng);
  split_region(graph, right_id, level + 1, rng);
}

void check_config(const StructureConfig& c) {
  if (c.depth < 1 || c.repetitions < 1 || c.sum_nodes_per_region < 1 ||
      c.leaf_distributions_per_region < 1 || c.num_classes < 1) {
    throw InputError("structure counts must be positive");
  }
  if (c.leaf_family == LeafFamily::kCategorical && c.categorical_levels < 2) {
    throw InputError("categorical leaves need at least two levels");
  }
  if (!(c.variance_floor > 0.0)) throw InputError("variance_floor must be positive");
}

NodeId make_leaf(Circuit& circuit, int variable, const StructureConfig& config, Rng& rng) {
  switch (config.leaf_family) {
    case LeafFamily::kGaussian:
      return circuit.add_gaussian(variable, rng.uniform(), std::max(1.0, config.variance_floor));
    case LeafFamily::kBernoulli:
      return circuit.add_bernoulli(variable, rng.uniform(0.05, 0.95));
    case LeafFamily::kCategorical: {
      Eigen::VectorXd p(config.categorical_levels);
      for (Eigen::Index k = 0; k < p.size(); ++k) p[k] = rng.uniform(0.1, 1.0);
      return circuit.add_categorical(variable, p / p.sum());
    }
  }
  throw Error("unhandled leaf family");
}

}  // namespace

RegionGraph build_region_graph(int num_variables, int depth, int repetitions,
                               std::uint64_t seed) {
  if (num_variables < 2) throw InputError("region graph needs at least two variables");
  if (depth < 1 || repetitions < 1) throw InputError("depth and repetitions must be positive");
  if (depth >= 31 || (1L << depth) > num_variables) {
    throw InputError("2^depth exceeds the number of variables");
  }
  RegionGraph graph;
  graph.depth = depth;
  graph.repetitions = repetitions;
  graph.num_variables = num_variables;
  std::vector<int> all(num_variables);
  std::iota(all.begin(), all.end(), 0);
  graph.regions.emplace_back(std::move(all));
  Rng rng(seed);
  for (int r = 0; r < repetitions; ++r) split_region(graph, 0, 0, rng);
  return graph;
}

Circuit instantiate(const RegionGraph& graph, const StructureConfig& config) {
  check_config(config);
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  Circuit circuit;
  circuit.num_variables = graph.num_variables;
  circuit.variance_floor = config.variance_floor;

  // Output nodes of each region, filled bottom-up. Children regions always
  // have larger indices than their parents, so reverse index order works.
  std::vector<std::vector<NodeId>> outputs(graph.regions.size());
  std::vector<char> is_split(graph.regions.size(), 0);
  for (const auto& p : graph.partitions) is_split[p.parent] = 1;

  for (std::size_t r = graph.regions.size(); r-- > 0;) {
    const auto& vars = graph.regions[r].variables();
    if (!is_split[r]) {
      for (int i = 0; i < config.leaf_distributions_per_region; ++i) {
        std::vector<NodeId> leaves;
        for (int v : vars) leaves.push_back(make_leaf(circuit, v, config, rng));
        outputs[r].push_back(leaves.size() == 1 ? leaves.front()
                                                : circuit.add_product(std::move(leaves)));
      }
      continue;
    }
    std::vector<NodeId> products;
    for (int p : graph.partitions_of(static_cast<int>(r))) {
      const auto& [left, right] = graph.partitions[p].children;
      for (NodeId a : outputs[left]) {
        for (NodeId b : outputs[right]) products.push_back(circuit.add_product({a, b}));
      }
    }
    const int sums = r == 0 ? config.num_classes : config.sum_nodes_per_region;
    for (int s = 0; s < sums; ++s) outputs[r].push_back(circuit.add_sum(products));
  }

  circuit.set_class_roots(outputs[0]);
  if (auto report = validate(circuit); !report.ok) {
    throw Error("internal fault: instantiated circuit is invalid: " + report.summary());
  }
  return circuit;
}

Circuit build_rat_spn(int num_variables, const StructureConfig& config) {
  if (num_variables == 1) {
    // No region can be split: each class root mixes the R * I leaves directly.
    check_config(config);
    Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    Circuit circuit;
    circuit.num_variables = 1;
    circuit.variance_floor = config.variance_floor;
    std::vector<NodeId> leaves;
    for (int i = 0; i < config.repetitions * config.leaf_distributions_per_region; ++i) {
      leaves.push_back(make_leaf(circuit, 0, config, rng));
    }
    std::vector<NodeId> roots;
    for (int c = 0; c < config.num_classes; ++c) roots.push_back(circuit.add_sum(leaves));
    circuit.set_class_roots(roots);
    return circuit;
  }
  return instantiate(
      build_region_graph(num_variables, config.depth, config.repetitions, config.seed), config);
}

}  // namespace spncf
