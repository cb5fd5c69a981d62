#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "spncf/circuit.hpp"

namespace spncf {

struct Partition {
  int parent = 0;
  std::array<int, 2> children{};
};

// Hierarchy of variable subsets. Region 0 is the root (all variables). Each
// repetition contributes its own chain of partitions below the root; regions
// are not shared between repetitions.
struct RegionGraph {
  std::vector<Scope> regions;
  std::vector<Partition> partitions;
  int depth = 1;
  int repetitions = 1;
  int num_variables = 0;

  // Regions that are never split.
  std::vector<int> leaf_regions() const;
  // Partitions whose parent is `region`.
  std::vector<int> partitions_of(int region) const;
};

enum class LeafFamily { kGaussian, kBernoulli, kCategorical };

std::string to_string(LeafFamily family);
LeafFamily leaf_family_from_string(const std::string& name);

struct StructureConfig {
  int depth = 1;
  int repetitions = 19;
  int sum_nodes_per_region = 10;
  int leaf_distributions_per_region = 20;
  int num_classes = 2;
  LeafFamily leaf_family = LeafFamily::kGaussian;
  int categorical_levels = 2;
  double variance_floor = kDefaultVarianceFloor;
  std::uint64_t seed = 0;
};

// Random balanced 2-splits of the root, recursively to `depth`, repeated
// `repetitions` times. Odd regions split ceil(n/2) / floor(n/2).
RegionGraph build_region_graph(int num_variables, int depth, int repetitions, std::uint64_t seed);

// Builds the RAT-SPN circuit over `graph`: I leaf distributions per leaf
// region, S sums per inner region over cross-paired child products, and C
// class roots over all root-partition products.
Circuit instantiate(const RegionGraph& graph, const StructureConfig& config);

// build_region_graph followed by instantiate, seeded from config.seed. With a
// single variable the class roots are sums over R * I leaves.
Circuit build_rat_spn(int num_variables, const StructureConfig& config);

}  // namespace spncf
