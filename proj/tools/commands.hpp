#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "spncf/counterfactual.hpp"
#include "spncf/data.hpp"
#include "spncf/structure.hpp"
#include "spncf/training.hpp"

namespace spncf::cli {

struct SyntheticSource {
  std::string kind = "moons";  // moons | rings | onehot_logistic
  int n = 2000;
  double noise = 0.1;
  std::uint64_t seed = 1;
};

struct IdxSource {
  std::filesystem::path images;
  std::filesystem::path labels;
  std::vector<int> digits{1, 3, 4, 7, 8};
};

struct DataConfig {
  std::filesystem::path csv;
  std::filesystem::path schema;
  std::optional<SyntheticSource> synthetic;
  std::optional<IdxSource> idx;
  double train_fraction = 0.7;
  std::uint64_t split_seed = 0;
};

// Everything a command may need; loaded from --config and overridden by flags.
struct RunConfig {
  DataConfig data;
  StructureConfig structure;
  TrainConfig train;
  CfConfig counterfactual;
  BaselineConfig baseline;
  std::filesystem::path model;
  std::filesystem::path out;
  std::optional<int> source_class;
  int target_class = 1;
  std::size_t max_queries = 0;  // 0 = all
  std::filesystem::path queries;
  std::filesystem::path config;  // file this was loaded from, if any
};

RunConfig config_from_json_string(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// Entry point shared by the executable and the tests. Returns the process exit
// code: 0 success, 1 internal fault, 2 user or input error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace spncf::cli
