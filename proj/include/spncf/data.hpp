#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "spncf/errors.hpp"

namespace spncf {

enum class ColumnKind { kContinuous, kOneHot };
enum class Scaling { kNone, kMinMax, kStandard };

std::string to_string(Scaling scaling);
Scaling scaling_from_string(const std::string& name);

// One encoded column. Continuous columns store encoded = (raw - offset) / scale.
struct ColumnMeta {
  std::string source;
  ColumnKind kind = ColumnKind::kContinuous;
  int group = -1;
  std::string level;
  Scaling scaling = Scaling::kNone;
  double offset = 0.0;
  double scale = 1.0;
};

// Contiguous one-hot columns encoding one categorical attribute.
struct OneHotGroup {
  std::string source;
  int first_column = 0;
  std::vector<std::string> levels;

  int size() const { return static_cast<int>(levels.size()); }
};

struct FeatureMeta {
  std::vector<ColumnMeta> columns;
  std::vector<OneHotGroup> groups;
  std::string label;
  std::vector<std::string> class_names;

  int num_features() const { return static_cast<int>(columns.size()); }
};

struct Dataset {
  Eigen::MatrixXd features;
  Eigen::VectorXi labels;
  FeatureMeta meta;
  int num_classes = 0;
  std::string name;

  Eigen::Index size() const { return features.rows(); }
  int num_features() const { return static_cast<int>(features.cols()); }
  Dataset subset(const std::vector<Eigen::Index>& rows) const;
};

// Schema sidecar: {"label": name, "classes": [...]?, "columns": [{"name",
// "kind": "continuous"|"categorical", "scaling": "minmax"|"standard"|"none",
// "levels": [...]?}]}
struct ColumnSchema {
  std::string name;
  bool categorical = false;
  Scaling scaling = Scaling::kMinMax;
  std::vector<std::string> levels;
};

struct Schema {
  std::string label;
  std::vector<ColumnSchema> columns;
  std::vector<std::string> classes;

  static Schema from_json_string(const std::string& text);
  static Schema load(const std::filesystem::path& path);
};

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

RawTable parse_csv(std::istream& in);
RawTable read_csv(const std::filesystem::path& path);

// Parses, one-hot encodes categorical columns and scales continuous ones.
// Scaling parameters are fitted on this file and stored in the metadata.
Dataset load_csv(const std::filesystem::path& path, const Schema& schema);
Dataset encode_table(const RawTable& table, const Schema& schema);

using RawValue = std::variant<double, std::string>;

// Encodes one raw row given in schema column order. Throws InputError on an
// unknown category or unparseable number.
Eigen::VectorXd encode_row(const FeatureMeta& meta, const std::vector<std::string>& raw);
// Maps an encoded row back to raw units; one-hot groups decode to the argmax
// level.
std::vector<RawValue> decode_row(const FeatureMeta& meta, const Eigen::Ref<const Eigen::VectorXd>& encoded);

// Stratified, seeded shuffle split. Train size is round(N * train_fraction),
// apportioned over classes by largest remainder.
std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> split_indices(
    const Eigen::VectorXi& labels, int num_classes, double train_fraction, std::uint64_t seed);
std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction, std::uint64_t seed);

// Two interleaving half circles, features min-max scaled to [0, 1].
Dataset make_moons(int n, double noise, std::uint64_t seed);
// Two concentric circles (inner radius 0.5), features min-max scaled to [0, 1].
Dataset make_rings(int n, double noise, std::uint64_t seed);
// Two 3-level one-hot groups followed by two continuous features in [0, 1];
// labels from a fixed logistic rule.
Dataset make_onehot_logistic(int n, std::uint64_t seed);

// MNIST-style IDX files (images magic 0x00000803, labels 0x00000801). Only
// rows whose digit is in `digits` are kept; class index is the position in
// `digits`. Pixels are scaled to [0, 1].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 const std::vector<int>& digits);

}  // namespace spncf
