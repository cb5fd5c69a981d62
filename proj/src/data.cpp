#include "spncf/data.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"
#include "spncf/random.hpp"

namespace spncf {

std::string to_string(Scaling scaling) {
  switch (scaling) {
    case Scaling::kNone: return "none";
    case Scaling::kMinMax: return "minmax";
    case Scaling::kStandard: return "standard";
  }
  return "none";
}

Scaling scaling_from_string(const std::string& name) {
  if (name == "none") return Scaling::kNone;
  if (name == "minmax") return Scaling::kMinMax;
  if (name == "standard") return Scaling::kStandard;
  throw InputError("unknown scaling '" + name + "'");
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
  Dataset out;
  out.meta = meta;
  out.num_classes = num_classes;
  out.name = name;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out.features.row(r) = features.row(rows[i]);
    out.labels[r] = labels[rows[i]];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Schema

Schema Schema::from_json_string(const std::string& text) {
  using nlohmann::json;
  Schema schema;
  try {
    const json j = json::parse(text);
    schema.label = j.at("label").get<std::string>();
    schema.classes = j.value("classes", std::vector<std::string>{});
    for (const auto& c : j.at("columns")) {
      ColumnSchema column;
      column.name = c.at("name").get<std::string>();
      const auto kind = c.value("kind", std::string("continuous"));
      if (kind == "categorical") {
        column.categorical = true;
      } else if (kind != "continuous") {
        throw InputError("column '" + column.name + "' has unknown kind '" + kind + "'");
      }
      column.scaling = scaling_from_string(c.value("scaling", std::string("minmax")));
      column.levels = c.value("levels", std::vector<std::string>{});
      schema.columns.push_back(std::move(column));
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed schema: ") + e.what());
  }
  if (schema.columns.empty()) throw InputError("schema lists no feature columns");
  return schema;
}

Schema Schema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open schema file '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json_string(buffer.str());
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
      was_quoted = true;
    } else if (ch == ',') {
      fields.push_back(was_quoted ? field : trim(field));
      field.clear();
      was_quoted = false;
    } else {
      field += ch;
    }
  }
  fields.push_back(was_quoted ? field : trim(field));
  return fields;
}

bool parse_double(const std::string& text, double& out) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace

RawTable parse_csv(std::istream& in) {
  RawTable table;
  std::string line;
  bool have_header = false;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw InputError("CSV line " + std::to_string(line_number) + " has " +
                       std::to_string(fields.size()) + " fields, header has " +
                       std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (!have_header) throw InputError("CSV input has no header row");
  return table;
}

RawTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open data file '" + path.string() + "'");
  return parse_csv(in);
}

Dataset encode_table(const RawTable& table, const Schema& schema) {
  auto column_index = [&](const std::string& name) {
    const auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end()) throw InputError("column '" + name + "' not found in header");
    return static_cast<std::size_t>(it - table.header.begin());
  };
  const std::size_t label_col = column_index(schema.label);
  const auto n = static_cast<Eigen::Index>(table.rows.size());

  Dataset dataset;
  FeatureMeta& meta = dataset.meta;
  meta.label = schema.label;

  // Class names: from the schema, else sorted distinct label values.
  meta.class_names = schema.classes;
  if (meta.class_names.empty()) {
    std::set<std::string> seen;
    for (const auto& row : table.rows) seen.insert(row[label_col]);
    meta.class_names.assign(seen.begin(), seen.end());
  }
  dataset.num_classes = static_cast<int>(meta.class_names.size());

  // Column metadata and fitted scaling.
  std::vector<std::size_t> source_cols;
  for (const auto& column : schema.columns) {
    const std::size_t col = column_index(column.name);
    source_cols.push_back(col);
    if (column.categorical) {
      std::vector<std::string> levels = column.levels;
      if (levels.empty()) {
        std::set<std::string> seen;
        for (const auto& row : table.rows) seen.insert(row[col]);
        levels.assign(seen.begin(), seen.end());
      }
      if (levels.size() < 2) {
        throw InputError("categorical column '" + column.name + "' needs at least two levels");
      }
      const int group = static_cast<int>(meta.groups.size());
      meta.groups.push_back({column.name, static_cast<int>(meta.columns.size()), levels});
      for (const auto& level : levels) {
        meta.columns.push_back({column.name, ColumnKind::kOneHot, group, level, Scaling::kNone});
      }
      continue;
    }
    ColumnMeta c{column.name, ColumnKind::kContinuous, -1, {}, column.scaling};
    std::vector<double> values(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      if (!parse_double(table.rows[r][col], values[r])) {
        throw InputError("unparseable value '" + table.rows[r][col] + "' at data row " +
                         std::to_string(r + 1) + ", column '" + column.name + "'");
      }
    }
    if (!values.empty() && column.scaling == Scaling::kMinMax) {
      const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
      c.offset = *lo;
      c.scale = *hi > *lo ? *hi - *lo : 1.0;
    } else if (!values.empty() && column.scaling == Scaling::kStandard) {
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= static_cast<double>(values.size());
      double var = 0.0;
      for (double v : values) var += (v - mean) * (v - mean);
      var /= static_cast<double>(values.size());
      c.offset = mean;
      c.scale = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    meta.columns.push_back(std::move(c));
  }

  dataset.features.resize(n, meta.num_features());
  dataset.labels.resize(n);
  std::vector<std::string> raw(schema.columns.size());
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = table.rows[static_cast<std::size_t>(r)];
    for (std::size_t k = 0; k < source_cols.size(); ++k) raw[k] = row[source_cols[k]];
    try {
      dataset.features.row(r) = encode_row(meta, raw).transpose();
    } catch (const InputError& e) {
      throw InputError("data row " + std::to_string(r + 1) + ": " + e.what());
    }
    const auto it = std::find(meta.class_names.begin(), meta.class_names.end(), row[label_col]);
    if (it == meta.class_names.end()) {
      throw InputError("unknown label '" + row[label_col] + "' at data row " +
                       std::to_string(r + 1));
    }
    dataset.labels[r] = static_cast<int>(it - meta.class_names.begin());
  }
  return dataset;
}

Dataset load_csv(const std::filesystem::path& path, const Schema& schema) {
  Dataset dataset = encode_table(read_csv(path), schema);
  dataset.name = path.stem().string();
  return dataset;
}

Eigen::VectorXd encode_row(const FeatureMeta& meta, const std::vector<std::string>& raw) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(meta.num_features());
  std::size_t source = 0;
  for (int c = 0; c < meta.num_features();) {
    if (source >= raw.size()) throw InputError("raw row has too few values");
    const auto& column = meta.columns[c];
    const std::string& value = raw[source++];
    if (column.kind == ColumnKind::kContinuous) {
      double v;
      if (!parse_double(value, v)) {
        throw InputError("unparseable value '" + value + "' in column '" + column.source + "'");
      }
      out[c] = (v - column.offset) / column.scale;
      ++c;
      continue;
    }
    const auto& group = meta.groups[column.group];
    const auto it = std::find(group.levels.begin(), group.levels.end(), value);
    if (it == group.levels.end()) {
      throw InputError("unknown category '" + value + "' in column '" + group.source + "'");
    }
    out[group.first_column + (it - group.levels.begin())] = 1.0;
    c += group.size();
  }
  return out;
}

std::vector<RawValue> decode_row(const FeatureMeta& meta, const Eigen::Ref<const Eigen::VectorXd>& encoded) {
  if (encoded.size() != meta.num_features()) throw InputError("encoded row has wrong length");
  std::vector<RawValue> out;
  for (int c = 0; c < meta.num_features();) {
    const auto& column = meta.columns[c];
    if (column.kind == ColumnKind::kContinuous) {
      out.emplace_back(encoded[c] * column.scale + column.offset);
      ++c;
      continue;
    }
    const auto& group = meta.groups[column.group];
    Eigen::Index best;
    encoded.segment(group.first_column, group.size()).maxCoeff(&best);
    out.emplace_back(group.levels[static_cast<std::size_t>(best)]);
    c += group.size();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> split_indices(
    const Eigen::VectorXi& labels, int num_classes, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InputError("train fraction must lie in (0, 1)");
  }
  const auto n = labels.size();
  const auto target = static_cast<Eigen::Index>(std::lround(static_cast<double>(n) * train_fraction));
  if (target <= 0 || target >= n) {
    throw InputError("split of " + std::to_string(n) + " rows leaves one side empty");
  }
  std::vector<std::vector<Eigen::Index>> by_class(static_cast<std::size_t>(num_classes));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw InputError("label out of range");
    by_class[labels[i]].push_back(i);
  }
  Rng rng(seed);
  std::vector<Eigen::Index> quota(by_class.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  Eigen::Index assigned = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    rng.shuffle(std::span<Eigen::Index>(by_class[c]));
    const double exact = static_cast<double>(by_class[c].size()) * train_fraction;
    quota[c] = static_cast<Eigen::Index>(std::floor(exact));
    assigned += quota[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < target && k < remainders.size(); ++k) {
    ++quota[remainders[k].second];
    ++assigned;
  }
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> test;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const auto& rows = by_class[c];
    train.insert(train.end(), rows.begin(), rows.begin() + quota[c]);
    test.insert(test.end(), rows.begin() + quota[c], rows.end());
  }
  rng.shuffle(std::span<Eigen::Index>(train));
  rng.shuffle(std::span<Eigen::Index>(test));
  return {std::move(train), std::move(test)};
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction, std::uint64_t seed) {
  auto [train, test] = split_indices(dataset.labels, dataset.num_classes, train_fraction, seed);
  return {dataset.subset(train), dataset.subset(test)};
}

// ---------------------------------------------------------------------------
// Synthetic generators

namespace {

double linspace_at(double lo, double hi, int count, int i) {
  if (count <= 1) return lo;
  return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
}

// Min-max scales the columns in place and records the transform in meta.
Dataset finish_synthetic(Eigen::MatrixXd raw, Eigen::VectorXi labels, std::string name) {
  Dataset dataset;
  dataset.name = std::move(name);
  dataset.num_classes = 2;
  dataset.meta.label = "label";
  dataset.meta.class_names = {"0", "1"};
  for (Eigen::Index c = 0; c < raw.cols(); ++c) {
    ColumnMeta column{"x" + std::to_string(c + 1), ColumnKind::kContinuous, -1, {}, Scaling::kMinMax};
    const double lo = raw.col(c).minCoeff();
    const double hi = raw.col(c).maxCoeff();
    column.offset = lo;
    column.scale = hi > lo ? hi - lo : 1.0;
    raw.col(c) = (raw.col(c).array() - column.offset) / column.scale;
    dataset.meta.columns.push_back(std::move(column));
  }
  dataset.features = std::move(raw);
  dataset.labels = std::move(labels);
  return dataset;
}

void check_synthetic(int n, double noise) {
  if (n < 2) throw InputError("synthetic datasets need n >= 2");
  if (!(noise >= 0.0)) throw InputError("noise must be non-negative");
}

}  // namespace

Dataset make_moons(int n, double noise, std::uint64_t seed) {
  check_synthetic(n, noise);
  const int n_outer = n / 2;
  const int n_inner = n - n_outer;
  Eigen::MatrixXd raw(n, 2);
  Eigen::VectorXi labels(n);
  for (int i = 0; i < n_outer; ++i) {
    const double t = linspace_at(0.0, std::numbers::pi, n_outer, i);
    raw.row(i) << std::cos(t), std::sin(t);
    labels[i] = 0;
  }
  for (int i = 0; i < n_inner; ++i) {
    const double t = linspace_at(0.0, std::numbers::pi, n_inner, i);
    raw.row(n_outer + i) << 1.0 - std::cos(t), 1.0 - std::sin(t) - 0.5;
    labels[n_outer + i] = 1;
  }
  Rng rng(seed);
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] += noise * rng.normal();
  return finish_synthetic(std::move(raw), std::move(labels), "moons");
}

Dataset make_rings(int n, double noise, std::uint64_t seed) {
  check_synthetic(n, noise);
  constexpr double kInnerRadius = 0.5;
  const int n_outer = n / 2;
  const int n_inner = n - n_outer;
  Eigen::MatrixXd raw(n, 2);
  Eigen::VectorXi labels(n);
  for (int i = 0; i < n_outer; ++i) {
    const double t = 2.0 * std::numbers::pi * i / n_outer;
    raw.row(i) << std::cos(t), std::sin(t);
    labels[i] = 0;
  }
  for (int i = 0; i < n_inner; ++i) {
    const double t = 2.0 * std::numbers::pi * i / n_inner;
    raw.row(n_outer + i) << kInnerRadius * std::cos(t), kInnerRadius * std::sin(t);
    labels[n_outer + i] = 1;
  }
  Rng rng(seed);
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] += noise * rng.normal();
  return finish_synthetic(std::move(raw), std::move(labels), "rings");
}

Dataset make_onehot_logistic(int n, std::uint64_t seed) {
  if (n < 2) throw InputError("synthetic datasets need n >= 2");
  // logit = a_effect[A] + b_effect[B] + 3 (c1 - c2)
  constexpr double kAEffect[3] = {0.0, 2.0, -2.0};
  constexpr double kBEffect[3] = {1.5, 0.0, -1.5};
  Rng rng(seed);
  Dataset dataset;
  dataset.name = "onehot_logistic";
  dataset.num_classes = 2;
  dataset.features = Eigen::MatrixXd::Zero(n, 8);
  dataset.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto a = static_cast<int>(rng.uniform_int(3));
    const auto b = static_cast<int>(rng.uniform_int(3));
    const double c1 = rng.uniform();
    const double c2 = rng.uniform();
    dataset.features(i, a) = 1.0;
    dataset.features(i, 3 + b) = 1.0;
    dataset.features(i, 6) = c1;
    dataset.features(i, 7) = c2;
    const double logit = kAEffect[a] + kBEffect[b] + 3.0 * (c1 - c2);
    dataset.labels[i] = 1.0 / (1.0 + std::exp(-logit)) > 0.5 ? 1 : 0;
  }
  auto& meta = dataset.meta;
  meta.label = "label";
  meta.class_names = {"0", "1"};
  const std::vector<std::string> levels = {"l0", "l1", "l2"};
  meta.groups = {{"A", 0, levels}, {"B", 3, levels}};
  for (int g = 0; g < 2; ++g) {
    for (const auto& level : levels) {
      meta.columns.push_back({meta.groups[g].source, ColumnKind::kOneHot, g, level, Scaling::kNone});
    }
  }
  meta.columns.push_back({"c1", ColumnKind::kContinuous, -1, {}, Scaling::kNone});
  meta.columns.push_back({"c2", ColumnKind::kContinuous, -1, {}, Scaling::kNone});
  return dataset;
}

// ---------------------------------------------------------------------------
// IDX

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& what) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw InputError("truncated IDX file " + what);
  return (std::uint32_t{bytes[0]} << 24) | (std::uint32_t{bytes[1]} << 16) |
         (std::uint32_t{bytes[2]} << 8) | std::uint32_t{bytes[3]};
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 const std::vector<int>& digits) {
  std::ifstream image_in(images, std::ios::binary);
  if (!image_in) throw InputError("cannot open IDX images '" + images.string() + "'");
  std::ifstream label_in(labels, std::ios::binary);
  if (!label_in) throw InputError("cannot open IDX labels '" + labels.string() + "'");
  if (digits.empty()) throw InputError("digit subset is empty");

  if (read_be32(image_in, images.string()) != 0x00000803) {
    throw InputError("'" + images.string() + "' is not an IDX image file");
  }
  if (read_be32(label_in, labels.string()) != 0x00000801) {
    throw InputError("'" + labels.string() + "' is not an IDX label file");
  }
  const std::uint32_t count = read_be32(image_in, images.string());
  const std::uint32_t rows = read_be32(image_in, images.string());
  const std::uint32_t cols = read_be32(image_in, images.string());
  if (read_be32(label_in, labels.string()) != count) {
    throw InputError("IDX image and label counts differ");
  }
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;

  std::vector<unsigned char> label_bytes(count);
  if (!label_in.read(reinterpret_cast<char*>(label_bytes.data()), count)) {
    throw InputError("truncated IDX file " + labels.string());
  }
  std::vector<unsigned char> image_bytes(pixels * count);
  if (!image_in.read(reinterpret_cast<char*>(image_bytes.data()),
                     static_cast<std::streamsize>(image_bytes.size()))) {
    throw InputError("truncated IDX file " + images.string());
  }

  std::vector<std::size_t> kept;
  std::vector<int> classes;
  for (std::size_t i = 0; i < count; ++i) {
    const auto it = std::find(digits.begin(), digits.end(), static_cast<int>(label_bytes[i]));
    if (it != digits.end()) {
      kept.push_back(i);
      classes.push_back(static_cast<int>(it - digits.begin()));
    }
  }

  Dataset dataset;
  dataset.name = "mnist";
  dataset.num_classes = static_cast<int>(digits.size());
  dataset.features.resize(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(pixels));
  dataset.labels.resize(static_cast<Eigen::Index>(kept.size()));
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const unsigned char* src = image_bytes.data() + kept[k] * pixels;
    for (std::size_t p = 0; p < pixels; ++p) {
      dataset.features(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p)) = src[p] / 255.0;
    }
    dataset.labels[static_cast<Eigen::Index>(k)] = classes[k];
  }
  auto& meta = dataset.meta;
  meta.label = "digit";
  for (int d : digits) meta.class_names.push_back(std::to_string(d));
  for (std::size_t p = 0; p < pixels; ++p) {
    meta.columns.push_back({"px" + std::to_string(p), ColumnKind::kContinuous, -1, {},
                            Scaling::kMinMax, 0.0, 255.0});
  }
  return dataset;
}

}  // namespace spncf
