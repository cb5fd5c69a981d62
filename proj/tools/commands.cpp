#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "spncf/errors.hpp"
#include "spncf/grad.hpp"
#include "spncf/inference.hpp"
#include "spncf/serialize.hpp"

namespace spncf::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void reject_unknown_keys(const json& j, const std::string& section, std::initializer_list<const char*> known) {
  if (!j.is_object()) throw InputError("config section '" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return key == k; });
    if (!ok) throw InputError("unknown config key '" + section + "." + key + "'");
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return base / p;
}

RunConfig parse_config(const json& root, const fs::path& base) {
  RunConfig cfg;
  reject_unknown_keys(root, "<root>",
                      {"seed", "data", "structure", "train", "counterfactual", "baseline", "model", "out"});
  if (root.contains("seed")) {
    auto seed = root.at("seed").get<std::uint64_t>();
    cfg.structure.seed = seed;
    cfg.train.seed = seed;
  }
  if (root.contains("model")) cfg.model = resolve(base, root.at("model").get<std::string>());
  if (root.contains("out")) cfg.out = resolve(base, root.at("out").get<std::string>());

  if (root.contains("data")) {
    const json& d = root.at("data");
    reject_unknown_keys(d, "data", {"csv", "schema", "synthetic", "idx", "train_fraction", "split_seed"});
    if (d.contains("csv")) cfg.data.csv = resolve(base, d.at("csv").get<std::string>());
    if (d.contains("schema")) cfg.data.schema = resolve(base, d.at("schema").get<std::string>());
    read_field(d, "train_fraction", cfg.data.train_fraction);
    read_field(d, "split_seed", cfg.data.split_seed);
    if (d.contains("synthetic")) {
      const json& s = d.at("synthetic");
      reject_unknown_keys(s, "data.synthetic", {"kind", "n", "noise", "seed"});
      SyntheticSource src;
      read_field(s, "kind", src.kind);
      read_field(s, "n", src.n);
      read_field(s, "noise", src.noise);
      read_field(s, "seed", src.seed);
      cfg.data.synthetic = src;
    }
    if (d.contains("idx")) {
      const json& s = d.at("idx");
      reject_unknown_keys(s, "data.idx", {"images", "labels", "digits"});
      IdxSource src;
      src.images = resolve(base, s.at("images").get<std::string>());
      src.labels = resolve(base, s.at("labels").get<std::string>());
      read_field(s, "digits", src.digits);
      cfg.data.idx = src;
    }
  }

  if (root.contains("structure")) {
    const json& s = root.at("structure");
    reject_unknown_keys(s, "structure",
                        {"depth", "repetitions", "sum_nodes_per_region", "leaf_distributions_per_region",
                         "leaf_family", "categorical_levels", "seed"});
    read_field(s, "depth", cfg.structure.depth);
    read_field(s, "repetitions", cfg.structure.repetitions);
    read_field(s, "sum_nodes_per_region", cfg.structure.sum_nodes_per_region);
    read_field(s, "leaf_distributions_per_region", cfg.structure.leaf_distributions_per_region);
    read_field(s, "categorical_levels", cfg.structure.categorical_levels);
    read_field(s, "seed", cfg.structure.seed);
    if (s.contains("leaf_family"))
      cfg.structure.leaf_family = leaf_family_from_string(s.at("leaf_family").get<std::string>());
  }

  if (root.contains("train")) {
    const json& t = root.at("train");
    reject_unknown_keys(t, "train",
                        {"learning_rate", "epochs", "batch_size", "variance_floor", "seed",
                         "validation_fraction", "patience", "optimizer"});
    read_field(t, "learning_rate", cfg.train.learning_rate);
    read_field(t, "epochs", cfg.train.epochs);
    read_field(t, "batch_size", cfg.train.batch_size);
    read_field(t, "variance_floor", cfg.train.variance_floor);
    read_field(t, "seed", cfg.train.seed);
    read_field(t, "validation_fraction", cfg.train.validation_fraction);
    read_field(t, "patience", cfg.train.patience);
    if (t.contains("optimizer")) cfg.train.optimizer = optimizer_from_string(t.at("optimizer").get<std::string>());
  }

  if (root.contains("counterfactual")) {
    const json& c = root.at("counterfactual");
    reject_unknown_keys(c, "counterfactual",
                        {"epsilon1", "epsilon2", "grad_mode", "clip_to_unit", "retry_epsilon_schedule",
                         "target_class", "source_class", "max_queries", "queries"});
    read_field(c, "epsilon1", cfg.counterfactual.epsilon1);
    read_field(c, "epsilon2", cfg.counterfactual.epsilon2);
    read_field(c, "clip_to_unit", cfg.counterfactual.clip_to_unit);
    read_field(c, "retry_epsilon_schedule", cfg.counterfactual.retry_epsilon_schedule);
    read_field(c, "target_class", cfg.target_class);
    read_field(c, "max_queries", cfg.max_queries);
    if (c.contains("source_class")) cfg.source_class = c.at("source_class").get<int>();
    if (c.contains("grad_mode"))
      cfg.counterfactual.grad_mode = grad_mode_from_string(c.at("grad_mode").get<std::string>());
    if (c.contains("queries")) cfg.queries = resolve(base, c.at("queries").get<std::string>());
  }

  if (root.contains("baseline")) {
    const json& b = root.at("baseline");
    reject_unknown_keys(b, "baseline", {"lambda", "learning_rate", "max_iters", "early_stop", "clip_to_unit"});
    read_field(b, "lambda", cfg.baseline.lambda);
    read_field(b, "learning_rate", cfg.baseline.learning_rate);
    read_field(b, "max_iters", cfg.baseline.max_iters);
    read_field(b, "early_stop", cfg.baseline.early_stop);
    read_field(b, "clip_to_unit", cfg.baseline.clip_to_unit);
  }
  return cfg;
}

RunConfig parse_config_text(const std::string& text, const fs::path& base) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    return parse_config(root, base);
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Dataset and model plumbing

Dataset load_dataset(const DataConfig& data) {
  int sources = (!data.csv.empty()) + data.synthetic.has_value() + data.idx.has_value();
  if (sources == 0) throw InputError("no dataset configured (use --data or a config 'data' section)");
  if (sources > 1) throw InputError("more than one dataset source configured");
  if (data.idx) return load_idx(data.idx->images, data.idx->labels, data.idx->digits);
  if (data.synthetic) {
    const auto& s = *data.synthetic;
    if (s.kind == "moons") return make_moons(s.n, s.noise, s.seed);
    if (s.kind == "rings") return make_rings(s.n, s.noise, s.seed);
    if (s.kind == "onehot_logistic") return make_onehot_logistic(s.n, s.seed);
    throw InputError("unknown synthetic dataset '" + s.kind + "'");
  }
  if (!fs::exists(data.csv)) throw InputError("cannot open data file '" + data.csv.string() + "'");
  if (data.schema.empty()) throw InputError("a CSV dataset needs --schema");
  return load_csv(data.csv, Schema::load(data.schema));
}

std::string dataset_name(const DataConfig& data) {
  if (data.synthetic) return data.synthetic->kind;
  if (data.idx) return "idx:" + data.idx->images.filename().string();
  return data.csv.filename().string();
}

std::pair<Dataset, Dataset> train_test(const RunConfig& cfg) {
  return split(load_dataset(cfg.data), cfg.data.train_fraction, cfg.data.split_seed);
}

Circuit load_model(const RunConfig& cfg) {
  if (cfg.model.empty()) throw InputError("--model is required");
  return load(cfg.model);
}

void check_compatible(const Circuit& circuit, const Dataset& data) {
  if (static_cast<Eigen::Index>(circuit.num_variables) != data.num_features())
    throw InputError("model has " + std::to_string(circuit.num_variables) + " variables but the dataset has " +
                     std::to_string(data.num_features()) + " features");
  if (static_cast<int>(circuit.class_roots.size()) < data.num_classes)
    throw InputError("model has fewer classes than the dataset");
}

bool same_file(const fs::path& a, const fs::path& b) {
  if (a.empty() || b.empty()) return false;
  std::error_code ec;
  return fs::weakly_canonical(a, ec) == fs::weakly_canonical(b, ec);
}

void require_distinct_output(const RunConfig& cfg, const fs::path& output) {
  std::vector<fs::path> inputs{cfg.config, cfg.model, cfg.data.csv, cfg.data.schema, cfg.queries};
  if (cfg.data.idx) {
    inputs.push_back(cfg.data.idx->images);
    inputs.push_back(cfg.data.idx->labels);
  }
  for (const auto& in : inputs)
    if (same_file(in, output)) throw InputError("output path '" + output.string() + "' is also an input");
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  return out;
}

fs::path report_path(const fs::path& model_out) {
  fs::path p = model_out;
  p.replace_extension();
  p += ".report.json";
  return p;
}

// Query rows: explicit CSV of encoded features (optional "y" column), or test
// rows of the source class that the model classifies correctly.
std::vector<CfQuery> build_queries(const RunConfig& cfg, const Circuit& circuit, const Dataset& test) {
  const int num_classes = static_cast<int>(circuit.class_roots.size());
  if (cfg.target_class < 0 || cfg.target_class >= num_classes)
    throw InputError("target class " + std::to_string(cfg.target_class) + " outside [0, " +
                     std::to_string(num_classes) + ")");
  if (cfg.source_class && (*cfg.source_class < 0 || *cfg.source_class >= num_classes))
    throw InputError("source class outside the model's classes");
  if (cfg.source_class && *cfg.source_class == cfg.target_class)
    throw InputError("source and target class are equal");

  std::vector<CfQuery> queries;
  const auto limit_reached = [&] { return cfg.max_queries > 0 && queries.size() >= cfg.max_queries; };

  if (!cfg.queries.empty()) {
    RawTable table = read_csv(cfg.queries);
    const std::size_t d = circuit.num_variables;
    auto y_col = std::find(table.header.begin(), table.header.end(), "y");
    const bool has_y = y_col != table.header.end();
    if (table.header.size() != d + (has_y ? 1 : 0))
      throw InputError("query file has " + std::to_string(table.header.size()) + " columns but the model has " +
                       std::to_string(d) + " variables");
    const auto y_index = static_cast<std::size_t>(y_col - table.header.begin());
    for (std::size_t r = 0; r < table.rows.size() && !limit_reached(); ++r) {
      CfQuery q;
      q.x.resize(static_cast<Eigen::Index>(d));
      Eigen::Index j = 0;
      std::optional<int> y;
      for (std::size_t c = 0; c < table.header.size(); ++c) {
        const std::string& cell = table.rows[r][c];
        try {
          if (has_y && c == y_index)
            y = std::stoi(cell);
          else
            q.x[j++] = std::stod(cell);
        } catch (const std::exception&) {
          throw InputError("unparseable value '" + cell + "' at query row " + std::to_string(r + 1));
        }
      }
      q.y = y ? *y : predict(circuit, q.x);
      q.y_prime = cfg.target_class;
      if (cfg.source_class && q.y != *cfg.source_class) continue;
      if (q.y == q.y_prime) continue;
      queries.push_back(std::move(q));
    }
    return queries;
  }

  const Eigen::VectorXi predicted = test.size() > 0 ? predict_rows(circuit, test.features) : Eigen::VectorXi();
  for (Eigen::Index i = 0; i < test.size() && !limit_reached(); ++i) {
    const int label = test.labels[i];
    if (label == cfg.target_class) continue;
    if (cfg.source_class && label != *cfg.source_class) continue;
    if (predicted[i] != label) continue;
    queries.push_back({test.features.row(i).transpose(), label, cfg.target_class});
  }
  return queries;
}

json cf_config_json(const CfConfig& c) {
  return {{"epsilon1", c.epsilon1},
          {"epsilon2", c.epsilon2},
          {"grad_mode", to_string(c.grad_mode)},
          {"clip_to_unit", c.clip_to_unit},
          {"retry_epsilon_schedule", c.retry_epsilon_schedule}};
}

json baseline_config_json(const BaselineConfig& b) {
  return {{"lambda", b.lambda},
          {"learning_rate", b.learning_rate},
          {"max_iters", b.max_iters},
          {"early_stop", b.early_stop},
          {"clip_to_unit", b.clip_to_unit}};
}

// ---------------------------------------------------------------------------
// Commands

int cmd_train(RunConfig cfg, std::ostream& out) {
  // The config's model path names where training writes, not something it reads.
  if (cfg.out.empty()) cfg.out = cfg.model;
  cfg.model.clear();
  if (cfg.out.empty()) throw InputError("--out is required");
  require_distinct_output(cfg, cfg.out);
  require_distinct_output(cfg, report_path(cfg.out));
  auto [train, test] = train_test(cfg);

  StructureConfig structure = cfg.structure;
  structure.num_classes = train.num_classes;
  structure.variance_floor = cfg.train.variance_floor;
  FitResult fitted = fit(build_rat_spn(static_cast<int>(train.num_features()), structure), train, cfg.train);

  save(fitted.circuit, cfg.out);
  auto report_out = open_output(report_path(cfg.out));
  report_out << to_json_string(fitted.report) << "\n";

  json summary = {{"model", cfg.out.string()},
                  {"report", report_path(cfg.out).string()},
                  {"epochs_run", fitted.report.epochs_run},
                  {"train_accuracy", accuracy(fitted.circuit, train.features, train.labels)},
                  {"test_accuracy", accuracy(fitted.circuit, test.features, test.labels)}};
  out << summary.dump(2) << "\n";
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& out) {
  Circuit circuit = load_model(cfg);
  auto [train, test] = train_test(cfg);
  check_compatible(circuit, test);
  json summary = {{"dataset", dataset_name(cfg.data)},
                  {"n", test.size()},
                  {"accuracy", accuracy(circuit, test.features, test.labels)},
                  {"mean_log_density", log_density_rows(circuit, test.features).mean()}};
  out << summary.dump(2) << "\n";
  return 0;
}

int cmd_counterfactual(const RunConfig& cfg, CfMethod method, std::ostream& out, std::ostream& err) {
  if (cfg.out.empty()) throw InputError("--out is required");
  require_distinct_output(cfg, cfg.out);
  Circuit circuit = load_model(cfg);
  auto [train, test] = train_test(cfg);
  check_compatible(circuit, test);
  std::vector<CfQuery> queries = build_queries(cfg, circuit, test);

  auto results_out = open_output(cfg.out);
  if (queries.empty()) {
    err << "warning: no counterfactual queries selected; wrote an empty results file\n";
    out << json{{"method", to_string(method)}, {"n", 0}}.dump(2) << "\n";
    return 0;
  }
  CfEvaluation eval = evaluate(circuit, queries, method, cfg.counterfactual, cfg.baseline);
  for (const auto& r : eval.results) results_out << to_json_string(r) << "\n";
  json summary = json::parse(to_json_string(eval.metrics));
  summary["method"] = to_string(method);
  out << summary.dump(2) << "\n";
  return 0;
}

std::vector<CfMethod> parse_methods(const std::string& list) {
  std::vector<CfMethod> methods;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    CfMethod m = cf_method_from_string(item);
    if (std::find(methods.begin(), methods.end(), m) == methods.end()) methods.push_back(m);
  }
  if (methods.empty()) throw InputError("no methods given");
  return methods;
}

int cmd_benchmark(const RunConfig& cfg, const std::vector<CfMethod>& methods, std::ostream& out,
                  std::ostream& err) {
  if (!cfg.out.empty()) require_distinct_output(cfg, cfg.out);
  Circuit circuit = load_model(cfg);
  auto [train, test] = train_test(cfg);
  check_compatible(circuit, test);
  std::vector<CfQuery> queries = build_queries(cfg, circuit, test);
  if (queries.empty()) throw InputError("no counterfactual queries selected for the benchmark");

  json entries = json::array();
  std::ostringstream table;
  table << std::left << std::setw(10) << "method" << std::right << std::setw(8) << "n" << std::setw(18)
        << "mean_log_density" << std::setw(14) << "success_rate" << std::setw(14) << "mean_time_s"
        << std::setw(12) << "grad_evals" << "\n";
  for (CfMethod method : methods) {
    CfEvaluation eval = evaluate(circuit, queries, method, cfg.counterfactual, cfg.baseline);
    json entry = json::parse(to_json_string(eval.metrics));
    entry["method"] = to_string(method);
    entry["dataset"] = dataset_name(cfg.data);
    entry["config"] = method == CfMethod::kWachter ? baseline_config_json(cfg.baseline)
                                                   : cf_config_json(cfg.counterfactual);
    entries.push_back(entry);
    table << std::left << std::setw(10) << to_string(method) << std::right << std::setw(8) << eval.metrics.n
          << std::fixed << std::setprecision(4) << std::setw(18) << eval.metrics.mean_log_density
          << std::setw(14) << eval.metrics.success_rate << std::scientific << std::setprecision(3)
          << std::setw(14) << eval.metrics.mean_time << std::fixed << std::setprecision(1) << std::setw(12)
          << eval.metrics.mean_gradient_evaluations << std::defaultfloat << "\n";
  }
  json doc = {{"dataset", dataset_name(cfg.data)}, {"methods", entries}};
  if (cfg.out.empty()) {
    out << doc.dump(2) << "\n";
    err << table.str();
  } else {
    auto file = open_output(cfg.out);
    file << doc.dump(2) << "\n";
    out << table.str();
  }
  return 0;
}

std::array<double, 4> parse_bounds(const std::string& text) {
  std::array<double, 4> b{0.0, 1.0, 0.0, 1.0};
  if (text.empty()) return b;
  std::stringstream ss(text);
  std::string item;
  std::size_t k = 0;
  while (std::getline(ss, item, ',')) {
    if (k >= 4) throw InputError("--bounds takes four comma-separated numbers");
    try {
      std::size_t used = 0;
      b[k] = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InputError("unparseable bound '" + item + "'");
    }
    ++k;
  }
  if (k != 4) throw InputError("--bounds takes four comma-separated numbers");
  if (!(b[0] <= b[1]) || !(b[2] <= b[3]) || !std::isfinite(b[0]) || !std::isfinite(b[1]) ||
      !std::isfinite(b[2]) || !std::isfinite(b[3]))
    throw InputError("--bounds must be finite with min <= max on each axis");
  return b;
}

int cmd_grid(const RunConfig& cfg, const std::array<double, 4>& bounds, int resolution, std::ostream& out) {
  Circuit circuit = load_model(cfg);
  if (circuit.num_variables != 2)
    throw InputError("grid export needs a 2-variable model, got " + std::to_string(circuit.num_variables));
  if (resolution < 1) throw InputError("--resolution must be at least 1");
  const int num_classes = static_cast<int>(circuit.class_roots.size());
  const int target = cfg.target_class;
  const int source = cfg.source_class.value_or(target == 0 ? 1 : 0);
  if (target < 0 || target >= num_classes || source < 0 || source >= num_classes || source == target)
    throw InputError("grid needs two distinct classes within the model's range");

  std::ofstream file;
  std::ostream* sink = &out;
  if (!cfg.out.empty()) {
    require_distinct_output(cfg, cfg.out);
    file = open_output(cfg.out);
    sink = &file;
  }
  auto axis = [&](double lo, double hi, int i) {
    return resolution == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (resolution - 1);
  };
  *sink << "x1,x2,log_density,logratio,dlogratio_dx1,dlogratio_dx2,dlogS_dx1,dlogS_dx2\n";
  Eigen::VectorXd x(2);
  for (int i = 0; i < resolution; ++i) {
    for (int j = 0; j < resolution; ++j) {
      x << axis(bounds[0], bounds[1], i), axis(bounds[2], bounds[3], j);
      Eigen::VectorXd cl = class_log_densities(circuit, x);
      Eigen::VectorXd g_ratio = grad_log_ratio(circuit, x, source, target);
      DensityGradient g_dens = grad_density(circuit, x, GradMode::kLogDensity);
      *sink << format_real(x[0]) << ',' << format_real(x[1]) << ',' << format_real(g_dens.log_density) << ','
            << format_real(cl[target] - cl[source]) << ',' << format_real(g_ratio[0]) << ','
            << format_real(g_ratio[1]) << ',' << format_real(g_dens.values[0]) << ','
            << format_real(g_dens.values[1]) << '\n';
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Flag handling

struct Flags {
  std::string config, model, data, schema, out, grad_mode, method, bounds, queries;
  std::optional<std::uint64_t> seed;
  std::optional<int> target_class, source_class;
  std::optional<double> epsilon1, epsilon2;
  std::optional<std::size_t> max_queries;
  int resolution = 50;
};

RunConfig assemble(const Flags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (!f.model.empty()) cfg.model = f.model;
  if (!f.out.empty()) cfg.out = f.out;
  if (!f.data.empty()) {
    cfg.data.csv = f.data;
    cfg.data.synthetic.reset();
    cfg.data.idx.reset();
  }
  if (!f.schema.empty()) cfg.data.schema = f.schema;
  if (!f.queries.empty()) cfg.queries = f.queries;
  if (f.seed) {
    cfg.structure.seed = *f.seed;
    cfg.train.seed = *f.seed;
  }
  if (f.target_class) cfg.target_class = *f.target_class;
  if (f.source_class) cfg.source_class = *f.source_class;
  if (f.epsilon1) cfg.counterfactual.epsilon1 = *f.epsilon1;
  if (f.epsilon2) cfg.counterfactual.epsilon2 = *f.epsilon2;
  if (!f.grad_mode.empty()) cfg.counterfactual.grad_mode = grad_mode_from_string(f.grad_mode);
  if (f.max_queries) cfg.max_queries = *f.max_queries;
  return cfg;
}

void add_data_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON run configuration");
  sub->add_option("--data", f.data, "CSV dataset (overrides the config's data source)");
  sub->add_option("--schema", f.schema, "JSON schema describing the CSV columns");
}

void add_query_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--model", f.model, "trained model JSON");
  sub->add_option("--target-class", f.target_class, "class the counterfactual should reach");
  sub->add_option("--source-class", f.source_class, "only query rows of this class");
  sub->add_option("--queries", f.queries, "CSV of encoded query rows (optional 'y' column)");
  sub->add_option("--max-queries", f.max_queries, "cap on the number of queries (0 = all)");
  sub->add_option("--epsilon1", f.epsilon1, "step-1 scale");
  sub->add_option("--epsilon2", f.epsilon2, "step-2 scale");
  sub->add_option("--grad-mode", f.grad_mode, "density | log_density");
}

}  // namespace

RunConfig config_from_json_string(const std::string& text) { return parse_config_text(text, fs::path()); }

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg = parse_config_text(ss.str(), path.parent_path());
  cfg.config = path;
  return cfg;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sum-product network classifiers and counterfactual explanations"};
  app.require_subcommand(1);
  Flags f;

  auto* train = app.add_subcommand("train", "fit a model and write it with a training report");
  add_data_flags(train, f);
  train->add_option("--out", f.out, "model output path");
  train->add_option("--seed", f.seed, "seed for structure and training");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "report test accuracy and mean log-density");
  add_data_flags(evaluate_cmd, f);
  evaluate_cmd->add_option("--model", f.model, "trained model JSON");

  auto* cf = app.add_subcommand("counterfactual", "generate counterfactuals for test rows");
  add_data_flags(cf, f);
  add_query_flags(cf, f);
  cf->add_option("--out", f.out, "JSON-lines results path");
  cf->add_option("--method", f.method, "ours | step1 | wachter")->default_str("ours");

  auto* bench = app.add_subcommand("benchmark", "compare methods on one query set");
  add_data_flags(bench, f);
  add_query_flags(bench, f);
  bench->add_option("--out", f.out, "metrics JSON path");
  bench->add_option("--method", f.method, "comma-separated methods")->default_str("ours,wachter");

  auto* grid = app.add_subcommand("grid", "export density and gradient fields of a 2-D model as CSV");
  grid->add_option("--config", f.config, "JSON run configuration");
  grid->add_option("--model", f.model, "trained model JSON");
  grid->add_option("--out", f.out, "CSV output path (stdout if omitted)");
  grid->add_option("--bounds", f.bounds, "x1min,x1max,x2min,x2max")->default_str("0,1,0,1");
  grid->add_option("--resolution", f.resolution, "points per axis")->default_val(50);
  grid->add_option("--target-class", f.target_class, "class in the numerator of the log-ratio");
  grid->add_option("--source-class", f.source_class, "class in the denominator of the log-ratio");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg = assemble(f);
    if (*train) return cmd_train(cfg, out);
    if (*evaluate_cmd) return cmd_evaluate(cfg, out);
    if (*cf) return cmd_counterfactual(cfg, cf_method_from_string(f.method.empty() ? "ours" : f.method), out, err);
    if (*bench) return cmd_benchmark(cfg, parse_methods(f.method.empty() ? "ours,wachter" : f.method), out, err);
    if (*grid) return cmd_grid(cfg, parse_bounds(f.bounds), f.resolution, out);
    err << "error: no command given\n";
    return 2;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace spncf::cli
