#include "spncf/serialize.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace spncf {

namespace {

using nlohmann::json;

json real_or_null(double value) {
  if (value == -std::numeric_limits<double>::infinity()) return nullptr;
  return value;
}

double real_from(const json& value) {
  if (value.is_null()) return -std::numeric_limits<double>::infinity();
  return value.get<double>();
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(real_or_null(v[i]));
  return out;
}

Eigen::VectorXd vector_from_json(const json& array) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(array.size()));
  for (std::size_t i = 0; i < array.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = real_from(array[i]);
  }
  return v;
}

json ids_to_json(const std::vector<NodeId>& ids) {
  json out = json::array();
  for (NodeId id : ids) out.push_back(id.index);
  return out;
}

std::vector<NodeId> ids_from_json(const json& array) {
  std::vector<NodeId> ids;
  ids.reserve(array.size());
  for (const auto& v : array) ids.push_back(NodeId{v.get<std::uint32_t>()});
  return ids;
}

struct NodeWriter {
  json operator()(const GaussianLeaf& n) const {
    return {{"kind", "gaussian"}, {"variable", n.variable}, {"mean", n.mean},
            {"variance", n.variance}};
  }
  json operator()(const CategoricalLeaf& n) const {
    return {{"kind", "categorical"}, {"variable", n.variable},
            {"probabilities", vector_to_json(n.probabilities)}};
  }
  json operator()(const BernoulliLeaf& n) const {
    return {{"kind", "bernoulli"}, {"variable", n.variable}, {"p", n.p}};
  }
  json operator()(const SumNode& n) const {
    return {{"kind", "sum"}, {"children", ids_to_json(n.children)},
            {"log_weights", vector_to_json(n.log_weights)}};
  }
  json operator()(const ProductNode& n) const {
    return {{"kind", "product"}, {"children", ids_to_json(n.children)}};
  }
};

Node node_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "gaussian") {
    return GaussianLeaf{j.at("variable").get<int>(), j.at("mean").get<double>(),
                        j.at("variance").get<double>()};
  }
  if (kind == "categorical") {
    return CategoricalLeaf{j.at("variable").get<int>(), vector_from_json(j.at("probabilities"))};
  }
  if (kind == "bernoulli") {
    return BernoulliLeaf{j.at("variable").get<int>(), j.at("p").get<double>()};
  }
  if (kind == "sum") {
    return SumNode{ids_from_json(j.at("children")), vector_from_json(j.at("log_weights"))};
  }
  if (kind == "product") {
    return ProductNode{ids_from_json(j.at("children"))};
  }
  throw FormatError("unknown node kind '" + kind + "'");
}

json circuit_to_json(const Circuit& circuit) {
  json nodes = json::array();
  for (const Node& node : circuit.nodes) nodes.push_back(std::visit(NodeWriter{}, node));
  return {{"format_version", circuit.format_version},
          {"num_variables", circuit.num_variables},
          {"variance_floor", circuit.variance_floor},
          {"log_prior", vector_to_json(circuit.log_prior)},
          {"class_roots", ids_to_json(circuit.class_roots)},
          {"nodes", std::move(nodes)}};
}

Circuit circuit_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("model document is not a JSON object");
  Circuit circuit;
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kFormatVersion) throw VersionMismatchError(version, kFormatVersion);
    circuit.format_version = version;
    circuit.num_variables = j.at("num_variables").get<int>();
    circuit.variance_floor = j.value("variance_floor", kDefaultVarianceFloor);
    circuit.log_prior = vector_from_json(j.at("log_prior"));
    circuit.class_roots = ids_from_json(j.at("class_roots"));
    const auto& nodes = j.at("nodes");
    circuit.nodes.reserve(nodes.size());
    for (const auto& node : nodes) circuit.nodes.push_back(node_from_json(node));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed model document: ") + e.what());
  }
  require_valid(circuit);
  return circuit;
}

}  // namespace

std::string to_json_string(const Circuit& circuit) { return circuit_to_json(circuit).dump(); }

Circuit circuit_from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("model document is not valid JSON: ") + e.what());
  }
  return circuit_from_json(j);
}

void save(const Circuit& circuit, std::ostream& out) {
  require_valid(circuit);
  out << to_json_string(circuit) << '\n';
  if (!out) throw Error("failed to write model");
}

void save(const Circuit& circuit, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  save(circuit, out);
}

Circuit load(std::istream& in) {
  std::stringstream buffer;
  buffer << in.rdbuf();
  return circuit_from_json_string(buffer.str());
}

Circuit load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open model file '" + path.string() + "'");
  return load(in);
}

}  // namespace spncf
