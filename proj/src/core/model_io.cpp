// Versioned JSON model documents. Weights are written twice: as plain decimal
// arrays for readability and as base-16 IEEE-754 bit patterns, which are the
// authoritative lossless encoding read back on load.

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dag_grow/error.hpp"
#include "dag_grow/netdag.hpp"

namespace daggrow {

namespace {

using nlohmann::json;

std::string to_hex(const double* values, Eigen::Index count) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(static_cast<std::size_t>(count) * 16);
  for (Eigen::Index i = 0; i < count; ++i) {
    auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int shift = 60; shift >= 0; shift -= 4) out.push_back(kDigits[(bits >> shift) & 0xF]);
  }
  return out;
}

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::vector<double> from_hex(const std::string& text, std::size_t expected, const std::string& what) {
  if (text.size() != expected * 16)
    throw DataError(what + ": expected " + std::to_string(expected) + " hex-encoded values");
  std::vector<double> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    std::uint64_t bits = 0;
    for (std::size_t j = 0; j < 16; ++j) {
      int d = hex_digit(text[i * 16 + j]);
      if (d < 0) throw DataError(what + ": invalid hex digit");
      bits = (bits << 4) | static_cast<std::uint64_t>(d);
    }
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

json row_major(const Matrix& m) {
  json arr = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) arr.push_back(m(r, c));
  return arr;
}

template <typename T>
T required(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key))
    throw DataError(where + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DataError(where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

std::string serialize(const DagNetwork& net) {
  json doc;
  doc["format_version"] = kModelFormatVersion;
  doc["input_id"] = to_int(net.input_id());
  doc["output_id"] = to_int(net.output_id());
  json nodes = json::array();
  for (const auto& n : net.nodes())
    nodes.push_back({{"id", to_int(n.id)},
                     {"width", n.width},
                     {"activation", std::string(to_string(n.activation))},
                     {"rank", n.rank}});
  doc["nodes"] = std::move(nodes);

  json edges = json::array();
  for (const auto& e : net.edges()) {
    // Row-major copy so the hex stream matches the decimal array order.
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = e.weight;
    edges.push_back({{"id", to_int(e.id)},
                     {"src", to_int(e.src)},
                     {"dst", to_int(e.dst)},
                     {"rows", e.weight.rows()},
                     {"cols", e.weight.cols()},
                     {"weight", row_major(e.weight)},
                     {"bias", row_major(e.bias)},
                     {"weight_hex", to_hex(w.data(), w.size())},
                     {"bias_hex", to_hex(e.bias.data(), e.bias.size())}});
  }
  doc["edges"] = std::move(edges);
  return doc.dump(1);
}

DagNetwork deserialize(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document.begin(), document.end());
  } catch (const json::parse_error& e) {
    throw DataError(std::string("model document is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw DataError("model document must be a JSON object");
  const int version = required<int>(doc, "format_version", "model");
  if (version != kModelFormatVersion)
    throw DataError("unsupported model format_version " + std::to_string(version) + " (expected " +
                    std::to_string(kModelFormatVersion) + ")");

  DagNetwork net;
  net.set_io(NodeId{required<int>(doc, "input_id", "model")},
             NodeId{required<int>(doc, "output_id", "model")});
  const json nodes = doc.value("nodes", json());
  const json edges = doc.value("edges", json());
  if (!nodes.is_array() || !edges.is_array()) throw DataError("model: nodes/edges must be arrays");

  for (const auto& n : nodes) {
    NodeSpec spec;
    spec.id = NodeId{required<int>(n, "id", "node")};
    spec.width = required<int>(n, "width", "node");
    spec.rank = required<int>(n, "rank", "node");
    try {
      spec.activation = parse_activation(required<std::string>(n, "activation", "node"));
    } catch (const UsageError& e) {
      throw DataError(std::string("node: ") + e.what());
    }
    net.add_node_raw(spec);
  }

  for (const auto& e : edges) {
    const std::string where = "edge";
    EdgeSpec spec;
    spec.id = EdgeId{required<int>(e, "id", where)};
    spec.src = NodeId{required<int>(e, "src", where)};
    spec.dst = NodeId{required<int>(e, "dst", where)};
    const auto rows = required<std::int64_t>(e, "rows", where);
    const auto cols = required<std::int64_t>(e, "cols", where);
    if (rows < 0 || cols < 0 || rows > (1 << 24) || cols > (1 << 24))
      throw DataError(where + ": implausible weight shape");
    const auto w = from_hex(required<std::string>(e, "weight_hex", where),
                            static_cast<std::size_t>(rows * cols), where + " weight");
    const auto bias_hex = required<std::string>(e, "bias_hex", where);
    const auto b = from_hex(bias_hex, bias_hex.size() / 16, where + " bias");
    if (e.contains("weight") && e.at("weight").size() != w.size())
      throw DataError(where + ": decimal and hex weights disagree in length");
    spec.weight = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        w.data(), rows, cols);
    spec.bias = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
    net.add_edge_raw(std::move(spec));
  }

  auto violations = validate(net);
  if (!violations.empty()) {
    std::string msg = "model failed validation:";
    for (const auto& v : violations) msg += "\n  " + std::string(to_string(v.kind)) + ": " + v.message;
    throw DataError(msg);
  }
  return net;
}

void save_model(const DagNetwork& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << serialize(net) << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

DagNetwork load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

}  // namespace daggrow
