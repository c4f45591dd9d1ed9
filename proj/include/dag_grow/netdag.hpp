#pragma once

// Fully connected networks shaped as arbitrary DAGs.
//
// Every node is a hidden state holding a pre-activity A (sum of the affine maps
// of its in-edges) and a post-activity B = act(A). Every edge is a fully
// connected layer with its own weight matrix and bias. The input node's
// post-activity is the data; the output node is linear. A network with no
// edges is valid and computes the constant zero function.

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dag_grow/flops.hpp"

namespace daggrow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class NodeId : std::int32_t {};
enum class EdgeId : std::int32_t {};

constexpr std::int32_t to_int(NodeId id) { return static_cast<std::int32_t>(id); }
constexpr std::int32_t to_int(EdgeId id) { return static_cast<std::int32_t>(id); }

enum class Activation { identity, selu, tanh, relu };

std::string_view to_string(Activation act);
Activation parse_activation(std::string_view name);

inline constexpr double kSeluScale = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;

double activate(Activation act, double x);
/// Derivative used by backpropagation. At the kinks (0 for selu/relu) the
/// left-hand value is used: selu'(0) = scale * alpha, relu'(0) = 0.
double activate_derivative(Activation act, double x);
Matrix activate(Activation act, const Matrix& pre);
Matrix activate_derivative(Activation act, const Matrix& pre);

struct NodeSpec {
  NodeId id{};
  int width = 0;
  Activation activation = Activation::identity;
  int rank = 0;
};

struct EdgeSpec {
  EdgeId id{};
  NodeId src{};
  NodeId dst{};
  Matrix weight;  ///< dst.width x src.width
  Vector bias;    ///< dst.width
};

class DagNetwork {
 public:
  /// Input (rank 0) and identity output (rank 1) with no edges: the zero function.
  static DagNetwork empty(int input_width, int output_width);

  NodeId input_id() const { return input_id_; }
  NodeId output_id() const { return output_id_; }

  const std::vector<NodeSpec>& nodes() const { return nodes_; }
  const std::vector<EdgeSpec>& edges() const { return edges_; }

  bool has_node(NodeId id) const;
  std::size_t node_index(NodeId id) const;
  const NodeSpec& node(NodeId id) const { return nodes_[node_index(id)]; }
  NodeSpec& node(NodeId id) { return nodes_[node_index(id)]; }

  std::size_t edge_index(EdgeId id) const;
  const EdgeSpec& edge(EdgeId id) const { return edges_[edge_index(id)]; }
  EdgeSpec& edge(EdgeId id) { return edges_[edge_index(id)]; }
  const EdgeSpec* find_edge(NodeId src, NodeId dst) const;

  /// Mutable access by position; shapes must stay consistent with widths.
  EdgeSpec& edge_at(std::size_t index) { return edges_[index]; }

  /// Edge indices into edges(), in insertion order.
  std::vector<std::size_t> in_edges(NodeId id) const;
  std::vector<std::size_t> out_edges(NodeId id) const;

  /// Node indices into nodes(), sorted by ascending rank.
  std::vector<std::size_t> rank_order() const;

  bool is_hidden(NodeId id) const { return id != input_id_ && id != output_id_; }

  /// Inserts a node ranked immediately below `before` and renumbers ranks to
  /// consecutive integers.
  NodeId insert_node_before(NodeId before, int width, Activation act);
  EdgeId add_edge(NodeId src, NodeId dst, Matrix weight, Vector bias);

  /// Low-level construction used by deserialization and tests. No checks.
  NodeId add_node_raw(NodeSpec spec);
  EdgeId add_edge_raw(EdgeSpec spec);
  void set_io(NodeId input, NodeId output) {
    input_id_ = input;
    output_id_ = output;
  }

  /// Renumbers ranks to 0..n-1 keeping their relative order.
  void normalize_ranks();

  friend bool operator==(const DagNetwork&, const DagNetwork&);

 private:
  std::vector<NodeSpec> nodes_;
  std::vector<EdgeSpec> edges_;
  NodeId input_id_{0};
  NodeId output_id_{1};
  std::int32_t next_node_id_ = 0;
  std::int32_t next_edge_id_ = 0;
};

// ---------------------------------------------------------------------------
// Validation

enum class ViolationKind {
  cycle_risk_edge,   ///< rank(src) >= rank(dst)
  cycle,             ///< independent topological check failed
  shape_mismatch,
  dangling_node,     ///< hidden node without in- or out-edge
  duplicate_edge,
  duplicate_rank,
  unknown_node,
  bad_io_node,       ///< input/output node missing, misranked or non-linear output
  bad_width,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string message;
};

std::vector<Violation> validate(const DagNetwork& net);

std::int64_t param_count(const DagNetwork& net);

// ---------------------------------------------------------------------------
// Evaluation

/// Per-node pre/post activities for one batch, indexed like net.nodes().
/// The input node's pre-activity is left empty.
class ActivationCache {
 public:
  ActivationCache() = default;
  explicit ActivationCache(std::size_t node_count) : pre_(node_count), post_(node_count) {}

  std::size_t size() const { return pre_.size(); }
  Eigen::Index batch_size() const { return batch_; }
  void set_batch_size(Eigen::Index n) { batch_ = n; }

  const Matrix& pre(std::size_t node_index) const { return pre_[node_index]; }
  const Matrix& post(std::size_t node_index) const { return post_[node_index]; }
  Matrix& pre(std::size_t node_index) { return pre_[node_index]; }
  Matrix& post(std::size_t node_index) { return post_[node_index]; }

 private:
  std::vector<Matrix> pre_;
  std::vector<Matrix> post_;
  Eigen::Index batch_ = 0;
};

/// Runs the batch (rows = samples) through the graph in rank order.
ActivationCache forward(const DagNetwork& net, const Matrix& x);

const Matrix& outputs(const DagNetwork& net, const ActivationCache& cache);

enum class LossKind { mse, softmax_cross_entropy };

std::string_view to_string(LossKind kind);
LossKind parse_loss(std::string_view name);

struct LossGradient {
  double loss = 0.0;  ///< batch mean
  Matrix v_goal;      ///< per-sample negative gradient w.r.t. the outputs
};

/// mse: per-sample loss |f - y|^2 (summed over outputs), v_goal = -2 (f - y).
/// softmax_cross_entropy: targets are one-hot rows, v_goal = y - softmax(f).
LossGradient loss_and_functional_gradient(const Matrix& outputs, const Matrix& targets,
                                          LossKind kind);
double loss_value(const Matrix& outputs, const Matrix& targets, LossKind kind);

/// Fraction of rows whose argmax matches the target argmax; NaN for mse.
double accuracy(const Matrix& outputs, const Matrix& targets, LossKind kind);

struct EdgeGradient {
  Matrix weight;
  Vector bias;
};

struct Gradients {
  /// Per node index: -dloss_i/dA[node] for each sample i (empty for input).
  std::vector<Matrix> desired_updates;
  /// Per edge index: gradient of the batch-mean loss. Empty if not requested.
  std::vector<EdgeGradient> params;
};

Gradients backward(const DagNetwork& net, const ActivationCache& cache, const Matrix& v_goal,
                   bool with_param_grads = true);

// ---------------------------------------------------------------------------
// Training

struct LabeledData {
  Matrix inputs;   ///< n x input_width
  Matrix targets;  ///< n x output_width

  Eigen::Index size() const { return inputs.rows(); }
  bool empty() const { return inputs.rows() == 0; }
};

LabeledData concat(const LabeledData& a, const LabeledData& b);
LabeledData select_rows(const LabeledData& data, std::span<const Eigen::Index> rows);

struct SgdConfig {
  double learning_rate = 1e-2;
  double momentum = 0.0;
  int batch_size = 32;
};

struct EpochStats {
  int epoch = 0;        ///< 1-based
  double loss = 0.0;    ///< mean of mini-batch losses weighted by batch size
  double accuracy = 0.0;
};

/// Mini-batch SGD with optional momentum. Deterministic for a given seed.
std::vector<EpochStats> train_epochs(DagNetwork& net, const LabeledData& data, LossKind loss,
                                     const SgdConfig& config, int epochs, std::uint64_t seed,
                                     FlopCounter* flops = nullptr);

// ---------------------------------------------------------------------------
// Model documents

inline constexpr int kModelFormatVersion = 1;

std::string serialize(const DagNetwork& net);
/// Throws DataError on malformed/truncated documents, version mismatch or
/// any validation violation.
DagNetwork deserialize(std::string_view document);

void save_model(const DagNetwork& net, const std::string& path);
DagNetwork load_model(const std::string& path);

}  // namespace daggrow
