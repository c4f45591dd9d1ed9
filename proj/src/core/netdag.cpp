#include "dag_grow/netdag.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "dag_grow/error.hpp"
#include "dag_grow/metrics.hpp"

namespace daggrow {

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::identity: return "identity";
    case Activation::selu: return "selu";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  if (name == "identity") return Activation::identity;
  if (name == "selu") return Activation::selu;
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw UsageError("unknown activation '" + std::string(name) + "'");
}

double activate(Activation act, double x) {
  switch (act) {
    case Activation::identity: return x;
    case Activation::selu: return x > 0.0 ? kSeluScale * x : kSeluScale * kSeluAlpha * std::expm1(x);
    case Activation::tanh: return std::tanh(x);
    case Activation::relu: return x > 0.0 ? x : 0.0;
  }
  return x;
}

double activate_derivative(Activation act, double x) {
  switch (act) {
    case Activation::identity: return 1.0;
    case Activation::selu: return x > 0.0 ? kSeluScale : kSeluScale * kSeluAlpha * std::exp(x);
    case Activation::tanh: {
      double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

Matrix activate(Activation act, const Matrix& pre) {
  if (act == Activation::identity) return pre;
  return pre.unaryExpr([act](double x) { return activate(act, x); });
}

Matrix activate_derivative(Activation act, const Matrix& pre) {
  return pre.unaryExpr([act](double x) { return activate_derivative(act, x); });
}

// ---------------------------------------------------------------------------

DagNetwork DagNetwork::empty(int input_width, int output_width) {
  if (input_width < 1 || output_width < 1) throw UsageError("network widths must be >= 1");
  DagNetwork net;
  NodeId in = net.add_node_raw({NodeId{0}, input_width, Activation::identity, 0});
  NodeId out = net.add_node_raw({NodeId{1}, output_width, Activation::identity, 1});
  net.set_io(in, out);
  return net;
}

bool DagNetwork::has_node(NodeId id) const {
  return std::any_of(nodes_.begin(), nodes_.end(), [id](const NodeSpec& n) { return n.id == id; });
}

std::size_t DagNetwork::node_index(NodeId id) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].id == id) return i;
  throw UsageError("unknown node id " + std::to_string(to_int(id)));
}

std::size_t DagNetwork::edge_index(EdgeId id) const {
  for (std::size_t i = 0; i < edges_.size(); ++i)
    if (edges_[i].id == id) return i;
  throw UsageError("unknown edge id " + std::to_string(to_int(id)));
}

const EdgeSpec* DagNetwork::find_edge(NodeId src, NodeId dst) const {
  for (const auto& e : edges_)
    if (e.src == src && e.dst == dst) return &e;
  return nullptr;
}

std::vector<std::size_t> DagNetwork::in_edges(NodeId id) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < edges_.size(); ++i)
    if (edges_[i].dst == id) out.push_back(i);
  return out;
}

std::vector<std::size_t> DagNetwork::out_edges(NodeId id) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < edges_.size(); ++i)
    if (edges_[i].src == id) out.push_back(i);
  return out;
}

std::vector<std::size_t> DagNetwork::rank_order() const {
  std::vector<std::size_t> order(nodes_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [this](std::size_t a, std::size_t b) {
    return nodes_[a].rank < nodes_[b].rank;
  });
  return order;
}

NodeId DagNetwork::insert_node_before(NodeId before, int width, Activation act) {
  if (width < 1) throw UsageError("node width must be >= 1");
  const int r = node(before).rank;
  for (auto& n : nodes_)
    if (n.rank >= r) n.rank += 1;
  NodeId id = add_node_raw({NodeId{next_node_id_}, width, act, r});
  normalize_ranks();
  return id;
}

EdgeId DagNetwork::add_edge(NodeId src, NodeId dst, Matrix weight, Vector bias) {
  const auto& s = node(src);
  const auto& d = node(dst);
  if (s.rank >= d.rank) throw UsageError("edge would violate rank order");
  if (find_edge(src, dst) != nullptr) throw UsageError("edge already exists");
  if (weight.rows() != d.width || weight.cols() != s.width || bias.size() != d.width)
    throw UsageError("edge parameter shapes do not match endpoint widths");
  return add_edge_raw({EdgeId{next_edge_id_}, src, dst, std::move(weight), std::move(bias)});
}

NodeId DagNetwork::add_node_raw(NodeSpec spec) {
  next_node_id_ = std::max(next_node_id_, to_int(spec.id) + 1);
  nodes_.push_back(spec);
  return spec.id;
}

EdgeId DagNetwork::add_edge_raw(EdgeSpec spec) {
  next_edge_id_ = std::max(next_edge_id_, to_int(spec.id) + 1);
  EdgeId id = spec.id;
  edges_.push_back(std::move(spec));
  return id;
}

void DagNetwork::normalize_ranks() {
  auto order = rank_order();
  for (std::size_t r = 0; r < order.size(); ++r) nodes_[order[r]].rank = static_cast<int>(r);
}

namespace {

bool same_matrix(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

}  // namespace

bool operator==(const DagNetwork& a, const DagNetwork& b) {
  if (a.input_id_ != b.input_id_ || a.output_id_ != b.output_id_) return false;
  if (a.nodes_.size() != b.nodes_.size() || a.edges_.size() != b.edges_.size()) return false;
  for (std::size_t i = 0; i < a.nodes_.size(); ++i) {
    const auto& x = a.nodes_[i];
    const auto& y = b.nodes_[i];
    if (x.id != y.id || x.width != y.width || x.activation != y.activation || x.rank != y.rank)
      return false;
  }
  for (std::size_t i = 0; i < a.edges_.size(); ++i) {
    const auto& x = a.edges_[i];
    const auto& y = b.edges_[i];
    if (x.id != y.id || x.src != y.src || x.dst != y.dst) return false;
    if (!same_matrix(x.weight, y.weight) || !same_matrix(x.bias, y.bias)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::cycle_risk_edge: return "cycle-risk edge";
    case ViolationKind::cycle: return "cycle";
    case ViolationKind::shape_mismatch: return "shape mismatch";
    case ViolationKind::dangling_node: return "dangling node";
    case ViolationKind::duplicate_edge: return "duplicate edge";
    case ViolationKind::duplicate_rank: return "duplicate rank";
    case ViolationKind::unknown_node: return "unknown node";
    case ViolationKind::bad_io_node: return "bad input/output node";
    case ViolationKind::bad_width: return "bad width";
  }
  return "?";
}

std::vector<Violation> validate(const DagNetwork& net) {
  std::vector<Violation> out;
  auto report = [&out](ViolationKind k, std::string msg) { out.push_back({k, std::move(msg)}); };

  std::map<std::int32_t, const NodeSpec*> by_id;
  std::set<int> ranks;
  for (const auto& n : net.nodes()) {
    if (!by_id.emplace(to_int(n.id), &n).second)
      report(ViolationKind::unknown_node, "node id " + std::to_string(to_int(n.id)) + " repeated");
    if (!ranks.insert(n.rank).second)
      report(ViolationKind::duplicate_rank, "rank " + std::to_string(n.rank) + " used twice");
    if (n.width < 1)
      report(ViolationKind::bad_width, "node " + std::to_string(to_int(n.id)) + " has width < 1");
  }

  auto in_it = by_id.find(to_int(net.input_id()));
  auto out_it = by_id.find(to_int(net.output_id()));
  if (in_it == by_id.end() || out_it == by_id.end() || net.input_id() == net.output_id()) {
    report(ViolationKind::bad_io_node, "input or output node missing");
    return out;
  }
  const NodeSpec& input = *in_it->second;
  const NodeSpec& output = *out_it->second;
  if (input.rank != 0) report(ViolationKind::bad_io_node, "input node must have rank 0");
  for (const auto& n : net.nodes()) {
    if (n.id != input.id && n.rank <= input.rank)
      report(ViolationKind::bad_io_node, "input node must have the smallest rank");
    if (n.id != output.id && n.rank >= output.rank)
      report(ViolationKind::bad_io_node, "output node must have the largest rank");
  }
  if (output.activation != Activation::identity)
    report(ViolationKind::bad_io_node, "output activation must be identity");

  std::set<std::pair<std::int32_t, std::int32_t>> pairs;
  std::map<std::int32_t, int> in_degree, out_degree;
  for (const auto& e : net.edges()) {
    const std::string name = "edge " + std::to_string(to_int(e.id));
    auto s = by_id.find(to_int(e.src));
    auto d = by_id.find(to_int(e.dst));
    if (s == by_id.end() || d == by_id.end()) {
      report(ViolationKind::unknown_node, name + " references a missing node");
      continue;
    }
    if (s->second->rank >= d->second->rank)
      report(ViolationKind::cycle_risk_edge, name + ": rank(src) >= rank(dst)");
    if (e.weight.rows() != d->second->width || e.weight.cols() != s->second->width ||
        e.bias.size() != d->second->width)
      report(ViolationKind::shape_mismatch, name + ": parameter shapes do not match widths");
    if (!pairs.emplace(to_int(e.src), to_int(e.dst)).second)
      report(ViolationKind::duplicate_edge, name + " duplicates an existing (src, dst) pair");
    ++out_degree[to_int(e.src)];
    ++in_degree[to_int(e.dst)];
  }

  for (const auto& n : net.nodes()) {
    if (!net.is_hidden(n.id)) continue;
    if (in_degree[to_int(n.id)] == 0 || out_degree[to_int(n.id)] == 0)
      report(ViolationKind::dangling_node,
             "hidden node " + std::to_string(to_int(n.id)) + " lacks an in- or out-edge");
  }

  // Kahn's algorithm, independent of the ranks.
  std::map<std::int32_t, int> remaining;
  for (const auto& n : net.nodes()) remaining[to_int(n.id)] = 0;
  for (const auto& e : net.edges())
    if (remaining.contains(to_int(e.dst)) && remaining.contains(to_int(e.src)))
      ++remaining[to_int(e.dst)];
  std::vector<std::int32_t> ready;
  for (auto [id, deg] : remaining)
    if (deg == 0) ready.push_back(id);
  std::size_t visited = 0;
  while (!ready.empty()) {
    std::int32_t id = ready.back();
    ready.pop_back();
    ++visited;
    for (const auto& e : net.edges())
      if (to_int(e.src) == id && remaining.contains(to_int(e.dst)) && --remaining[to_int(e.dst)] == 0)
        ready.push_back(to_int(e.dst));
  }
  if (visited != remaining.size()) report(ViolationKind::cycle, "graph contains a directed cycle");
  return out;
}

std::int64_t param_count(const DagNetwork& net) {
  std::int64_t total = 0;
  for (const auto& e : net.edges()) total += e.weight.size() + e.bias.size();
  return total;
}

// ---------------------------------------------------------------------------

ActivationCache forward(const DagNetwork& net, const Matrix& x) {
  const std::size_t in_idx = net.node_index(net.input_id());
  const auto& input = net.nodes()[in_idx];
  if (x.cols() != input.width)
    throw UsageError("input has " + std::to_string(x.cols()) + " columns, network expects " +
                     std::to_string(input.width));
  const Eigen::Index n = x.rows();
  ActivationCache cache(net.nodes().size());
  cache.set_batch_size(n);

  std::vector<std::vector<std::size_t>> incoming(net.nodes().size());
  std::vector<std::size_t> src_index(net.edges().size());
  for (std::size_t ei = 0; ei < net.edges().size(); ++ei) {
    incoming[net.node_index(net.edges()[ei].dst)].push_back(ei);
    src_index[ei] = net.node_index(net.edges()[ei].src);
  }

  for (std::size_t idx : net.rank_order()) {
    const auto& node = net.nodes()[idx];
    if (idx == in_idx) {
      cache.post(idx) = x;
      continue;
    }
    Matrix a = Matrix::Zero(n, node.width);
    for (std::size_t ei : incoming[idx]) {
      const auto& e = net.edges()[ei];
      a.noalias() += cache.post(src_index[ei]) * e.weight.transpose();
      a.rowwise() += e.bias.transpose();
    }
    cache.post(idx) = activate(node.activation, a);
    cache.pre(idx) = std::move(a);
  }
  return cache;
}

const Matrix& outputs(const DagNetwork& net, const ActivationCache& cache) {
  return cache.post(net.node_index(net.output_id()));
}

std::string_view to_string(LossKind kind) {
  return kind == LossKind::mse ? "mse" : "cross-entropy";
}

LossKind parse_loss(std::string_view name) {
  if (name == "mse") return LossKind::mse;
  if (name == "cross-entropy" || name == "softmax-cross-entropy" || name == "ce")
    return LossKind::softmax_cross_entropy;
  throw UsageError("unknown loss '" + std::string(name) + "'");
}

namespace {

void check_loss_inputs(const Matrix& outputs, const Matrix& targets) {
  if (outputs.rows() != targets.rows() || outputs.cols() != targets.cols())
    throw UsageError("outputs and targets have different shapes");
  if (outputs.rows() == 0) throw UsageError("loss of an empty batch");
  if (!outputs.allFinite()) throw NumericError("non-finite network outputs");
}

Matrix softmax_rows(const Matrix& logits, Vector& log_sum_exp) {
  Vector row_max = logits.rowwise().maxCoeff();
  Matrix shifted = logits.colwise() - row_max;
  Matrix e = shifted.array().exp().matrix();
  Vector sums = e.rowwise().sum();
  log_sum_exp = row_max.array() + sums.array().log();
  return e.array().colwise() / sums.array();
}

}  // namespace

LossGradient loss_and_functional_gradient(const Matrix& out, const Matrix& targets, LossKind kind) {
  check_loss_inputs(out, targets);
  const double n = static_cast<double>(out.rows());
  LossGradient result;
  if (kind == LossKind::mse) {
    Matrix diff = out - targets;
    result.loss = diff.squaredNorm() / n;
    result.v_goal = -2.0 * diff;
  } else {
    Vector lse;
    Matrix probs = softmax_rows(out, lse);
    // sum_c y_c (lse - f_c), one-hot rows sum to 1.
    double total = 0.0;
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      total += targets.row(i).sum() * lse(i) - targets.row(i).dot(out.row(i));
    result.loss = total / n;
    result.v_goal = targets - probs;
  }
  return result;
}

double loss_value(const Matrix& out, const Matrix& targets, LossKind kind) {
  check_loss_inputs(out, targets);
  const double n = static_cast<double>(out.rows());
  if (kind == LossKind::mse) return (out - targets).squaredNorm() / n;
  Vector row_max = out.rowwise().maxCoeff();
  double total = 0.0;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    double lse = row_max(i) + std::log((out.row(i).array() - row_max(i)).exp().sum());
    total += targets.row(i).sum() * lse - targets.row(i).dot(out.row(i));
  }
  return total / n;
}

double accuracy(const Matrix& out, const Matrix& targets, LossKind kind) {
  if (kind == LossKind::mse) return std::numeric_limits<double>::quiet_NaN();
  if (out.rows() == 0) return std::numeric_limits<double>::quiet_NaN();
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    Eigen::Index p = 0, t = 0;
    out.row(i).maxCoeff(&p);
    targets.row(i).maxCoeff(&t);
    if (p == t) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(out.rows());
}

Gradients backward(const DagNetwork& net, const ActivationCache& cache, const Matrix& v_goal,
                   bool with_param_grads) {
  if (cache.size() != net.nodes().size())
    throw UsageError("activation cache does not belong to this network");
  const std::size_t out_idx = net.node_index(net.output_id());
  const Eigen::Index n = cache.batch_size();
  if (v_goal.rows() != n || v_goal.cols() != net.nodes()[out_idx].width)
    throw UsageError("v_goal shape does not match the network output");
  for (std::size_t i = 0; i < net.nodes().size(); ++i) {
    if (net.nodes()[i].id == net.input_id()) continue;
    if (cache.pre(i).rows() != n || cache.pre(i).cols() != net.nodes()[i].width)
      throw UsageError("activation cache does not match the network");
  }

  Gradients g;
  g.desired_updates.resize(net.nodes().size());
  std::vector<std::vector<std::size_t>> outgoing(net.nodes().size());
  for (std::size_t ei = 0; ei < net.edges().size(); ++ei)
    outgoing[net.node_index(net.edges()[ei].src)].push_back(ei);

  auto order = net.rank_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const std::size_t idx = *it;
    const auto& node = net.nodes()[idx];
    if (node.id == net.input_id()) continue;
    Matrix grad_post;
    if (idx == out_idx) {
      grad_post = v_goal;
    } else {
      grad_post = Matrix::Zero(n, node.width);
      for (std::size_t ei : outgoing[idx]) {
        const auto& e = net.edges()[ei];
        grad_post.noalias() += g.desired_updates[net.node_index(e.dst)] * e.weight;
      }
    }
    if (node.activation == Activation::identity)
      g.desired_updates[idx] = std::move(grad_post);
    else
      g.desired_updates[idx] =
          grad_post.cwiseProduct(activate_derivative(node.activation, cache.pre(idx)));
  }

  if (with_param_grads) {
    g.params.resize(net.edges().size());
    const double scale = -1.0 / static_cast<double>(n);
    for (std::size_t ei = 0; ei < net.edges().size(); ++ei) {
      const auto& e = net.edges()[ei];
      const Matrix& d = g.desired_updates[net.node_index(e.dst)];
      g.params[ei].weight = scale * (d.transpose() * cache.post(net.node_index(e.src)));
      g.params[ei].bias = scale * d.colwise().sum().transpose();
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

LabeledData concat(const LabeledData& a, const LabeledData& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.inputs.cols() != b.inputs.cols() || a.targets.cols() != b.targets.cols())
    throw UsageError("cannot concatenate datasets of different widths");
  LabeledData out;
  out.inputs.resize(a.size() + b.size(), a.inputs.cols());
  out.inputs << a.inputs, b.inputs;
  out.targets.resize(a.size() + b.size(), a.targets.cols());
  out.targets << a.targets, b.targets;
  return out;
}

LabeledData select_rows(const LabeledData& data, std::span<const Eigen::Index> rows) {
  LabeledData out;
  out.inputs.resize(static_cast<Eigen::Index>(rows.size()), data.inputs.cols());
  out.targets.resize(static_cast<Eigen::Index>(rows.size()), data.targets.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.inputs.row(static_cast<Eigen::Index>(i)) = data.inputs.row(rows[i]);
    out.targets.row(static_cast<Eigen::Index>(i)) = data.targets.row(rows[i]);
  }
  return out;
}

std::vector<EpochStats> train_epochs(DagNetwork& net, const LabeledData& data, LossKind loss,
                                     const SgdConfig& config, int epochs, std::uint64_t seed,
                                     FlopCounter* flops) {
  if (epochs < 0) throw UsageError("epochs must be >= 0");
  if (epochs == 0) return {};
  if (data.empty()) throw DataError("cannot train on an empty dataset");
  if (config.batch_size < 1) throw UsageError("batch size must be >= 1");

  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  std::vector<EdgeGradient> velocity(net.edges().size());
  for (std::size_t ei = 0; ei < net.edges().size(); ++ei) {
    velocity[ei].weight = Matrix::Zero(net.edges()[ei].weight.rows(), net.edges()[ei].weight.cols());
    velocity[ei].bias = Vector::Zero(net.edges()[ei].bias.size());
  }

  std::vector<EpochStats> stats;
  const auto batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    double hit_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t len = std::min(batch, order.size() - start);
      LabeledData mb = select_rows(data, std::span(order).subspan(start, len));
      ActivationCache cache = forward(net, mb.inputs);
      const Matrix& out = outputs(net, cache);
      LossGradient lg = loss_and_functional_gradient(out, mb.targets, loss);
      loss_sum += lg.loss * static_cast<double>(len);
      hit_sum += accuracy(out, mb.targets, loss) * static_cast<double>(len);
      Gradients grads = backward(net, cache, lg.v_goal);
      for (std::size_t ei = 0; ei < net.edges().size(); ++ei) {
        auto& e = net.edge_at(ei);
        auto& v = velocity[ei];
        v.weight = config.momentum * v.weight + grads.params[ei].weight;
        v.bias = config.momentum * v.bias + grads.params[ei].bias;
        e.weight -= config.learning_rate * v.weight;
        e.bias -= config.learning_rate * v.bias;
      }
      if (flops != nullptr) {
        const auto n = static_cast<std::int64_t>(len);
        flops->book(FlopPhase::training, flops_forward(net, n) + flops_backward(net, n));
      }
    }
    const double n = static_cast<double>(data.size());
    if (!std::isfinite(loss_sum)) throw NumericError("training diverged (non-finite loss)");
    stats.push_back({epoch, loss_sum / n, hit_sum / n});
  }
  return stats;
}

}  // namespace daggrow
