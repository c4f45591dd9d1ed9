#include "dag_grow/growth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <tuple>

#include <Eigen/SVD>

#include "dag_grow/error.hpp"
#include "dag_grow/metrics.hpp"

namespace daggrow {

std::string_view to_string(ExpansionKind kind) {
  switch (kind) {
    case ExpansionKind::direct_edge: return "direct_edge";
    case ExpansionKind::new_node: return "new_node";
    case ExpansionKind::widen_node: return "widen_node";
  }
  return "?";
}

std::string ExpansionCandidate::describe() const {
  std::string s(to_string(kind));
  if (kind == ExpansionKind::widen_node)
    return s + "(" + std::to_string(to_int(src)) + ", k=" + std::to_string(neurons) + ")";
  s += "(" + std::to_string(to_int(src)) + " -> " + std::to_string(to_int(dst));
  if (kind == ExpansionKind::new_node) s += ", k=" + std::to_string(neurons);
  return s + ")";
}

std::int64_t param_delta(const DagNetwork& net, const ExpansionCandidate& c) {
  const std::int64_t k = c.neurons;
  switch (c.kind) {
    case ExpansionKind::direct_edge: {
      const std::int64_t ws = net.node(c.src).width, wd = net.node(c.dst).width;
      return wd * ws + wd;
    }
    case ExpansionKind::new_node: {
      const std::int64_t ws = net.node(c.src).width, wd = net.node(c.dst).width;
      return k * ws + k + wd * k + wd;
    }
    case ExpansionKind::widen_node: {
      std::int64_t total = 0;
      for (std::size_t ei : net.in_edges(c.src))
        total += k * net.node(net.edges()[ei].src).width + k;
      for (std::size_t ei : net.out_edges(c.src)) total += net.node(net.edges()[ei].dst).width * k;
      return total;
    }
  }
  return 0;
}

std::vector<ExpansionCandidate> enumerate_candidates(const DagNetwork& net, const Scope& scope,
                                                     int neurons, Activation activation) {
  if (neurons < 1) throw UsageError("neurons per step must be >= 1");
  if (scope.target && !net.has_node(*scope.target))
    throw UsageError("restricted scope names node " + std::to_string(to_int(*scope.target)) +
                     " which is not in the network");
  if (scope.target && *scope.target == net.input_id())
    throw UsageError("the input node cannot receive new connections");

  std::vector<ExpansionCandidate> out;
  auto make = [&](ExpansionKind kind, NodeId src, NodeId dst) {
    ExpansionCandidate c;
    c.kind = kind;
    c.src = src;
    c.dst = dst;
    c.neurons = kind == ExpansionKind::direct_edge ? 0 : neurons;
    c.activation = activation;
    c.param_delta = param_delta(net, c);
    out.push_back(std::move(c));
  };

  for (const auto& s : net.nodes()) {
    for (const auto& d : net.nodes()) {
      if (s.rank >= d.rank) continue;
      if (scope.target && d.id != *scope.target) continue;
      if (net.find_edge(s.id, d.id) == nullptr) make(ExpansionKind::direct_edge, s.id, d.id);
      make(ExpansionKind::new_node, s.id, d.id);
    }
  }
  for (const auto& n : net.nodes()) {
    if (!net.is_hidden(n.id)) continue;
    if (scope.target && n.id != *scope.target) continue;
    make(ExpansionKind::widen_node, n.id, n.id);
  }

  std::stable_sort(out.begin(), out.end(), [](const ExpansionCandidate& a, const ExpansionCandidate& b) {
    return std::tuple(static_cast<int>(a.kind), to_int(a.src), to_int(a.dst)) <
           std::tuple(static_cast<int>(b.kind), to_int(b.src), to_int(b.dst));
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].index = i;
  return out;
}

std::vector<NodeId> candidate_sources(const DagNetwork& net, const ExpansionCandidate& c) {
  if (c.kind != ExpansionKind::widen_node) return {c.src};
  std::vector<NodeId> out;
  for (std::size_t ei : net.in_edges(c.src)) out.push_back(net.edges()[ei].src);
  return out;
}

std::vector<NodeId> candidate_targets(const DagNetwork& net, const ExpansionCandidate& c) {
  if (c.kind != ExpansionKind::widen_node) return {c.dst};
  std::vector<NodeId> out;
  for (std::size_t ei : net.out_edges(c.src)) out.push_back(net.edges()[ei].dst);
  return out;
}

double slope_at_zero(Activation act) { return activate_derivative(act, 0.0); }

// ---------------------------------------------------------------------------

SourceStatistics::SourceStatistics(Matrix source_with_bias, double ridge)
    : b_cat(std::move(source_with_bias)),
      factor(second_moment(b_cat), ridge),
      inv_sqrt(factor.inverse_sqrt()) {}

std::int64_t SourceStatistics::cost() const {
  const std::int64_t n = b_cat.rows(), p = b_cat.cols();
  return flops_gemm(p, p, n) + flops_symmetric_eigen(p) + flops_gemm(p, p, p);
}

double linearized_objective(const Matrix& source_with_bias, const Matrix& residual,
                            const Matrix& alpha, const Matrix& omega, double slope) {
  const Matrix hidden = source_with_bias * alpha.transpose();  // n x k
  const Matrix pred = slope * (hidden * omega.transpose());
  return (pred - residual).squaredNorm() / static_cast<double>(residual.rows());
}

NeuronFit fit_new_neurons(const SourceStatistics& stats, const Matrix& residual, int neurons,
                          double slope, std::uint64_t seed, FlopCounter* flops) {
  if (neurons < 1) throw UsageError("neurons must be >= 1");
  if (slope == 0.0)
    throw UsageError("unsupported activation: derivative at 0 is zero, the linearized fit is undefined");
  const Matrix& b = stats.b_cat;
  if (residual.rows() != b.rows()) throw UsageError("residual and sources have different batch sizes");
  if (!residual.allFinite()) throw NumericError("non-finite residual");
  const Eigen::Index p = b.cols(), m = residual.cols();

  const Matrix cross = cross_moment(b, residual);  // p x m
  const Matrix whitened = stats.inv_sqrt * cross;  // p x m
  Eigen::BDCSVD<Matrix> svd(whitened, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double top = s.size() > 0 ? s(0) : 0.0;
  const double tol = 16.0 * top * static_cast<double>(std::max(p, m)) *
                     std::numeric_limits<double>::epsilon();
  Eigen::Index rank = 0;
  while (rank < s.size() && s(rank) > tol && s(rank) > 0.0) ++rank;

  NeuronFit fit;
  fit.alpha = Matrix::Zero(neurons, p);
  fit.omega = Matrix::Zero(m, neurons);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (int j = 0; j < neurons; ++j) {
    if (j < rank) {
      fit.alpha.row(j) = (stats.inv_sqrt * svd.matrixU().col(j)).transpose();
      fit.omega.col(j) = svd.matrixV().col(j) * (s(j) / slope);
      ++fit.active;
    } else {
      Vector r(p);
      for (Eigen::Index i = 0; i < p; ++i) r(i) = normal(rng);
      fit.alpha.row(j) = (r / r.norm()).transpose();
    }
  }
  fit.objective = linearized_objective(b, residual, fit.alpha, fit.omega, slope);
  if (flops != nullptr) {
    const std::int64_t n = b.rows();
    flops->book(FlopPhase::candidate, flops_gemm(p, m, n) + flops_gemm(p, m, p) + flops_svd(p, m) +
                                          flops_gemm(p, neurons, p) + flops_gemm(n, neurons, p) +
                                          flops_gemm(n, m, neurons));
  }
  return fit;
}

NeuronFit fit_new_neurons(const Matrix& source_with_bias, const Matrix& residual, int neurons,
                          double slope, double ridge, std::uint64_t seed) {
  SourceStatistics stats(source_with_bias, ridge);
  return fit_new_neurons(stats, residual, neurons, slope, seed);
}

Matrix fit_direct_edge(const Matrix& source_with_bias, const Matrix& residual, double ridge) {
  if (residual.rows() != source_with_bias.rows())
    throw UsageError("residual and sources have different batch sizes");
  return ridge_least_squares(source_with_bias, residual, ridge);
}

const SourceStatistics& SourceCache::get(std::span<const NodeId> sources, FlopCounter* flops) {
  std::vector<std::int32_t> key;
  for (NodeId s : sources) key.push_back(to_int(s));
  auto it = entries_.find(key);
  if (it != entries_.end()) return *it->second;
  auto stats = std::make_unique<SourceStatistics>(concat_sources(net_, cache_, sources), ridge_);
  if (flops != nullptr) flops->book(FlopPhase::candidate, stats->cost());
  return *entries_.emplace(std::move(key), std::move(stats)).first->second;
}

const SourceStatistics& SourceCache::at(std::span<const NodeId> sources) const {
  std::vector<std::int32_t> key;
  for (NodeId s : sources) key.push_back(to_int(s));
  auto it = entries_.find(key);
  if (it == entries_.end()) throw UsageError("source statistics were not prepared");
  return *it->second;
}

Matrix candidate_residual(const DagNetwork& net, const ExpansionCandidate& c,
                          const BottleneckReport& report) {
  const auto targets = candidate_targets(net, c);
  Eigen::Index cols = 0;
  for (NodeId t : targets) cols += net.node(t).width;
  Matrix out(report.cache.batch_size(), cols);
  Eigen::Index off = 0;
  for (NodeId t : targets) {
    const Matrix& v = report.at(t).v_orth;
    out.middleCols(off, v.cols()) = v;
    off += v.cols();
  }
  return out;
}

void fit_candidate(ExpansionCandidate& c, const DagNetwork& net, const BottleneckReport& report,
                   const SourceStatistics& stats, std::uint64_t seed, FlopCounter* flops) {
  const Matrix residual = candidate_residual(net, c, report);
  if (c.kind == ExpansionKind::direct_edge) {
    const Matrix cross = cross_moment(stats.b_cat, residual);
    c.alpha = stats.factor.solve(cross).transpose();
    c.omega.resize(0, 0);
    const Matrix pred = stats.b_cat * c.alpha.transpose();
    c.objective = (pred - residual).squaredNorm() / static_cast<double>(residual.rows());
    if (flops != nullptr) {
      const std::int64_t n = stats.b_cat.rows(), p = stats.b_cat.cols(), m = residual.cols();
      flops->book(FlopPhase::candidate,
                  flops_gemm(p, m, n) + 2 * flops_gemm(p, m, p) + flops_gemm(n, m, p));
    }
  } else {
    const Activation act =
        c.kind == ExpansionKind::widen_node ? net.node(c.src).activation : c.activation;
    NeuronFit fit = fit_new_neurons(stats, residual, c.neurons, slope_at_zero(act), seed, flops);
    c.alpha = std::move(fit.alpha);
    c.omega = std::move(fit.omega);
    c.objective = fit.objective;
  }
  c.fitted = true;
}

// ---------------------------------------------------------------------------

std::vector<Injection> candidate_injections(const DagNetwork& net, const ExpansionCandidate& c,
                                            const ActivationCache& cache, FlopCounter* flops) {
  if (!c.fitted) throw UsageError("candidate " + c.describe() + " is not fitted");
  const auto sources = candidate_sources(net, c);
  const Matrix b = concat_sources(net, cache, sources);
  if (b.cols() != c.alpha.cols()) throw UsageError("candidate does not match the network");
  const std::int64_t n = b.rows(), p = b.cols();
  std::vector<Injection> out;
  if (c.kind == ExpansionKind::direct_edge) {
    out.push_back({c.dst, b * c.alpha.transpose()});
    if (flops != nullptr) flops->book(FlopPhase::candidate, flops_gemm(n, c.alpha.rows(), p));
    return out;
  }
  const Activation act =
      c.kind == ExpansionKind::widen_node ? net.node(c.src).activation : c.activation;
  const Matrix hidden = activate(act, b * c.alpha.transpose());  // n x k
  Eigen::Index off = 0;
  for (NodeId t : candidate_targets(net, c)) {
    const Eigen::Index w = net.node(t).width;
    out.push_back({t, hidden * c.omega.middleRows(off, w).transpose()});
    off += w;
  }
  if (off != c.omega.rows()) throw UsageError("candidate omega does not match the targets");
  if (flops != nullptr)
    flops->book(FlopPhase::candidate, flops_gemm(n, c.neurons, p) + n * c.neurons +
                                          flops_gemm(n, c.omega.rows(), c.neurons));
  return out;
}

double loss_with_injections(const DagNetwork& net, const ActivationCache& cache,
                            std::span<const Injection> injections, double gamma,
                            const Matrix& targets, LossKind loss, FlopCounter* flops) {
  const std::size_t out_idx = net.node_index(net.output_id());
  if (gamma == 0.0 || injections.empty()) return loss_value(cache.post(out_idx), targets, loss);

  const std::size_t count = net.nodes().size();
  std::vector<const Matrix*> inject(count, nullptr);
  std::vector<bool> affected(count, false);
  for (const auto& inj : injections) {
    const std::size_t i = net.node_index(inj.node);
    inject[i] = &inj.delta;
    affected[i] = true;
  }
  std::vector<Matrix> post(count);
  const Eigen::Index n = cache.batch_size();
  std::int64_t work = 0;
  for (std::size_t idx : net.rank_order()) {
    const auto& node = net.nodes()[idx];
    if (node.id == net.input_id()) continue;
    const auto in = net.in_edges(node.id);
    if (!affected[idx]) {
      for (std::size_t ei : in)
        if (affected[net.node_index(net.edges()[ei].src)]) affected[idx] = true;
    }
    if (!affected[idx]) continue;
    // Same summation order as forward(), then the injected term.
    Matrix a = Matrix::Zero(n, node.width);
    for (std::size_t ei : in) {
      const auto& e = net.edges()[ei];
      const std::size_t s = net.node_index(e.src);
      a.noalias() += (affected[s] ? post[s] : cache.post(s)) * e.weight.transpose();
      a.rowwise() += e.bias.transpose();
      work += flops_gemm(n, e.weight.rows(), e.weight.cols());
    }
    if (inject[idx] != nullptr) a += gamma * *inject[idx];
    post[idx] = activate(node.activation, a);
    work += n * node.width;
  }
  if (flops != nullptr) flops->book(FlopPhase::candidate, work);
  return loss_value(affected[out_idx] ? post[out_idx] : cache.post(out_idx), targets, loss);
}

std::vector<double> GammaGrid::values() const {
  std::vector<double> out{0.0};
  double g = base;
  for (int j = 0; j <= max_exponent; ++j) {
    out.push_back(g);
    out.push_back(-g);
    g *= 2.0;
  }
  return out;
}

LineSearchResult line_search_gamma(const DagNetwork& net, const ExpansionCandidate& c,
                                   const ActivationCache& cache, const Matrix& targets,
                                   LossKind loss, const GammaGrid& grid, FlopCounter* flops) {
  if (cache.batch_size() == 0) throw DataError("line search needs a non-empty train-ls split");
  const auto injections = candidate_injections(net, c, cache, flops);
  LineSearchResult best;
  bool have = false;
  for (double gamma : grid.values()) {
    const double value = loss_with_injections(net, cache, injections, gamma, targets, loss, flops);
    if (!std::isfinite(value)) continue;
    if (!have || value < best.loss) {
      best = {gamma, value};
      have = true;
    }
  }
  if (!have) throw NumericError("line search produced no finite loss");
  return best;
}

LineSearchResult line_search_gamma(const DagNetwork& net, const ExpansionCandidate& c,
                                   const LabeledData& train_ls, LossKind loss,
                                   const GammaGrid& grid) {
  if (train_ls.empty()) throw DataError("line search needs a non-empty train-ls split");
  return line_search_gamma(net, c, forward(net, train_ls.inputs), train_ls.targets, loss, grid);
}

double estimate_candidate(const DagNetwork& net, const ExpansionCandidate& c, double gamma,
                          const ActivationCache& cache, const Matrix& targets, LossKind loss,
                          FlopCounter* flops) {
  if (cache.batch_size() == 0) throw DataError("estimation needs a non-empty train-gr split");
  if (gamma == 0.0)
    return loss_value(cache.post(net.node_index(net.output_id())), targets, loss);
  const auto injections = candidate_injections(net, c, cache, flops);
  return loss_with_injections(net, cache, injections, gamma, targets, loss, flops);
}

double estimate_candidate(const DagNetwork& net, const ExpansionCandidate& c, double gamma,
                          const LabeledData& train_gr, LossKind loss) {
  if (train_gr.empty()) throw DataError("estimation needs a non-empty train-gr split");
  return estimate_candidate(net, c, gamma, forward(net, train_gr.inputs), train_gr.targets, loss);
}

// ---------------------------------------------------------------------------

DagNetwork apply_expansion(const DagNetwork& net, const ExpansionCandidate& c, double gamma) {
  if (!c.fitted) throw UsageError("cannot apply unfitted candidate " + c.describe());
  if (!net.has_node(c.src) || !net.has_node(c.dst))
    throw UsageError("candidate " + c.describe() + " refers to missing nodes");
  DagNetwork out = net;
  switch (c.kind) {
    case ExpansionKind::direct_edge: {
      const int ws = net.node(c.src).width, wd = net.node(c.dst).width;
      if (c.alpha.rows() != wd || c.alpha.cols() != ws + 1)
        throw UsageError("direct edge weights do not match the endpoints");
      out.add_edge(c.src, c.dst, gamma * c.alpha.leftCols(ws), gamma * c.alpha.col(ws));
      break;
    }
    case ExpansionKind::new_node: {
      const int ws = net.node(c.src).width, wd = net.node(c.dst).width, k = c.neurons;
      if (net.node(c.src).rank >= net.node(c.dst).rank)
        throw UsageError("new node endpoints violate the rank order");
      if (c.alpha.rows() != k || c.alpha.cols() != ws + 1 || c.omega.rows() != wd ||
          c.omega.cols() != k)
        throw UsageError("new node weights do not match the endpoints");
      const NodeId fresh = out.insert_node_before(c.dst, k, c.activation);
      out.add_edge(c.src, fresh, c.alpha.leftCols(ws), c.alpha.col(ws));
      out.add_edge(fresh, c.dst, gamma * c.omega, Vector::Zero(wd));
      break;
    }
    case ExpansionKind::widen_node: {
      if (!net.is_hidden(c.src)) throw UsageError("only hidden nodes can be widened");
      const int k = c.neurons;
      const auto in = net.in_edges(c.src);
      const auto outs = net.out_edges(c.src);
      Eigen::Index in_cols = 1, out_rows = 0;
      for (std::size_t ei : in) in_cols += net.node(net.edges()[ei].src).width;
      for (std::size_t ei : outs) out_rows += net.node(net.edges()[ei].dst).width;
      if (c.alpha.rows() != k || c.alpha.cols() != in_cols || c.omega.rows() != out_rows ||
          c.omega.cols() != k)
        throw UsageError("widening weights do not match the node's edges");
      const int old_width = net.node(c.src).width;
      out.node(c.src).width = old_width + k;
      Eigen::Index off = 0;
      for (std::size_t pos = 0; pos < in.size(); ++pos) {
        auto& e = out.edge_at(in[pos]);
        const Eigen::Index ws = e.weight.cols();
        Matrix w(old_width + k, ws);
        w << e.weight, c.alpha.middleCols(off, ws);
        Vector b(old_width + k);
        b << e.bias, (pos == 0 ? Vector(c.alpha.col(in_cols - 1)) : Vector::Zero(k));
        e.weight = std::move(w);
        e.bias = std::move(b);
        off += ws;
      }
      off = 0;
      for (std::size_t ei : outs) {
        auto& e = out.edge_at(ei);
        const Eigen::Index wd = e.weight.rows();
        Matrix w(wd, old_width + k);
        w << e.weight, gamma * c.omega.middleRows(off, wd);
        e.weight = std::move(w);
        off += wd;
      }
      break;
    }
  }
  auto violations = validate(out);
  if (!violations.empty())
    throw UsageError("expansion " + c.describe() + " produced an invalid network: " +
                     violations.front().message);
  return out;
}

}  // namespace daggrow
