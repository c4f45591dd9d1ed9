#include "dag_grow/bottleneck.hpp"

#include <cmath>
#include <cstdio>

#include "dag_grow/error.hpp"
#include "dag_grow/linalg.hpp"
#include "dag_grow/metrics.hpp"

namespace daggrow {

std::string_view to_string(PsiNormalization n) {
  return n == PsiNormalization::none ? "none" : "width";
}

PsiNormalization parse_psi_normalization(std::string_view name) {
  if (name == "none") return PsiNormalization::none;
  if (name == "width") return PsiNormalization::width;
  throw UsageError("unknown psi normalization '" + std::string(name) + "'");
}

Matrix concat_sources(const DagNetwork& net, const ActivationCache& cache,
                      std::span<const NodeId> sources) {
  Eigen::Index cols = 1;
  for (NodeId s : sources) cols += net.node(s).width;
  Matrix out(cache.batch_size(), cols);
  Eigen::Index off = 0;
  for (NodeId s : sources) {
    const Matrix& b = cache.post(net.node_index(s));
    out.middleCols(off, b.cols()) = b;
    off += b.cols();
  }
  out.col(off).setOnes();
  return out;
}

NodeProjection project_node(const DagNetwork& net, const ActivationCache& cache,
                            std::span<const Matrix> desired_updates, NodeId node, double ridge,
                            FlopCounter* flops) {
  const std::size_t idx = net.node_index(node);
  if (node == net.input_id()) throw UsageError("the input node has no pre-activity to project");
  if (desired_updates.size() != net.nodes().size())
    throw UsageError("desired updates do not match the network");
  const Matrix& desired = desired_updates[idx];
  if (desired.rows() != cache.batch_size() || desired.cols() != net.nodes()[idx].width)
    throw UsageError("desired update shape does not match the node");
  const Eigen::Index n = desired.rows();
  if (n == 0) throw UsageError("projection over an empty batch");

  NodeProjection proj;
  proj.node = node;
  const auto in = net.in_edges(node);
  if (in.empty()) {
    proj.v_star = Matrix::Zero(n, desired.cols());
    proj.v_orth = desired;
  } else {
    std::vector<NodeId> sources;
    for (std::size_t ei : in) sources.push_back(net.edges()[ei].src);
    const Matrix b_cat = concat_sources(net, cache, sources);
    const Eigen::Index p = b_cat.cols();
    const Eigen::Index w = desired.cols();
    CovarianceFactor factor(second_moment(b_cat), ridge);
    const Matrix update_t = factor.solve(cross_moment(b_cat, desired));  // p x w
    proj.v_star = b_cat * update_t;
    proj.v_orth = desired - proj.v_star;

    Eigen::Index off = 0;
    for (std::size_t k = 0; k < in.size(); ++k) {
      const auto& e = net.edges()[in[k]];
      const Eigen::Index ws = net.node(e.src).width;
      EdgeUpdate u;
      u.edge = e.id;
      u.weight = update_t.middleRows(off, ws).transpose();
      // The single bias channel is attributed to the first in-edge.
      u.bias = k == 0 ? Vector(update_t.row(p - 1).transpose()) : Vector::Zero(w);
      proj.best_in_updates.push_back(std::move(u));
      off += ws;
    }
    if (flops != nullptr) {
      flops->book(FlopPhase::solver, flops_gemm(p, p, n) + flops_gemm(p, w, n) +
                                         flops_symmetric_eigen(p) + 2 * flops_gemm(p, w, p) +
                                         flops_gemm(n, w, p));
    }
  }
  if (!proj.v_orth.allFinite()) throw NumericError("non-finite projection residual");
  proj.psi = std::sqrt(proj.v_orth.squaredNorm() / static_cast<double>(n));
  return proj;
}

const NodeProjection& BottleneckReport::at(NodeId node) const {
  for (const auto& p : nodes)
    if (p.node == node) return p;
  throw UsageError("node " + std::to_string(to_int(node)) + " has no projection in this report");
}

double BottleneckReport::score(const DagNetwork& net, NodeId node, PsiNormalization norm) const {
  const double psi = at(node).psi;
  if (norm == PsiNormalization::width) return psi / std::sqrt(static_cast<double>(net.node(node).width));
  return psi;
}

BottleneckReport bottleneck_report(const DagNetwork& net, const LabeledData& batch, LossKind loss,
                                   double ridge, PsiNormalization norm, FlopCounter* flops,
                                   std::string batch_id) {
  if (batch.empty()) throw DataError("bottleneck report needs a non-empty batch");
  BottleneckReport report;
  report.batch_id = std::move(batch_id);
  report.cache = forward(net, batch.inputs);
  LossGradient lg = loss_and_functional_gradient(outputs(net, report.cache), batch.targets, loss);
  report.loss = lg.loss;
  Gradients g = backward(net, report.cache, lg.v_goal, /*with_param_grads=*/false);
  report.desired_updates = std::move(g.desired_updates);
  if (flops != nullptr) {
    flops->book(FlopPhase::forward, flops_forward(net, batch.size()));
    flops->book(FlopPhase::backward, flops_backward(net, batch.size()));
  }

  bool have = false;
  double best = 0.0;
  for (std::size_t idx : net.rank_order()) {
    const NodeId id = net.nodes()[idx].id;
    if (id == net.input_id()) continue;
    report.nodes.push_back(project_node(net, report.cache, report.desired_updates, id, ridge, flops));
    const double s = report.score(net, id, norm);
    if (!have || s > best || (s == best && to_int(id) < to_int(report.argmax))) {
      best = s;
      report.argmax = id;
      have = true;
    }
  }
  return report;
}

std::string bottleneck_csv(const DagNetwork& net, const BottleneckReport& report) {
  std::string out = "node_id,width,psi,n_in_edges\n";
  char buf[128];
  for (const auto& p : report.nodes) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%zu\n", to_int(p.node), net.node(p.node).width,
                  p.psi, net.in_edges(p.node).size());
    out += buf;
  }
  return out;
}

}  // namespace daggrow
