#pragma once

// Expressivity bottleneck per node.
//
// For a node with desired pre-activity update D (one row per sample) and
// in-source post-activities B_cat = [B_src1 ... B_srcm 1], the best update the
// node's own in-edge parameters can realize is the least-squares projection
// v* = B_cat dW*^T. The remainder v_orth = D - v* is what the architecture
// cannot express; psi = sqrt(mean_i |v_orth_i|^2) is its size.

#include <span>
#include <string>
#include <vector>

#include "dag_grow/netdag.hpp"

namespace daggrow {

struct EdgeUpdate {
  EdgeId edge{};
  Matrix weight;
  Vector bias;
};

struct NodeProjection {
  NodeId node{};
  std::vector<EdgeUpdate> best_in_updates;
  Matrix v_star;
  Matrix v_orth;
  double psi = 0.0;
};

enum class PsiNormalization { none, width };

std::string_view to_string(PsiNormalization n);
PsiNormalization parse_psi_normalization(std::string_view name);

/// Post-activities of the given sources side by side, plus the bias column.
Matrix concat_sources(const DagNetwork& net, const ActivationCache& cache,
                      std::span<const NodeId> sources);

/// Projects desired_updates[node] onto the span of the node's in-edge
/// parameters. `ridge` is relative to trace(S)/dim(S); 0 gives the
/// minimum-norm least-squares solution. A node without in-edges gets a zero
/// projection and keeps its whole desired update as residual.
NodeProjection project_node(const DagNetwork& net, const ActivationCache& cache,
                            std::span<const Matrix> desired_updates, NodeId node, double ridge,
                            FlopCounter* flops = nullptr);

struct BottleneckReport {
  std::vector<NodeProjection> nodes;  ///< in rank order
  NodeId argmax{};                    ///< ties broken by lowest node id
  std::string batch_id;
  double loss = 0.0;
  ActivationCache cache;
  std::vector<Matrix> desired_updates;

  const NodeProjection& at(NodeId node) const;
  /// psi used for the argmax (possibly width-normalized).
  double score(const DagNetwork& net, NodeId node, PsiNormalization norm) const;
};

/// forward -> functional gradient -> backward -> project every non-input node.
BottleneckReport bottleneck_report(const DagNetwork& net, const LabeledData& batch, LossKind loss,
                                   double ridge, PsiNormalization norm = PsiNormalization::none,
                                   FlopCounter* flops = nullptr, std::string batch_id = "");

/// CSV lines "node_id,width,psi,n_in_edges" with header, in rank order.
std::string bottleneck_csv(const DagNetwork& net, const BottleneckReport& report);

}  // namespace daggrow
