#pragma once

// Growth moves and their fitting.
//
// Three moves are considered: a direct edge (one new layer), a new node between
// two existing nodes (two new layers), and widening an existing hidden node by
// k neurons. New neurons are fitted against the bottleneck residual at their
// destination with the activation linearized at zero, which turns the fit into
// a rank-k least-squares problem solved by an SVD in the whitened source
// metric. The output weights are then scaled by an amplitude gamma chosen by a
// grid line search that always contains 0, so no move can worsen the
// line-search loss.

#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dag_grow/bottleneck.hpp"
#include "dag_grow/linalg.hpp"
#include "dag_grow/netdag.hpp"

namespace daggrow {

enum class ExpansionKind { direct_edge, new_node, widen_node };

std::string_view to_string(ExpansionKind kind);

struct ExpansionCandidate {
  ExpansionKind kind = ExpansionKind::direct_edge;
  NodeId src{};  ///< widen_node: the widened node
  NodeId dst{};  ///< widen_node: the widened node
  int neurons = 0;
  Activation activation = Activation::selu;  ///< new_node only

  /// new_node / widen_node: k x (p + 1) input weights, bias in the last column.
  /// direct_edge: dst_width x (src_width + 1), i.e. [W | b].
  Matrix alpha;
  /// new_node: dst_width x k. widen_node: row blocks per out-edge, in out-edge
  /// order. Empty for direct_edge.
  Matrix omega;

  double gamma = 0.0;
  double loss_ls = std::numeric_limits<double>::quiet_NaN();
  double est_loss_gr = std::numeric_limits<double>::quiet_NaN();
  double objective = std::numeric_limits<double>::quiet_NaN();  ///< linearized fit objective
  std::int64_t param_delta = 0;
  bool fitted = false;
  std::size_t index = 0;  ///< position in the enumeration

  std::string describe() const;
};

/// Whole graph, or only moves whose output lands on one node's pre-activity.
struct Scope {
  std::optional<NodeId> target;

  static Scope whole() { return {}; }
  static Scope restricted(NodeId node) { return {node}; }
};

/// Unfitted candidates sorted by (kind, src id, dst id), with param_delta set.
std::vector<ExpansionCandidate> enumerate_candidates(const DagNetwork& net, const Scope& scope,
                                                     int neurons,
                                                     Activation activation = Activation::selu);

std::int64_t param_delta(const DagNetwork& net, const ExpansionCandidate& c);

/// Nodes whose post-activities feed the new parameters.
std::vector<NodeId> candidate_sources(const DagNetwork& net, const ExpansionCandidate& c);
/// Nodes whose pre-activities receive the new contribution (omega row-block order).
std::vector<NodeId> candidate_targets(const DagNetwork& net, const ExpansionCandidate& c);

/// Slope of the activation at 0 used by the linearization.
double slope_at_zero(Activation act);

// ---------------------------------------------------------------------------
// Fitting

/// Second-moment factorization of a source block, reusable across candidates.
struct SourceStatistics {
  Matrix b_cat;  ///< n x (p + 1), bias column last
  CovarianceFactor factor;
  Matrix inv_sqrt;

  SourceStatistics(Matrix source_with_bias, double ridge);
  /// FLOPs spent building it.
  std::int64_t cost() const;
};

struct NeuronFit {
  Matrix alpha;  ///< k x p
  Matrix omega;  ///< m x k
  int active = 0;  ///< neurons with a nonzero singular direction
  double objective = 0.0;  ///< mean |slope * omega alpha b_i - v_i|^2
};

/// Rank-k fit of v ~ slope * omega * alpha * b over rows (b includes the bias
/// column). Neurons beyond the rank of the whitened cross-moment get zero omega
/// and a random unit-norm alpha drawn from `seed`.
NeuronFit fit_new_neurons(const SourceStatistics& stats, const Matrix& residual, int neurons,
                          double slope, std::uint64_t seed, FlopCounter* flops = nullptr);
NeuronFit fit_new_neurons(const Matrix& source_with_bias, const Matrix& residual, int neurons,
                          double slope, double ridge, std::uint64_t seed);

/// Linearized objective mean_i |slope * omega * alpha * b_i - v_i|^2.
double linearized_objective(const Matrix& source_with_bias, const Matrix& residual,
                            const Matrix& alpha, const Matrix& omega, double slope);

/// Ridge least-squares [W | b] for a direct edge, dst_width x (src_width + 1).
Matrix fit_direct_edge(const Matrix& source_with_bias, const Matrix& residual, double ridge);

/// Shares source factorizations between candidates of one growth step.
class SourceCache {
 public:
  SourceCache(const DagNetwork& net, const ActivationCache& cache, double ridge)
      : net_(net), cache_(cache), ridge_(ridge) {}

  /// Builds (once) and returns the statistics; books FLOPs on first build.
  const SourceStatistics& get(std::span<const NodeId> sources, FlopCounter* flops = nullptr);
  /// Read-only lookup; the entry must have been built.
  const SourceStatistics& at(std::span<const NodeId> sources) const;

 private:
  const DagNetwork& net_;
  const ActivationCache& cache_;
  double ridge_;
  std::map<std::vector<std::int32_t>, std::unique_ptr<SourceStatistics>> entries_;
};

/// Residual the candidate is fitted against: the bottleneck residuals of its
/// targets side by side.
Matrix candidate_residual(const DagNetwork& net, const ExpansionCandidate& c,
                          const BottleneckReport& report);

/// Fits alpha/omega (or [W | b]) on the report's batch. `stats` must be built
/// from candidate_sources(net, c) on the same batch.
void fit_candidate(ExpansionCandidate& c, const DagNetwork& net, const BottleneckReport& report,
                   const SourceStatistics& stats, std::uint64_t seed, FlopCounter* flops = nullptr);

// ---------------------------------------------------------------------------
// Evaluation without rebuilding the network

/// Contribution of the candidate to a target pre-activity at gamma = 1.
struct Injection {
  NodeId node{};
  Matrix delta;
};

std::vector<Injection> candidate_injections(const DagNetwork& net, const ExpansionCandidate& c,
                                            const ActivationCache& cache,
                                            FlopCounter* flops = nullptr);

/// Loss of the network whose target pre-activities get gamma * delta added.
/// Only nodes downstream of the targets are recomputed; gamma = 0 returns the
/// base loss exactly.
double loss_with_injections(const DagNetwork& net, const ActivationCache& cache,
                            std::span<const Injection> injections, double gamma,
                            const Matrix& targets, LossKind loss, FlopCounter* flops = nullptr);

struct GammaGrid {
  int max_exponent = 8;      ///< J
  double base = 1.0 / 16.0;  ///< gamma_0

  /// 0, +g0, -g0, +2 g0, -2 g0, ..., +2^J g0, -2^J g0
  std::vector<double> values() const;
};

struct LineSearchResult {
  double gamma = 0.0;
  double loss = 0.0;
};

/// Grid argmin of the loss over gamma; ties keep the earlier grid value.
LineSearchResult line_search_gamma(const DagNetwork& net, const ExpansionCandidate& c,
                                   const ActivationCache& cache, const Matrix& targets,
                                   LossKind loss, const GammaGrid& grid,
                                   FlopCounter* flops = nullptr);
LineSearchResult line_search_gamma(const DagNetwork& net, const ExpansionCandidate& c,
                                   const LabeledData& train_ls, LossKind loss,
                                   const GammaGrid& grid);

/// Loss of the expanded network with the candidate's own gamma; no training.
double estimate_candidate(const DagNetwork& net, const ExpansionCandidate& c, double gamma,
                          const ActivationCache& cache, const Matrix& targets, LossKind loss,
                          FlopCounter* flops = nullptr);
double estimate_candidate(const DagNetwork& net, const ExpansionCandidate& c, double gamma,
                          const LabeledData& train_gr, LossKind loss);

// ---------------------------------------------------------------------------

/// Returns the expanded network; new output weights are scaled by gamma and
/// all existing parameters are left untouched.
DagNetwork apply_expansion(const DagNetwork& net, const ExpansionCandidate& c, double gamma);

}  // namespace daggrow
