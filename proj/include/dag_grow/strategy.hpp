#pragma once

// The grow / inter-train loop.
//
// Each growth step computes the bottleneck report on train_opt, enumerates
// candidates (whole graph or restricted to the worst node), fits them on
// train_opt, line-searches gamma on train_ls and scores them on train_gr. The
// best one is applied, then the network is trained on train_opt + train_ls.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dag_grow/bottleneck.hpp"
#include "dag_grow/data.hpp"
#include "dag_grow/growth.hpp"
#include "dag_grow/metrics.hpp"
#include "dag_grow/netdag.hpp"

namespace daggrow {

enum class StrategyKind { whole_search_space, bottleneck_restricted, bic_restricted };

/// "whole", "restricted", "bic"
std::string_view to_string(StrategyKind kind);
StrategyKind parse_strategy(std::string_view name);

enum class BicVariant { log_loss, n_log_mse };

std::string_view to_string(BicVariant v);
BicVariant parse_bic_variant(std::string_view name);

struct GrowthConfig {
  StrategyKind strategy = StrategyKind::bottleneck_restricted;
  int neurons_per_step = 10;
  int inter_train_epochs = 100;
  int max_growth_steps = 15;
  SgdConfig optimizer;
  GammaGrid gamma_grid;
  double ridge = 1e-6;
  std::uint64_t seed = 0;
  Activation activation = Activation::selu;
  LossKind loss = LossKind::mse;
  PsiNormalization psi_normalization = PsiNormalization::none;
  BicVariant bic_variant = BicVariant::log_loss;
  bool apply_dw_star = false;
  int max_node_width = 0;  ///< 0: unbounded
  int max_nodes = 0;       ///< 0: unbounded
  int jobs = 1;

  /// Throws UsageError on out-of-range values.
  void check() const;
};

/// k ln(n) - 2 ln(loss). Throws NumericError for loss <= 0 or n < 1.
double bic(std::int64_t k, std::int64_t n, double loss);
/// k ln(n) + n ln(mse).
double bic_n_log_mse(std::int64_t k, std::int64_t n, double mse);

/// Loss floor applied before taking logarithms in the selection criterion.
inline constexpr double kBicLossFloor = 1e-12;

/// Seed for a sub-stream of a run (mixes the run seed with up to three labels).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

struct StepOutcome {
  bool saturated = false;
  DagNetwork net;  ///< the expanded network (unchanged when saturated)
  std::vector<ExpansionCandidate> candidates;  ///< evaluated, enumeration order
  std::vector<double> criteria;                ///< selection value per candidate
  std::optional<std::size_t> selected;         ///< index into candidates
  NodeId a_star{};
  double psi_max = 0.0;
  double base_loss_ls = 0.0;
  double base_loss_gr = 0.0;
  double dw_star_eta = 0.0;  ///< only with apply_dw_star
  std::int64_t candidate_flops = 0;
};

/// One growth step; FLOPs are booked into `flops`.
StepOutcome growth_step(const DagNetwork& net, const DatasetSplits& splits,
                        const GrowthConfig& config, int step, FlopCounter& flops);

struct RunResult {
  DagNetwork net;
  RunMetrics metrics;
  RunSummary summary;
  FlopCounter flops;
};

/// Flat key/value view of the growth settings (echoed into summaries).
std::map<std::string, std::string> describe(const GrowthConfig& config);

/// Alternates growth_step and inter-training. Starts from `initial` or from
/// the empty network. `extra_config` is merged into the echoed configuration.
RunResult growth_loop(const GrowthConfig& config, const DatasetSplits& splits,
                      std::optional<DagNetwork> initial = std::nullopt,
                      const std::map<std::string, std::string>& extra_config = {});

/// "kind(src->dst,k)" for each applied step, e.g. for determinism checks.
std::vector<std::string> selected_sequence(const RunMetrics& metrics);

}  // namespace daggrow
