#pragma once

// Cost accounting and run logs.
//
// FLOPs stand in for energy: a multiply-add is 2 operations, every activation
// output of a computed node is 1 operation, and a backward pass costs twice
// its forward pass. Solver work is booked separately with the cubic formulas
// in flops.hpp.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dag_grow/flops.hpp"
#include "dag_grow/netdag.hpp"

namespace daggrow {

std::int64_t flops_forward(const DagNetwork& net, std::int64_t batch_size);
std::int64_t flops_backward(const DagNetwork& net, std::int64_t batch_size);

inline constexpr int kMetricsSchemaVersion = 1;

/// Split names used in metric rows.
inline constexpr const char* kSplitTrainOpt = "train_opt";
inline constexpr const char* kSplitTrainLs = "train_ls";
inline constexpr const char* kSplitTrainGr = "train_gr";
inline constexpr const char* kSplitInterTrain = "inter_train";
inline constexpr const char* kSplitTest = "test";
/// Running loss of an inter-train epoch, measured during the SGD pass.
inline constexpr const char* kSplitEpoch = "inter_train_running";

struct MetricRow {
  int step = 0;
  int epoch = 0;
  std::string split;
  double loss = 0.0;
  double accuracy = 0.0;  ///< NaN for regression
  std::int64_t params = 0;
  std::int64_t candidates = 0;
  std::int64_t flops_cum = 0;
  double wall_s = 0.0;

  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

struct SelectedExpansion {
  std::string kind;  ///< direct_edge | new_node | widen_node
  int src = -1;
  int dst = -1;
  int neurons = 0;
  double gamma = 0.0;
  double est_loss_gr = 0.0;
  double criterion = 0.0;
  std::int64_t param_delta = 0;
};

struct StepRecord {
  int step = 0;
  bool saturated = false;
  int a_star = -1;
  double psi_max = 0.0;
  int hidden_nodes_before = 0;
  std::int64_t candidates = 0;
  std::int64_t candidate_flops = 0;  ///< fitting + line search + estimation
  std::int64_t flops_cum = 0;
  std::int64_t params = 0;
  SelectedExpansion selected;
};

struct RunMetrics {
  std::vector<MetricRow> rows;
  std::vector<StepRecord> steps;
};

/// Condensed view of a finished run, written as the JSON summary.
struct RunSummary {
  int schema_version = kMetricsSchemaVersion;
  std::map<std::string, std::string> config;  ///< effective flat configuration
  std::string loss_kind;
  std::int64_t final_params = 0;
  double final_test_metric = 0.0;  ///< test loss (mse) or test accuracy (cross-entropy)
  double final_test_loss = 0.0;
  double final_test_accuracy = 0.0;
  double final_train_gr_loss = 0.0;
  double zero_predictor_loss = 0.0;  ///< train-gr loss of the empty network
  std::int64_t flops_total = 0;
  std::int64_t candidate_flops_total = 0;
  std::map<std::string, std::int64_t> flops_by_phase;
  std::vector<StepRecord> steps;
};

/// One row per (step, epoch, split). An empty run yields a header-only file.
void write_metrics_csv(const RunMetrics& run, const std::string& path);
std::vector<MetricRow> read_metrics_csv(const std::string& path);
std::string metrics_csv_header();
std::string metrics_csv_text(const RunMetrics& run);

void write_summary_json(const RunSummary& summary, const std::string& path);
/// Throws DataError on a schema version other than kMetricsSchemaVersion.
RunSummary read_summary_json(const std::string& path);
std::string summary_to_json(const RunSummary& summary);
RunSummary summary_from_json(const std::string& text);

/// Comparison table across runs: per run, then per strategy aggregates and the
/// candidate-FLOP ratio of each strategy against the whole search space.
std::string report_table(const std::vector<RunSummary>& runs);

}  // namespace daggrow
