#pragma once

// Flat-key experiment configuration shared by the C API and the CLI.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dag_grow/data.hpp"
#include "dag_grow/strategy.hpp"

namespace daggrow {

struct DataConfig {
  std::string source = "teacher";  ///< teacher | mnist | csv:PATH
  std::string data_dir;            ///< MNIST directory; empty: DAG_GROW_DATA
  std::int64_t subset = 0;         ///< MNIST training images kept (0: all)
  std::int64_t test_subset = 0;    ///< MNIST test images kept (0: all)
  std::int64_t n_train = 3000;     ///< teacher
  std::int64_t n_test = 1000;      ///< teacher
  double input_bound = 1.0;        ///< teacher inputs uniform on [-b, b]
  std::int64_t teacher_seed = -1;  ///< -1: derived from the run seed
  int target_cols = 1;             ///< csv
  double test_fraction = 0.2;      ///< csv rows held out as test
};

struct ExperimentConfig {
  GrowthConfig growth;
  DataConfig data;
  bool loss_set = false;  ///< loss chosen explicitly (else mse, or cross-entropy for mnist)

  /// Sets one flat key, e.g. ("strategy", "bic"). Throws UsageError on
  /// unknown keys or malformed values.
  void set(const std::string& key, const std::string& value);
  /// Effective configuration, every key with its resolved value.
  std::map<std::string, std::string> effective() const;
  /// Loss after applying the per-source default.
  LossKind resolved_loss() const;
};

/// Keys accepted by ExperimentConfig::set, in documentation order.
const std::vector<std::string>& experiment_keys();

/// Builds the four splits described by the data configuration. The split is
/// seeded from the run seed.
DatasetSplits load_experiment_data(const ExperimentConfig& config);

/// Data directory: explicit value, else DAG_GROW_DATA, else "data/mnist".
std::string resolve_data_dir(const std::string& explicit_dir);

RunResult run_experiment(const ExperimentConfig& config,
                         std::optional<DagNetwork> initial = std::nullopt);

}  // namespace daggrow
