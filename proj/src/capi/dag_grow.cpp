#include "dag_grow/dag_grow.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "dag_grow/error.hpp"
#include "dag_grow/experiment.hpp"

struct dg_network {
  daggrow::DagNetwork net;
};

struct dg_config {
  daggrow::ExperimentConfig config;
  std::map<std::string, std::string> explicit_values;
};

struct dg_run {
  daggrow::RunResult result;
};

namespace {

thread_local std::string g_last_error;

dg_status fail(dg_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

dg_status status_of(daggrow::ErrorKind kind) {
  switch (kind) {
    case daggrow::ErrorKind::usage: return DG_ERR_USAGE;
    case daggrow::ErrorKind::data: return DG_ERR_DATA;
    case daggrow::ErrorKind::numeric: return DG_ERR_NUMERIC;
    case daggrow::ErrorKind::io: return DG_ERR_IO;
  }
  return DG_ERR_INTERNAL;
}

template <class F>
dg_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return DG_OK;
  } catch (const daggrow::Error& e) {
    return fail(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(DG_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(DG_ERR_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <class T>
void require(const T* p, const char* what) {
  if (p == nullptr) throw daggrow::UsageError(std::string(what) + " must not be NULL");
}

}  // namespace

extern "C" {

const char* dg_last_error(void) { return g_last_error.c_str(); }
const char* dg_version(void) { return "1.0.0"; }
void dg_string_free(char* s) { std::free(s); }

dg_status dg_network_create_empty(int input_width, int output_width, dg_network** out) {
  return guarded([&] {
    require(out, "out");
    *out = new dg_network{daggrow::DagNetwork::empty(input_width, output_width)};
  });
}

dg_status dg_network_create_teacher(uint64_t seed, dg_network** out) {
  return guarded([&] {
    require(out, "out");
    *out = new dg_network{daggrow::make_teacher(seed)};
  });
}

dg_status dg_network_load(const char* path, dg_network** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new dg_network{daggrow::load_model(path)};
  });
}

dg_status dg_network_save(const dg_network* net, const char* path) {
  return guarded([&] {
    require(net, "net");
    require(path, "path");
    daggrow::save_model(net->net, path);
  });
}

dg_status dg_network_serialize(const dg_network* net, char** out) {
  return guarded([&] {
    require(net, "net");
    require(out, "out");
    *out = dup_string(daggrow::serialize(net->net));
  });
}

dg_status dg_network_deserialize(const char* document, dg_network** out) {
  return guarded([&] {
    require(document, "document");
    require(out, "out");
    *out = new dg_network{daggrow::deserialize(document)};
  });
}

void dg_network_free(dg_network* net) { delete net; }

dg_status dg_network_param_count(const dg_network* net, int64_t* out) {
  return guarded([&] {
    require(net, "net");
    require(out, "out");
    *out = daggrow::param_count(net->net);
  });
}

dg_status dg_network_node_count(const dg_network* net, int* out) {
  return guarded([&] {
    require(net, "net");
    require(out, "out");
    *out = static_cast<int>(net->net.nodes().size());
  });
}

dg_status dg_network_input_width(const dg_network* net, int* out) {
  return guarded([&] {
    require(net, "net");
    require(out, "out");
    *out = net->net.node(net->net.input_id()).width;
  });
}

dg_status dg_network_output_width(const dg_network* net, int* out) {
  return guarded([&] {
    require(net, "net");
    require(out, "out");
    *out = net->net.node(net->net.output_id()).width;
  });
}

dg_status dg_network_validate(const dg_network* net, int* violations, char** messages) {
  return guarded([&] {
    require(net, "net");
    require(violations, "violations");
    const auto found = daggrow::validate(net->net);
    *violations = static_cast<int>(found.size());
    if (messages != nullptr) {
      std::string text;
      for (const auto& v : found) text += v.message + "\n";
      *messages = dup_string(text);
    }
  });
}

dg_status dg_network_forward(const dg_network* net, const double* x, int64_t rows, double* y) {
  return guarded([&] {
    require(net, "net");
    require(x, "x");
    require(y, "y");
    if (rows < 0) throw daggrow::UsageError("rows must be >= 0");
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const int in_w = net->net.node(net->net.input_id()).width;
    const int out_w = net->net.node(net->net.output_id()).width;
    const daggrow::Matrix input = Eigen::Map<const RowMajor>(x, rows, in_w);
    Eigen::Map<RowMajor>(y, rows, out_w) =
        daggrow::outputs(net->net, daggrow::forward(net->net, input));
  });
}

// ---------------------------------------------------------------------------

dg_status dg_config_create(dg_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new dg_config{};
  });
}

void dg_config_free(dg_config* config) { delete config; }

dg_status dg_config_set(dg_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    config->config.set(key, value);
    config->explicit_values[key] = value;
  });
}

dg_status dg_config_get(const dg_config* config, const char* key, char** value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    const auto eff = config->config.effective();
    auto it = eff.find(key);
    if (it != eff.end()) {
      *value = dup_string(it->second);
      return;
    }
    auto ex = config->explicit_values.find(key);
    if (ex != config->explicit_values.end()) {
      *value = dup_string(ex->second);
      return;
    }
    throw daggrow::UsageError(std::string("configuration key '") + key + "' is not set");
  });
}

dg_status dg_config_keys(char** out) {
  return guarded([&] {
    require(out, "out");
    std::string text;
    for (const auto& k : daggrow::experiment_keys()) text += k + "\n";
    *out = dup_string(text);
  });
}

dg_status dg_config_effective_json(const dg_config* config, char** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    *out = dup_string(nlohmann::json(config->config.effective()).dump(2));
  });
}

// ---------------------------------------------------------------------------

dg_status dg_run_experiment(const dg_config* config, const dg_network* initial, dg_run** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    std::optional<daggrow::DagNetwork> start;
    if (initial != nullptr) start = initial->net;
    *out = new dg_run{daggrow::run_experiment(config->config, std::move(start))};
  });
}

void dg_run_free(dg_run* run) { delete run; }

dg_status dg_run_write(const dg_run* run, const char* prefix) {
  return guarded([&] {
    require(run, "run");
    require(prefix, "prefix");
    daggrow::write_metrics_csv(run->result.metrics, std::string(prefix) + ".csv");
    daggrow::write_summary_json(run->result.summary, std::string(prefix) + ".json");
  });
}

dg_status dg_run_summary_json(const dg_run* run, char** out) {
  return guarded([&] {
    require(run, "run");
    require(out, "out");
    *out = dup_string(daggrow::summary_to_json(run->result.summary));
  });
}

dg_status dg_run_metrics_csv(const dg_run* run, char** out) {
  return guarded([&] {
    require(run, "run");
    require(out, "out");
    *out = dup_string(daggrow::metrics_csv_text(run->result.metrics));
  });
}

dg_status dg_run_selected_sequence(const dg_run* run, char** out) {
  return guarded([&] {
    require(run, "run");
    require(out, "out");
    std::string text;
    for (const auto& s : daggrow::selected_sequence(run->result.metrics)) text += s + "\n";
    *out = dup_string(text);
  });
}

dg_status dg_run_final_params(const dg_run* run, int64_t* out) {
  return guarded([&] {
    require(run, "run");
    require(out, "out");
    *out = run->result.summary.final_params;
  });
}

dg_status dg_run_network(const dg_run* run, dg_network** out) {
  return guarded([&] {
    require(run, "run");
    require(out, "out");
    *out = new dg_network{run->result.net};
  });
}

// ---------------------------------------------------------------------------

dg_status dg_bottleneck_report_csv(const dg_network* net, const dg_config* config, char** out) {
  return guarded([&] {
    require(net, "net");
    require(config, "config");
    require(out, "out");
    const auto& cfg = config->config;
    const auto splits = daggrow::load_experiment_data(cfg);
    const auto report = daggrow::bottleneck_report(net->net, splits.train_opt, cfg.resolved_loss(),
                                                   cfg.growth.ridge, cfg.growth.psi_normalization,
                                                   nullptr, daggrow::kSplitTrainOpt);
    *out = dup_string(daggrow::bottleneck_csv(net->net, report));
  });
}

dg_status dg_report(const char* const* summary_paths, size_t count, char** out) {
  return guarded([&] {
    require(out, "out");
    if (count > 0) require(summary_paths, "summary_paths");
    std::vector<daggrow::RunSummary> runs;
    for (size_t i = 0; i < count; ++i) {
      require(summary_paths[i], "summary path");
      runs.push_back(daggrow::read_summary_json(summary_paths[i]));
    }
    *out = dup_string(daggrow::report_table(runs));
  });
}

dg_status dg_report_runs(const dg_run* const* runs, size_t count, char** out) {
  return guarded([&] {
    require(out, "out");
    if (count > 0) require(runs, "runs");
    std::vector<daggrow::RunSummary> summaries;
    for (size_t i = 0; i < count; ++i) {
      require(runs[i], "run");
      summaries.push_back(runs[i]->result.summary);
    }
    *out = dup_string(daggrow::report_table(summaries));
  });
}

}  // extern "C"
