// dag-grow: grow DAG networks from scratch and compare growth strategies.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dag_grow/dag_grow.h"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int exit_code(dg_status s) {
  switch (s) {
    case DG_OK: return 0;
    case DG_ERR_USAGE: return kExitUsage;
    case DG_ERR_DATA:
    case DG_ERR_IO: return kExitData;
    case DG_ERR_NUMERIC: return kExitNumeric;
    default: return 1;
  }
}

struct Failure {
  int code;
};

void check(dg_status s, const std::string& context) {
  if (s == DG_OK) return;
  std::cerr << "dag-grow: " << context << ": " << dg_last_error() << "\n";
  throw Failure{exit_code(s)};
}

std::string take(char* s) {
  std::string out = s != nullptr ? s : "";
  dg_string_free(s);
  return out;
}

struct ConfigDeleter {
  void operator()(dg_config* c) const { dg_config_free(c); }
};
struct RunDeleter {
  void operator()(dg_run* r) const { dg_run_free(r); }
};
struct NetDeleter {
  void operator()(dg_network* n) const { dg_network_free(n); }
};
using ConfigPtr = std::unique_ptr<dg_config, ConfigDeleter>;
using RunPtr = std::unique_ptr<dg_run, RunDeleter>;
using NetPtr = std::unique_ptr<dg_network, NetDeleter>;

// Options that map one to one onto configuration keys.
struct KeyOption {
  std::string key;
  std::string value;
  CLI::Option* option = nullptr;
};

struct ExperimentOptions {
  std::vector<std::unique_ptr<KeyOption>> keys;
  int seeds = 1;
  bool all_strategies = false;
  bool apply_dw_star = false;
  CLI::Option* dw_flag = nullptr;
  std::string metrics_out;
  std::string save_model;
  std::string load_model;
  std::string config_file;

  void add(CLI::App* app, const std::string& names, const std::string& key, const std::string& help) {
    auto k = std::make_unique<KeyOption>();
    k->key = key;
    k->option = app->add_option(names, k->value, help);
    keys.push_back(std::move(k));
  }
};

void add_growth_options(CLI::App* app, ExperimentOptions& o, bool with_data) {
  app->add_option("--config", o.config_file,
                  "flat key = value file (keys as flags or config keys); flags take precedence")
      ->check(CLI::ExistingFile);
  o.add(app, "--strategy", "strategy", "whole | restricted | bic (default restricted)");
  o.add(app, "--steps", "steps", "growth steps (default 15)");
  o.add(app, "--epochs", "epochs", "inter-training epochs per step (default 100)");
  o.add(app, "--neurons,--neurons-per-step", "neurons", "neurons added per move (default 10)");
  o.add(app, "--seed", "seed", "run seed (default 0)");
  o.add(app, "--lr", "lr", "SGD learning rate (default 0.01)");
  o.add(app, "--momentum", "momentum", "SGD momentum (default 0)");
  o.add(app, "--batch-size", "batch_size", "SGD mini-batch size (default 32)");
  o.add(app, "--gamma-grid", "gamma_grid", "amplitude grid J,gamma0 (default 8,0.0625)");
  o.add(app, "--ridge", "ridge", "relative ridge of the covariance solves (default 1e-6)");
  o.add(app, "--psi-normalize", "psi_normalize", "none | width");
  o.add(app, "--bic-variant", "bic_variant", "log-loss | n-log-mse");
  o.add(app, "--max-node-width", "max_node_width", "saturation cap on node width (0: off)");
  o.add(app, "--max-nodes", "max_nodes", "saturation cap on node count (0: off)");
  o.add(app, "--jobs", "jobs", "threads for candidate evaluation");
  o.add(app, "--activation", "activation", "activation of new neurons (default selu)");
  o.add(app, "--loss", "loss", "mse | cross-entropy");
  if (with_data) o.add(app, "--data", "data", "teacher | mnist | csv:PATH");
  o.add(app, "--data-dir", "data_dir", "MNIST directory (fallback: $DAG_GROW_DATA)");
  o.add(app, "--subset", "subset", "MNIST training images to keep (0: all)");
  o.add(app, "--test-subset", "test_subset", "MNIST test images to keep (0: all)");
  o.add(app, "--n-train", "n_train", "teacher training samples (default 3000)");
  o.add(app, "--n-test", "n_test", "teacher test samples (default 1000)");
  o.add(app, "--input-bound", "input_bound", "teacher inputs uniform on [-b, b]");
  o.add(app, "--teacher-seed", "teacher_seed", "teacher seed (default: derived from --seed)");
  o.add(app, "--target-cols", "target_cols", "CSV target columns (default 1)");
  o.add(app, "--test-fraction", "test_fraction", "CSV rows held out for testing");
  o.dw_flag = app->add_flag("--apply-dw-star", o.apply_dw_star,
                            "also apply the projected best update of existing weights");
  app->add_option("--seeds", o.seeds, "number of consecutive seeds to run")
      ->check(CLI::PositiveNumber);
  app->add_flag("--all-strategies", o.all_strategies, "run whole, restricted and bic");
  app->add_option("--metrics-out", o.metrics_out,
                  "output prefix: PREFIX.csv and PREFIX.json per run");
  app->add_option("--save-model", o.save_model, "write the final network (single run only)");
  app->add_option("--load-model", o.load_model, "start growing from this network");
}

std::string normalize_key(std::string k) {
  for (char& c : k)
    if (c == '-') c = '_';
  return k;
}

// Keys from the config file, skipping those given on the command line.
void apply_config_file(const ExperimentOptions& o, dg_config* config) {
  if (o.config_file.empty()) return;
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_file(o.config_file);
  } catch (const CLI::Error& e) {
    std::cerr << "dag-grow: --config: " << e.what() << "\n";
    throw Failure{kExitUsage};
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    const std::string key = normalize_key(item.name);
    if (item.inputs.size() != 1) {
      std::cerr << "dag-grow: --config: '" << item.name << "' needs exactly one value\n";
      throw Failure{kExitUsage};
    }
    bool on_command_line = false;
    for (const auto& k : o.keys)
      if (k->key == key && k->option->count() > 0) on_command_line = true;
    if (key == "apply_dw_star" && o.dw_flag->count() > 0) on_command_line = true;
    if (on_command_line) continue;
    check(dg_config_set(config, key.c_str(), item.inputs.front().c_str()), o.config_file);
  }
}

ConfigPtr build_config(const ExperimentOptions& o, const std::map<std::string, std::string>& fixed) {
  dg_config* raw = nullptr;
  check(dg_config_create(&raw), "config");
  ConfigPtr config(raw);
  apply_config_file(o, config.get());
  for (const auto& [k, v] : fixed) check(dg_config_set(config.get(), k.c_str(), v.c_str()), k);
  for (const auto& k : o.keys) {
    if (k->option->count() == 0) continue;
    check(dg_config_set(config.get(), k->key.c_str(), k->value.c_str()), "--" + k->key);
  }
  if (o.apply_dw_star) check(dg_config_set(config.get(), "apply_dw_star", "true"), "--apply-dw-star");
  return config;
}

std::string get(const dg_config* c, const char* key) {
  char* out = nullptr;
  check(dg_config_get(c, key, &out), key);
  return take(out);
}

std::string run_prefix(const std::string& base, bool multi, const std::string& strategy,
                       const std::string& seed) {
  if (!multi) return base;
  return base + "-" + strategy + "-s" + seed;
}

int run_experiments(const ExperimentOptions& o, const std::map<std::string, std::string>& fixed) {
  std::vector<std::string> strategies;
  if (o.all_strategies) strategies = {"whole", "restricted", "bic"};

  ConfigPtr base = build_config(o, fixed);
  if (strategies.empty()) strategies.push_back(get(base.get(), "strategy"));
  const unsigned long long first_seed = std::stoull(get(base.get(), "seed"));
  const bool multi = strategies.size() > 1 || o.seeds > 1;
  if (multi && !o.save_model.empty()) {
    std::cerr << "dag-grow: --save-model needs a single run (drop --seeds/--all-strategies)\n";
    return kExitUsage;
  }

  NetPtr initial;
  if (!o.load_model.empty()) {
    dg_network* raw = nullptr;
    check(dg_network_load(o.load_model.c_str(), &raw), "--load-model");
    initial.reset(raw);
  }

  std::vector<RunPtr> runs;
  for (int s = 0; s < o.seeds; ++s) {
    const std::string seed = std::to_string(first_seed + static_cast<unsigned long long>(s));
    for (const auto& strategy : strategies) {
      ConfigPtr config = build_config(o, fixed);
      check(dg_config_set(config.get(), "strategy", strategy.c_str()), "--strategy");
      check(dg_config_set(config.get(), "seed", seed.c_str()), "--seed");

      dg_run* raw = nullptr;
      check(dg_run_experiment(config.get(), initial.get(), &raw), strategy + " seed " + seed);
      RunPtr run(raw);

      int64_t params = 0;
      check(dg_run_final_params(run.get(), &params), "run");
      char* seq = nullptr;
      check(dg_run_selected_sequence(run.get(), &seq), "run");
      std::cout << "[" << strategy << " seed " << seed << "] final params " << params << "\n";
      std::cout << take(seq);

      if (!o.metrics_out.empty()) {
        const std::string prefix = run_prefix(o.metrics_out, multi, strategy, seed);
        const auto dir = std::filesystem::path(prefix).parent_path();
        if (!dir.empty()) std::filesystem::create_directories(dir);
        check(dg_run_write(run.get(), prefix.c_str()), "--metrics-out");
        std::cout << "wrote " << prefix << ".csv and " << prefix << ".json\n";
      }
      if (!o.save_model.empty()) {
        dg_network* net = nullptr;
        check(dg_run_network(run.get(), &net), "run");
        NetPtr owned(net);
        check(dg_network_save(owned.get(), o.save_model.c_str()), "--save-model");
      }
      runs.push_back(std::move(run));
    }
  }

  std::vector<const dg_run*> views;
  for (const auto& r : runs) views.push_back(r.get());
  char* table = nullptr;
  check(dg_report_runs(views.data(), views.size(), &table), "report");
  const std::string text = take(table);
  std::cout << "\n" << text;
  if (multi && !o.metrics_out.empty()) {
    const std::string path = o.metrics_out + "-comparison.txt";
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (f == nullptr) {
      std::cerr << "dag-grow: cannot write " << path << "\n";
      return kExitData;
    }
    std::fputs(text.c_str(), f);
    std::fclose(f);
    std::cout << "wrote " << path << "\n";
  }
  return 0;
}

int bottleneck_report(const ExperimentOptions& o, const std::string& out_path) {
  ConfigPtr config = build_config(o, {});
  NetPtr net;
  dg_network* raw = nullptr;
  if (!o.load_model.empty()) {
    check(dg_network_load(o.load_model.c_str(), &raw), "--load-model");
    net.reset(raw);
  } else {
    // Empty network sized from the data source.
    const std::string data = get(config.get(), "data");
    int in_w = 20, out_w = 1;
    if (data == "mnist") {
      in_w = 784;
      out_w = 10;
    } else if (data != "teacher") {
      std::cerr << "dag-grow: bottleneck-report on CSV data needs --load-model\n";
      return kExitUsage;
    }
    check(dg_network_create_empty(in_w, out_w, &raw), "network");
    net.reset(raw);
  }
  char* csv = nullptr;
  check(dg_bottleneck_report_csv(net.get(), config.get(), &csv), "bottleneck-report");
  const std::string text = take(csv);
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::FILE* f = std::fopen(out_path.c_str(), "w");
    if (f == nullptr) {
      std::cerr << "dag-grow: cannot write " << out_path << "\n";
      return kExitData;
    }
    std::fputs(text.c_str(), f);
    std::fclose(f);
  }
  return 0;
}

int report(const std::vector<std::string>& paths) {
  std::vector<std::string> resolved;
  for (const auto& p : paths) {
    // Accept either the summary or its metrics CSV.
    std::filesystem::path path(p);
    if (path.extension() == ".csv") path.replace_extension(".json");
    resolved.push_back(path.string());
  }
  std::vector<const char*> c_paths;
  for (const auto& p : resolved) c_paths.push_back(p.c_str());
  char* table = nullptr;
  check(dg_report(c_paths.data(), c_paths.size(), &table), "report");
  std::cout << take(table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grow DAG neural networks from an empty graph, guided by expressivity bottlenecks."};
  app.require_subcommand(1);

  ExperimentOptions run_opts, ts_opts, mnist_opts, bn_opts;
  auto* run = app.add_subcommand("run", "grow on --data (teacher, mnist or csv:PATH)");
  add_growth_options(run, run_opts, true);
  auto* ts = app.add_subcommand("teacher-student", "grow a student on teacher-labelled data");
  add_growth_options(ts, ts_opts, false);
  auto* mnist = app.add_subcommand("mnist", "grow a classifier on MNIST IDX files");
  add_growth_options(mnist, mnist_opts, false);

  auto* bn = app.add_subcommand("bottleneck-report", "per-node expressivity bottleneck as CSV");
  add_growth_options(bn, bn_opts, true);
  std::string bn_out;
  bn->add_option("--out", bn_out, "write the CSV here instead of stdout");

  auto* rep = app.add_subcommand("report", "compare finished runs");
  std::vector<std::string> rep_paths;
  rep->add_option("summaries", rep_paths, "run summaries (PREFIX.json or PREFIX.csv)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*run) return run_experiments(run_opts, {});
    if (*ts) return run_experiments(ts_opts, {{"data", "teacher"}});
    if (*mnist) return run_experiments(mnist_opts, {{"data", "mnist"}});
    if (*bn) return bottleneck_report(bn_opts, bn_out);
    if (*rep) return report(rep_paths);
  } catch (const Failure& f) {
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "dag-grow: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
