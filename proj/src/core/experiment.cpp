#include "dag_grow/experiment.hpp"

#include <cstdlib>
#include <numeric>
#include <random>

#include "dag_grow/error.hpp"

namespace daggrow {

namespace {

std::int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long out = std::stoll(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw UsageError("'" + key + "' expects an integer, got '" + v + "'");
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw UsageError("'" + key + "' expects a number, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError("'" + key + "' expects true or false, got '" + v + "'");
}

int parse_small(const std::string& key, const std::string& v) {
  const auto x = parse_int(key, v);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
    throw UsageError("'" + key + "' is out of range");
  return static_cast<int>(x);
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

const std::vector<std::string>& experiment_keys() {
  static const std::vector<std::string> keys = {
      "strategy", "steps", "epochs", "neurons", "seed", "lr", "momentum", "batch_size",
      "gamma_grid", "ridge", "psi_normalize", "bic_variant", "apply_dw_star", "max_node_width",
      "max_nodes", "jobs", "activation", "loss", "data", "data_dir", "subset", "test_subset",
      "n_train", "n_test", "input_bound", "teacher_seed", "target_cols", "test_fraction"};
  return keys;
}

void ExperimentConfig::set(const std::string& key, const std::string& v) {
  GrowthConfig& g = growth;
  if (key == "strategy") g.strategy = parse_strategy(v);
  else if (key == "steps") g.max_growth_steps = parse_small(key, v);
  else if (key == "epochs") g.inter_train_epochs = parse_small(key, v);
  else if (key == "neurons") g.neurons_per_step = parse_small(key, v);
  else if (key == "seed") {
    const auto s = parse_int(key, v);
    if (s < 0) throw UsageError("seed must be >= 0");
    g.seed = static_cast<std::uint64_t>(s);
  } else if (key == "lr") g.optimizer.learning_rate = parse_double(key, v);
  else if (key == "momentum") g.optimizer.momentum = parse_double(key, v);
  else if (key == "batch_size") g.optimizer.batch_size = parse_small(key, v);
  else if (key == "gamma_grid") {
    const auto comma = v.find(',');
    if (comma == std::string::npos) throw UsageError("gamma_grid expects J,gamma0");
    g.gamma_grid.max_exponent = parse_small(key, v.substr(0, comma));
    g.gamma_grid.base = parse_double(key, v.substr(comma + 1));
  } else if (key == "ridge") g.ridge = parse_double(key, v);
  else if (key == "psi_normalize") g.psi_normalization = parse_psi_normalization(v);
  else if (key == "bic_variant") g.bic_variant = parse_bic_variant(v);
  else if (key == "apply_dw_star") g.apply_dw_star = parse_bool(key, v);
  else if (key == "max_node_width") g.max_node_width = parse_small(key, v);
  else if (key == "max_nodes") g.max_nodes = parse_small(key, v);
  else if (key == "jobs") g.jobs = parse_small(key, v);
  else if (key == "activation") g.activation = parse_activation(v);
  else if (key == "loss") {
    g.loss = parse_loss(v);
    loss_set = true;
  } else if (key == "data") {
    if (v != "teacher" && v != "mnist" && v.rfind("csv:", 0) != 0)
      throw UsageError("data must be teacher, mnist or csv:PATH, got '" + v + "'");
    data.source = v;
  } else if (key == "data_dir") data.data_dir = v;
  else if (key == "subset") data.subset = parse_int(key, v);
  else if (key == "test_subset") data.test_subset = parse_int(key, v);
  else if (key == "n_train") data.n_train = parse_int(key, v);
  else if (key == "n_test") data.n_test = parse_int(key, v);
  else if (key == "input_bound") data.input_bound = parse_double(key, v);
  else if (key == "teacher_seed") data.teacher_seed = parse_int(key, v);
  else if (key == "target_cols") data.target_cols = parse_small(key, v);
  else if (key == "test_fraction") data.test_fraction = parse_double(key, v);
  else throw UsageError("unknown configuration key '" + key + "'");
}

LossKind ExperimentConfig::resolved_loss() const {
  if (loss_set) return growth.loss;
  return data.source == "mnist" ? LossKind::softmax_cross_entropy : LossKind::mse;
}

std::map<std::string, std::string> ExperimentConfig::effective() const {
  GrowthConfig g = growth;
  g.loss = resolved_loss();
  auto out = describe(g);
  out["data"] = data.source;
  if (data.source == "teacher") {
    out["n_train"] = std::to_string(data.n_train);
    out["n_test"] = std::to_string(data.n_test);
    out["input_bound"] = num(data.input_bound);
    out["teacher_seed"] = std::to_string(data.teacher_seed);
  } else if (data.source == "mnist") {
    out["data_dir"] = resolve_data_dir(data.data_dir);
    out["subset"] = std::to_string(data.subset);
    out["test_subset"] = std::to_string(data.test_subset);
  } else {
    out["target_cols"] = std::to_string(data.target_cols);
    out["test_fraction"] = num(data.test_fraction);
  }
  return out;
}

std::string resolve_data_dir(const std::string& explicit_dir) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv("DAG_GROW_DATA"); env != nullptr && *env != '\0') return env;
  return "data/mnist";
}

DatasetSplits load_experiment_data(const ExperimentConfig& config) {
  const DataConfig& d = config.data;
  const std::uint64_t seed = config.growth.seed;
  const std::uint64_t split_seed = derive_seed(seed, 10);
  if (d.source == "teacher") {
    if (d.n_train < 3) throw UsageError("n_train must be >= 3");
    const std::uint64_t tseed =
        d.teacher_seed >= 0 ? static_cast<std::uint64_t>(d.teacher_seed) : derive_seed(seed, 11);
    const DagNetwork teacher = make_teacher(tseed);
    LabeledData train = gen_teacher_data(teacher, d.n_train, derive_seed(seed, 12), d.input_bound);
    LabeledData test;
    if (d.n_test > 0) test = gen_teacher_data(teacher, d.n_test, derive_seed(seed, 13), d.input_bound);
    return split_dataset(train, std::move(test), split_seed);
  }
  if (d.source == "mnist") {
    if (d.subset < 0 || d.test_subset < 0) throw UsageError("subset sizes must be >= 0");
    const std::string dir = resolve_data_dir(d.data_dir);
    LabeledData train = load_mnist(dir, true, d.subset);
    LabeledData test = load_mnist(dir, false, d.test_subset);
    return split_dataset(train, std::move(test), split_seed);
  }
  if (!(d.test_fraction >= 0.0 && d.test_fraction < 1.0))
    throw UsageError("test_fraction must be in [0, 1)");
  const LabeledData all = load_csv(d.source.substr(4), d.target_cols);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(all.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(derive_seed(seed, 14));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(d.test_fraction * static_cast<double>(all.size()));
  const std::span<const Eigen::Index> idx(order);
  return split_dataset(select_rows(all, idx.subspan(n_test)), select_rows(all, idx.first(n_test)),
                       split_seed);
}

RunResult run_experiment(const ExperimentConfig& config, std::optional<DagNetwork> initial) {
  ExperimentConfig c = config;
  c.growth.loss = c.resolved_loss();
  c.growth.check();
  const DatasetSplits splits = load_experiment_data(c);
  return growth_loop(c.growth, splits, std::move(initial), c.effective());
}

}  // namespace daggrow
