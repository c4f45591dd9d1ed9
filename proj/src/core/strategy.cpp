#include "dag_grow/strategy.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <random>
#include <thread>

#include "dag_grow/error.hpp"

namespace daggrow {

std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::whole_search_space: return "whole";
    case StrategyKind::bottleneck_restricted: return "restricted";
    case StrategyKind::bic_restricted: return "bic";
  }
  return "?";
}

StrategyKind parse_strategy(std::string_view name) {
  if (name == "whole") return StrategyKind::whole_search_space;
  if (name == "restricted") return StrategyKind::bottleneck_restricted;
  if (name == "bic") return StrategyKind::bic_restricted;
  throw UsageError("unknown strategy '" + std::string(name) + "' (expected whole, restricted or bic)");
}

std::string_view to_string(BicVariant v) { return v == BicVariant::log_loss ? "log-loss" : "n-log-mse"; }

BicVariant parse_bic_variant(std::string_view name) {
  if (name == "log-loss") return BicVariant::log_loss;
  if (name == "n-log-mse") return BicVariant::n_log_mse;
  throw UsageError("unknown BIC variant '" + std::string(name) + "' (expected log-loss or n-log-mse)");
}

void GrowthConfig::check() const {
  if (neurons_per_step < 1) throw UsageError("neurons per step must be >= 1");
  if (inter_train_epochs < 0) throw UsageError("epochs must be >= 0");
  if (max_growth_steps < 0) throw UsageError("steps must be >= 0");
  if (optimizer.batch_size < 1) throw UsageError("batch size must be >= 1");
  if (!(optimizer.learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (optimizer.momentum < 0.0 || optimizer.momentum >= 1.0)
    throw UsageError("momentum must be in [0, 1)");
  if (gamma_grid.max_exponent < 0 || gamma_grid.max_exponent > 60)
    throw UsageError("gamma grid exponent must be in [0, 60]");
  if (!(gamma_grid.base > 0.0)) throw UsageError("gamma grid base must be positive");
  if (!(ridge >= 0.0)) throw UsageError("ridge must be >= 0");
  if (max_node_width < 0 || max_nodes < 0) throw UsageError("saturation caps must be >= 0");
  if (jobs < 1) throw UsageError("jobs must be >= 1");
  if (slope_at_zero(activation) == 0.0)
    throw UsageError("unsupported activation '" + std::string(to_string(activation)) +
                     "': its derivative at 0 is zero");
}

double bic(std::int64_t k, std::int64_t n, double loss) {
  if (n < 1) throw NumericError("BIC needs n >= 1");
  if (!(loss > 0.0)) throw NumericError("BIC is undefined for loss <= 0");
  return static_cast<double>(k) * std::log(static_cast<double>(n)) - 2.0 * std::log(loss);
}

double bic_n_log_mse(std::int64_t k, std::int64_t n, double mse) {
  if (n < 1) throw NumericError("BIC needs n >= 1");
  if (!(mse > 0.0)) throw NumericError("BIC is undefined for mse <= 0");
  const double dn = static_cast<double>(n);
  return static_cast<double>(k) * std::log(dn) + dn * std::log(mse);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(c)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (std::uint64_t{out[0]} << 32) | out[1];
}

namespace {

// Sub-stream labels for derive_seed.
constexpr std::uint64_t kStreamFit = 1;
constexpr std::uint64_t kStreamTrain = 2;

// Caps, and widening of nodes whose activation cannot be linearized at 0.
bool blocked(const DagNetwork& net, const ExpansionCandidate& c, const GrowthConfig& cfg) {
  if (c.kind == ExpansionKind::widen_node && slope_at_zero(net.node(c.src).activation) == 0.0)
    return true;
  if (c.kind == ExpansionKind::new_node) {
    if (cfg.max_nodes > 0 && static_cast<int>(net.nodes().size()) >= cfg.max_nodes) return true;
    if (cfg.max_node_width > 0 && c.neurons > cfg.max_node_width) return true;
  }
  if (c.kind == ExpansionKind::widen_node && cfg.max_node_width > 0 &&
      net.node(c.src).width + c.neurons > cfg.max_node_width)
    return true;
  return false;
}

double criterion(const GrowthConfig& cfg, std::int64_t base_params, std::int64_t n_gr,
                 const ExpansionCandidate& c) {
  if (cfg.strategy != StrategyKind::bic_restricted) return c.est_loss_gr;
  const double loss = std::max(c.est_loss_gr, kBicLossFloor);
  const std::int64_t k = base_params + c.param_delta;
  return cfg.bic_variant == BicVariant::log_loss ? bic(k, n_gr, loss) : bic_n_log_mse(k, n_gr, loss);
}

// Adds eta * dW* of every in-edge of `node` (zero-padded to widened shapes).
void add_dw_star(DagNetwork& net, const NodeProjection& proj, double eta) {
  for (const auto& u : proj.best_in_updates) {
    auto& e = net.edge_at(net.edge_index(u.edge));
    e.weight.topLeftCorner(u.weight.rows(), u.weight.cols()) += eta * u.weight;
    e.bias.head(u.bias.size()) += eta * u.bias;
  }
}

}  // namespace

StepOutcome growth_step(const DagNetwork& net, const DatasetSplits& splits,
                        const GrowthConfig& config, int step, FlopCounter& flops) {
  config.check();
  if (splits.train_opt.empty() || splits.train_ls.empty() || splits.train_gr.empty())
    throw DataError("growth needs non-empty train-opt, train-ls and train-gr splits");

  StepOutcome out;
  out.net = net;
  const BottleneckReport report = bottleneck_report(net, splits.train_opt, config.loss, config.ridge,
                                                    config.psi_normalization, &flops, kSplitTrainOpt);
  out.a_star = report.argmax;
  out.psi_max = report.at(report.argmax).psi;

  const Scope scope = config.strategy == StrategyKind::whole_search_space
                          ? Scope::whole()
                          : Scope::restricted(report.argmax);
  for (auto& c : enumerate_candidates(net, scope, config.neurons_per_step, config.activation))
    if (!blocked(net, c, config)) out.candidates.push_back(std::move(c));
  if (out.candidates.empty()) {
    out.saturated = true;
    return out;
  }

  const std::int64_t before = flops.flops(FlopPhase::candidate);
  const ActivationCache ls_cache = forward(net, splits.train_ls.inputs);
  const ActivationCache gr_cache = forward(net, splits.train_gr.inputs);
  flops.book(FlopPhase::candidate, flops_forward(net, splits.train_ls.size()) +
                                       flops_forward(net, splits.train_gr.size()));
  const std::size_t out_idx = net.node_index(net.output_id());
  out.base_loss_ls = loss_value(ls_cache.post(out_idx), splits.train_ls.targets, config.loss);
  out.base_loss_gr = loss_value(gr_cache.post(out_idx), splits.train_gr.targets, config.loss);

  SourceCache sources(net, report.cache, config.ridge);
  for (const auto& c : out.candidates) sources.get(candidate_sources(net, c), &flops);

  const std::size_t count = out.candidates.size();
  std::vector<FlopCounter> local(count);
  std::vector<std::exception_ptr> errors(count);
  auto evaluate = [&](std::size_t i) {
    try {
      ExpansionCandidate& c = out.candidates[i];
      FlopCounter& f = local[i];
      fit_candidate(c, net, report, sources.at(candidate_sources(net, c)),
                    derive_seed(config.seed, kStreamFit, static_cast<std::uint64_t>(step), c.index),
                    &f);
      const auto ls = line_search_gamma(net, c, ls_cache, splits.train_ls.targets, config.loss,
                                        config.gamma_grid, &f);
      c.gamma = ls.gamma;
      c.loss_ls = ls.loss;
      c.est_loss_gr =
          estimate_candidate(net, c, c.gamma, gr_cache, splits.train_gr.targets, config.loss, &f);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const int workers = std::min<int>(config.jobs, static_cast<int>(count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) evaluate(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) evaluate(i);
      });
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    flops.merge(local[i]);
  }
  out.candidate_flops = flops.flops(FlopPhase::candidate) - before;

  const std::int64_t base_params = param_count(net);
  const std::int64_t n_gr = splits.train_gr.size();
  for (std::size_t i = 0; i < count; ++i) {
    const double value = criterion(config, base_params, n_gr, out.candidates[i]);
    out.criteria.push_back(value);
    if (!std::isfinite(value)) continue;
    if (!out.selected || value < out.criteria[*out.selected]) out.selected = i;
  }
  if (!out.selected) throw NumericError("no candidate produced a finite selection criterion");

  const ExpansionCandidate& best = out.candidates[*out.selected];
  out.net = apply_expansion(net, best, best.gamma);

  if (config.apply_dw_star) {
    // Grid search of the step size along dW* for every target of the move.
    const auto targets = candidate_targets(net, best);
    double best_loss = 0.0;
    for (double eta : config.gamma_grid.values()) {
      DagNetwork trial = out.net;
      for (NodeId t : targets) add_dw_star(trial, report.at(t), eta);
      const double value = loss_value(outputs(trial, forward(trial, splits.train_ls.inputs)),
                                      splits.train_ls.targets, config.loss);
      flops.book(FlopPhase::candidate, flops_forward(trial, splits.train_ls.size()));
      if (eta == 0.0 || (std::isfinite(value) && value < best_loss)) {
        best_loss = value;
        out.dw_star_eta = eta;
      }
    }
    for (NodeId t : targets) add_dw_star(out.net, report.at(t), out.dw_star_eta);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> describe(const GrowthConfig& c) {
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  return {
      {"strategy", std::string(to_string(c.strategy))},
      {"neurons", std::to_string(c.neurons_per_step)},
      {"epochs", std::to_string(c.inter_train_epochs)},
      {"steps", std::to_string(c.max_growth_steps)},
      {"lr", num(c.optimizer.learning_rate)},
      {"momentum", num(c.optimizer.momentum)},
      {"batch_size", std::to_string(c.optimizer.batch_size)},
      {"gamma_grid", std::to_string(c.gamma_grid.max_exponent) + "," + num(c.gamma_grid.base)},
      {"ridge", num(c.ridge)},
      {"seed", std::to_string(c.seed)},
      {"activation", std::string(to_string(c.activation))},
      {"loss", std::string(to_string(c.loss))},
      {"psi_normalize", std::string(to_string(c.psi_normalization))},
      {"bic_variant", std::string(to_string(c.bic_variant))},
      {"apply_dw_star", c.apply_dw_star ? "true" : "false"},
      {"max_node_width", std::to_string(c.max_node_width)},
      {"max_nodes", std::to_string(c.max_nodes)},
      {"jobs", std::to_string(c.jobs)},
  };
}

namespace {

int hidden_count(const DagNetwork& net) {
  int n = 0;
  for (const auto& node : net.nodes())
    if (net.is_hidden(node.id)) ++n;
  return n;
}

}  // namespace

RunResult growth_loop(const GrowthConfig& config, const DatasetSplits& splits,
                      std::optional<DagNetwork> initial,
                      const std::map<std::string, std::string>& extra_config) {
  config.check();
  if (splits.train_opt.empty()) throw DataError("empty training data");
  const auto t0 = std::chrono::steady_clock::now();
  const int in_w = static_cast<int>(splits.train_opt.inputs.cols());
  const int out_w = static_cast<int>(splits.train_opt.targets.cols());

  RunResult run{initial ? std::move(*initial) : DagNetwork::empty(in_w, out_w), {}, {}, {}};
  if (run.net.node(run.net.input_id()).width != in_w ||
      run.net.node(run.net.output_id()).width != out_w)
    throw DataError("the initial network does not match the data dimensions");
  const LabeledData inter = splits.inter_train();

  auto wall = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  const std::pair<const char*, const LabeledData*> split_list[] = {
      {kSplitTrainOpt, &splits.train_opt}, {kSplitTrainLs, &splits.train_ls},
      {kSplitTrainGr, &splits.train_gr},   {kSplitInterTrain, &inter},
      {kSplitTest, &splits.test}};
  auto log_splits = [&](int step, int epoch, std::int64_t candidates) {
    const std::int64_t params = param_count(run.net);
    for (const auto& [name, data] : split_list) {
      if (data->empty()) continue;
      const Matrix f = outputs(run.net, forward(run.net, data->inputs));
      run.flops.book(FlopPhase::evaluation, flops_forward(run.net, data->size()));
      run.metrics.rows.push_back({step, epoch, name, loss_value(f, data->targets, config.loss),
                                  accuracy(f, data->targets, config.loss), params, candidates,
                                  run.flops.total(), wall()});
    }
  };

  log_splits(0, 0, 0);
  for (int step = 1; step <= config.max_growth_steps; ++step) {
    StepRecord rec;
    rec.step = step;
    rec.hidden_nodes_before = hidden_count(run.net);
    StepOutcome o = growth_step(run.net, splits, config, step, run.flops);
    rec.saturated = o.saturated;
    rec.a_star = to_int(o.a_star);
    rec.psi_max = o.psi_max;
    rec.candidates = static_cast<std::int64_t>(o.candidates.size());
    rec.candidate_flops = o.candidate_flops;
    if (o.saturated) {
      rec.flops_cum = run.flops.total();
      rec.params = param_count(run.net);
      run.metrics.steps.push_back(rec);
      break;
    }
    const ExpansionCandidate& c = o.candidates[*o.selected];
    rec.selected = {std::string(to_string(c.kind)), to_int(c.src), to_int(c.dst), c.neurons,
                    c.gamma, c.est_loss_gr, o.criteria[*o.selected], c.param_delta};
    run.net = std::move(o.net);
    log_splits(step, 0, rec.candidates);

    if (config.inter_train_epochs > 0) {
      const auto stats = train_epochs(run.net, inter, config.loss, config.optimizer,
                                      config.inter_train_epochs,
                                      derive_seed(config.seed, kStreamTrain,
                                                  static_cast<std::uint64_t>(step)),
                                      &run.flops);
      const std::int64_t params = param_count(run.net);
      for (const auto& s : stats)
        run.metrics.rows.push_back({step, s.epoch, kSplitEpoch, s.loss, s.accuracy, params,
                                    rec.candidates, run.flops.total(), wall()});
      log_splits(step, config.inter_train_epochs, rec.candidates);
    }
    rec.flops_cum = run.flops.total();
    rec.params = param_count(run.net);
    run.metrics.steps.push_back(rec);
  }

  RunSummary& s = run.summary;
  s.config = describe(config);
  for (const auto& [k, v] : extra_config) s.config[k] = v;
  s.loss_kind = std::string(to_string(config.loss));
  s.final_params = param_count(run.net);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  s.final_test_loss = s.final_test_accuracy = nan;
  if (!splits.test.empty()) {
    const Matrix f = outputs(run.net, forward(run.net, splits.test.inputs));
    s.final_test_loss = loss_value(f, splits.test.targets, config.loss);
    s.final_test_accuracy = accuracy(f, splits.test.targets, config.loss);
  }
  s.final_test_metric =
      config.loss == LossKind::mse ? s.final_test_loss : s.final_test_accuracy;
  s.final_train_gr_loss = loss_value(outputs(run.net, forward(run.net, splits.train_gr.inputs)),
                                     splits.train_gr.targets, config.loss);
  s.zero_predictor_loss =
      loss_value(Matrix::Zero(splits.train_gr.size(), out_w), splits.train_gr.targets, config.loss);
  s.flops_total = run.flops.total();
  s.candidate_flops_total = run.flops.flops(FlopPhase::candidate);
  for (std::size_t i = 0; i < kFlopPhaseCount; ++i) {
    const auto phase = static_cast<FlopPhase>(i);
    s.flops_by_phase[std::string(to_string(phase))] = run.flops.flops(phase);
  }
  s.steps = run.metrics.steps;
  return run;
}

std::vector<std::string> selected_sequence(const RunMetrics& metrics) {
  std::vector<std::string> out;
  for (const auto& st : metrics.steps) {
    if (st.saturated) {
      out.push_back("saturated");
      continue;
    }
    const auto& s = st.selected;
    out.push_back(s.kind + "(" + std::to_string(s.src) + "->" + std::to_string(s.dst) + ",k=" +
                  std::to_string(s.neurons) + ")");
  }
  return out;
}

}  // namespace daggrow
