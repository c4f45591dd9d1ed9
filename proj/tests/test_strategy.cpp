#include <doctest.h>

#include <cmath>
#include <set>

#include "dag_grow/data.hpp"
#include "dag_grow/error.hpp"
#include "dag_grow/experiment.hpp"
#include "dag_grow/strategy.hpp"

using namespace daggrow;

namespace {

DatasetSplits small_teacher_splits(std::uint64_t seed, Eigen::Index n = 240) {
  const DagNetwork teacher = make_teacher(seed);
  return split_dataset(gen_teacher_data(teacher, n, seed + 100), gen_teacher_data(teacher, 60, seed + 200),
                       seed);
}

GrowthConfig quick(StrategyKind s) {
  GrowthConfig c;
  c.strategy = s;
  c.neurons_per_step = 4;
  c.inter_train_epochs = 2;
  c.max_growth_steps = 3;
  return c;
}

}  // namespace

TEST_CASE("BIC values") {
  CHECK(bic(10, 100, 1.0) == doctest::Approx(10.0 * std::log(100.0)));
  CHECK(bic(10, 100, 1.0) == doctest::Approx(46.0517).epsilon(1e-6));
  const double expected = 833.0 * std::log(3000.0) - 2.0 * std::log(0.25);
  CHECK(bic(833, 3000, 0.25) == doctest::Approx(expected));
  CHECK(bic_n_log_mse(5, 50, 0.5) == doctest::Approx(5.0 * std::log(50.0) + 50.0 * std::log(0.5)));
  CHECK_THROWS_AS(bic(1, 10, 0.0), NumericError);
  CHECK_THROWS_AS(bic(1, 10, -1.0), NumericError);
  CHECK_THROWS_AS(bic(1, 0, 1.0), NumericError);
  // Same fit quality: fewer parameters win.
  CHECK(bic(100, 1000, 0.1) < bic(200, 1000, 0.1));
}

TEST_CASE("names parse back") {
  for (auto s : {StrategyKind::whole_search_space, StrategyKind::bottleneck_restricted,
                 StrategyKind::bic_restricted})
    CHECK(parse_strategy(to_string(s)) == s);
  CHECK(parse_bic_variant("n-log-mse") == BicVariant::n_log_mse);
  CHECK_THROWS_AS(parse_strategy("greedy"), UsageError);
}

TEST_CASE("configuration checks") {
  GrowthConfig c;
  CHECK_NOTHROW(c.check());
  c.activation = Activation::relu;
  CHECK_THROWS_AS(c.check(), UsageError);
  c = {};
  c.optimizer.momentum = 1.0;
  CHECK_THROWS_AS(c.check(), UsageError);
  c = {};
  c.neurons_per_step = 0;
  CHECK_THROWS_AS(c.check(), UsageError);
  c = {};
  c.jobs = 0;
  CHECK_THROWS_AS(c.check(), UsageError);
}

TEST_CASE("derive_seed separates streams") {
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(2, 2));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
  CHECK(derive_seed(1, 2, 3, 4) != derive_seed(1, 2, 3, 5));
}

TEST_CASE("one step from the empty network") {
  const auto splits = small_teacher_splits(3);
  const DagNetwork empty = DagNetwork::empty(20, 1);
  for (auto s : {StrategyKind::whole_search_space, StrategyKind::bottleneck_restricted,
                 StrategyKind::bic_restricted}) {
    FlopCounter flops;
    const auto out = growth_step(empty, splits, quick(s), 1, flops);
    CHECK_FALSE(out.saturated);
    CHECK(out.a_star == empty.output_id());
    CHECK(out.candidates.size() == 2);
    REQUIRE(out.selected);
    CHECK(validate(out.net).empty());
    CHECK(param_count(out.net) > 0);
    CHECK(out.candidates[*out.selected].est_loss_gr <= out.base_loss_gr);
    CHECK(out.candidate_flops > 0);
  }
}

TEST_CASE("selection is the argmin of the criterion") {
  const auto splits = small_teacher_splits(4);
  DagNetwork net = DagNetwork::empty(20, 1);
  for (auto s : {StrategyKind::whole_search_space, StrategyKind::bic_restricted}) {
    GrowthConfig cfg = quick(s);
    FlopCounter flops;
    DagNetwork cur = net;
    for (int step = 1; step <= 3; ++step) {
      const auto out = growth_step(cur, splits, cfg, step, flops);
      REQUIRE(out.selected);
      const std::int64_t n_gr = splits.train_gr.size();
      for (std::size_t i = 0; i < out.candidates.size(); ++i) {
        const auto& c = out.candidates[i];
        const double expected =
            s == StrategyKind::bic_restricted
                ? bic(param_count(cur) + c.param_delta, n_gr, std::max(c.est_loss_gr, kBicLossFloor))
                : c.est_loss_gr;
        CHECK(out.criteria[i] == doctest::Approx(expected));
        CHECK(out.criteria[*out.selected] <= out.criteria[i]);
        if (out.criteria[i] == out.criteria[*out.selected]) CHECK(*out.selected <= i);
      }
      cur = out.net;
    }
  }
}

TEST_CASE("restricted scope is never larger than the whole scope") {
  const auto splits = small_teacher_splits(5);
  const auto run = growth_loop(quick(StrategyKind::whole_search_space), splits);
  DagNetwork net = run.net;
  FlopCounter f1, f2;
  const auto w = growth_step(net, splits, quick(StrategyKind::whole_search_space), 9, f1);
  const auto r = growth_step(net, splits, quick(StrategyKind::bottleneck_restricted), 9, f2);
  CHECK(r.candidates.size() <= w.candidates.size());
  CHECK(r.candidate_flops <= w.candidate_flops);
}

TEST_CASE("caps saturate growth") {
  const auto splits = small_teacher_splits(6);
  GrowthConfig cfg = quick(StrategyKind::whole_search_space);
  cfg.max_nodes = 2;
  FlopCounter flops;
  const DagNetwork empty = DagNetwork::empty(20, 1);
  // Only the direct edge remains; once it exists nothing can be added.
  const auto first = growth_step(empty, splits, cfg, 1, flops);
  REQUIRE(first.candidates.size() == 1);
  CHECK(first.candidates[0].kind == ExpansionKind::direct_edge);
  const auto second = growth_step(first.net, splits, cfg, 2, flops);
  CHECK(second.saturated);
  CHECK(second.net == first.net);

  cfg.max_growth_steps = 4;
  const auto run = growth_loop(cfg, splits);
  const auto seq = selected_sequence(run.metrics);
  // The loop stops at the first saturated step.
  REQUIRE(seq.size() == 2);
  CHECK(seq[1] == "saturated");
  CHECK(param_count(run.net) == 21);
}

TEST_CASE("growth skips widening nodes that cannot be linearized") {
  const auto splits = small_teacher_splits(12);
  DagNetwork net = DagNetwork::empty(20, 1);
  const NodeId h = net.insert_node_before(net.output_id(), 3, Activation::relu);
  net.add_edge(net.input_id(), h, Matrix::Constant(3, 20, 0.1), Vector::Zero(3));
  net.add_edge(h, net.output_id(), Matrix::Constant(1, 3, 0.1), Vector::Zero(1));
  FlopCounter flops;
  const auto out = growth_step(net, splits, quick(StrategyKind::whole_search_space), 1, flops);
  REQUIRE(out.selected);
  for (const auto& c : out.candidates) CHECK(c.kind != ExpansionKind::widen_node);
}

TEST_CASE("zero steps only trains nothing and logs step 0") {
  const auto splits = small_teacher_splits(7);
  GrowthConfig cfg = quick(StrategyKind::bottleneck_restricted);
  cfg.max_growth_steps = 0;
  const auto run = growth_loop(cfg, splits);
  CHECK(param_count(run.net) == 0);
  CHECK(run.metrics.steps.empty());
  CHECK_FALSE(run.metrics.rows.empty());
  for (const auto& row : run.metrics.rows) CHECK(row.step == 0);
  CHECK(run.summary.final_params == 0);
  CHECK(run.summary.final_train_gr_loss == doctest::Approx(run.summary.zero_predictor_loss));
}

TEST_CASE("runs are deterministic and independent of the worker count") {
  const auto splits = small_teacher_splits(8);
  GrowthConfig cfg = quick(StrategyKind::whole_search_space);
  cfg.seed = 3;
  const auto a = growth_loop(cfg, splits);
  const auto b = growth_loop(cfg, splits);
  cfg.jobs = 3;
  const auto c = growth_loop(cfg, splits);
  CHECK(a.net == b.net);
  CHECK(a.net == c.net);
  CHECK(selected_sequence(a.metrics) == selected_sequence(c.metrics));
  CHECK(a.summary.flops_total == c.summary.flops_total);
  for (std::size_t i = 0; i < kFlopPhaseCount; ++i) {
    const auto p = static_cast<FlopPhase>(i);
    CHECK(a.flops.flops(p) == c.flops.flops(p));
    CHECK(a.flops.calls(p) == c.flops.calls(p));
  }
}

TEST_CASE("flop accounting") {
  const auto splits = small_teacher_splits(9);
  const auto run = growth_loop(quick(StrategyKind::bottleneck_restricted), splits);
  std::int64_t phases = 0;
  for (const auto& [name, v] : run.summary.flops_by_phase) phases += v;
  CHECK(phases == run.summary.flops_total);
  CHECK(run.flops.total() == run.summary.flops_total);
  std::int64_t cand = 0;
  for (const auto& s : run.metrics.steps) {
    CHECK(s.candidate_flops > 0);
    cand += s.candidate_flops;
  }
  CHECK(cand == run.summary.candidate_flops_total);
  CHECK(cand <= run.flops.flops(FlopPhase::candidate));
  CHECK(run.flops.calls(FlopPhase::training) > 0);
  CHECK(run.metrics.steps.size() == 3);

  // Cumulative FLOP column never decreases.
  for (std::size_t i = 1; i < run.metrics.rows.size(); ++i)
    CHECK(run.metrics.rows[i].flops_cum >= run.metrics.rows[i - 1].flops_cum);
}

TEST_CASE("parameter count grows with every applied step") {
  const auto splits = small_teacher_splits(10);
  const auto run = growth_loop(quick(StrategyKind::bottleneck_restricted), splits);
  std::int64_t prev = 0;
  for (const auto& s : run.metrics.steps) {
    CHECK(s.params > prev);
    prev = s.params;
  }
}

TEST_CASE("apply_dw_star keeps the line-search loss from rising") {
  const auto splits = small_teacher_splits(11);
  GrowthConfig cfg = quick(StrategyKind::bottleneck_restricted);
  cfg.apply_dw_star = true;
  FlopCounter flops;
  const auto run = growth_loop(quick(StrategyKind::bottleneck_restricted), splits);
  const auto out = growth_step(run.net, splits, cfg, 5, flops);
  cfg.apply_dw_star = false;
  const auto plain = growth_step(run.net, splits, cfg, 5, flops);
  auto ls_loss = [&](const DagNetwork& n) {
    return loss_value(outputs(n, forward(n, splits.train_ls.inputs)), splits.train_ls.targets, LossKind::mse);
  };
  CHECK(ls_loss(out.net) <= ls_loss(plain.net));
}

TEST_CASE("experiment configuration keys") {
  ExperimentConfig cfg;
  cfg.set("strategy", "bic");
  cfg.set("steps", "4");
  cfg.set("gamma_grid", "3,0.5");
  CHECK(cfg.growth.strategy == StrategyKind::bic_restricted);
  CHECK(cfg.growth.max_growth_steps == 4);
  CHECK(cfg.growth.gamma_grid.max_exponent == 3);
  CHECK(cfg.growth.gamma_grid.base == 0.5);
  CHECK_THROWS_AS(cfg.set("bogus", "1"), UsageError);
  CHECK_THROWS_AS(cfg.set("steps", "four"), UsageError);
  CHECK(cfg.effective().at("strategy") == "bic");
  CHECK(cfg.resolved_loss() == LossKind::mse);
  cfg.set("data", "mnist");
  CHECK(cfg.resolved_loss() == LossKind::softmax_cross_entropy);
  // Only the keys of the selected data source are echoed.
  const ExperimentConfig teacher;
  const std::set<std::string> other{"data_dir", "subset", "test_subset", "target_cols", "test_fraction"};
  for (const auto& k : experiment_keys())
    CHECK(teacher.effective().count(k) == (other.count(k) ? 0u : 1u));
  CHECK(cfg.effective().count("subset") == 1);
  CHECK(cfg.effective().count("n_train") == 0);
}
