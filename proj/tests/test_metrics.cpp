#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dag_grow/error.hpp"
#include "dag_grow/metrics.hpp"
#include "support.hpp"

using namespace daggrow;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dag_grow_metrics_" + name);
  fs::create_directories(dir);
  return dir;
}

RunSummary summary(const std::string& strategy, int seed, std::int64_t params, std::int64_t cand,
                   double metric) {
  RunSummary s;
  s.config = {{"strategy", strategy}, {"seed", std::to_string(seed)}};
  s.loss_kind = "mse";
  s.final_params = params;
  s.final_test_metric = metric;
  s.flops_total = 10 * cand;
  s.candidate_flops_total = cand;
  return s;
}

}  // namespace

TEST_CASE("forward and backward flop conventions") {
  CHECK(flops_forward(DagNetwork::empty(20, 1), 1) == 0);
  CHECK(flops_backward(DagNetwork::empty(20, 1), 64) == 0);

  DagNetwork net = DagNetwork::empty(20, 1);
  net.add_edge(net.input_id(), net.output_id(), Matrix::Zero(1, 20), Vector::Zero(1));
  CHECK(flops_forward(net, 1) == 2 * 20 * 1 + 1);
  CHECK(flops_forward(net, 2) == 2 * flops_forward(net, 1));
  CHECK(flops_forward(net, 37) == 37 * flops_forward(net, 1));
  CHECK(flops_backward(net, 5) == 2 * flops_forward(net, 5));

  // Chain 3 -> 4 -> 2: two products plus two activated nodes.
  DagNetwork chain = DagNetwork::empty(3, 2);
  const NodeId h = chain.insert_node_before(chain.output_id(), 4, Activation::tanh);
  chain.add_edge(chain.input_id(), h, Matrix::Zero(4, 3), Vector::Zero(4));
  chain.add_edge(h, chain.output_id(), Matrix::Zero(2, 4), Vector::Zero(2));
  CHECK(flops_forward(chain, 1) == 2 * 12 + 2 * 8 + 4 + 2);

  CHECK(flops_svd(10, 3) == 4 * 10 * 3 * 3);
  CHECK(flops_svd(3, 10) == 4 * 3 * 10 * 3);
  CHECK(flops_gemm(2, 3, 4) == 48);
  CHECK(flops_symmetric_eigen(5) == 9 * 125);
}

TEST_CASE("flop counter") {
  FlopCounter a, b;
  a.book(FlopPhase::forward, 10);
  a.book(FlopPhase::forward, 5);
  b.book(FlopPhase::solver, 7);
  a.merge(b);
  CHECK(a.flops(FlopPhase::forward) == 15);
  CHECK(a.calls(FlopPhase::forward) == 2);
  CHECK(a.calls(FlopPhase::solver) == 1);
  CHECK(a.total() == 22);
}

TEST_CASE("metrics CSV") {
  const fs::path dir = scratch("csv");
  SUBCASE("empty run is header only") {
    const std::string path = (dir / "empty.csv").string();
    write_metrics_csv({}, path);
    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)), {});
    CHECK(text == metrics_csv_header() + "\n");
    CHECK(text == "step,epoch,split,loss,accuracy,params,candidates,flops_cum,wall_s\n");
    CHECK(read_metrics_csv(path).empty());
  }
  SUBCASE("round trip is exact") {
    RunMetrics run;
    run.rows.push_back({0, 0, "train_opt", 0.1234567890123456789, std::nan(""), 0, 0, 12, 0.001});
    run.rows.push_back({3, 7, "test", 1e-300, 0.875, 4701, 17, 1234567890123LL, 12.5});
    run.rows.push_back({3, 8, "inter_train_running", 2.0 / 3.0, 1.0 / 7.0, 9, 2, 99, 1.0 / 3.0});
    const std::string path = (dir / "run.csv").string();
    write_metrics_csv(run, path);
    const auto back = read_metrics_csv(path);
    REQUIRE(back.size() == run.rows.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      const auto& a = run.rows[i];
      const auto& b = back[i];
      CHECK(a.step == b.step);
      CHECK(a.epoch == b.epoch);
      CHECK(a.split == b.split);
      CHECK(a.loss == b.loss);
      CHECK((a.accuracy == b.accuracy || (std::isnan(a.accuracy) && std::isnan(b.accuracy))));
      CHECK(a.params == b.params);
      CHECK(a.candidates == b.candidates);
      CHECK(a.flops_cum == b.flops_cum);
      CHECK(a.wall_s == b.wall_s);
    }
  }
  SUBCASE("bad files") {
    std::ofstream(dir / "bad.csv") << "a,b\n";
    CHECK_THROWS_AS(read_metrics_csv((dir / "bad.csv").string()), DataError);
    std::ofstream(dir / "short.csv") << metrics_csv_header() << "\n1,2,x\n";
    CHECK_THROWS_AS(read_metrics_csv((dir / "short.csv").string()), DataError);
    CHECK_THROWS_AS(write_metrics_csv({}, "/nonexistent-dir/x.csv"), IoError);
  }
  fs::remove_all(dir);
}

TEST_CASE("summary JSON") {
  RunSummary s = summary("bic", 2, 812, 3000, 0.031);
  s.flops_by_phase = {{"forward", 5}, {"training", 7}};
  StepRecord st;
  st.step = 1;
  st.a_star = 1;
  st.psi_max = 0.5;
  st.candidates = 2;
  st.params = 812;
  st.selected = {"new_node", 0, 1, 10, 0.25, 0.03, 123.5, 221};
  s.steps.push_back(st);
  const RunSummary back = summary_from_json(summary_to_json(s));
  CHECK(back.config == s.config);
  CHECK(back.final_params == 812);
  CHECK(back.final_test_metric == s.final_test_metric);
  CHECK(back.flops_total == s.flops_total);
  CHECK(back.flops_by_phase == s.flops_by_phase);
  REQUIRE(back.steps.size() == 1);
  CHECK(back.steps[0].selected.kind == "new_node");
  CHECK(back.steps[0].selected.gamma == 0.25);

  std::string text = summary_to_json(s);
  const auto pos = text.find("\"schema_version\":");
  REQUIRE(pos != std::string::npos);
  CHECK_THROWS_AS(summary_from_json("{\"schema_version\": 99}"), DataError);
  CHECK_THROWS_AS(summary_from_json("not json"), DataError);

  const fs::path dir = scratch("json");
  const std::string path = (dir / "s.json").string();
  write_summary_json(s, path);
  CHECK(read_summary_json(path).final_params == 812);
  fs::remove_all(dir);
}

TEST_CASE("report table") {
  CHECK(report_table({}).empty());
  const std::string one = report_table({summary("restricted", 0, 100, 50, 0.5)});
  CHECK(one.find("restricted") != std::string::npos);
  CHECK(one.find("vs whole") == std::string::npos);

  const std::string table = report_table({summary("whole", 0, 300, 1000, 0.1),
                                          summary("whole", 1, 320, 3000, 0.3),
                                          summary("restricted", 0, 200, 100, 0.2),
                                          summary("restricted", 1, 220, 300, 0.4)});
  // (100 + 300) / (1000 + 3000) = 0.1
  CHECK(table.find("restricted vs whole: candidate flop ratio 0.1000 (saving 90.0%)") !=
        std::string::npos);
}
