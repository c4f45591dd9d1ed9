#include <doctest.h>

#include <random>

#include "checks.hpp"
#include "dag_grow/bottleneck.hpp"
#include "dag_grow/error.hpp"
#include "dag_grow/linalg.hpp"
#include "support.hpp"

using namespace daggrow;
using testsupport::random_matrix;

namespace {

struct Problem {
  DagNetwork net;
  ActivationCache cache;
  std::vector<Matrix> desired;
};

Problem random_problem(std::mt19937_64& rng, Eigen::Index n) {
  Problem p{testsupport::random_dag(rng), {}, {}};
  p.cache = forward(p.net, random_matrix(rng, n, p.net.node(p.net.input_id()).width));
  p.desired.resize(p.net.nodes().size());
  for (std::size_t i = 0; i < p.net.nodes().size(); ++i)
    if (p.net.nodes()[i].id != p.net.input_id())
      p.desired[i] = random_matrix(rng, n, p.net.nodes()[i].width);
  return p;
}

}  // namespace

TEST_CASE("covariance factor") {
  std::mt19937_64 rng(3);
  const Matrix x = random_matrix(rng, 30, 4);
  const Matrix s = second_moment(x);
  CHECK(s.isApprox(x.transpose() * x / 30.0));
  const CovarianceFactor f(s, 0.0);
  CHECK(f.rank() == 4);
  const Matrix rhs = random_matrix(rng, 4, 2);
  CHECK((s * f.solve(rhs)).isApprox(rhs, 1e-10));
  const Matrix is = f.inverse_sqrt();
  CHECK((is * s * is).isApprox(Matrix::Identity(4, 4), 1e-10));

  // Rank-deficient without ridge: pseudo-inverse.
  Matrix xd(30, 3);
  xd << x.col(0), x.col(1), x.col(0) + x.col(1);
  const CovarianceFactor fd(second_moment(xd), 0.0);
  CHECK(fd.rank() == 2);
  const Matrix sd = second_moment(xd);
  const Matrix pinv = sd.completeOrthogonalDecomposition().pseudoInverse();
  CHECK(fd.solve(Matrix::Identity(3, 3)).isApprox(pinv, 1e-8));

  CHECK_THROWS_AS(CovarianceFactor(s, -1.0), UsageError);
}

TEST_CASE("projection matches dense normal equations") {
  // Exact orthogonality only holds for the unregularized projection.
  const auto r = testsupport::projection_check(20, 77, 0.0);
  CHECK(r.instances == 20);
  CHECK(r.max_objective_rel < 1e-8);
  CHECK(r.max_orthogonality < 1e-8);
}

TEST_CASE("projection with a finite ridge matches the ridge oracle") {
  for (double ridge : {1e-9, 1e-2}) {
    const auto r = testsupport::projection_check(20, 78, ridge);
    CHECK(r.max_objective_rel < 1e-8);
  }
}

TEST_CASE("projection algebra") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 15; ++t) {
    Problem p = random_problem(rng, 50);
    const NodeId out = p.net.output_id();
    if (p.net.in_edges(out).empty()) continue;
    const auto proj = project_node(p.net, p.cache, p.desired, out, 0.0);
    const Matrix& d = p.desired[p.net.node_index(out)];
    // v* + v_orth = D and Pythagoras.
    CHECK((proj.v_star + proj.v_orth).isApprox(d, 1e-12));
    CHECK(d.squaredNorm() ==
          doctest::Approx(proj.v_star.squaredNorm() + proj.v_orth.squaredNorm()).epsilon(1e-9));
    CHECK(proj.psi == doctest::Approx(std::sqrt(proj.v_orth.squaredNorm() / 50.0)));

    // The returned edge updates reproduce v*.
    Matrix rebuilt = Matrix::Zero(50, d.cols());
    for (const auto& u : proj.best_in_updates) {
      const auto& e = p.net.edge(u.edge);
      rebuilt += p.cache.post(p.net.node_index(e.src)) * u.weight.transpose();
      rebuilt.rowwise() += u.bias.transpose();
    }
    CHECK(rebuilt.isApprox(proj.v_star, 1e-8));

    // Linear in the desired update.
    std::vector<Matrix> scaled = p.desired;
    scaled[p.net.node_index(out)] *= -3.0;
    const auto proj3 = project_node(p.net, p.cache, scaled, out, 0.0);
    CHECK(proj3.psi == doctest::Approx(3.0 * proj.psi).epsilon(1e-9));
  }
}

TEST_CASE("psi is invariant to rescaling a source without ridge") {
  std::mt19937_64 rng(31);
  const Matrix x = random_matrix(rng, 40, 3);
  DagNetwork net = DagNetwork::empty(3, 2);
  net.add_edge(net.input_id(), net.output_id(), random_matrix(rng, 2, 3), Vector::Zero(2));
  std::vector<Matrix> desired{Matrix(), random_matrix(rng, 40, 2)};
  const auto base = project_node(net, forward(net, x), desired, net.output_id(), 0.0);
  const auto scaled = project_node(net, forward(net, 7.5 * x), desired, net.output_id(), 0.0);
  CHECK(scaled.psi == doctest::Approx(base.psi).epsilon(1e-9));
}

TEST_CASE("more in-edges never increase psi") {
  std::mt19937_64 rng(41);
  const Matrix x = random_matrix(rng, 60, 4);
  DagNetwork net = DagNetwork::empty(4, 2);
  const NodeId h = net.insert_node_before(net.output_id(), 5, Activation::tanh);
  net.add_edge(net.input_id(), h, random_matrix(rng, 5, 4), Vector::Zero(5));
  net.add_edge(h, net.output_id(), random_matrix(rng, 2, 5), Vector::Zero(2));
  const Matrix d = random_matrix(rng, 60, 2);
  std::vector<Matrix> desired(net.nodes().size());
  desired[net.node_index(net.output_id())] = d;
  desired[net.node_index(h)] = random_matrix(rng, 60, 5);
  const double before = project_node(net, forward(net, x), desired, net.output_id(), 0.0).psi;
  net.add_edge(net.input_id(), net.output_id(), Matrix::Zero(2, 4), Vector::Zero(2));
  const double after = project_node(net, forward(net, x), desired, net.output_id(), 0.0).psi;
  CHECK(after <= before + 1e-12);
}

TEST_CASE("edge cases") {
  std::mt19937_64 rng(51);
  SUBCASE("zero desired update gives zero psi") {
    Problem p = random_problem(rng, 20);
    for (auto& d : p.desired) d.setZero();
    for (const auto& node : p.net.nodes()) {
      if (node.id == p.net.input_id()) continue;
      const auto proj = project_node(p.net, p.cache, p.desired, node.id, 1e-6);
      CHECK(proj.psi == 0.0);
    }
  }
  SUBCASE("a single sample is fitted exactly without ridge") {
    DagNetwork net = DagNetwork::empty(3, 2);
    net.add_edge(net.input_id(), net.output_id(), random_matrix(rng, 2, 3), Vector::Zero(2));
    const auto cache = forward(net, random_matrix(rng, 1, 3));
    std::vector<Matrix> desired{Matrix(), random_matrix(rng, 1, 2)};
    const auto proj = project_node(net, cache, desired, net.output_id(), 0.0);
    CHECK(proj.v_orth.cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("a reachable desired update leaves no residual") {
    DagNetwork net = DagNetwork::empty(4, 3);
    net.add_edge(net.input_id(), net.output_id(), random_matrix(rng, 3, 4), Vector::Zero(3));
    const Matrix x = random_matrix(rng, 25, 4);
    const auto cache = forward(net, x);
    std::vector<Matrix> desired{Matrix(), with_bias_column(x) * random_matrix(rng, 5, 3)};
    CHECK(project_node(net, cache, desired, net.output_id(), 0.0).psi < 1e-10);
  }
  SUBCASE("a node without in-edges keeps its whole desired update") {
    const DagNetwork net = DagNetwork::empty(3, 2);
    const auto cache = forward(net, random_matrix(rng, 10, 3));
    std::vector<Matrix> desired{Matrix(), random_matrix(rng, 10, 2)};
    const auto proj = project_node(net, cache, desired, net.output_id(), 1e-6);
    CHECK(proj.v_orth == desired[1]);
    CHECK(proj.v_star.isZero(0.0));
    CHECK(proj.psi > 0.0);
  }
  SUBCASE("interpolating network has no bottleneck") {
    // Output already equals the targets: v_goal = 0 everywhere.
    DagNetwork net = DagNetwork::empty(2, 1);
    net.add_edge(net.input_id(), net.output_id(), random_matrix(rng, 1, 2), Vector::Zero(1));
    const Matrix x = random_matrix(rng, 15, 2);
    LabeledData batch{x, outputs(net, forward(net, x))};
    const auto report = bottleneck_report(net, batch, LossKind::mse, 1e-6);
    CHECK(report.loss == 0.0);
    for (const auto& np : report.nodes) CHECK(np.psi == 0.0);
  }
}

TEST_CASE("bottleneck report") {
  std::mt19937_64 rng(61);
  SUBCASE("empty network: the output is the bottleneck") {
    const DagNetwork net = DagNetwork::empty(4, 1);
    LabeledData batch{random_matrix(rng, 30, 4), random_matrix(rng, 30, 1)};
    const auto report = bottleneck_report(net, batch, LossKind::mse, 1e-6);
    REQUIRE(report.nodes.size() == 1);
    CHECK(report.argmax == net.output_id());
    CHECK(report.nodes[0].psi > 0.0);
    CHECK(report.loss == doctest::Approx(batch.targets.squaredNorm() / 30.0));
  }
  SUBCASE("argmax is the largest psi and nodes come in rank order") {
    for (int t = 0; t < 10; ++t) {
      const DagNetwork net = testsupport::random_dag(rng);
      LabeledData batch{random_matrix(rng, 40, net.node(net.input_id()).width),
                        random_matrix(rng, 40, net.node(net.output_id()).width)};
      const auto report = bottleneck_report(net, batch, LossKind::mse, 1e-6);
      CHECK(report.nodes.size() + 1 == net.nodes().size());
      double best = -1.0;
      int last_rank = 0;
      for (const auto& np : report.nodes) {
        best = std::max(best, np.psi);
        CHECK(net.node(np.node).rank > last_rank);
        last_rank = net.node(np.node).rank;
      }
      CHECK(report.at(report.argmax).psi == best);
    }
  }
  SUBCASE("stable under repeated evaluation") {
    const DagNetwork net = testsupport::random_dag(rng);
    LabeledData batch{random_matrix(rng, 40, net.node(net.input_id()).width),
                      random_matrix(rng, 40, net.node(net.output_id()).width)};
    const auto a = bottleneck_report(net, batch, LossKind::mse, 1e-6);
    const auto b = bottleneck_report(net, batch, LossKind::mse, 1e-6);
    for (std::size_t i = 0; i < a.nodes.size(); ++i) CHECK(a.nodes[i].psi == b.nodes[i].psi);
  }
  SUBCASE("csv lists every non-input node") {
    const DagNetwork net = testsupport::random_dag(rng);
    LabeledData batch{random_matrix(rng, 20, net.node(net.input_id()).width),
                      random_matrix(rng, 20, net.node(net.output_id()).width)};
    const auto report = bottleneck_report(net, batch, LossKind::mse, 1e-6);
    const std::string csv = bottleneck_csv(net, report);
    CHECK(csv.rfind("node_id,width,psi,n_in_edges\n", 0) == 0);
    CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == net.nodes().size());
  }
  SUBCASE("width normalization") {
    CHECK(parse_psi_normalization("width") == PsiNormalization::width);
    CHECK_THROWS_AS(parse_psi_normalization("bogus"), UsageError);
  }
}
