#pragma once

// Random instances and independent reference computations for the tests.
// Oracles here deliberately avoid the library's own solvers.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "dag_grow/netdag.hpp"

namespace testsupport {

using daggrow::Activation;
using daggrow::DagNetwork;
using daggrow::Matrix;
using daggrow::NodeId;
using daggrow::Vector;

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                            double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

struct RandomDagOptions {
  int max_hidden = 3;
  int max_width = 8;
  int max_output = 4;
  bool mixed_activations = true;
};

/// Random valid DAG: every hidden node has an in-edge from an earlier node and
/// an out-edge to a later one; extra edges are added at random.
inline DagNetwork random_dag(std::mt19937_64& rng, const RandomDagOptions& opt = {}) {
  const int in_w = uniform_int(rng, 1, opt.max_width);
  const int out_w = uniform_int(rng, 1, opt.max_output);
  DagNetwork net = DagNetwork::empty(in_w, out_w);
  const int hidden = uniform_int(rng, 0, opt.max_hidden);
  const Activation acts[] = {Activation::tanh, Activation::selu, Activation::relu,
                             Activation::identity};
  std::vector<NodeId> order{net.input_id()};
  for (int h = 0; h < hidden; ++h) {
    const Activation a = opt.mixed_activations ? acts[uniform_int(rng, 0, 3)] : Activation::tanh;
    order.push_back(net.insert_node_before(net.output_id(), uniform_int(rng, 1, opt.max_width), a));
  }
  order.push_back(net.output_id());

  auto connect = [&](NodeId s, NodeId d) {
    if (net.find_edge(s, d) != nullptr) return;
    const int ws = net.node(s).width, wd = net.node(d).width;
    const double scale = 1.0 / std::sqrt(static_cast<double>(ws));
    net.add_edge(s, d, random_matrix(rng, wd, ws, scale), random_matrix(rng, wd, 1, 0.5).col(0));
  };
  const int n = static_cast<int>(order.size());
  for (int i = 1; i + 1 < n; ++i) {
    connect(order[static_cast<std::size_t>(uniform_int(rng, 0, i - 1))], order[static_cast<std::size_t>(i)]);
    connect(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(uniform_int(rng, i + 1, n - 1))]);
  }
  if (hidden == 0 || uniform_int(rng, 0, 1) == 1) connect(order.front(), order.back());
  for (int extra = 0; extra < 2; ++extra) {
    const int a = uniform_int(rng, 0, n - 2);
    const int b = uniform_int(rng, a + 1, n - 1);
    connect(order[static_cast<std::size_t>(a)], order[static_cast<std::size_t>(b)]);
  }
  return net;
}

/// One-hot rows over `classes`.
inline Matrix one_hot(std::mt19937_64& rng, Eigen::Index rows, int classes) {
  Matrix y = Matrix::Zero(rows, classes);
  for (Eigen::Index i = 0; i < rows; ++i) y(i, uniform_int(rng, 0, classes - 1)) = 1.0;
  return y;
}

// ---------------------------------------------------------------------------
// Oracles

/// Minimum of mean_i |W b_i - v_i|^2 + the ridge regularized solution by dense
/// normal equations (column-pivoting QR), with the ridge r = eps * trace(S)/p.
struct LeastSquaresOracle {
  Matrix w_t;        ///< p x m
  double objective;  ///< mean squared residual
};

inline LeastSquaresOracle normal_equations(const Matrix& b, const Matrix& v, double rel_ridge) {
  const double n = static_cast<double>(b.rows());
  const Eigen::Index p = b.cols();
  Matrix s = Matrix::Zero(p, p);
  for (Eigen::Index i = 0; i < b.rows(); ++i) s += b.row(i).transpose() * b.row(i);
  s /= n;
  Matrix cross = Matrix::Zero(p, v.cols());
  for (Eigen::Index i = 0; i < b.rows(); ++i) cross += b.row(i).transpose() * v.row(i);
  cross /= n;
  const double r = rel_ridge * s.trace() / static_cast<double>(p);
  const Matrix reg = s + r * Matrix::Identity(p, p);
  LeastSquaresOracle out;
  out.w_t = reg.colPivHouseholderQr().solve(cross);
  out.objective = (v - b * out.w_t).squaredNorm() / n;
  return out;
}

/// Unconstrained least-squares minimum via QR on the design matrix itself.
inline double least_squares_minimum(const Matrix& b, const Matrix& v) {
  const Matrix w = b.householderQr().solve(v);
  return (v - b * w).squaredNorm() / static_cast<double>(b.rows());
}

/// Best rank-k objective (Eckart-Young): the LS residual plus the tail of the
/// singular values of the LS fitted values.
inline double eckart_young(const Matrix& b, const Matrix& v, int k) {
  const Matrix w = b.householderQr().solve(v);
  const Matrix fitted = b * w;
  Eigen::JacobiSVD<Matrix> svd(fitted);
  const Vector& s = svd.singularValues();
  double tail = 0.0;
  for (Eigen::Index j = k; j < s.size(); ++j) tail += s(j) * s(j);
  const double n = static_cast<double>(b.rows());
  return (v - fitted).squaredNorm() / n + tail / n;
}

inline double rel_diff(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

}  // namespace testsupport
