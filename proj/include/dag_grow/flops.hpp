#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace daggrow {

/// Cost buckets used by the accounting. Totals are exact sums of bookings.
enum class FlopPhase : int {
  forward = 0,   ///< forward passes of the bottleneck analysis
  backward,      ///< backward passes of the bottleneck analysis
  solver,        ///< covariance / factorization work of the projections
  candidate,     ///< fitting, line search and estimation of candidates
  training,      ///< inter-train SGD (forward + backward)
  evaluation,    ///< split evaluation for logging
};

inline constexpr std::size_t kFlopPhaseCount = 6;

std::string_view to_string(FlopPhase phase);

/// Accumulates FLOP bookings per phase and how many bookings each phase got.
///
/// Parallel workers own private counters that are merged in a fixed order, so
/// totals never depend on scheduling.
class FlopCounter {
 public:
  void book(FlopPhase phase, std::int64_t flops) {
    auto i = static_cast<std::size_t>(phase);
    flops_[i] += flops;
    calls_[i] += 1;
  }

  void merge(const FlopCounter& other) {
    for (std::size_t i = 0; i < kFlopPhaseCount; ++i) {
      flops_[i] += other.flops_[i];
      calls_[i] += other.calls_[i];
    }
  }

  std::int64_t flops(FlopPhase phase) const { return flops_[static_cast<std::size_t>(phase)]; }
  std::int64_t calls(FlopPhase phase) const { return calls_[static_cast<std::size_t>(phase)]; }

  std::int64_t total() const {
    std::int64_t sum = 0;
    for (auto f : flops_) sum += f;
    return sum;
  }

 private:
  std::array<std::int64_t, kFlopPhaseCount> flops_{};
  std::array<std::int64_t, kFlopPhaseCount> calls_{};
};

// Cost conventions. A multiply-add counts as 2 operations.

/// Dense product of an (m x k) by a (k x n) matrix.
constexpr std::int64_t flops_gemm(std::int64_t m, std::int64_t n, std::int64_t k) {
  return 2 * m * n * k;
}

/// Thin SVD of an m x n matrix: c * m * n * min(m, n) with c = 4.
inline constexpr std::int64_t kSvdCostFactor = 4;
constexpr std::int64_t flops_svd(std::int64_t m, std::int64_t n) {
  return kSvdCostFactor * m * n * (m < n ? m : n);
}

/// Symmetric eigendecomposition with eigenvectors of a p x p matrix: 9 p^3.
inline constexpr std::int64_t kEigenCostFactor = 9;
constexpr std::int64_t flops_symmetric_eigen(std::int64_t p) {
  return kEigenCostFactor * p * p * p;
}

}  // namespace daggrow
