#pragma once

#include <cstdint>
#include <vector>

#include "fpci/errors.hpp"
#include "fpci/point_cloud.hpp"
#include "fpci/tensor.hpp"

// Set distances between clouds: Chamfer (differentiable, used for training
// and evaluation) and Earth Mover's Distance (evaluation only), the latter
// with an exact Hungarian solver for small N and an epsilon-scaling auction
// for large N.

namespace fpci {

inline constexpr int64_t kEmdExactGuard = 1024;

struct Assignment {
  std::vector<int64_t> mapping;  // mapping[i] = index in Y matched to X[i]
  double total_cost = 0.0;       // mean matched L2 distance
};

// Exact minimum-mean-cost bijection of an n x n row-major cost matrix.
Assignment solve_assignment_exact(const std::vector<double>& cost, int64_t n);

// Forward auction with epsilon scaling on integerized costs; returns the
// mean cost of the found bijection, within eps_final of the optimal mean.
double solve_assignment_auction(const std::vector<double>& cost, int64_t n, double eps_final);

// Differentiable Chamfer distance; symmetric by construction (both
// directional terms come from one distance matrix).
template <class R>
ad::Tensor<R> chamfer_t(const ad::Tensor<R>& x, const ad::Tensor<R>& y) {
  if (x.rows() < 1 || y.rows() < 1) throw ArgumentError("chamfer: empty cloud");
  auto d = ad::pairwise_dist(x, y);
  auto fwd = ad::reduce_mean(ad::min_over_rows(d));
  auto bwd = ad::reduce_mean(ad::min_over_rows(ad::transpose_last2(d)));
  return ad::add(fwd, bwd);
}

template <class R>
double chamfer(const Cloud<R>& x, const Cloud<R>& y) {
  x.require_nonempty("chamfer");
  y.require_nonempty("chamfer");
  return chamfer_t(x.tensor(), y.tensor()).value();
}

namespace detail {

template <class R>
std::vector<double> l2_cost_matrix(const Cloud<R>& x, const Cloud<R>& y) {
  const int64_t n = x.size();
  std::vector<double> cost(static_cast<size_t>(n * n));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double s = 0;
      for (int d = 0; d < 3; ++d) {
        const double t = static_cast<double>(x.row(i)[d]) - static_cast<double>(y.row(j)[d]);
        s += t * t;
      }
      cost[static_cast<size_t>(i * n + j)] = std::sqrt(s);
    }
  return cost;
}

}  // namespace detail

template <class R>
Assignment emd_exact(const Cloud<R>& x, const Cloud<R>& y) {
  if (x.size() != y.size())
    throw ArgumentError("emd_exact: cloud sizes differ (" + std::to_string(x.size()) + " vs " +
                        std::to_string(y.size()) + ")");
  x.require_nonempty("emd_exact");
  if (x.size() > kEmdExactGuard)
    throw CapacityError("emd_exact: N = " + std::to_string(x.size()) + " exceeds guard " +
                        std::to_string(kEmdExactGuard));
  return solve_assignment_exact(detail::l2_cost_matrix(x, y), x.size());
}

template <class R>
double emd_approx(const Cloud<R>& x, const Cloud<R>& y) {
  if (x.size() != y.size())
    throw ArgumentError("emd_approx: cloud sizes differ (" + std::to_string(x.size()) + " vs " +
                        std::to_string(y.size()) + ")");
  x.require_nonempty("emd_approx");
  Cloud<R> both;
  both.xyz = x.xyz;
  both.xyz.insert(both.xyz.end(), y.xyz.begin(), y.xyz.end());
  const double diam = cloud_bbox_diagonal(both);
  const double eps_final = 1e-4 * diam / static_cast<double>(x.size());
  return solve_assignment_auction(detail::l2_cost_matrix(x, y), x.size(), eps_final);
}

// Exact solver up to the guard size, auction approximation beyond it.
template <class R>
double emd(const Cloud<R>& x, const Cloud<R>& y) {
  if (x.size() <= kEmdExactGuard) return emd_exact(x, y).total_cost;
  return emd_approx(x, y);
}

}  // namespace fpci
