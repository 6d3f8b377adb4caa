#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "fpci/errors.hpp"
#include "fpci/point_cloud.hpp"
#include "fpci/tensor.hpp"

// Index-level point-set kernels. All are pure, exact and deterministic:
// brute-force neighbor search, greedy farthest point sampling, warping and
// inverse-distance flow transfer. Differentiable variants (for the model
// graph) are built from the same indices via gather_weighted_sum.

namespace fpci {

inline constexpr double kUpsampleDistFloor = 1e-10;

struct NeighborIndex {
  int64_t q = 0, k = 0;
  std::vector<int64_t> indices;   // q*k, row-major
  std::vector<double> distances;  // q*k, ascending per row
};

namespace detail {

template <class R>
inline double dist3(const R* a, const R* b) {
  double s = 0;
  for (int d = 0; d < 3; ++d) {
    const double t = static_cast<double>(a[d]) - static_cast<double>(b[d]);
    s += t * t;
  }
  return std::sqrt(s);
}

}  // namespace detail

// Greedy farthest point sampling. indices[0] == start_index; every later
// pick maximizes the distance to the already-selected set, ties to the
// lowest index.
template <class R>
std::vector<int64_t> fps(const Cloud<R>& pc, int64_t m, int64_t start_index = 0) {
  const int64_t n = pc.size();
  pc.require_nonempty("fps");
  if (m < 1 || m > n)
    throw ArgumentError("fps: m = " + std::to_string(m) + " outside [1," + std::to_string(n) +
                        "]");
  if (start_index < 0 || start_index >= n)
    throw ArgumentError("fps: start_index out of range");
  std::vector<int64_t> picked;
  picked.reserve(static_cast<size_t>(m));
  picked.push_back(start_index);
  std::vector<double> min_dist(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    min_dist[static_cast<size_t>(i)] = detail::dist3(pc.row(i), pc.row(start_index));
  for (int64_t s = 1; s < m; ++s) {
    int64_t best = 0;
    double best_d = -1.0;
    for (int64_t i = 0; i < n; ++i)
      if (min_dist[static_cast<size_t>(i)] > best_d) {
        best_d = min_dist[static_cast<size_t>(i)];
        best = i;
      }
    picked.push_back(best);
    for (int64_t i = 0; i < n; ++i) {
      const double d = detail::dist3(pc.row(i), pc.row(best));
      if (d < min_dist[static_cast<size_t>(i)]) min_dist[static_cast<size_t>(i)] = d;
    }
  }
  return picked;
}

// Exact brute-force k-nearest neighbors; ascending distance per row, ties
// broken toward the lowest reference index.
template <class R>
NeighborIndex knn(const Cloud<R>& query, const Cloud<R>& reference, int64_t k) {
  query.require_nonempty("knn");
  reference.require_nonempty("knn");
  const int64_t q = query.size(), n = reference.size();
  if (k < 1 || k > n)
    throw ArgumentError("knn: k = " + std::to_string(k) + " outside [1," + std::to_string(n) +
                        "]");
  NeighborIndex out;
  out.q = q;
  out.k = k;
  out.indices.resize(static_cast<size_t>(q * k));
  out.distances.resize(static_cast<size_t>(q * k));
  std::vector<std::pair<double, int64_t>> row(static_cast<size_t>(n));
  for (int64_t i = 0; i < q; ++i) {
    for (int64_t j = 0; j < n; ++j)
      row[static_cast<size_t>(j)] = {detail::dist3(query.row(i), reference.row(j)), j};
    std::partial_sort(row.begin(), row.begin() + k, row.end());
    for (int64_t j = 0; j < k; ++j) {
      out.indices[static_cast<size_t>(i * k + j)] = row[static_cast<size_t>(j)].second;
      out.distances[static_cast<size_t>(i * k + j)] = row[static_cast<size_t>(j)].first;
    }
  }
  return out;
}

// Displace a cloud along its flow. Forward flows move by t, backward flows
// by (1-t). A zero displacement component leaves the coordinate bitwise
// untouched (so t=0 forward and t=1 backward are exact identities).
template <class R>
Cloud<R> warp(const Cloud<R>& pc, const Flow<R>& sf, double t) {
  if (pc.size() != sf.size())
    throw ShapeError("warp: cloud has " + std::to_string(pc.size()) + " rows, flow has " +
                     std::to_string(sf.size()));
  if (!(t >= 0.0 && t <= 1.0)) throw ArgumentError("warp: t must lie in [0,1]");
  const R s = static_cast<R>(sf.direction == FlowDirection::forward ? t : 1.0 - t);
  Cloud<R> out(pc.size());
  for (size_t i = 0; i < pc.xyz.size(); ++i) {
    const R step = s * sf.vec[i];
    out.xyz[i] = (step == R(0)) ? pc.xyz[i] : pc.xyz[i] + step;
  }
  return out;
}

// Tensor variant used inside the model graph; same scaling rule, gradient
// flows into both the cloud and the flow.
template <class R>
ad::Tensor<R> warp_t(const ad::Tensor<R>& pc, const ad::Tensor<R>& sf, FlowDirection dir,
                     double t) {
  if (pc.shape() != sf.shape())
    throw ShapeError("warp: cloud/flow shape mismatch " + ad::shape_str(pc.shape()) + " vs " +
                     ad::shape_str(sf.shape()));
  const double s = dir == FlowDirection::forward ? t : 1.0 - t;
  return ad::add(pc, ad::scale(sf, s));
}

namespace detail {

// Inverse-distance weights over the k nearest coarse points; a row whose
// nearest neighbor coincides exactly gets a one-hot row for it.
template <class R>
void upsample_weights(const NeighborIndex& nn, std::vector<R>& w) {
  const int64_t q = nn.q, k = nn.k;
  w.assign(static_cast<size_t>(q * k), R(0));
  for (int64_t i = 0; i < q; ++i) {
    if (nn.distances[static_cast<size_t>(i * k)] == 0.0) {
      w[static_cast<size_t>(i * k)] = R(1);
      continue;
    }
    double sum = 0;
    for (int64_t j = 0; j < k; ++j)
      sum += 1.0 / std::max(nn.distances[static_cast<size_t>(i * k + j)], kUpsampleDistFloor);
    for (int64_t j = 0; j < k; ++j)
      w[static_cast<size_t>(i * k + j)] = static_cast<R>(
          (1.0 / std::max(nn.distances[static_cast<size_t>(i * k + j)], kUpsampleDistFloor)) /
          sum);
  }
}

}  // namespace detail

// Transfer a coarse flow onto a fine cloud by inverse-distance interpolation
// over k coarse neighbors.
template <class R>
Flow<R> upsample_flow(const Cloud<R>& coarse_pc, const Flow<R>& coarse_sf,
                      const Cloud<R>& fine_pc, int64_t k = 3) {
  coarse_pc.require_nonempty("upsample_flow");
  if (coarse_pc.size() != coarse_sf.size())
    throw ShapeError("upsample_flow: coarse cloud/flow row mismatch");
  if (k > coarse_pc.size())
    throw ArgumentError("upsample_flow: k exceeds coarse cloud size");
  const auto nn = knn(fine_pc, coarse_pc, k);
  std::vector<R> w;
  detail::upsample_weights<R>(nn, w);
  Flow<R> out(fine_pc.size(), coarse_sf.direction);
  for (int64_t i = 0; i < fine_pc.size(); ++i) {
    const int64_t base = i * k;
    // all candidate flows identical: copy, keeping constant fields exact
    bool same = true;
    const R* f0 = coarse_sf.row(nn.indices[static_cast<size_t>(base)]);
    for (int64_t j = 1; j < k && same; ++j) {
      const R* fj = coarse_sf.row(nn.indices[static_cast<size_t>(base + j)]);
      same = f0[0] == fj[0] && f0[1] == fj[1] && f0[2] == fj[2];
    }
    if (same) {
      std::copy(f0, f0 + 3, out.row(i));
      continue;
    }
    for (int d = 0; d < 3; ++d) {
      R acc = R(0);
      for (int64_t j = 0; j < k; ++j)
        acc += w[static_cast<size_t>(base + j)] *
               coarse_sf.row(nn.indices[static_cast<size_t>(base + j)])[d];
      out.row(i)[d] = acc;
    }
  }
  return out;
}

// Graph variant: neighbor indices/weights are computed from the fixed
// coordinates, gradient flows through the coarse flow values.
template <class R>
ad::Tensor<R> upsample_flow_t(const Cloud<R>& coarse_pc, const ad::Tensor<R>& coarse_sf,
                              const Cloud<R>& fine_pc, int64_t k = 3) {
  coarse_pc.require_nonempty("upsample_flow");
  if (coarse_pc.size() != coarse_sf.rows())
    throw ShapeError("upsample_flow: coarse cloud/flow row mismatch");
  if (k > coarse_pc.size())
    throw ArgumentError("upsample_flow: k exceeds coarse cloud size");
  const auto nn = knn(fine_pc, coarse_pc, k);
  std::vector<R> w;
  detail::upsample_weights<R>(nn, w);
  auto weights = ad::Tensor<R>::leaf({nn.q, nn.k}, std::move(w));
  return ad::gather_weighted_sum(coarse_sf, nn.indices, weights);
}

// Inverse-distance feature interpolation between pyramid levels (same
// weighting as upsample_flow, arbitrary channel count).
template <class R>
ad::Tensor<R> interpolate_features_t(const Cloud<R>& coarse_pc, const ad::Tensor<R>& coarse_feat,
                                     const Cloud<R>& fine_pc, int64_t k = 3) {
  coarse_pc.require_nonempty("interpolate_features");
  if (coarse_pc.size() != coarse_feat.rows())
    throw ShapeError("interpolate_features: coarse cloud/feature row mismatch");
  if (k > coarse_pc.size())
    throw ArgumentError("interpolate_features: k exceeds coarse cloud size");
  const auto nn = knn(fine_pc, coarse_pc, k);
  std::vector<R> w;
  detail::upsample_weights<R>(nn, w);
  auto weights = ad::Tensor<R>::leaf({nn.q, nn.k}, std::move(w));
  return ad::gather_weighted_sum(coarse_feat, nn.indices, weights);
}

// Variant with the positions themselves on the tape: the inverse-distance
// weights are differentiable with respect to both clouds, which matters when
// the geometry is itself a network output. Neighbor choice stays discrete.
template <class R>
ad::Tensor<R> interpolate_features_t(const ad::Tensor<R>& coarse_pos,
                                     const ad::Tensor<R>& coarse_feat,
                                     const ad::Tensor<R>& fine_pos, int64_t k = 3) {
  if (coarse_pos.rows() != coarse_feat.rows())
    throw ShapeError("interpolate_features: coarse cloud/feature row mismatch");
  if (k > coarse_pos.rows())
    throw ArgumentError("interpolate_features: k exceeds coarse cloud size");
  const auto nn = knn(Cloud<R>::from_tensor(fine_pos), Cloud<R>::from_tensor(coarse_pos), k);
  const int64_t q = fine_pos.rows();
  std::vector<int64_t> rep(static_cast<size_t>(q * k));
  for (int64_t i = 0; i < q; ++i)
    for (int64_t j = 0; j < k; ++j) rep[static_cast<size_t>(i * k + j)] = i;
  auto rel = ad::sub(ad::gather_rows(coarse_pos, nn.indices), ad::gather_rows(fine_pos, rep));
  auto floor_t = ad::Tensor<R>::full({q * k, 1}, static_cast<R>(kUpsampleDistFloor));
  auto raw = ad::reciprocal(ad::add(ad::l2norm_rows(rel), floor_t));
  auto denom = ad::gather_rows(ad::reciprocal(ad::rowgroup_sum(raw, k)), rep);
  auto weights = ad::reshape(ad::mul(raw, denom), {q, k});
  return ad::gather_weighted_sum(coarse_feat, nn.indices, weights);
}

}  // namespace fpci
