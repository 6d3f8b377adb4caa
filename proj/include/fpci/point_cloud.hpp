#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "fpci/errors.hpp"
#include "fpci/tensor.hpp"

namespace fpci {

enum class FlowDirection { forward, backward };

// Plain row-major L x 3 coordinate block. The model operates on tensors;
// this is the value-level currency of IO, synthesis and the index kernels.
template <class R>
struct Cloud {
  std::vector<R> xyz;

  Cloud() = default;
  explicit Cloud(int64_t n) : xyz(static_cast<size_t>(n) * 3, R(0)) {}
  Cloud(std::initializer_list<R> v) : xyz(v) {
    if (xyz.size() % 3 != 0) throw ShapeError("cloud initializer is not a multiple of 3");
  }

  int64_t size() const { return static_cast<int64_t>(xyz.size() / 3); }
  R* row(int64_t i) { return xyz.data() + i * 3; }
  const R* row(int64_t i) const { return xyz.data() + i * 3; }

  void require_nonempty(const char* who) const {
    if (xyz.empty()) throw ArgumentError(std::string(who) + ": empty point cloud");
  }

  bool finite() const {
    for (R v : xyz)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  ad::Tensor<R> tensor(bool requires_grad = false) const {
    return ad::Tensor<R>::leaf({size(), 3}, xyz, requires_grad);
  }

  static Cloud from_tensor(const ad::Tensor<R>& t) {
    if (t.shape().size() != 2 || t.cols() != 3)
      throw ShapeError("cloud tensor must be [L,3], got " + ad::shape_str(t.shape()));
    Cloud c;
    c.xyz = t.values();
    return c;
  }
};

template <class R>
struct Flow {
  std::vector<R> vec;  // L x 3 displacement per unit time interval
  FlowDirection direction = FlowDirection::forward;

  Flow() = default;
  Flow(int64_t n, FlowDirection d) : vec(static_cast<size_t>(n) * 3, R(0)), direction(d) {}

  int64_t size() const { return static_cast<int64_t>(vec.size() / 3); }
  R* row(int64_t i) { return vec.data() + i * 3; }
  const R* row(int64_t i) const { return vec.data() + i * 3; }

  ad::Tensor<R> tensor(bool requires_grad = false) const {
    return ad::Tensor<R>::leaf({size(), 3}, vec, requires_grad);
  }
};

template <class R>
double cloud_diameter(const Cloud<R>& a) {
  double best = 0.0;
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = i + 1; j < n; ++j) {
      const R* p = a.row(i);
      const R* q = a.row(j);
      double s = 0;
      for (int d = 0; d < 3; ++d) {
        const double t = static_cast<double>(p[d]) - static_cast<double>(q[d]);
        s += t * t;
      }
      best = std::max(best, s);
    }
  return std::sqrt(best);
}

// Axis-aligned bounding-box diagonal; O(n) stand-in for the true diameter
// (within a factor of 1 from below, sqrt(3) from above).
template <class R>
double cloud_bbox_diagonal(const Cloud<R>& a) {
  if (a.size() == 0) return 0.0;
  double lo[3], hi[3];
  for (int d = 0; d < 3; ++d) lo[d] = hi[d] = static_cast<double>(a.xyz[d]);
  for (int64_t i = 1; i < a.size(); ++i)
    for (int d = 0; d < 3; ++d) {
      const double v = static_cast<double>(a.row(i)[d]);
      lo[d] = std::min(lo[d], v);
      hi[d] = std::max(hi[d], v);
    }
  double s = 0;
  for (int d = 0; d < 3; ++d) s += (hi[d] - lo[d]) * (hi[d] - lo[d]);
  return std::sqrt(s);
}

}  // namespace fpci
