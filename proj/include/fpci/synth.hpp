#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fpci/point_cloud.hpp"

// Seeded synthetic scene generator: rigid objects (box and sphere surfaces)
// moving over a static ground plane, sampled into five frames per sequence
// with exact fractional rigid transforms and per-point ground-truth flow.

namespace fpci::synth {

enum class SurfaceKind { box, sphere, plane };

struct ObjectSpec {
  SurfaceKind kind = SurfaceKind::box;
  double size = 1.0;  // box edge length, sphere radius, plane side
  std::array<double, 3> center{0, 0, 0};
  std::array<double, 3> velocity{0, 0, 0};  // displacement per frame interval
  std::array<double, 3> axis{0, 0, 1};      // rotation axis, need not be unit
  double angle = 0.0;                       // radians per frame interval
  int64_t points = 0;
};

struct SceneSpec {
  uint64_t seed = 0;
  double noise_sigma = 0.005;
  std::vector<ObjectSpec> objects;

  int64_t total_points() const {
    int64_t n = 0;
    for (const auto& o : objects) n += o.points;
    return n;
  }
  void validate() const;
};

struct Sequence {
  static constexpr std::array<double, 5> kTimes{0.0, 0.25, 0.5, 0.75, 1.0};

  std::vector<Cloud<double>> frames;  // one per entry of kTimes
  Flow<double> gt_flow_forward;       // frame 0 -> frame 1 displacement
  std::vector<int32_t> labels;        // object index per row

  int64_t size() const { return frames.empty() ? 0 : frames[0].size(); }
  static int frame_index(double t);
  const Cloud<double>& frame(double t) const { return frames[static_cast<size_t>(frame_index(t))]; }
};

// Rigid pose of one object at fraction t applied to a frame-0 point.
std::array<double, 3> rigid_at(const ObjectSpec& obj, const std::array<double, 3>& p, double t);

Sequence generate(const SceneSpec& spec);

// Default layout: four moving objects above a static ground plane, velocity
// and spin bounded by the scene extent (|v| well under half the diameter,
// |angle| <= 30 degrees per interval).
SceneSpec random_scene(uint64_t seed, int64_t total_points, double noise_sigma = 0.005);

double scene_diameter_estimate(const std::vector<ObjectSpec>& objects);

struct Dataset {
  std::vector<SceneSpec> train, test;
};

// Splits draw from disjoint offset ranges of the master seed.
Dataset dataset(uint64_t seed, int64_t n_train, int64_t n_test, int64_t points,
                double noise_sigma = 0.005);

template <class R>
Cloud<R> cast_cloud(const Cloud<double>& c) {
  Cloud<R> out(c.size());
  for (size_t i = 0; i < c.xyz.size(); ++i) out.xyz[i] = static_cast<R>(c.xyz[i]);
  return out;
}

}  // namespace fpci::synth
