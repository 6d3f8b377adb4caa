#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "fpci/kernels.hpp"
#include "fpci/metrics.hpp"
#include "fpci/synth.hpp"

using namespace fpci;
using synth::ObjectSpec;
using synth::SceneSpec;
using synth::SurfaceKind;

namespace {

SceneSpec single_object(SurfaceKind kind, int64_t points, uint64_t seed = 1) {
  SceneSpec s;
  s.seed = seed;
  s.noise_sigma = 0.0;
  ObjectSpec o;
  o.kind = kind;
  o.size = 1.0;
  o.center = {0.2, -0.3, 0.5};
  o.points = points;
  s.objects.push_back(o);
  return s;
}

bool same_bits(const Cloud<double>& a, const Cloud<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.xyz.data(), b.xyz.data(), a.xyz.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("zero velocities and zero noise give five identical frames") {
  auto spec = single_object(SurfaceKind::box, 64);
  auto seq = synth::generate(spec);
  REQUIRE(seq.frames.size() == 5);
  for (size_t f = 1; f < seq.frames.size(); ++f) CHECK(same_bits(seq.frames[0], seq.frames[f]));
}

TEST_CASE("pure translation moves every point by t*v") {
  auto spec = single_object(SurfaceKind::sphere, 48);
  spec.objects[0].velocity = {1.0, 0.0, 0.0};
  auto seq = synth::generate(spec);

  const auto& f0 = seq.frames[0];
  const auto& fh = seq.frame(0.5);
  for (int64_t i = 0; i < f0.size(); ++i) {
    CHECK(fh.row(i)[0] == doctest::Approx(f0.row(i)[0] + 0.5).epsilon(1e-14));
    CHECK(fh.row(i)[1] == f0.row(i)[1]);
    CHECK(fh.row(i)[2] == f0.row(i)[2]);
  }
  for (int64_t i = 0; i < seq.gt_flow_forward.size(); ++i) {
    CHECK(seq.gt_flow_forward.row(i)[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(seq.gt_flow_forward.row(i)[1] == 0.0);
    CHECK(seq.gt_flow_forward.row(i)[2] == 0.0);
  }
}

TEST_CASE("a 90-degree z spin reaches 45 degrees at the middle frame") {
  auto spec = single_object(SurfaceKind::box, 40);
  auto& o = spec.objects[0];
  o.axis = {0.0, 0.0, 1.0};
  o.angle = 3.14159265358979323846 / 2.0;
  auto seq = synth::generate(spec);

  // frozen 45-degree rotation matrix about z
  const double c = std::sqrt(0.5), s = std::sqrt(0.5);
  const auto& f0 = seq.frames[0];
  const auto& fh = seq.frame(0.5);
  for (int64_t i = 0; i < f0.size(); ++i) {
    const double x = f0.row(i)[0] - o.center[0];
    const double y = f0.row(i)[1] - o.center[1];
    const double z = f0.row(i)[2] - o.center[2];
    CHECK(fh.row(i)[0] == doctest::Approx(o.center[0] + c * x - s * y).epsilon(1e-9));
    CHECK(fh.row(i)[1] == doctest::Approx(o.center[1] + s * x + c * y).epsilon(1e-9));
    CHECK(fh.row(i)[2] == doctest::Approx(o.center[2] + z).epsilon(1e-9));
  }
}

TEST_CASE("noiseless intermediate frames match the rigid oracle exactly") {
  auto spec = single_object(SurfaceKind::sphere, 32);
  auto& o = spec.objects[0];
  o.velocity = {0.3, -0.1, 0.2};
  o.axis = {1.0, 2.0, -0.5};
  o.angle = 0.4;
  auto seq = synth::generate(spec);

  for (double t : {0.25, 0.75}) {
    Cloud<double> oracle(seq.size());
    for (int64_t i = 0; i < seq.size(); ++i) {
      std::array<double, 3> p{seq.frames[0].row(i)[0], seq.frames[0].row(i)[1],
                              seq.frames[0].row(i)[2]};
      auto q = synth::rigid_at(o, p, t);
      std::copy(q.begin(), q.end(), oracle.row(i));
    }
    CHECK(chamfer(seq.frame(t), oracle) == 0.0);
  }
}

TEST_CASE("linear-flow warp stays inside the rotation chord bound") {
  auto spec = single_object(SurfaceKind::sphere, 64);
  auto& o = spec.objects[0];
  o.velocity = {0.2, 0.1, 0.0};
  o.axis = {0.0, 0.0, 1.0};
  o.angle = 30.0 * 3.14159265358979323846 / 180.0;
  auto seq = synth::generate(spec);

  for (double t : {0.25, 0.5, 0.75}) {
    auto warped = warp(seq.frames[0], seq.gt_flow_forward, t);
    const auto& gt = seq.frame(t);
    for (int64_t i = 0; i < seq.size(); ++i) {
      double r = 0.0, err = 0.0;
      for (int d = 0; d < 3; ++d) {
        const double rd = seq.frames[0].row(i)[d] - o.center[d];
        r += rd * rd;
        const double e = warped.row(i)[d] - gt.row(i)[d];
        err += e * e;
      }
      CHECK(std::sqrt(err) < 0.5 * o.angle * o.angle * std::sqrt(r));
    }
  }

  SUBCASE("translation-only scenes warp exactly") {
    auto tspec = single_object(SurfaceKind::box, 32);
    tspec.objects[0].velocity = {-0.4, 0.25, 0.1};
    auto tseq = synth::generate(tspec);
    for (double t : {0.25, 0.5, 0.75}) {
      auto warped = warp(tseq.frames[0], tseq.gt_flow_forward, t);
      const auto& gt = tseq.frame(t);
      for (int64_t i = 0; i < tseq.size(); ++i)
        for (int d = 0; d < 3; ++d)
          CHECK(warped.row(i)[d] == doctest::Approx(gt.row(i)[d]).epsilon(1e-9));
    }
  }
}

TEST_CASE("generation is seed-deterministic") {
  auto s1 = synth::random_scene(42, 256);
  auto s2 = synth::random_scene(42, 256);
  auto s3 = synth::random_scene(43, 256);
  auto q1 = synth::generate(s1);
  auto q2 = synth::generate(s2);
  auto q3 = synth::generate(s3);
  for (size_t f = 0; f < q1.frames.size(); ++f) CHECK(same_bits(q1.frames[f], q2.frames[f]));
  CHECK_FALSE(same_bits(q1.frames[0], q3.frames[0]));
  CHECK(q1.labels == q2.labels);
}

TEST_CASE("default layout: ground plane plus four bounded movers") {
  auto spec = synth::random_scene(7, 1024);
  CHECK(spec.total_points() == 1024);
  REQUIRE(spec.objects.size() == 5);

  const auto& ground = spec.objects[0];
  CHECK(ground.kind == SurfaceKind::plane);
  CHECK(ground.angle == 0.0);
  CHECK((ground.velocity[0] == 0.0 && ground.velocity[1] == 0.0 && ground.velocity[2] == 0.0));

  const double diam = synth::scene_diameter_estimate(spec.objects);
  for (size_t i = 1; i < spec.objects.size(); ++i) {
    const auto& o = spec.objects[i];
    const double speed = std::sqrt(o.velocity[0] * o.velocity[0] +
                                   o.velocity[1] * o.velocity[1] +
                                   o.velocity[2] * o.velocity[2]);
    CHECK(speed > 0.0);
    CHECK(speed <= 0.5 * diam);
    CHECK(std::abs(o.angle) <= 30.0 * 3.14159265358979323846 / 180.0 + 1e-12);
  }

  auto seq = synth::generate(spec);
  CHECK(seq.size() == 1024);
  // rows sorted by object id
  for (size_t i = 1; i < seq.labels.size(); ++i) CHECK(seq.labels[i] >= seq.labels[i - 1]);
}

TEST_CASE("noise applies to later frames only and differs between frames") {
  auto noisy = single_object(SurfaceKind::box, 64, 9);
  noisy.noise_sigma = 0.01;
  auto clean = noisy;
  clean.noise_sigma = 0.0;
  auto qn = synth::generate(noisy);
  auto qc = synth::generate(clean);

  CHECK(same_bits(qn.frames[0], qc.frames[0]));
  // static object: departures from frame 0 are pure noise
  double d1 = 0.0, d12 = 0.0;
  for (size_t i = 0; i < qn.frames[1].xyz.size(); ++i) {
    d1 = std::max(d1, std::abs(qn.frames[1].xyz[i] - qc.frames[1].xyz[i]));
    d12 = std::max(d12, std::abs(qn.frames[1].xyz[i] - qn.frames[2].xyz[i]));
  }
  CHECK(d1 > 0.0);
  CHECK(d1 < 0.01 * 6);
  CHECK(d12 > 0.0);  // independent draws per frame
}

TEST_CASE("dataset splits are disjoint and sized exactly") {
  auto ds = synth::dataset(11, 100, 10, 64);
  CHECK(ds.train.size() == 100);
  CHECK(ds.test.size() == 10);
  std::set<uint64_t> train_seeds, test_seeds;
  for (const auto& s : ds.train) train_seeds.insert(s.seed);
  for (const auto& s : ds.test) test_seeds.insert(s.seed);
  CHECK(train_seeds.size() == 100);
  CHECK(test_seeds.size() == 10);
  for (uint64_t s : test_seeds) CHECK(train_seeds.count(s) == 0);

  auto again = synth::dataset(11, 100, 10, 64);
  CHECK(again.train[17].seed == ds.train[17].seed);
}

TEST_CASE("invalid scenes are rejected") {
  SceneSpec empty;
  CHECK_THROWS_AS(synth::generate(empty), ArgumentError);

  auto bad_sigma = single_object(SurfaceKind::box, 8);
  bad_sigma.noise_sigma = -0.1;
  CHECK_THROWS_AS(synth::generate(bad_sigma), ArgumentError);

  auto bad_axis = single_object(SurfaceKind::box, 8);
  bad_axis.objects[0].angle = 0.5;
  bad_axis.objects[0].axis = {0, 0, 0};
  CHECK_THROWS_AS(synth::generate(bad_axis), ArgumentError);

  CHECK_THROWS_AS(synth::random_scene(1, 0), ArgumentError);
}
