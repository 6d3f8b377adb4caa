#include "fpci/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fpci/errors.hpp"
#include "fpci/rng.hpp"

namespace fpci::synth {

namespace {

using Vec3 = std::array<double, 3>;

double norm(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

// Rodrigues rotation of p about the unit axis u by the given angle.
Vec3 rotate(const Vec3& u, double angle, const Vec3& p) {
  const double c = std::cos(angle), s = std::sin(angle);
  const double dot = u[0] * p[0] + u[1] * p[1] + u[2] * p[2];
  const Vec3 cross{u[1] * p[2] - u[2] * p[1], u[2] * p[0] - u[0] * p[2],
                   u[0] * p[1] - u[1] * p[0]};
  Vec3 out;
  for (int d = 0; d < 3; ++d) out[d] = p[d] * c + cross[d] * s + u[d] * dot * (1.0 - c);
  return out;
}

Vec3 sample_surface(const ObjectSpec& obj, Rng& rng) {
  Vec3 local{0, 0, 0};
  switch (obj.kind) {
    case SurfaceKind::box: {
      const double h = obj.size / 2.0;
      const int face = static_cast<int>(rng.uniform_int(6));
      const double u = rng.uniform(-h, h), v = rng.uniform(-h, h);
      const int ax = face / 2;
      const double sign = (face % 2 == 0) ? h : -h;
      local[ax] = sign;
      local[(ax + 1) % 3] = u;
      local[(ax + 2) % 3] = v;
      break;
    }
    case SurfaceKind::sphere: {
      double n = 0.0;
      do {
        for (auto& x : local) x = rng.normal();
        n = norm(local);
      } while (n < 1e-12);
      for (auto& x : local) x *= obj.size / n;
      break;
    }
    case SurfaceKind::plane: {
      const double h = obj.size / 2.0;
      local = {rng.uniform(-h, h), rng.uniform(-h, h), 0.0};
      break;
    }
  }
  return {local[0] + obj.center[0], local[1] + obj.center[1], local[2] + obj.center[2]};
}

double bounding_radius(const ObjectSpec& o) {
  switch (o.kind) {
    case SurfaceKind::box:
      return o.size * std::sqrt(3.0) / 2.0;
    case SurfaceKind::sphere:
      return o.size;
    case SurfaceKind::plane:
      return o.size * std::sqrt(2.0) / 2.0;
  }
  return o.size;
}

}  // namespace

void SceneSpec::validate() const {
  if (objects.empty() || total_points() < 1)
    throw ArgumentError("scene: at least one point required");
  if (!(noise_sigma >= 0.0)) throw ArgumentError("scene: noise sigma must be >= 0");
  for (const auto& o : objects) {
    if (o.points < 0) throw ArgumentError("scene: negative point count");
    if (o.size <= 0.0) throw ArgumentError("scene: object size must be positive");
    for (double v : o.velocity)
      if (!std::isfinite(v)) throw ArgumentError("scene: velocity must be finite");
    if (!std::isfinite(o.angle)) throw ArgumentError("scene: angle must be finite");
    if (o.angle != 0.0 && norm(o.axis) < 1e-12)
      throw ArgumentError("scene: rotation axis has zero length");
  }
}

int Sequence::frame_index(double t) {
  for (size_t i = 0; i < kTimes.size(); ++i)
    if (kTimes[i] == t) return static_cast<int>(i);
  throw ArgumentError("sequence: no frame at t=" + std::to_string(t));
}

std::array<double, 3> rigid_at(const ObjectSpec& obj, const std::array<double, 3>& p, double t) {
  if (t == 0.0) return p;
  Vec3 q = p;
  if (obj.angle != 0.0) {
    Vec3 u = obj.axis;
    const double n = norm(u);
    for (auto& x : u) x /= n;
    const Vec3 r{p[0] - obj.center[0], p[1] - obj.center[1], p[2] - obj.center[2]};
    const Vec3 rr = rotate(u, t * obj.angle, r);
    for (int d = 0; d < 3; ++d) q[d] = obj.center[d] + rr[d];
  }
  if (obj.velocity[0] != 0.0 || obj.velocity[1] != 0.0 || obj.velocity[2] != 0.0)
    for (int d = 0; d < 3; ++d) q[d] += t * obj.velocity[d];
  return q;
}

Sequence generate(const SceneSpec& spec) {
  spec.validate();
  const int64_t l = spec.total_points();
  const int nf = static_cast<int>(Sequence::kTimes.size());

  Sequence seq;
  seq.frames.assign(static_cast<size_t>(nf), Cloud<double>(l));
  seq.gt_flow_forward = Flow<double>(l, FlowDirection::forward);
  seq.labels.resize(static_cast<size_t>(l));

  Rng rng(spec.seed);
  int64_t row = 0;
  for (size_t o = 0; o < spec.objects.size(); ++o) {
    const auto& obj = spec.objects[o];
    for (int64_t i = 0; i < obj.points; ++i, ++row) {
      const Vec3 p = sample_surface(obj, rng);
      seq.labels[static_cast<size_t>(row)] = static_cast<int32_t>(o);
      for (int f = 0; f < nf; ++f) {
        const Vec3 q = rigid_at(obj, p, Sequence::kTimes[static_cast<size_t>(f)]);
        std::copy(q.begin(), q.end(), seq.frames[static_cast<size_t>(f)].row(row));
      }
      const Vec3 q1 = rigid_at(obj, p, 1.0);
      for (int d = 0; d < 3; ++d) seq.gt_flow_forward.row(row)[d] = q1[d] - p[d];
    }
  }

  // independent per-frame sensor noise; frame 0 is the reference sample
  if (spec.noise_sigma > 0.0) {
    for (int f = 1; f < nf; ++f) {
      Rng noise(mix_seed(spec.seed, 0x6e6f697365ull + static_cast<uint64_t>(f)));
      for (auto& v : seq.frames[static_cast<size_t>(f)].xyz)
        v += noise.normal() * spec.noise_sigma;
    }
  }
  return seq;
}

double scene_diameter_estimate(const std::vector<ObjectSpec>& objects) {
  if (objects.empty()) return 0.0;
  double lo[3], hi[3];
  for (int d = 0; d < 3; ++d) {
    lo[d] = objects[0].center[d];
    hi[d] = objects[0].center[d];
  }
  for (const auto& o : objects) {
    const double r = bounding_radius(o);
    for (int d = 0; d < 3; ++d) {
      lo[d] = std::min(lo[d], o.center[d] - r);
      hi[d] = std::max(hi[d], o.center[d] + r);
    }
  }
  double s = 0;
  for (int d = 0; d < 3; ++d) s += (hi[d] - lo[d]) * (hi[d] - lo[d]);
  return std::sqrt(s);
}

SceneSpec random_scene(uint64_t seed, int64_t total_points, double noise_sigma) {
  if (total_points < 1) throw ArgumentError("random_scene: total_points must be >= 1");
  SceneSpec spec;
  spec.seed = seed;
  spec.noise_sigma = noise_sigma;

  constexpr int kMovers = 4;
  const int64_t per = std::max<int64_t>(1, total_points / (kMovers + 2));
  const int64_t plane_pts = total_points - kMovers * per;
  if (plane_pts < 1)
    throw ArgumentError("random_scene: too few points for the default layout");

  ObjectSpec ground;
  ground.kind = SurfaceKind::plane;
  ground.size = 4.0;
  ground.center = {0.0, 0.0, 0.0};
  ground.points = plane_pts;
  spec.objects.push_back(ground);

  Rng rng(mix_seed(seed, 0x7363656e65ull));
  for (int m = 0; m < kMovers; ++m) {
    ObjectSpec o;
    o.kind = rng.uniform01() < 0.5 ? SurfaceKind::box : SurfaceKind::sphere;
    o.size = rng.uniform(0.3, 0.8);
    o.center = {rng.uniform(-1.4, 1.4), rng.uniform(-1.4, 1.4), rng.uniform(0.4, 1.4)};
    o.points = per;
    spec.objects.push_back(o);
  }
  const double diam = scene_diameter_estimate(spec.objects);
  for (int m = 0; m < kMovers; ++m) {
    auto& o = spec.objects[static_cast<size_t>(1 + m)];
    Vec3 dir{};
    double n = 0.0;
    do {
      for (auto& x : dir) x = rng.normal();
      n = norm(dir);
    } while (n < 1e-12);
    const double speed = diam * rng.uniform(0.02, 0.07);
    for (int d = 0; d < 3; ++d) o.velocity[d] = dir[d] / n * speed;

    Vec3 ax{};
    do {
      for (auto& x : ax) x = rng.normal();
      n = norm(ax);
    } while (n < 1e-12);
    for (int d = 0; d < 3; ++d) o.axis[d] = ax[d] / n;
    o.angle = rng.uniform(5.0, 30.0) * (3.14159265358979323846 / 180.0);
  }
  return spec;
}

Dataset dataset(uint64_t seed, int64_t n_train, int64_t n_test, int64_t points,
                double noise_sigma) {
  if (n_train < 1 || n_test < 1) throw ArgumentError("dataset: split sizes must be >= 1");
  Dataset ds;
  ds.train.reserve(static_cast<size_t>(n_train));
  ds.test.reserve(static_cast<size_t>(n_test));
  for (int64_t i = 0; i < n_train; ++i)
    ds.train.push_back(random_scene(mix_seed(seed, static_cast<uint64_t>(i)), points, noise_sigma));
  for (int64_t j = 0; j < n_test; ++j)
    ds.test.push_back(random_scene(mix_seed(seed, static_cast<uint64_t>(n_train + j)), points,
                                   noise_sigma));
  return ds;
}

}  // namespace fpci::synth
