// _fpci: thin numpy-facing bindings over the C++ core. Clouds cross the
// boundary as [N,3] float64 arrays; the interpolation engine itself runs in
// float32, matching the CLI default.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpci/checkpoint.hpp"
#include "fpci/kernels.hpp"
#include "fpci/metrics.hpp"
#include "fpci/model.hpp"
#include "fpci/msformer.hpp"
#include "fpci/rng.hpp"
#include "fpci/synth.hpp"
#include "fpci/train.hpp"
#include "fpci/verify.hpp"

namespace py = pybind11;
using namespace fpci;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Cloud<double> cloud_from(const DArray& a, const char* who) {
  if (a.ndim() != 2 || a.shape(1) != 3)
    throw py::value_error(std::string(who) + ": expected an [N,3] array");
  Cloud<double> c(a.shape(0));
  std::memcpy(c.xyz.data(), a.data(), c.xyz.size() * sizeof(double));
  return c;
}

template <class R>
py::array_t<double> array_from(const Cloud<R>& c) {
  py::array_t<double> out({c.size(), static_cast<int64_t>(3)});
  double* dst = out.mutable_data();
  for (size_t i = 0; i < c.xyz.size(); ++i) dst[i] = static_cast<double>(c.xyz[i]);
  return out;
}

ModelConfig config_from_json(const std::string& text) {
  ModelConfig cfg;
  if (!text.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw py::value_error(std::string("config: ") + e.what());
    }
    from_json_into(j, cfg);
  }
  cfg.validate();
  return cfg;
}

// float32 interpolation model plus its config, with checkpoint IO
class Engine {
 public:
  Engine(const std::string& config_json, uint64_t seed)
      : cfg_(config_from_json(config_json)), model_(cfg_, seed) {}

  py::array_t<double> interpolate(const DArray& pc0, const DArray& pc1, double t,
                                  uint64_t fuse_seed) const {
    if (!(t > 0.0 && t < 1.0)) throw py::value_error("interpolate: t must lie in (0,1)");
    auto a = trn::resample_to(synth::cast_cloud<float>(cloud_from(pc0, "pc0")), cfg_.points);
    auto b = trn::resample_to(synth::cast_cloud<float>(cloud_from(pc1, "pc1")), cfg_.points);
    Rng fuse_rng(mix_seed(fuse_seed, 0x1f7e2));  // same stream as the CLI
    auto out = model_.forward(a, b, t, fuse_rng);
    return array_from(Cloud<float>::from_tensor(out.fused));
  }

  void load(const std::string& path) { ckpt::load_params(path, model_.params()); }
  void save(const std::string& path) const { ckpt::save_params(path, model_.params()); }

  int64_t points() const { return cfg_.points; }
  int64_t param_count() const { return model_.params().total_numel(); }

 private:
  ModelConfig cfg_;
  Model<float> model_;
};

}  // namespace

PYBIND11_MODULE(_fpci, m) {
  m.doc() = "point cloud frame interpolation core";

  m.def(
      "chamfer",
      [](const DArray& x, const DArray& y) {
        return chamfer(cloud_from(x, "x"), cloud_from(y, "y"));
      },
      py::arg("x"), py::arg("y"),
      "Symmetric Chamfer distance (mean nearest-neighbor distance, both directions).");

  m.def(
      "emd",
      [](const DArray& x, const DArray& y) { return emd(cloud_from(x, "x"), cloud_from(y, "y")); },
      py::arg("x"), py::arg("y"),
      "Earth mover's distance: exact assignment up to N=1024, auction beyond.");

  m.def(
      "emd_exact",
      [](const DArray& x, const DArray& y) {
        return emd_exact(cloud_from(x, "x"), cloud_from(y, "y")).total_cost;
      },
      py::arg("x"), py::arg("y"));

  m.def(
      "fps",
      [](const DArray& points, int64_t m, int64_t start_index) {
        auto idx = fps(cloud_from(points, "points"), m, start_index);
        py::array_t<int64_t> out(static_cast<int64_t>(idx.size()));
        std::memcpy(out.mutable_data(), idx.data(), idx.size() * sizeof(int64_t));
        return out;
      },
      py::arg("points"), py::arg("m"), py::arg("start_index") = 0,
      "Greedy farthest point sampling; returns m point indices.");

  m.def(
      "knn",
      [](const DArray& query, const DArray& reference, int64_t k) {
        auto nb = knn(cloud_from(query, "query"), cloud_from(reference, "reference"), k);
        py::array_t<int64_t> idx({nb.q, nb.k});
        py::array_t<double> dist({nb.q, nb.k});
        std::memcpy(idx.mutable_data(), nb.indices.data(), nb.indices.size() * sizeof(int64_t));
        std::memcpy(dist.mutable_data(), nb.distances.data(),
                    nb.distances.size() * sizeof(double));
        return py::make_tuple(idx, dist);
      },
      py::arg("query"), py::arg("reference"), py::arg("k"),
      "Exact k nearest neighbors; returns (indices, distances), ascending per row.");

  m.def(
      "warp",
      [](const DArray& points, const DArray& flow, double t, const std::string& direction) {
        auto pc = cloud_from(points, "points");
        Flow<double> f(pc.size(), direction == "backward" ? FlowDirection::backward
                                                          : FlowDirection::forward);
        if (direction != "forward" && direction != "backward")
          throw py::value_error("warp: direction must be 'forward' or 'backward'");
        auto fa = cloud_from(flow, "flow");
        if (fa.size() != pc.size()) throw py::value_error("warp: points/flow row mismatch");
        f.vec = fa.xyz;
        return array_from(warp(pc, f, t));
      },
      py::arg("points"), py::arg("flow"), py::arg("t"), py::arg("direction") = "forward",
      "Displace points along a flow: forward flows scale by t, backward by 1-t.");

  m.def(
      "coordinate_map",
      [](int64_t l) {
        auto t = msf::coordinate_map<double>(l);
        Cloud<double> c;
        c.xyz = t.values();
        return array_from(c);
      },
      py::arg("l"), "Index-ramp coordinate map used by the motion head.");

  m.def(
      "generate_sequence",
      [](uint64_t seed, int64_t points, double noise_sigma) {
        auto seq = synth::generate(synth::random_scene(seed, points, noise_sigma));
        py::list frames;
        for (const auto& f : seq.frames) frames.append(array_from(f));
        py::list times;
        for (double t : synth::Sequence::kTimes) times.append(t);
        py::dict out;
        out["frames"] = frames;
        out["times"] = times;
        return out;
      },
      py::arg("seed"), py::arg("points") = 1024, py::arg("noise_sigma") = 0.005,
      "Seeded rigid-body scene: five frames at t = 0, 0.25, 0.5, 0.75, 1.");

  m.def(
      "self_check",
      [](bool f64, uint64_t seed) {
        verify::SelfcheckOptions opt;
        opt.f64 = f64;
        opt.seed = seed;
        auto rep = verify::selfcheck(opt);
        return py::make_tuple(rep.all_passed(), verify::format_report(rep));
      },
      py::arg("f64") = false, py::arg("seed") = 0,
      "Run the built-in verification suite; returns (ok, report).");

  py::class_<Engine>(m, "Engine")
      .def(py::init<const std::string&, uint64_t>(), py::arg("config_json") = std::string(),
           py::arg("seed") = 0)
      .def("interpolate", &Engine::interpolate, py::arg("pc0"), py::arg("pc1"),
           py::arg("t") = 0.5, py::arg("fuse_seed") = 0,
           "Synthesize the frame at time t in (0,1); inputs are resampled to the "
           "configured point count.")
      .def("load", &Engine::load, py::arg("path"))
      .def("save", &Engine::save, py::arg("path"))
      .def_property_readonly("points", &Engine::points)
      .def_property_readonly("param_count", &Engine::param_count);
}
