#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fpci/checkpoint.hpp"
#include "fpci/cloud_io.hpp"
#include "fpci/model.hpp"
#include "fpci/synth.hpp"
#include "fpci/train.hpp"
#include "fpci/verify.hpp"

using namespace fpci;

namespace {

struct GlobalOpts {
  std::string config_path;
  uint64_t seed = 0;
  int64_t threads = 1;
  std::string precision = "f32";

  ModelConfig model;
  TrainConfig train;
  double noise_sigma = 0.005;

  void load() {
    if (config_path.empty()) return;
    std::ifstream in(config_path);
    if (!in) throw IoError("cannot open config: " + config_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(config_path + ": " + e.what());
    }
    if (j.contains("model")) from_json_into(j.at("model"), model);
    if (j.contains("train")) from_json_into(j.at("train"), train);
    if (j.contains("synth") && j.at("synth").contains("noise_sigma"))
      noise_sigma = j.at("synth").at("noise_sigma").get<double>();
  }

  bool f64() const { return precision == "f64"; }
};

// "model.fpci" + ".epoch5" -> "model.epoch5.fpci"
std::string with_suffix(const std::string& path, const std::string& tag) {
  const auto dot = path.rfind('.');
  const auto slash = path.rfind('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path + tag;
  return path.substr(0, dot) + tag + path.substr(dot);
}

template <class R>
Cloud<double> to_double(const Cloud<R>& c) {
  Cloud<double> out(c.size());
  for (size_t i = 0; i < c.xyz.size(); ++i) out.xyz[i] = static_cast<double>(c.xyz[i]);
  return out;
}

int cmd_synth(const GlobalOpts& g, const std::string& out, int64_t count, int64_t points) {
  if (count < 1) throw ArgumentError("synth: count must be >= 1");
  for (int64_t i = 0; i < count; ++i) {
    auto spec =
        synth::random_scene(mix_seed(g.seed, static_cast<uint64_t>(i)), points, g.noise_sigma);
    auto seq = synth::generate(spec);
    char name[32];
    std::snprintf(name, sizeof(name), "seq_%04lld", static_cast<long long>(i));
    io::write_sequence(out + "/" + name, spec, seq);
  }
  std::cout << "wrote " << count << " sequences of " << points << " points to " << out << "\n";
  return 0;
}

template <class R>
int cmd_train(const GlobalOpts& g, const std::string& out, std::string curve_path) {
  const auto& tc = g.train;
  if (curve_path.empty()) curve_path = out + ".curve.csv";
  auto ds = synth::dataset(tc.seed, tc.n_train, tc.n_test, g.model.points, g.noise_sigma);
  auto train_samples = trn::materialize<R>(ds.train);
  auto test_samples = trn::materialize<R>(ds.test);

  Model<R> model(g.model, mix_seed(tc.seed, 0x111717));
  trn::Trainer<R> trainer(model, tc);
  const int64_t tick = std::max<int64_t>(1, tc.epochs / 10);
  auto summary = trainer.run(train_samples, [&](int64_t epoch) {
    if (tc.checkpoint_interval_epochs > 0 && (epoch + 1) % tc.checkpoint_interval_epochs == 0 &&
        epoch + 1 < tc.epochs)
      ckpt::save_params(with_suffix(out, ".epoch" + std::to_string(epoch + 1)), model.params());
    if ((epoch + 1) % tick == 0)
      std::cerr << "epoch " << (epoch + 1) << "/" << tc.epochs << " done\n";
  });
  ckpt::save_params(out, model.params());

  std::ofstream cf(curve_path, std::ios::trunc);
  if (!cf) throw IoError("cannot open for write: " + curve_path);
  cf << trn::csv_header() << "\n";
  for (const auto& log : summary.curve) cf << trn::csv_line(log) << "\n";

  // deterministic run manifest: configuration plus held-out chamfer numbers
  auto metrics = trn::evaluate(model, test_samples, tc.seed, g.threads, /*with_emd=*/false);
  nlohmann::json manifest;
  manifest["model"] = to_json(g.model);
  manifest["precision"] = g.precision;
  manifest["seed"] = tc.seed;
  manifest["steps"] = summary.steps;
  manifest["final_train_loss"] = summary.curve.empty() ? 0.0 : summary.curve.back().total;
  manifest["baseline_copy_cd"] = trn::baseline_copy_cd(test_samples);
  for (const auto& row : metrics.rows) manifest["test_cd"][row.label] = row.cd;
  const std::string mpath = out + ".manifest.json";
  std::ofstream mf(mpath, std::ios::trunc);
  if (!mf) throw IoError("cannot open for write: " + mpath);
  mf << manifest.dump(2) << "\n";

  std::cout << "steps " << summary.steps << ", final train loss "
            << (summary.curve.empty() ? 0.0 : summary.curve.back().total) << ", held-out CD "
            << metrics.average().cd << " (copy baseline " << manifest["baseline_copy_cd"].get<double>()
            << ")\ncheckpoint: " << out << "\ncurve: " << curve_path << "\n";
  return 0;
}

template <class R>
int cmd_interp(const GlobalOpts& g, const std::string& ckpt_path, const std::string& p0,
               const std::string& p1, double t, const std::string& out_path) {
  if (!(t > 0.0 && t < 1.0))
    throw ArgumentError("interp: t must lie in (0,1), got " + std::to_string(t));
  auto pc0 = trn::resample_to(io::read_cloud(p0), g.model.points);
  auto pc1 = trn::resample_to(io::read_cloud(p1), g.model.points);
  Model<R> model(g.model, 0);
  ckpt::load_params(ckpt_path, model.params());
  Rng fuse_rng(mix_seed(g.seed, 0x1f7e2));
  auto out = model.forward(synth::cast_cloud<R>(pc0), synth::cast_cloud<R>(pc1), t, fuse_rng);
  io::write_cloud(out_path, to_double(Cloud<R>::from_tensor(out.fused)));
  std::cout << "wrote " << g.model.points << " points to " << out_path << "\n";
  return 0;
}

template <class R>
int cmd_eval(const GlobalOpts& g, const std::string& ckpt_path, const std::string& data_dir,
             const std::string& out_csv, bool no_emd) {
  Model<R> model(g.model, 0);
  ckpt::load_params(ckpt_path, model.params());
  std::vector<trn::Sample<R>> samples;
  if (!data_dir.empty()) {
    samples = trn::materialize<R>(io::read_sequence_dirs(data_dir));
    for (const auto& s : samples)
      if (s.pc0.size() != g.model.points)
        throw ArgumentError("eval: dataset has " + std::to_string(s.pc0.size()) +
                            " points per frame, model expects " + std::to_string(g.model.points));
  } else {
    samples = trn::materialize<R>(
        synth::dataset(g.train.seed, 1, g.train.n_test, g.model.points, g.noise_sigma).test);
  }
  auto rep = trn::evaluate(model, samples, g.train.seed, g.threads, !no_emd);
  const auto csv = rep.to_csv();
  std::cout << csv;
  if (!out_csv.empty()) {
    std::ofstream f(out_csv, std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + out_csv);
    f << csv;
  }
  return 0;
}

int cmd_selfcheck(const GlobalOpts& g) {
  verify::SelfcheckOptions opt;
  opt.f64 = g.f64();
  opt.seed = g.seed;
  auto rep = verify::selfcheck(opt);
  std::cout << verify::format_report(rep);
  return rep.all_passed() ? 0 : 1;
}

int cmd_params(const GlobalOpts& g) {
  Model<float> model(g.model, 0);
  std::map<std::string, int64_t> groups;
  int64_t total = 0, tensors = 0;
  for (const auto& e : model.params().entries()) {
    const auto dot = e.name.find('.');
    groups[dot == std::string::npos ? e.name : e.name.substr(0, dot)] += e.tensor.numel();
    total += e.tensor.numel();
    ++tensors;
  }
  for (const auto& [name, count] : groups) std::printf("%-12s %10lld\n", name.c_str(),
                                                       static_cast<long long>(count));
  std::printf("%-12s %10lld  (%lld tensors)\n", "total", static_cast<long long>(total),
              static_cast<long long>(tensors));
  return 0;
}

template <class F>
int with_precision(bool f64, F&& f) {
  return f64 ? f(double{}) : f(float{});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fpci: point cloud frame interpolation toolkit"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "JSON config file (model/train/synth sections)");
  auto* seed_opt = app.add_option("--seed", g.seed, "master seed (overrides config)");
  auto* threads_opt = app.add_option("--threads", g.threads, "worker threads for evaluation");
  app.add_option("--precision", g.precision, "arithmetic precision")
      ->check(CLI::IsMember({"f32", "f64"}));

  std::string out, curve, ckpt, pc0, pc1, data_dir, out_csv;
  int64_t count = 8, points = 0;
  double t = 0.5;
  bool no_emd = false;

  auto* c_synth = app.add_subcommand("synth", "generate synthetic rigid-motion sequences");
  c_synth->add_option("--out", out, "output directory")->required();
  c_synth->add_option("--count", count, "number of sequences");
  c_synth->add_option("--points", points, "points per frame (default: model config)");

  auto* c_train = app.add_subcommand("train", "train a model on seeded synthetic data");
  c_train->add_option("--out", out, "checkpoint output path")->required();
  c_train->add_option("--curve", curve, "loss curve CSV path (default: <out>.curve.csv)");

  auto* c_interp = app.add_subcommand("interp", "interpolate a frame between two clouds");
  c_interp->add_option("--ckpt", ckpt, "model checkpoint")->required();
  c_interp->add_option("--pc0", pc0, "first frame (.xyz or .bin)")->required();
  c_interp->add_option("--pc1", pc1, "second frame (.xyz or .bin)")->required();
  c_interp->add_option("-t,--time", t, "interpolation time in (0,1)");
  c_interp->add_option("--out", out, "output cloud path")->required();

  auto* c_eval = app.add_subcommand("eval", "report CD/EMD metrics per interpolated frame");
  c_eval->add_option("--ckpt", ckpt, "model checkpoint")->required();
  c_eval->add_option("--data", data_dir, "directory of seq_* folders (default: synthetic test set)");
  c_eval->add_option("--out", out_csv, "also write the CSV here");
  c_eval->add_flag("--no-emd", no_emd, "skip the EMD column (exact solver is cubic)");

  auto* c_check = app.add_subcommand("selfcheck", "run the numeric verification suite");
  auto* c_params = app.add_subcommand("params", "print parameter counts");

  for (auto* sc : {c_synth, c_train, c_interp, c_eval, c_check, c_params}) sc->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    g.load();
    if (seed_opt->count()) g.train.seed = g.seed;
    else g.seed = g.train.seed;
    if (threads_opt->count()) g.train.threads = g.threads;
    else g.threads = g.train.threads;

    if (*c_synth)
      return cmd_synth(g, out, count, points > 0 ? points : g.model.points);
    if (*c_train)
      return with_precision(g.f64(), [&](auto tag) { return cmd_train<decltype(tag)>(g, out, curve); });
    if (*c_interp)
      return with_precision(g.f64(), [&](auto tag) {
        return cmd_interp<decltype(tag)>(g, ckpt, pc0, pc1, t, out);
      });
    if (*c_eval)
      return with_precision(g.f64(), [&](auto tag) {
        return cmd_eval<decltype(tag)>(g, ckpt, data_dir, out_csv, no_emd);
      });
    if (*c_check) return cmd_selfcheck(g);
    if (*c_params) return cmd_params(g);
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 1;
  }
}
