#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fpci/adam.hpp"
#include "fpci/losses.hpp"
#include "fpci/metrics.hpp"
#include "fpci/model.hpp"
#include "fpci/synth.hpp"

// Training loop (Adam, halving schedule, seeded shuffling, discrete t
// sampling) and the evaluation harness producing per-frame CD/EMD reports.

namespace fpci::trn {

inline double lr_at_epoch(double lr0, int64_t epoch, int64_t period) {
  if (period < 1) return lr0;
  return lr0 * std::pow(0.5, static_cast<double>(epoch / period));
}

inline const std::vector<double>& train_times() {
  static const std::vector<double> ts{0.25, 0.5, 0.75};
  return ts;
}

struct StepLog {
  int64_t epoch = 0, step = 0;
  double total = 0, intp = 0, cd1 = 0, cd2 = 0, ms = 0;
};

struct TrainSummary {
  std::vector<StepLog> curve;
  int64_t steps = 0;
};

inline std::string csv_header() { return "epoch,step,total,intp,cd1,cd2,ms"; }

inline std::string csv_line(const StepLog& s) {
  std::ostringstream os;
  os << s.epoch << ',' << s.step << ',' << s.total << ',' << s.intp << ',' << s.cd1 << ','
     << s.cd2 << ',' << s.ms;
  return os.str();
}

// Pre-generated training sample: frame pair plus ground-truth frames.
template <class R>
struct Sample {
  Cloud<R> pc0, pc1;
  std::vector<Cloud<R>> gt;  // indexed like synth::Sequence::kTimes
};

template <class R>
Sample<R> make_sample(const synth::Sequence& seq) {
  Sample<R> s;
  s.pc0 = synth::cast_cloud<R>(seq.frames.front());
  s.pc1 = synth::cast_cloud<R>(seq.frames.back());
  for (const auto& f : seq.frames) s.gt.push_back(synth::cast_cloud<R>(f));
  return s;
}

template <class R>
std::vector<Sample<R>> materialize(const std::vector<synth::SceneSpec>& specs) {
  std::vector<Sample<R>> out;
  out.reserve(specs.size());
  for (const auto& sp : specs) out.push_back(make_sample<R>(synth::generate(sp)));
  return out;
}

template <class R>
std::vector<Sample<R>> materialize(const std::vector<synth::Sequence>& seqs) {
  std::vector<Sample<R>> out;
  out.reserve(seqs.size());
  for (const auto& sq : seqs) out.push_back(make_sample<R>(sq));
  return out;
}

// One optimizer step per minibatch; gradients are averaged by scaling each
// sample's loss before backward. Non-finite losses abort with the term
// values in the message.
template <class R>
class Trainer {
 public:
  Trainer(Model<R>& model, const TrainConfig& cfg)
      : model_(model), cfg_(cfg), opt_(model.params().entries(), make_opt_config(cfg)) {
    if (cfg.batch_size < 1) throw ArgumentError("train: batch_size must be >= 1");
    if (cfg.epochs < 0) throw ArgumentError("train: epochs must be >= 0");
  }

  opt::Adam<R>& optimizer() { return opt_; }

  TrainSummary run(const std::vector<Sample<R>>& samples,
                   const std::function<void(int64_t)>& on_epoch_end = {}) {
    if (samples.empty()) throw ArgumentError("train: empty dataset");
    TrainSummary summary;
    const auto& times = train_times();

    for (int64_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
      opt_.set_lr(lr_at_epoch(cfg_.lr, epoch, cfg_.lr_halving_period_epochs));

      std::vector<size_t> order(samples.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = i;
      Rng erng(mix_seed(cfg_.seed, 0xe70c000ull + static_cast<uint64_t>(epoch)));
      erng.shuffle(order);
      std::vector<double> ts(order.size());
      for (auto& t : ts) t = times[erng.uniform_int(times.size())];

      for (size_t off = 0; off < order.size(); off += static_cast<size_t>(cfg_.batch_size)) {
        const size_t lim = std::min(order.size(), off + static_cast<size_t>(cfg_.batch_size));
        opt_.zero_grad();
        StepLog log;
        log.epoch = epoch;
        log.step = summary.steps;
        const double inv = 1.0 / static_cast<double>(lim - off);
        for (size_t s = off; s < lim; ++s) {
          const auto& sample = samples[order[s]];
          const double t = ts[s];
          Rng fuse_rng(mix_seed(cfg_.seed, 0xf05e000ull +
                                               static_cast<uint64_t>(summary.steps) * 1024 +
                                               static_cast<uint64_t>(s - off)));
          auto out = model_.forward(sample.pc0, sample.pc1, t, fuse_rng);
          const auto& gt = sample.gt[static_cast<size_t>(synth::Sequence::frame_index(t))];
          auto terms = loss::total_loss(out, gt, model_.config());
          const double tv = static_cast<double>(terms.total.value());
          if (!std::isfinite(tv)) {
            std::ostringstream os;
            os << "train: non-finite loss at epoch " << epoch << " step " << summary.steps
               << " (total=" << tv << " intp=" << terms.intp.value()
               << " cd1=" << terms.cd1.value() << " cd2=" << terms.cd2.value()
               << " ms=" << terms.ms.value() << ")";
            throw NumericError(os.str());
          }
          log.total += tv * inv;
          log.intp += static_cast<double>(terms.intp.value()) * inv;
          log.cd1 += static_cast<double>(terms.cd1.value()) * inv;
          log.cd2 += static_cast<double>(terms.cd2.value()) * inv;
          log.ms += static_cast<double>(terms.ms.value()) * inv;
          ad::scale(terms.total, static_cast<R>(inv)).backward();
        }
        opt_.step();
        ++summary.steps;
        summary.curve.push_back(log);
      }
      if (on_epoch_end) on_epoch_end(epoch);
    }
    return summary;
  }

 private:
  static typename opt::Adam<R>::Config make_opt_config(const TrainConfig& cfg) {
    typename opt::Adam<R>::Config oc;
    oc.lr = cfg.lr;
    oc.weight_decay = cfg.weight_decay;
    return oc;
  }

  Model<R>& model_;
  TrainConfig cfg_;
  opt::Adam<R> opt_;
};

// ---------------------------------------------------------------------------
// Evaluation

struct MetricsRow {
  std::string label;
  double cd = 0, emd = 0;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;  // frame_1..frame_3 then Average
  bool has_emd = true;

  const MetricsRow& average() const { return rows.back(); }
  std::string to_csv() const {
    std::ostringstream os;
    os << (has_emd ? "frame,CD,EMD\n" : "frame,CD\n");
    for (const auto& r : rows) {
      os << r.label << ',' << r.cd;
      if (has_emd) os << ',' << r.emd;
      os << '\n';
    }
    return os.str();
  }
};

// Average CD/EMD per interpolated frame slot over the given sequences; the
// fused output is compared against the noiseless-motion ground truth frame.
// Sequences are processed in parallel chunks when threads > 1; aggregation
// order is index-based, so the report is thread-count independent.
template <class R>
MetricsReport evaluate(const Model<R>& model, const std::vector<Sample<R>>& samples,
                       uint64_t fuse_seed = 0, int64_t threads = 1, bool with_emd = true) {
  if (samples.empty()) throw ArgumentError("evaluate: empty dataset");
  const auto& times = train_times();
  const size_t n = samples.size();
  std::vector<std::array<double, 3>> cds(n), emds(n);

  auto work = [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i) {
      for (size_t f = 0; f < times.size(); ++f) {
        Rng fuse_rng(mix_seed(fuse_seed, i * 16 + f));
        auto out = model.forward(samples[i].pc0, samples[i].pc1, times[f], fuse_rng);
        auto fused = Cloud<R>::from_tensor(out.fused);
        const auto& gt = samples[i].gt[static_cast<size_t>(synth::Sequence::frame_index(times[f]))];
        cds[i][f] = chamfer(fused, gt);
        emds[i][f] = with_emd ? emd(fused, gt) : 0.0;
      }
    }
  };

  const size_t nthreads = static_cast<size_t>(std::max<int64_t>(1, threads));
  if (nthreads == 1 || n < 2) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    const size_t chunk = (n + nthreads - 1) / nthreads;
    for (size_t t = 0; t < nthreads && t * chunk < n; ++t)
      pool.emplace_back(work, t * chunk, std::min(n, (t + 1) * chunk));
    for (auto& th : pool) th.join();
  }

  MetricsReport rep;
  rep.has_emd = with_emd;
  double acd = 0, aemd = 0;
  for (size_t f = 0; f < times.size(); ++f) {
    MetricsRow row;
    row.label = "frame_" + std::to_string(f + 1);
    for (size_t i = 0; i < n; ++i) {
      row.cd += cds[i][f];
      row.emd += emds[i][f];
    }
    row.cd /= static_cast<double>(n);
    row.emd /= static_cast<double>(n);
    acd += row.cd;
    aemd += row.emd;
    rep.rows.push_back(row);
  }
  rep.rows.push_back({"Average", acd / 3.0, aemd / 3.0});
  return rep;
}

// Copy-frame-0 baseline: the first frame passed off as every interpolation.
template <class R>
double baseline_copy_cd(const std::vector<Sample<R>>& samples) {
  const auto& times = train_times();
  double acc = 0;
  for (const auto& s : samples)
    for (double t : times)
      acc += chamfer(s.pc0, s.gt[static_cast<size_t>(synth::Sequence::frame_index(t))]);
  return acc / static_cast<double>(samples.size() * times.size());
}

// Resample a cloud to exactly l points: FPS subset when larger, cyclic
// duplication when smaller (with a warning).
template <class R>
Cloud<R> resample_to(const Cloud<R>& pc, int64_t l) {
  pc.require_nonempty("resample");
  if (pc.size() == l) return pc;
  Cloud<R> out(l);
  if (pc.size() > l) {
    auto idx = fps(pc, l, 0);
    for (int64_t i = 0; i < l; ++i)
      std::copy(pc.row(idx[static_cast<size_t>(i)]), pc.row(idx[static_cast<size_t>(i)]) + 3,
                out.row(i));
  } else {
    std::cerr << "warning: padding cloud from " << pc.size() << " to " << l
              << " points by duplication\n";
    for (int64_t i = 0; i < l; ++i)
      std::copy(pc.row(i % pc.size()), pc.row(i % pc.size()) + 3, out.row(i));
  }
  return out;
}

}  // namespace fpci::trn
