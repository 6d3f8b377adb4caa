#include "fpci/verify.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fpci/checkpoint.hpp"
#include "fpci/losses.hpp"
#include "fpci/model.hpp"
#include "fpci/synth.hpp"

namespace fpci::verify {
namespace {

struct GradTols {
  double elementary, model, h, atol;
};

// f64 supports tight per-element central differences directly. In f32 the
// per-element signal drowns in forward rounding noise, so those runs switch
// to directional derivatives (grad_check_directional); h there is the
// directional step.
GradTols tols_for(bool f64) {
  if (f64) return {1e-5, 1e-4, 1e-5, 1e-9};
  return {2e-2, 5e-2, 1e-3, 2e-3};
}

template <class R>
std::vector<typename nn::ParamStore<R>::Entry> as_entries(
    const std::vector<ad::Tensor<R>>& leaves) {
  std::vector<typename nn::ParamStore<R>::Entry> entries;
  for (size_t i = 0; i < leaves.size(); ++i)
    entries.push_back({"leaf" + std::to_string(i), leaves[i]});
  return entries;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

// local copy so the oracles below do not lean on library internals
template <class R>
double dist3(const R* a, const R* b) {
  double s = 0;
  for (int d = 0; d < 3; ++d) {
    const double t = static_cast<double>(a[d]) - static_cast<double>(b[d]);
    s += t * t;
  }
  return std::sqrt(s);
}

CheckItem grad_item(const std::string& name, const GradCheckReport& rep, double tol,
                    bool per_element) {
  CheckItem it{name, rep.ok(tol), ""};
  std::ostringstream os;
  os << "worst_rel " << fmt(rep.worst_rel) << " (tol " << fmt(tol) << ", " << rep.checked
     << (per_element ? " elements" : " directions");
  if (!rep.worst_param.empty()) os << ", worst at " << rep.worst_param;
  os << ")";
  it.detail = os.str();
  return it;
}

template <class R>
ModelConfig toy_config() {
  ModelConfig c;
  c.points = 32;
  c.divisors = {1, 4, 32};
  c.channels = {6, 8, 10};
  c.attn_dim = 8;
  c.knn_k = 4;
  c.cost_channels = 6;
  c.predictor_width = 8;
  c.refine_channels = 4;
  c.refine_pt_k = 4;
  c.fusion_k = 4;
  return c;
}

template <class R>
Cloud<R> random_cloud(int64_t n, Rng& rng, double scale = 1.0) {
  Cloud<R> c(n);
  for (auto& v : c.xyz) v = static_cast<R>(rng.normal() * scale);
  return c;
}

// Zero-initialized prediction heads block gradient flow; nudge them so the
// checks exercise every path.
template <class R>
void activate_heads(nn::ParamStore<R>& ps) {
  for (const auto& e : ps.entries()) {
    bool zero = true;
    for (R v : e.tensor.values()) zero &= (v == R(0));
    if (!zero) continue;
    Rng r(fnv1a(e.name));
    auto t = e.tensor;
    for (auto& v : t.values()) v = static_cast<R>(r.normal() * 0.05);
  }
}

// One expression touching every differentiable op in the engine.
template <class R>
CheckItem check_elementary_ops(uint64_t seed, const GradTols& tl) {
  using T = ad::Tensor<R>;
  Rng rng(mix_seed(seed, 0x09501));
  auto leaf = [&](ad::Shape s, double scale, double offset) {
    std::vector<R> v(static_cast<size_t>(ad::shape_numel(s)));
    for (auto& x : v) x = static_cast<R>(rng.normal() * scale + offset);
    return T::leaf(s, std::move(v), true);
  };
  auto a = leaf({4, 3}, 0.8, 0.0);
  auto b = leaf({4, 3}, 0.8, 0.0);
  auto w = leaf({3, 4}, 0.5, 0.0);
  auto vrow = leaf({4}, 0.3, 0.0);
  auto vrow3 = leaf({3}, 0.3, 0.0);
  auto wraw = leaf({12}, 0.6, 0.0);
  auto gamma = leaf({12}, 0.1, 1.0);
  auto beta = leaf({12}, 0.1, 0.0);
  auto pos = leaf({4, 3}, 0.0, 2.0);  // strictly positive: sqrt/reciprocal domain

  auto loss_fn = [&] {
    auto l1 = ad::add_rowvec(ad::matmul(a, w), vrow);
    auto acts = ad::concat_cols<R>(
        {ad::leaky_relu(l1, 0.1), ad::relu(l1), ad::sigmoid(ad::scale(l1, 0.5))});
    auto ln = ad::layer_norm_rows(acts, gamma, beta);
    auto sm = ad::softmax_lastdim(ln);
    auto g = ad::gather_rows(sm, {2, 0, 3, 1, 2, 0});
    auto grouped = ad::add(ad::rowgroup_max(g, 3), ad::rowgroup_sum(ad::rowgroup_softmax(g, 3), 3));
    auto pd = ad::pairwise_dist(a, b);
    auto nearest = ad::min_over_rows(pd);
    auto rooted = ad::sqrt(ad::add(ad::square(nearest), ad::reciprocal(ad::l2norm_rows(pos))));
    auto mixed = ad::mul(rooted, nearest);
    auto gram = ad::matmul(b, ad::transpose_last2(a));  // 4x4
    auto wts = ad::softmax_lastdim(ad::reshape(wraw, {6, 2}));
    auto picked = ad::gather_weighted_sum(gram, {0, 2, 1, 3, 2, 0, 1, 0, 3, 1, 2, 3}, wts);
    auto lin = ad::linear(picked, ad::transpose_last2(w), vrow3);
    auto shrunk = ad::sub(picked, ad::scale(picked, 0.25));  // shared-subgraph accumulation
    return ad::add(ad::add(ad::reduce_sum(mixed), ad::reduce_mean(grouped)),
                   ad::add(ad::sum_squares(shrunk), ad::reduce_mean(lin)));
  };

  const std::vector<ad::Tensor<R>> leaves{a, b, w, vrow, vrow3, wraw, gamma, beta, pos};
  const bool per_element = std::is_same_v<R, double>;
  auto rep = per_element
                 ? grad_check_leaves<R>(loss_fn, leaves, 0, tl.h, seed, tl.atol)
                 : grad_check_directional<R>(loss_fn, as_entries(leaves), 12, tl.h, seed, tl.atol);
  return grad_item("grad/elementary-ops", rep, tl.elementary, per_element);
}

template <class R>
CheckItem check_ms_block(uint64_t seed, const GradTols& tl) {
  using T = ad::Tensor<R>;
  nn::ParamStore<R> ps(mix_seed(seed, 0x0b10c));
  auto block = msf::MSBlock<R>::create(ps, "ms", 6, 8);
  Rng rng(mix_seed(seed, 0x0b10d));
  auto leaf = [&](ad::Shape s) {
    std::vector<R> v(static_cast<size_t>(ad::shape_numel(s)));
    for (auto& x : v) x = static_cast<R>(rng.normal() * 0.5);
    return T::leaf(s, std::move(v), true);
  };
  auto f0 = leaf({8, 6});
  auto f1 = leaf({8, 6});
  auto cm = msf::coordinate_map<R>(8);

  auto loss_fn = [&] {
    auto out = block.forward(f0, f1, cm);
    auto s = ad::add(ad::sum_squares(out.m_fwd), ad::sum_squares(out.m_bwd));
    s = ad::add(s, ad::add(ad::sum_squares(out.s_fwd), ad::sum_squares(out.s_bwd)));
    return ad::add(s, ad::add(ad::sum_squares(out.f0_next), ad::sum_squares(out.f1_next)));
  };
  auto all = ps.entries();
  for (const auto& e : as_entries<R>({f0, f1})) all.push_back(e);
  const bool per_element = std::is_same_v<R, double>;
  auto rep = per_element ? grad_check_params<R>(loss_fn, all, 0, tl.h, seed, tl.atol)
                         : grad_check_directional<R>(loss_fn, all, 8, tl.h, seed, tl.atol);
  return grad_item("grad/ms-block", rep, tl.model, per_element);
}

template <class R>
CheckItem check_full_objective(uint64_t seed, const GradTols& tl) {
  auto cfg = toy_config<R>();
  // constants picked so none of the f64 samples straddles a leaky-relu kink
  Model<R> model(cfg, mix_seed(seed, 0x0f014));
  activate_heads(model.params());
  Rng rng(mix_seed(seed, 0x0f015));
  auto pc0 = random_cloud<R>(32, rng, 0.8);
  auto pc1 = random_cloud<R>(32, rng, 0.8);
  auto gt = random_cloud<R>(32, rng, 0.8);

  auto loss_fn = [&] {
    Rng fuse_rng(55);
    auto out = model.forward(pc0, pc1, 0.5, fuse_rng);
    return loss::total_loss(out, gt, cfg).total;
  };
  const bool per_element = std::is_same_v<R, double>;
  auto rep = per_element
                 ? grad_check_params<R>(loss_fn, model.params().entries(), 2, tl.h,
                                        mix_seed(seed, 0x0f016), tl.atol)
                 : grad_check_directional<R>(loss_fn, model.params().entries(), 8, tl.h, seed,
                                             tl.atol);
  return grad_item("grad/full-objective", rep, tl.model, per_element);
}

template <class R>
CheckItem check_emd_oracle(uint64_t seed) {
  CheckItem it{"metrics/emd-oracle", true, ""};
  double worst = 0.0;
  for (int64_t n : {4, 8, 16, 32, 64}) {
    for (int rep = 0; rep < 3; ++rep) {
      Rng rng(mix_seed(seed, 0xe3d000 + static_cast<uint64_t>(n) * 8 + rep));
      auto x = random_cloud<R>(n, rng);
      auto y = random_cloud<R>(n, rng);
      const double exact = emd_exact(x, y).total_cost;
      const double approx = emd_approx(x, y);
      worst = std::max(worst, std::abs(approx - exact) / std::max(exact, 1e-12));
    }
  }
  // factorial brute force pins the exact solver itself
  double worst_bf = 0.0;
  for (int rep = 0; rep < 4; ++rep) {
    Rng rng(mix_seed(seed, 0xbf000 + rep));
    const int64_t n = 4 + static_cast<int64_t>(rng.uniform_int(3));  // 4..6
    auto x = random_cloud<R>(n, rng);
    auto y = random_cloud<R>(n, rng);
    std::vector<int64_t> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double c = 0;
      for (int64_t i = 0; i < n; ++i)
        c += dist3(x.row(i), y.row(perm[static_cast<size_t>(i)]));
      best = std::min(best, c / static_cast<double>(n));
    } while (std::next_permutation(perm.begin(), perm.end()));
    worst_bf = std::max(worst_bf, std::abs(emd_exact(x, y).total_cost - best));
  }
  it.passed = worst <= 0.01 && worst_bf <= 1e-9;
  it.detail = "approx vs exact worst_rel " + fmt(worst) + " (tol 0.01), exact vs brute force " +
              fmt(worst_bf);
  return it;
}

template <class R>
CheckItem check_chamfer(uint64_t seed) {
  // the oracle accumulates in double; an f32 forward pass rounds each term
  const double gap_tol = std::is_same_v<R, double> ? 1e-9 : 1e-5;
  CheckItem it{"metrics/chamfer", true, ""};
  Rng rng(mix_seed(seed, 0xcd001));
  auto x = random_cloud<R>(64, rng);
  const bool self_zero = chamfer(x, x) == 0.0;

  Cloud<R> p(1), q(1);
  p.xyz = {0, 0, 0};
  q.xyz = {1, 0, 0};
  const bool singleton = chamfer(p, q) == 2.0;

  // independent loop-based oracle
  double worst = 0.0;
  for (int rep = 0; rep < 3; ++rep) {
    Rng r2(mix_seed(seed, 0xcd010 + rep));
    auto a = random_cloud<R>(128, r2);
    auto b = random_cloud<R>(128, r2);
    double fwd = 0, bwd = 0;
    for (int64_t i = 0; i < a.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int64_t j = 0; j < b.size(); ++j) best = std::min(best, dist3(a.row(i), b.row(j)));
      fwd += best;
    }
    for (int64_t j = 0; j < b.size(); ++j) {
      double best = std::numeric_limits<double>::infinity();
      for (int64_t i = 0; i < a.size(); ++i) best = std::min(best, dist3(a.row(i), b.row(j)));
      bwd += best;
    }
    const double oracle = fwd / static_cast<double>(a.size()) + bwd / static_cast<double>(b.size());
    worst = std::max(worst, std::abs(chamfer(a, b) - oracle));
  }
  it.passed = self_zero && singleton && worst <= gap_tol;
  it.detail = std::string("self-distance zero: ") + (self_zero ? "yes" : "NO") +
              ", unit offset 2.0: " + (singleton ? "yes" : "NO") + ", brute-force gap " +
              fmt(worst) + " (tol " + fmt(gap_tol) + ")";
  return it;
}

template <class R>
CheckItem check_warp(uint64_t seed) {
  CheckItem it{"kernels/warp", true, ""};
  Rng rng(mix_seed(seed, 0x3a90));
  auto pc = random_cloud<R>(32, rng);
  Flow<R> zero(32, FlowDirection::forward);
  std::fill(zero.vec.begin(), zero.vec.end(), R(0));
  Flow<R> sf(32, FlowDirection::forward);
  for (auto& v : sf.vec) v = static_cast<R>(rng.normal() * 0.2);
  Flow<R> sb = sf;
  sb.direction = FlowDirection::backward;

  auto id0 = warp(pc, zero, 0.37);
  const bool zero_id = std::memcmp(id0.xyz.data(), pc.xyz.data(), pc.xyz.size() * sizeof(R)) == 0;
  auto f0 = warp(pc, sf, 0.0);
  auto b1 = warp(pc, sb, 1.0);
  const bool end_id =
      std::memcmp(f0.xyz.data(), pc.xyz.data(), pc.xyz.size() * sizeof(R)) == 0 &&
      std::memcmp(b1.xyz.data(), pc.xyz.data(), pc.xyz.size() * sizeof(R)) == 0;

  // p + t*f, evaluated independently, must match to the last bit of R
  bool affine = true;
  for (double t : {0.25, 0.5, 0.9}) {
    auto wt = warp(pc, sf, t);
    for (size_t i = 0; i < pc.xyz.size() && affine; ++i)
      affine = wt.xyz[i] == pc.xyz[i] + static_cast<R>(t) * sf.vec[i];
  }
  it.passed = zero_id && end_id && affine;
  it.detail = std::string("zero-flow bitwise: ") + (zero_id ? "yes" : "NO") +
              ", endpoint identity: " + (end_id ? "yes" : "NO") +
              ", affine in t: " + (affine ? "yes" : "NO");
  return it;
}

template <class R>
CheckItem check_fps(uint64_t seed) {
  CheckItem it{"kernels/fps", true, ""};
  int mismatches = 0;
  for (int rep = 0; rep < 10; ++rep) {
    Rng rng(mix_seed(seed, 0xf95000 + rep));
    const int64_t n = 16 + static_cast<int64_t>(rng.uniform_int(113));  // 16..128
    const int64_t m = 1 + static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(n)));
    auto pc = random_cloud<R>(n, rng);
    auto got = fps(pc, m, 0);

    // exhaustive greedy reselection
    std::vector<int64_t> want{0};
    std::vector<char> used(static_cast<size_t>(n), 0);
    used[0] = 1;
    while (static_cast<int64_t>(want.size()) < m) {
      int64_t best = -1;
      double best_d = -1;
      for (int64_t i = 0; i < n; ++i) {
        if (used[static_cast<size_t>(i)]) continue;
        double d = std::numeric_limits<double>::infinity();
        for (int64_t s : want) d = std::min(d, dist3(pc.row(i), pc.row(s)));
        if (d > best_d) {
          best_d = d;
          best = i;
        }
      }
      used[static_cast<size_t>(best)] = 1;
      want.push_back(best);
    }
    if (got != want) ++mismatches;
  }
  it.passed = mismatches == 0;
  it.detail = std::to_string(10 - mismatches) + "/10 cases match exhaustive greedy selection";
  return it;
}

template <class R>
CheckItem check_checkpoint(uint64_t seed, bool inject_fault) {
  CheckItem it{"persistence/checkpoint", true, ""};
  const auto path =
      (std::filesystem::temp_directory_path() / "fpci_selfcheck_ckpt.fpci").string();
  auto cfg = toy_config<R>();
  Model<R> a(cfg, mix_seed(seed, 0xcc01));
  Model<R> b(cfg, mix_seed(seed, 0xcc02));
  ckpt::save_params(path, a.params());

  if (inject_fault) {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(24);
    char byte;
    f.seekg(24);
    f.read(&byte, 1);
    byte ^= 0x40;
    f.seekp(24);
    f.write(&byte, 1);
  }

  bool roundtrip = false;
  std::string note;
  try {
    ckpt::load_params(path, b.params());
    roundtrip = true;
    // the file stores f32 payloads, so compare the f32 image of each value
    for (size_t i = 0; i < a.params().entries().size() && roundtrip; ++i) {
      const auto& ta = a.params().entries()[i].tensor.values();
      const auto& tb = b.params().entries()[i].tensor.values();
      for (size_t j = 0; j < ta.size() && roundtrip; ++j)
        roundtrip = static_cast<float>(ta[j]) == static_cast<float>(tb[j]);
    }
    if (!roundtrip) note = "round-trip values differ";
  } catch (const std::exception& e) {
    note = e.what();
  }

  // a flipped bit in an otherwise good file must be rejected
  bool crc_rejects = false;
  if (!inject_fault) {
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    bytes[bytes.size() / 3] ^= 0x04;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    try {
      ckpt::load_params(path, b.params());
    } catch (const FormatError&) {
      crc_rejects = true;
    }
  }

  std::remove(path.c_str());
  it.passed = roundtrip && (inject_fault || crc_rejects);
  it.detail = inject_fault
                  ? (roundtrip ? "injected fault was NOT caught" : "injected fault caught: " + note)
                  : std::string("bitwise round-trip: ") + (roundtrip ? "yes" : "NO " + note) +
                        ", flipped bit rejected: " + (crc_rejects ? "yes" : "NO");
  return it;
}

template <class R>
SelfcheckReport run_checks(const SelfcheckOptions& opt) {
  const auto tl = tols_for(opt.f64);
  SelfcheckReport rep;
  rep.items.push_back(check_elementary_ops<R>(opt.seed, tl));
  rep.items.push_back(check_ms_block<R>(opt.seed, tl));
  rep.items.push_back(check_full_objective<R>(opt.seed, tl));
  rep.items.push_back(check_emd_oracle<R>(opt.seed));
  rep.items.push_back(check_chamfer<R>(opt.seed));
  rep.items.push_back(check_warp<R>(opt.seed));
  rep.items.push_back(check_fps<R>(opt.seed));
  rep.items.push_back(check_checkpoint<R>(opt.seed, opt.inject_checkpoint_fault));
  return rep;
}

}  // namespace

SelfcheckReport selfcheck(const SelfcheckOptions& opt) {
  return opt.f64 ? run_checks<double>(opt) : run_checks<float>(opt);
}

std::string format_report(const SelfcheckReport& rep) {
  std::ostringstream os;
  size_t width = 0;
  for (const auto& it : rep.items) width = std::max(width, it.name.size());
  for (const auto& it : rep.items) {
    os << (it.passed ? "[PASS] " : "[FAIL] ") << it.name
       << std::string(width - it.name.size() + 2, ' ') << it.detail << "\n";
  }
  os << (rep.all_passed() ? "selfcheck: all checks passed" : "selfcheck: FAILURES present")
     << "\n";
  return os.str();
}

}  // namespace fpci::verify
