#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fpci/config.hpp"
#include "fpci/kernels.hpp"
#include "fpci/layers.hpp"
#include "fpci/msformer.hpp"
#include "fpci/point_cloud.hpp"

// Pyramid motion-structure estimation: per-point encoding at full
// resolution, set-abstraction downsampling to the coarser levels, a
// motion-structure transformer block per level, and coarse-to-fine flow
// prediction (cost volume -> predictor -> motion compensation -> flow head)
// run once per direction with shared weights.

namespace fpci::pyr {

inline constexpr double kFlowGain = 4.0;

template <class R>
std::vector<int64_t> repeat_indices(int64_t rows, int64_t k) {
  std::vector<int64_t> idx(static_cast<size_t>(rows * k));
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < k; ++j) idx[static_cast<size_t>(i * k + j)] = i;
  return idx;
}

// Local correlation between a (possibly warped) source cloud and the target:
// per neighbor concat(feature difference, relative coords, distance) through
// a small MLP, max-pooled over the neighborhood.
template <class R>
ad::Tensor<R> cost_volume(const ad::Tensor<R>& src_warped, const Cloud<R>& dst,
                          const ad::Tensor<R>& f_src, const ad::Tensor<R>& f_dst, int64_t k,
                          const nn::Mlp<R>& mlp) {
  if (src_warped.rows() != f_src.rows())
    throw ShapeError("cost_volume: source cloud/feature row mismatch");
  if (dst.size() != f_dst.rows())
    throw ShapeError("cost_volume: target cloud/feature row mismatch");
  if (k > dst.size()) throw ArgumentError("cost_volume: k exceeds target cloud size");
  const int64_t ls = src_warped.rows();
  const auto nbr = knn(Cloud<R>::from_tensor(src_warped), dst, k);
  auto rep = repeat_indices<R>(ls, k);
  auto dst_t = dst.tensor();

  auto rel = ad::sub(ad::gather_rows(dst_t, nbr.indices), ad::gather_rows(src_warped, rep));
  auto dist = ad::l2norm_rows(rel);
  auto fdiff = ad::sub(ad::gather_rows(f_dst, nbr.indices), ad::gather_rows(f_src, rep));
  auto per_neighbor = ad::concat_cols<R>({fdiff, rel, dist});
  return ad::rowgroup_max(mlp(per_neighbor), k);
}

// Residual correction of predictor motion features, gated by structure:
// out = mf + OffsetHead(concat(sigmoid(MLP3(S)), leakyrelu(conv(mf)))).
template <class R>
struct MotionCompensation {
  nn::Mlp<R> structure_mlp;  // 3 layers, sigmoid applied on top
  nn::Linear<R> motion_conv;
  nn::Mlp<R> offset_head;  // 2 layers, zero-init output

  static MotionCompensation create(nn::ParamStore<R>& ps, const std::string& name,
                                   int64_t s_dim, int64_t mf_dim) {
    MotionCompensation mc;
    mc.structure_mlp = nn::Mlp<R>::create(ps, name + ".smlp", {s_dim, mf_dim, mf_dim, mf_dim});
    mc.motion_conv = nn::Linear<R>::create(ps, name + ".mconv", mf_dim, mf_dim);
    mc.offset_head = nn::Mlp<R>::create(ps, name + ".offset", {2 * mf_dim, mf_dim, mf_dim},
                                        false, nn::Init::zeros);
    return mc;
  }

  ad::Tensor<R> operator()(const ad::Tensor<R>& mf, const ad::Tensor<R>& s) const {
    if (mf.rows() != s.rows()) throw ShapeError("motion_compensation: row mismatch");
    auto gate = ad::sigmoid(structure_mlp(s));
    auto m = ad::leaky_relu(motion_conv(mf), nn::kLeakySlope);
    auto offset = offset_head(ad::concat_cols<R>({gate, m}));
    return ad::add(mf, offset);
  }
};

template <class R>
struct LevelState {
  Cloud<R> pc0, pc1;
  ad::Tensor<R> f0, f1;
  ad::Tensor<R> m_fwd, m_bwd, s_fwd, s_bwd;
  ad::Tensor<R> mf_fwd, mf_bwd;
  ad::Tensor<R> sf_fwd, sf_bwd;
  ad::Tensor<R> est0_t, est1_t;  // warped estimates of the time-t frame
};

template <class R>
struct PyramidState {
  std::vector<LevelState<R>> levels;  // [0] is full resolution
  const ad::Tensor<R>& forward_est() const { return levels[0].est0_t; }
  const ad::Tensor<R>& backward_est() const { return levels[0].est1_t; }
};

template <class R>
class PyramidNet {
 public:
  PyramidNet(nn::ParamStore<R>& ps, const ModelConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const int64_t nl = cfg.level_count();
    encode_ = nn::Mlp<R>::create(ps, "pyramid.encode",
                                 {3, cfg.channels[0], cfg.channels[0], cfg.channels[0]});
    levels_.resize(static_cast<size_t>(nl));
    for (int64_t l = 0; l < nl; ++l) {
      auto& lv = levels_[static_cast<size_t>(l)];
      const std::string base = "pyramid.stage" + std::to_string(l + 1);
      const int64_t c = cfg.channels[static_cast<size_t>(l)];
      if (l > 0) {
        const int64_t c_prev = cfg.channels[static_cast<size_t>(l - 1)];
        lv.sa = nn::Mlp<R>::create(ps, base + ".sa", {c_prev + 3, c, c});
      }
      lv.ms = msf::MSBlock<R>::create(ps, base + ".ms", c, cfg.attn_dim, cfg.structure_branch);
      lv.cost = nn::Mlp<R>::create(ps, base + ".cost",
                                   {c + 4, cfg.cost_channels, cfg.cost_channels});
      const int64_t s_dim = lv.ms.structure_dim(c);
      const bool coarsest = (l == nl - 1);
      const bool use_ms_feats = (l > 0);
      int64_t in = c + cfg.cost_channels;
      if (use_ms_feats) in += cfg.attn_dim + s_dim;
      if (!coarsest) in += 3 + cfg.predictor_width;  // upsampled flow + motion feats
      const int64_t w = cfg.predictor_width;
      lv.pred = nn::Mlp<R>::create(ps, base + ".pred", {in, w, w, w});
      if (cfg.motion_compensation)
        lv.mc = MotionCompensation<R>::create(ps, base + ".mc", s_dim, w);
      lv.flow_head = nn::Linear<R>::create(ps, base + ".flow", w, 3, false, nn::Init::zeros);
    }
  }

  const ModelConfig& config() const { return cfg_; }

  // Clamp neighborhood sizes to the reference cloud so toy levels (down to a
  // single point) stay valid.
  static int64_t clamp_k(int64_t k, int64_t ref) { return std::min(k, ref); }

  PyramidState<R> forward(const Cloud<R>& pc0, const Cloud<R>& pc1, double t) const {
    if (pc0.size() != pc1.size())
      throw ShapeError("pyramid_forward: frame sizes differ");
    if (pc0.size() != cfg_.points)
      throw ShapeError("pyramid_forward: expected " + std::to_string(cfg_.points) +
                       " points, got " + std::to_string(pc0.size()));
    if (!(t > 0.0 && t < 1.0)) throw ArgumentError("pyramid_forward: t must lie in (0,1)");

    const int64_t nl = cfg_.level_count();
    PyramidState<R> st;
    st.levels.resize(static_cast<size_t>(nl));

    // feature pyramid, fine to coarse
    ad::Tensor<R> feed0, feed1;  // features entering the next downsample
    for (int64_t l = 0; l < nl; ++l) {
      auto& lvl = st.levels[static_cast<size_t>(l)];
      const auto& lw = levels_[static_cast<size_t>(l)];
      if (l == 0) {
        lvl.pc0 = pc0;
        lvl.pc1 = pc1;
        lvl.f0 = encode_(pc0.tensor());
        lvl.f1 = encode_(pc1.tensor());
      } else {
        const auto& prev = st.levels[static_cast<size_t>(l - 1)];
        const int64_t target = cfg_.level_size(l);
        lvl.pc0 = subsample(prev.pc0, target);
        lvl.pc1 = subsample(prev.pc1, target);
        lvl.f0 = set_abstraction(prev.pc0, feed0, lvl.pc0, lw.sa);
        lvl.f1 = set_abstraction(prev.pc1, feed1, lvl.pc1, lw.sa);
      }
      auto cm = msf::coordinate_map<R>(lvl.pc0.size());
      auto ms = lw.ms.forward(lvl.f0, lvl.f1, cm, cfg_.attention_mode);
      lvl.m_fwd = ms.m_fwd;
      lvl.m_bwd = ms.m_bwd;
      lvl.s_fwd = ms.s_fwd;
      lvl.s_bwd = ms.s_bwd;
      feed0 = ms.f0_next;
      feed1 = ms.f1_next;
    }

    // flow, coarse to fine
    for (int64_t l = nl - 1; l >= 0; --l) {
      auto& lvl = st.levels[static_cast<size_t>(l)];
      const auto& lw = levels_[static_cast<size_t>(l)];
      ad::Tensor<R> prior_f, prior_b, up_mf_f, up_mf_b;
      if (l < nl - 1) {
        const auto& coarse = st.levels[static_cast<size_t>(l + 1)];
        const int64_t ku = clamp_k(3, coarse.pc0.size());
        prior_f = upsample_flow_t(coarse.pc0, coarse.sf_fwd, lvl.pc0, ku);
        prior_b = upsample_flow_t(coarse.pc1, coarse.sf_bwd, lvl.pc1, ku);
        up_mf_f = interpolate_features_t(coarse.pc0, coarse.mf_fwd, lvl.pc0, ku);
        up_mf_b = interpolate_features_t(coarse.pc1, coarse.mf_bwd, lvl.pc1, ku);
      }
      predict_direction(lw, l, lvl.pc0, lvl.pc1, lvl.f0, lvl.f1, lvl.m_fwd, lvl.s_fwd, prior_f,
                        up_mf_f, lvl.mf_fwd, lvl.sf_fwd);
      predict_direction(lw, l, lvl.pc1, lvl.pc0, lvl.f1, lvl.f0, lvl.m_bwd, lvl.s_bwd, prior_b,
                        up_mf_b, lvl.mf_bwd, lvl.sf_bwd);
      lvl.est0_t = warp_t(lvl.pc0.tensor(), lvl.sf_fwd, FlowDirection::forward, t);
      lvl.est1_t = warp_t(lvl.pc1.tensor(), lvl.sf_bwd, FlowDirection::backward, t);
    }
    return st;
  }

  // Per-point encoding of raw coordinates; exposed for tests.
  ad::Tensor<R> encode_stage1(const Cloud<R>& pc) const {
    pc.require_nonempty("encode_stage1");
    return encode_(pc.tensor());
  }

 private:
  struct LevelWeights {
    nn::Mlp<R> sa;
    msf::MSBlock<R> ms;
    nn::Mlp<R> cost;
    nn::Mlp<R> pred;
    MotionCompensation<R> mc;
    nn::Linear<R> flow_head;
  };

  static Cloud<R> subsample(const Cloud<R>& pc, int64_t target) {
    if (target < 1) throw ArgumentError("downsample_stage: target count is zero");
    auto idx = fps(pc, target, 0);
    Cloud<R> out(target);
    for (int64_t i = 0; i < target; ++i)
      std::copy(pc.row(idx[static_cast<size_t>(i)]), pc.row(idx[static_cast<size_t>(i)]) + 3,
                out.row(i));
    return out;
  }

  // Gather each selected point's neighborhood in the parent cloud, run the
  // per-neighbor MLP on (feature, relative coords) and max-pool.
  ad::Tensor<R> set_abstraction(const Cloud<R>& parent_pc, const ad::Tensor<R>& parent_feat,
                                const Cloud<R>& sub_pc, const nn::Mlp<R>& sa) const {
    const int64_t k = clamp_k(cfg_.knn_k, parent_pc.size());
    const auto nbr = knn(sub_pc, parent_pc, k);
    const int64_t q = sub_pc.size();
    std::vector<R> rel(static_cast<size_t>(q * k * 3));
    for (int64_t i = 0; i < q; ++i)
      for (int64_t j = 0; j < k; ++j) {
        const R* p = parent_pc.row(nbr.indices[static_cast<size_t>(i * k + j)]);
        const R* s = sub_pc.row(i);
        for (int d = 0; d < 3; ++d)
          rel[static_cast<size_t>((i * k + j) * 3 + d)] = p[d] - s[d];
      }
    auto rel_t = ad::Tensor<R>::leaf({q * k, 3}, std::move(rel));
    auto nb_feat = ad::gather_rows(parent_feat, nbr.indices);
    return ad::rowgroup_max(sa(ad::concat_cols<R>({nb_feat, rel_t})), k);
  }

  void predict_direction(const LevelWeights& lw, int64_t l, const Cloud<R>& src,
                         const Cloud<R>& dst, const ad::Tensor<R>& f_src,
                         const ad::Tensor<R>& f_dst, const ad::Tensor<R>& m,
                         const ad::Tensor<R>& s, const ad::Tensor<R>& prior,
                         const ad::Tensor<R>& up_mf, ad::Tensor<R>& mf_out,
                         ad::Tensor<R>& sf_out) const {
    auto src_t = src.tensor();
    auto warped = prior.defined() ? ad::add(src_t, prior) : src_t;
    const int64_t k = clamp_k(cfg_.knn_k, dst.size());
    auto cost = cost_volume(warped, dst, f_src, f_dst, k, lw.cost);

    std::vector<ad::Tensor<R>> parts{f_src, cost};
    if (l > 0) {
      parts.push_back(m);
      parts.push_back(s);
    }
    if (prior.defined()) {
      parts.push_back(prior);
      parts.push_back(up_mf);
    }
    auto mf = lw.pred(ad::concat_cols<R>(parts));
    if (cfg_.motion_compensation) mf = lw.mc(mf, s);
    // Fixed gain on the zero-initialized residual head: flows start at zero
    // either way, but the larger output sensitivity conditions the head so
    // adaptive steps move the predicted flow at the scale of real scene
    // motion instead of crawling there.
    auto residual = ad::scale(lw.flow_head(mf), static_cast<R>(kFlowGain));
    mf_out = mf;
    sf_out = prior.defined() ? ad::add(prior, residual) : residual;
  }

  ModelConfig cfg_;
  nn::Mlp<R> encode_;
  std::vector<LevelWeights> levels_;
};

}  // namespace fpci::pyr
