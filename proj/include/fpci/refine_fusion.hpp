#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "fpci/config.hpp"
#include "fpci/kernels.hpp"
#include "fpci/layers.hpp"
#include "fpci/pyramid.hpp"
#include "fpci/rng.hpp"

// Refinement of the forward estimate (a three-resolution point-transformer
// U-Net predicting residual offsets) and fusion of forward/backward
// estimates into the final frame by learned convex combinations over local
// neighborhoods.

namespace fpci::rf {

// Vector attention over k neighbors with subtraction relation and a learned
// positional term; residual by construction.
template <class R>
struct PointTransformerBlock {
  nn::LayerNorm<R> ln;
  ad::Tensor<R> wq, wk, wv;
  nn::Mlp<R> pos_mlp;

  static PointTransformerBlock create(nn::ParamStore<R>& ps, const std::string& name,
                                      int64_t channels) {
    PointTransformerBlock b;
    b.ln = nn::LayerNorm<R>::create(ps, name + ".ln", channels);
    b.wq = ps.add(name + ".wq", {channels, channels});
    b.wk = ps.add(name + ".wk", {channels, channels});
    b.wv = ps.add(name + ".wv", {channels, channels});
    b.pos_mlp = nn::Mlp<R>::create(ps, name + ".pos", {3, channels, channels});
    return b;
  }

  // Positions ride the tape so residual heads upstream of the refinement
  // still receive gradient through the attention geometry.
  ad::Tensor<R> operator()(const ad::Tensor<R>& x, const ad::Tensor<R>& pos, int64_t k) const {
    if (x.rows() != pos.rows())
      throw ShapeError("point_transformer: feature/cloud row mismatch");
    const int64_t l = pos.rows();
    const int64_t kk = std::min<int64_t>(k, l);
    const auto pc = Cloud<R>::from_tensor(pos);
    const auto nbr = knn(pc, pc, kk);
    auto rep = pyr::repeat_indices<R>(l, kk);
    auto rel = ad::sub(ad::gather_rows(pos, rep), ad::gather_rows(pos, nbr.indices));

    auto xn = ln(x);
    auto q = ad::gather_rows(ad::matmul(xn, wq), rep);
    auto ky = ad::gather_rows(ad::matmul(xn, wk), nbr.indices);
    auto v = ad::gather_rows(ad::matmul(xn, wv), nbr.indices);
    auto delta = pos_mlp(rel);
    auto weights = ad::rowgroup_softmax(ad::add(ad::sub(q, ky), delta), kk);
    auto out = ad::rowgroup_sum(ad::mul(weights, ad::add(v, delta)), kk);
    return ad::add(x, out);
  }
};

// Three-resolution U-Net over the estimate cloud (L, L/4, L/16): encoder
// set-abstraction downsamples, decoder inverse-distance interpolation with
// skip concatenation, point-transformer attention at every resolution, and
// a zero-initialized residual head.
template <class R>
class RefineNet {
 public:
  RefineNet() = default;

  RefineNet(nn::ParamStore<R>& ps, const ModelConfig& cfg) : cfg_(cfg) {
    const int64_t c = cfg.refine_channels;
    const int64_t feat_in = 3 + cfg.predictor_width;
    embed_ = nn::Mlp<R>::create(ps, "refine.embed", {feat_in, c, c});
    pt0_ = PointTransformerBlock<R>::create(ps, "refine.pt0", c);
    down1_ = nn::Mlp<R>::create(ps, "refine.down1", {c + 3, 2 * c, 2 * c});
    pt1_ = PointTransformerBlock<R>::create(ps, "refine.pt1", 2 * c);
    down2_ = nn::Mlp<R>::create(ps, "refine.down2", {2 * c + 3, 4 * c, 4 * c});
    pt2_ = PointTransformerBlock<R>::create(ps, "refine.pt2", 4 * c);
    up1_ = nn::Mlp<R>::create(ps, "refine.up1", {4 * c + 2 * c, 2 * c, 2 * c});
    pt1u_ = PointTransformerBlock<R>::create(ps, "refine.pt1u", 2 * c);
    up0_ = nn::Mlp<R>::create(ps, "refine.up0", {2 * c + c, c, c});
    pt0u_ = PointTransformerBlock<R>::create(ps, "refine.pt0u", c);
    head_ = nn::Linear<R>::create(ps, "refine.head", c, 3, false, nn::Init::zeros);
  }

  // est: [L,3] estimate (graph tensor); feats: per-point context aligned
  // with est rows. Returns est + predicted residual offsets.
  ad::Tensor<R> forward(const ad::Tensor<R>& est, const ad::Tensor<R>& feats) const {
    if (est.rows() != feats.rows()) throw ShapeError("refine: estimate/feature row mismatch");
    if (est.rows() < 1) throw ArgumentError("refine: empty estimate");
    const int64_t l = est.rows();
    const int64_t k = cfg_.refine_pt_k;

    auto f0 = pt0_(embed_(ad::concat_cols<R>({est, feats})), est, k);

    auto pos1 = subsample(est, std::max<int64_t>(1, l / 4));
    auto f1 = pt1_(pool(est, f0, pos1, down1_), pos1, k);

    auto pos2 = subsample(pos1, std::max<int64_t>(1, l / 16));
    auto f2 = pt2_(pool(pos1, f1, pos2, down2_), pos2, k);

    const int64_t ku = std::min<int64_t>(3, pos2.rows());
    auto g1 = up1_(ad::concat_cols<R>({interpolate_features_t(pos2, f2, pos1, ku), f1}));
    g1 = pt1u_(g1, pos1, k);

    const int64_t ku0 = std::min<int64_t>(3, pos1.rows());
    auto g0 = up0_(ad::concat_cols<R>({interpolate_features_t(pos1, g1, est, ku0), f0}));
    g0 = pt0u_(g0, est, k);

    return ad::add(est, head_(g0));
  }

 private:
  static ad::Tensor<R> subsample(const ad::Tensor<R>& pos, int64_t target) {
    return ad::gather_rows(pos, fps(Cloud<R>::from_tensor(pos), target, 0));
  }

  ad::Tensor<R> pool(const ad::Tensor<R>& parent_pos, const ad::Tensor<R>& parent_feat,
                     const ad::Tensor<R>& sub_pos, const nn::Mlp<R>& mlp) const {
    const int64_t k = std::min<int64_t>(cfg_.refine_pt_k, parent_pos.rows());
    const auto nbr =
        knn(Cloud<R>::from_tensor(sub_pos), Cloud<R>::from_tensor(parent_pos), k);
    auto rep = pyr::repeat_indices<R>(sub_pos.rows(), k);
    auto rel = ad::sub(ad::gather_rows(parent_pos, nbr.indices), ad::gather_rows(sub_pos, rep));
    auto nf = ad::gather_rows(parent_feat, nbr.indices);
    return ad::rowgroup_max(mlp(ad::concat_cols<R>({nf, rel})), k);
  }

  ModelConfig cfg_;
  nn::Mlp<R> embed_, down1_, down2_, up1_, up0_;
  PointTransformerBlock<R> pt0_, pt1_, pt2_, pt1u_, pt0u_;
  nn::Linear<R> head_;
};

// Anchor-based fusion: round((1-t)L) anchors drawn from the refined forward
// estimate and the rest from the backward estimate; each output point is a
// learned softmax combination of its k nearest union-cloud neighbors.
template <class R>
struct FusionNet {
  nn::Mlp<R> weight_mlp;  // (rel coords, distance, source tag) -> logit

  static FusionNet create(nn::ParamStore<R>& ps, const ModelConfig&) {
    FusionNet f;
    f.weight_mlp = nn::Mlp<R>::create(ps, "fusion.w", {5, 32, 32, 1});
    return f;
  }

  // anchor_out, when given, receives the union-cloud indices of the chosen
  // anchors (< L: forward estimate, >= L: backward estimate).
  ad::Tensor<R> operator()(const ad::Tensor<R>& refined_fwd, const ad::Tensor<R>& backward_est,
                           double t, int64_t k, Rng& rng,
                           std::vector<int64_t>* anchor_out = nullptr) const {
    const int64_t l = refined_fwd.rows();
    if (l < 1 || backward_est.rows() < 1) throw ArgumentError("fuse: empty estimate");
    if (backward_est.rows() != l) throw ShapeError("fuse: estimate sizes differ");
    const int64_t union_n = 2 * l;
    if (k > union_n) throw ArgumentError("fuse: k exceeds union cloud size");

    const int64_t n_fwd = static_cast<int64_t>(std::llround((1.0 - t) * static_cast<double>(l)));
    const int64_t n_bwd = l - n_fwd;

    // seeded sampling without replacement from each estimate
    auto pick = [&rng](int64_t n, int64_t count) {
      std::vector<int64_t> all(static_cast<size_t>(n));
      std::iota(all.begin(), all.end(), int64_t(0));
      for (int64_t i = 0; i < count; ++i) {
        const int64_t j = i + static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(n - i)));
        std::swap(all[static_cast<size_t>(i)], all[static_cast<size_t>(j)]);
      }
      all.resize(static_cast<size_t>(count));
      return all;
    };
    auto idx_f = pick(l, n_fwd);
    auto idx_b = pick(l, n_bwd);
    for (auto& i : idx_b) i += l;  // index into the union cloud

    auto unite = ad::concat_rows<R>({refined_fwd, backward_est});
    std::vector<int64_t> anchor_idx = idx_f;
    anchor_idx.insert(anchor_idx.end(), idx_b.begin(), idx_b.end());
    if (anchor_out) *anchor_out = anchor_idx;
    auto anchors = ad::gather_rows(unite, anchor_idx);

    const auto union_cloud = Cloud<R>::from_tensor(unite);
    const auto anchor_cloud = Cloud<R>::from_tensor(anchors);
    const auto nbr = knn(anchor_cloud, union_cloud, k);

    auto rep = pyr::repeat_indices<R>(l, k);
    auto rel = ad::sub(ad::gather_rows(unite, nbr.indices), ad::gather_rows(anchors, rep));
    auto dist = ad::l2norm_rows(rel);
    std::vector<R> tagv(static_cast<size_t>(l * k));
    for (size_t i = 0; i < tagv.size(); ++i)
      tagv[i] = nbr.indices[i] < l ? R(0) : R(1);
    auto tag = ad::Tensor<R>::leaf({l * k, 1}, std::move(tagv));

    auto logits = ad::reshape(weight_mlp(ad::concat_cols<R>({rel, dist, tag})), {l, k});
    auto weights = ad::softmax_lastdim(logits);
    return ad::gather_weighted_sum(unite, nbr.indices, weights);
  }
};

}  // namespace fpci::rf
