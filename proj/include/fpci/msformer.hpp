#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "fpci/errors.hpp"
#include "fpci/layers.hpp"
#include "fpci/tensor.hpp"

// Motion-structure transformer block: dual-direction cross-attention over
// the two frames' features, a structure head that mixes attended features,
// and a motion head that reads displacement off an attended coordinate
// embedding. One block instance serves both directions with one weight set.

namespace fpci::msf {

enum class AttentionMode { dual_cross, self_attention };

// Index-ramp coordinate map: row i is i/(L-1) replicated over three axes
// (zero row for the degenerate L == 1).
template <class R>
ad::Tensor<R> coordinate_map(int64_t l) {
  if (l < 1) throw ArgumentError("coordinate_map: L must be >= 1");
  std::vector<R> v(static_cast<size_t>(l) * 3);
  for (int64_t i = 0; i < l; ++i) {
    const R x = l == 1 ? R(0) : static_cast<R>(i) / static_cast<R>(l - 1);
    v[static_cast<size_t>(i * 3)] = x;
    v[static_cast<size_t>(i * 3 + 1)] = x;
    v[static_cast<size_t>(i * 3 + 2)] = x;
  }
  return ad::Tensor<R>::leaf({l, 3}, std::move(v));
}

template <class R>
ad::Tensor<R> slice_rows(const ad::Tensor<R>& x, int64_t begin, int64_t end) {
  std::vector<int64_t> idx(static_cast<size_t>(end - begin));
  std::iota(idx.begin(), idx.end(), begin);
  return ad::gather_rows(x, std::move(idx));
}

template <class R>
struct AttentionOutput {
  ad::Tensor<R> a_fwd, a_bwd;  // L x L attention maps
  ad::Tensor<R> v_fwd, v_bwd;  // L x chat attended-value inputs
};

// Both directions in one pass: queries are the stacked [F0;F1], keys and
// values come from the opposite order [F1;F0] (or the same order in
// self-attention mode). Inputs are expected pre-normalized.
template <class R>
AttentionOutput<R> dual_cross_attention(const ad::Tensor<R>& f0, const ad::Tensor<R>& f1,
                                        const ad::Tensor<R>& wq, const ad::Tensor<R>& wk,
                                        const ad::Tensor<R>& wv,
                                        AttentionMode mode = AttentionMode::dual_cross) {
  if (f0.shape() != f1.shape())
    throw ShapeError("dual_cross_attention: F0/F1 shape mismatch");
  if (f0.cols() != wq.rows())
    throw ShapeError("dual_cross_attention: feature width " + std::to_string(f0.cols()) +
                     " does not match projection rows " + std::to_string(wq.rows()));
  const int64_t l = f0.rows();
  const int64_t chat = wq.cols();
  auto q_stack = ad::concat_rows<R>({f0, f1});
  auto kv_stack =
      mode == AttentionMode::dual_cross ? ad::concat_rows<R>({f1, f0}) : q_stack;
  auto q = ad::matmul(q_stack, wq);
  auto k = ad::matmul(kv_stack, wk);
  auto v = ad::matmul(kv_stack, wv);
  const double inv_temp = 1.0 / std::sqrt(static_cast<double>(chat));

  AttentionOutput<R> out;
  auto attend = [&](int64_t lo) {
    auto qd = slice_rows(q, lo, lo + l);
    auto kd = slice_rows(k, lo, lo + l);
    auto logits = ad::scale(ad::matmul(qd, ad::transpose_last2(kd)), inv_temp);
    return ad::softmax_lastdim(logits);
  };
  out.a_fwd = attend(0);
  out.a_bwd = attend(l);
  out.v_fwd = slice_rows(v, 0, l);
  out.v_bwd = slice_rows(v, l, 2 * l);
  return out;
}

// S = (A v) W_S
template <class R>
ad::Tensor<R> structure_head(const ad::Tensor<R>& a, const ad::Tensor<R>& v,
                             const ad::Tensor<R>& ws) {
  return ad::matmul(ad::matmul(a, v), ws);
}

// M = (A B1 - B1) W_M; scaling by t synthesizes motion toward time t.
template <class R>
ad::Tensor<R> motion_head(const ad::Tensor<R>& a, const ad::Tensor<R>& b1,
                          const ad::Tensor<R>& wm) {
  return ad::matmul(ad::sub(ad::matmul(a, b1), b1), wm);
}

template <class R>
struct MSBlockOutput {
  ad::Tensor<R> a_fwd, a_bwd;
  ad::Tensor<R> s_fwd, s_bwd;  // structure features (or F passthrough when disabled)
  ad::Tensor<R> m_fwd, m_bwd;  // motion features
  ad::Tensor<R> f0_next, f1_next;
};

template <class R>
struct MSBlock {
  nn::LayerNorm<R> ln;
  ad::Tensor<R> wq, wk, wv, wm;
  ad::Tensor<R> b1_embed;  // 3 x chat coordinate embedding weights
  ad::Tensor<R> ws;        // structure branch only
  nn::Mlp<R> fnext;        // structure branch only
  bool structure_branch = true;
  int64_t chat = 0;

  static MSBlock create(nn::ParamStore<R>& ps, const std::string& name, int64_t channels,
                        int64_t chat, bool structure_branch = true) {
    MSBlock b;
    b.chat = chat;
    b.structure_branch = structure_branch;
    b.ln = nn::LayerNorm<R>::create(ps, name + ".ln", channels);
    b.wq = ps.add(name + ".wq", {channels, chat});
    b.wk = ps.add(name + ".wk", {channels, chat});
    b.wv = ps.add(name + ".wv", {channels, chat});
    b.wm = ps.add(name + ".wm", {chat, chat});
    b.b1_embed = ps.add(name + ".b1", {3, chat});
    if (structure_branch) {
      b.ws = ps.add(name + ".ws", {chat, chat});
      b.fnext = nn::Mlp<R>::create(ps, name + ".fnext", {chat, chat, channels});
    }
    return b;
  }

  // coord_map is the level's index-ramp [L,3]; one forward serves both
  // directions.
  MSBlockOutput<R> forward(const ad::Tensor<R>& f0, const ad::Tensor<R>& f1,
                           const ad::Tensor<R>& coord_map,
                           AttentionMode mode = AttentionMode::dual_cross) const {
    if (f0.shape() != f1.shape()) throw ShapeError("ms_block: F0/F1 shape mismatch");
    if (coord_map.rows() != f0.rows())
      throw ShapeError("ms_block: coordinate map rows do not match features");
    auto f0n = ln(f0);
    auto f1n = ln(f1);
    auto attn = dual_cross_attention(f0n, f1n, wq, wk, wv, mode);
    auto b1 = ad::matmul(coord_map, b1_embed);

    MSBlockOutput<R> out;
    out.a_fwd = attn.a_fwd;
    out.a_bwd = attn.a_bwd;
    out.m_fwd = motion_head(attn.a_fwd, b1, wm);
    out.m_bwd = motion_head(attn.a_bwd, b1, wm);
    if (structure_branch) {
      out.s_fwd = structure_head(attn.a_fwd, attn.v_fwd, ws);
      out.s_bwd = structure_head(attn.a_bwd, attn.v_bwd, ws);
      out.f0_next = fnext(out.s_fwd);
      out.f1_next = fnext(out.s_bwd);
    } else {
      out.s_fwd = f0;
      out.s_bwd = f1;
      out.f0_next = f0;
      out.f1_next = f1;
    }
    return out;
  }

  // channel width of the structure output seen by downstream consumers
  int64_t structure_dim(int64_t channels) const { return structure_branch ? chat : channels; }
};

}  // namespace fpci::msf
