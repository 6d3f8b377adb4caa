#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fpci/config.hpp"
#include "fpci/kernels.hpp"
#include "fpci/metrics.hpp"
#include "fpci/model.hpp"

// Training objective: Chamfer distance of the fused frame against ground
// truth, optional Chamfer terms on the per-direction estimates, and an
// alpha-weighted multi-scale term over the pyramid's forward estimates
// against furthest-point-sampled ground-truth subsets.

namespace fpci::loss {

template <class R>
struct LossTerms {
  ad::Tensor<R> total, intp, cd1, cd2, ms;
};

// Ground-truth pyramid: level l keeps cfg.level_size(l) points chosen by
// furthest point sampling (level 0 is the full frame).
template <class R>
std::vector<Cloud<R>> pyramid_gt(const Cloud<R>& gt, const ModelConfig& cfg) {
  gt.require_nonempty("pyramid_gt");
  std::vector<Cloud<R>> out;
  out.reserve(static_cast<size_t>(cfg.level_count()));
  Cloud<R> cur = gt;
  for (int64_t l = 0; l < cfg.level_count(); ++l) {
    const int64_t target = cfg.level_size(l);
    if (l == 0) {
      out.push_back(cur);
      continue;
    }
    auto idx = fps(cur, target, 0);
    Cloud<R> sub(target);
    for (int64_t i = 0; i < target; ++i)
      std::copy(cur.row(idx[static_cast<size_t>(i)]), cur.row(idx[static_cast<size_t>(i)]) + 3,
                sub.row(i));
    out.push_back(sub);
    cur = out.back();
  }
  return out;
}

// level_ests holds the forward time-t estimate of every pyramid level and
// must be complete whenever the multi-scale term is enabled.
template <class R>
LossTerms<R> total_loss(const ad::Tensor<R>& fused, const ad::Tensor<R>& fwd_est,
                        const ad::Tensor<R>& bwd_est,
                        const std::vector<ad::Tensor<R>>& level_ests,
                        const std::vector<Cloud<R>>& gt_levels, const ModelConfig& cfg) {
  if (gt_levels.empty()) throw ArgumentError("total_loss: no ground-truth levels");
  const auto gt_t = gt_levels[0].tensor();

  LossTerms<R> t;
  t.intp = chamfer_t(fused, gt_t);
  t.cd1 = ad::Tensor<R>::scalar(R(0));
  t.cd2 = ad::Tensor<R>::scalar(R(0));
  t.ms = ad::Tensor<R>::scalar(R(0));

  if (cfg.cd1) t.cd1 = chamfer_t(fwd_est, gt_t);
  if (cfg.cd2) t.cd2 = chamfer_t(bwd_est, gt_t);
  if (cfg.ms) {
    if (static_cast<int64_t>(level_ests.size()) != cfg.level_count() ||
        static_cast<int64_t>(gt_levels.size()) != cfg.level_count())
      throw ContractError("total_loss: multi-scale term enabled but level estimates/targets "
                          "do not cover every pyramid level");
    for (int64_t l = 0; l < cfg.level_count(); ++l) {
      auto cd = chamfer_t(level_ests[static_cast<size_t>(l)],
                          gt_levels[static_cast<size_t>(l)].tensor());
      t.ms = ad::add(t.ms, ad::scale(cd, static_cast<R>(cfg.alpha(l))));
    }
  }
  t.total = ad::add(ad::add(t.intp, t.cd1), ad::add(t.cd2, t.ms));
  return t;
}

template <class R>
LossTerms<R> total_loss(const InterpolationOutput<R>& out, const Cloud<R>& gt,
                        const ModelConfig& cfg) {
  auto gt_levels = pyramid_gt(gt, cfg);
  std::vector<ad::Tensor<R>> level_ests;
  level_ests.reserve(out.pyramid.levels.size());
  for (const auto& lvl : out.pyramid.levels) level_ests.push_back(lvl.est0_t);
  return total_loss(out.fused, out.pyramid.forward_est(), out.pyramid.backward_est(), level_ests,
                    gt_levels, cfg);
}

}  // namespace fpci::loss
