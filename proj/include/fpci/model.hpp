#pragma once

#include <cstdint>

#include "fpci/config.hpp"
#include "fpci/point_cloud.hpp"
#include "fpci/pyramid.hpp"
#include "fpci/refine_fusion.hpp"
#include "fpci/rng.hpp"

// Whole interpolation model: pyramid flow estimation in both directions,
// refinement of the forward estimate, and fusion into the final frame.

namespace fpci {

template <class R>
struct InterpolationOutput {
  pyr::PyramidState<R> pyramid;
  ad::Tensor<R> refined_fwd;
  ad::Tensor<R> fused;
};

template <class R>
class Model {
 public:
  explicit Model(const ModelConfig& cfg, uint64_t seed)
      : cfg_(cfg), params_(seed), net_(params_, cfg), refine_(params_, cfg) {
    fusion_ = rf::FusionNet<R>::create(params_, cfg);
  }

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore<R>& params() { return params_; }
  const nn::ParamStore<R>& params() const { return params_; }
  const pyr::PyramidNet<R>& pyramid() const { return net_; }

  // Interpolate the frame at time t in (0,1). The rng drives fusion anchor
  // sampling only.
  InterpolationOutput<R> forward(const Cloud<R>& pc0, const Cloud<R>& pc1, double t,
                                 Rng& rng) const {
    InterpolationOutput<R> out;
    out.pyramid = net_.forward(pc0, pc1, t);
    const auto& fwd = out.pyramid.forward_est();
    out.refined_fwd =
        cfg_.refine_net ? refine_.forward(fwd, out.pyramid.levels[0].mf_fwd) : fwd;
    out.fused = fusion_(out.refined_fwd, out.pyramid.backward_est(), t, cfg_.fusion_k, rng);
    return out;
  }

 private:
  ModelConfig cfg_;
  nn::ParamStore<R> params_;
  pyr::PyramidNet<R> net_;
  rf::RefineNet<R> refine_;
  rf::FusionNet<R> fusion_;
};

}  // namespace fpci
