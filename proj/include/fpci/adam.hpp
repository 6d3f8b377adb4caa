#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "fpci/layers.hpp"

namespace fpci::opt {

// Adam with bias correction and decoupled weight decay (applied as
// lr * wd * param, independent of the adaptive scaling). Moment state is
// kept in double regardless of the parameter precision.
template <class R>
class Adam {
 public:
  struct Config {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  Adam(std::vector<typename nn::ParamStore<R>::Entry> params, Config cfg)
      : params_(std::move(params)), cfg_(cfg) {
    if (!(cfg_.lr > 0)) throw ArgumentError("adam: lr must be positive");
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(static_cast<size_t>(params_[i].tensor.numel()), 0.0);
      v_[i].assign(static_cast<size_t>(params_[i].tensor.numel()), 0.0);
    }
  }

  double lr() const { return cfg_.lr; }
  void set_lr(double lr) {
    if (!(lr > 0)) throw ArgumentError("adam: lr must be positive");
    cfg_.lr = lr;
  }
  int64_t steps() const { return t_; }

  void zero_grad() {
    for (auto& e : params_) e.tensor.zero_grad();
  }

  // Consumes the gradients accumulated on the parameters. A parameter that
  // never received a gradient counts as zero.
  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& tns = params_[i].tensor;
      auto& vals = tns.values();
      const bool has = tns.has_grad();
      for (size_t j = 0; j < vals.size(); ++j) {
        const double g = has ? static_cast<double>(tns.grad()[j]) : 0.0;
        if (!std::isfinite(g))
          throw NumericError("adam: non-finite gradient in " + params_[i].name);
        m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g;
        v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m_[i][j] / bc1;
        const double vhat = v_[i][j] / bc2;
        double p = static_cast<double>(vals[j]);
        p -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        p -= cfg_.lr * cfg_.weight_decay * static_cast<double>(vals[j]);
        vals[j] = static_cast<R>(p);
      }
    }
  }

 private:
  std::vector<typename nn::ParamStore<R>::Entry> params_;
  Config cfg_;
  std::vector<std::vector<double>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace fpci::opt
