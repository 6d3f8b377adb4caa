#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fpci/layers.hpp"
#include "fpci/rng.hpp"
#include "fpci/tensor.hpp"

// Numerical verification helpers: central-difference gradient checking
// against the tape, used by unit tests, the acceptance gate and the
// selfcheck command.

namespace fpci::verify {

struct GradCheckReport {
  double worst_rel = 0.0;  // over elements whose absolute error exceeds atol
  double worst_abs = 0.0;
  std::string worst_param;
  int64_t checked = 0;

  bool ok(double tol) const { return worst_rel <= tol; }
};

// Compares tape gradients of loss_fn against central differences on a
// seeded sample of elements per parameter (0 = every element). loss_fn must
// rebuild its graph on each call; parameters with no gradient count as zero.
// Elements whose absolute error is below atol are inside the difference
// scheme's own noise floor and do not contribute to worst_rel.
template <class R>
GradCheckReport grad_check_params(const std::function<ad::Tensor<R>()>& loss_fn,
                                  const std::vector<typename nn::ParamStore<R>::Entry>& params,
                                  int64_t samples_per_tensor = 0, double h = 1e-5,
                                  uint64_t seed = 0, double atol = 1e-8) {
  for (const auto& e : params) {
    auto t = e.tensor;
    t.zero_grad();
  }
  loss_fn().backward();

  GradCheckReport rep;
  for (const auto& e : params) {
    auto t = e.tensor;
    std::vector<int64_t> sample;
    const int64_t n = t.numel();
    if (samples_per_tensor <= 0 || samples_per_tensor >= n) {
      sample.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) sample[static_cast<size_t>(i)] = i;
    } else {
      Rng rng(mix_seed(fnv1a(e.name), seed));
      for (int64_t s = 0; s < samples_per_tensor; ++s)
        sample.push_back(static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(n))));
    }
    for (int64_t i : sample) {
      const size_t ii = static_cast<size_t>(i);
      const R orig = t.values()[ii];
      t.values()[ii] = orig + static_cast<R>(h);
      const double up = static_cast<double>(loss_fn().value());
      t.values()[ii] = orig - static_cast<R>(h);
      const double dn = static_cast<double>(loss_fn().value());
      t.values()[ii] = orig;
      const double fd = (up - dn) / (2 * h);
      const double g = t.has_grad() ? static_cast<double>(t.grad()[ii]) : 0.0;
      const double abs_err = std::abs(fd - g);
      const double rel =
          abs_err <= atol ? 0.0 : abs_err / std::max({std::abs(fd), std::abs(g), 1e-6});
      ++rep.checked;
      if (rel > rep.worst_rel) {
        rep.worst_rel = rel;
        rep.worst_abs = abs_err;
        rep.worst_param = e.name;
      }
    }
  }
  return rep;
}

// Same check for free leaf tensors (model inputs).
template <class R>
GradCheckReport grad_check_leaves(const std::function<ad::Tensor<R>()>& loss_fn,
                                  std::vector<ad::Tensor<R>> leaves,
                                  int64_t samples_per_tensor = 0, double h = 1e-5,
                                  uint64_t seed = 0, double atol = 1e-8) {
  std::vector<typename nn::ParamStore<R>::Entry> entries;
  for (size_t i = 0; i < leaves.size(); ++i)
    entries.push_back({"leaf" + std::to_string(i), leaves[i]});
  return grad_check_params<R>(loss_fn, entries, samples_per_tensor, h, seed, atol);
}

// Directional variant: compares the finite difference of the loss along
// seeded random unit directions (over all parameters jointly) against the
// tape's directional derivative <grad, u>. The aggregate signal stays far
// above the forward pass's rounding noise, so this is the sound form of the
// check in 32-bit mode, where per-element differences drown.
template <class R>
GradCheckReport grad_check_directional(const std::function<ad::Tensor<R>()>& loss_fn,
                                       const std::vector<typename nn::ParamStore<R>::Entry>& params,
                                       int64_t directions = 8, double h = 1e-3,
                                       uint64_t seed = 0, double atol = 1e-4) {
  for (const auto& e : params) {
    auto t = e.tensor;
    t.zero_grad();
  }
  loss_fn().backward();
  std::vector<std::vector<double>> grads;
  std::vector<std::vector<R>> originals;
  for (const auto& e : params) {
    auto t = e.tensor;
    originals.emplace_back(t.values());
    std::vector<double> g(t.values().size(), 0.0);
    if (t.has_grad())
      for (size_t i = 0; i < g.size(); ++i) g[i] = static_cast<double>(t.grad()[i]);
    grads.push_back(std::move(g));
  }

  GradCheckReport rep;
  for (int64_t d = 0; d < directions; ++d) {
    Rng rng(mix_seed(seed, 0xd120000 + static_cast<uint64_t>(d)));
    std::vector<std::vector<double>> dir(params.size());
    double norm2 = 0;
    for (size_t p = 0; p < params.size(); ++p) {
      dir[p].resize(originals[p].size());
      for (auto& v : dir[p]) {
        v = rng.normal();
        norm2 += v * v;
      }
    }
    const double inv = 1.0 / std::sqrt(std::max(norm2, 1e-300));
    double expected = 0;
    for (size_t p = 0; p < params.size(); ++p)
      for (size_t i = 0; i < dir[p].size(); ++i) {
        dir[p][i] *= inv;
        expected += grads[p][i] * dir[p][i];
      }

    auto apply = [&](double sign) {
      for (size_t p = 0; p < params.size(); ++p) {
        auto t = params[p].tensor;
        for (size_t i = 0; i < dir[p].size(); ++i)
          t.values()[i] = static_cast<R>(static_cast<double>(originals[p][i]) +
                                         sign * h * dir[p][i]);
      }
    };
    apply(+1.0);
    const double up = static_cast<double>(loss_fn().value());
    apply(-1.0);
    const double dn = static_cast<double>(loss_fn().value());
    for (size_t p = 0; p < params.size(); ++p) {
      auto t = params[p].tensor;
      t.values() = originals[p];
    }
    const double fd = (up - dn) / (2 * h);
    const double abs_err = std::abs(fd - expected);
    const double rel =
        abs_err <= atol ? 0.0 : abs_err / std::max({std::abs(fd), std::abs(expected), 1e-6});
    ++rep.checked;
    if (rel > rep.worst_rel) {
      rep.worst_rel = rel;
      rep.worst_abs = abs_err;
      rep.worst_param = "direction " + std::to_string(d);
    }
  }
  return rep;
}

struct CheckItem {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SelfcheckReport {
  std::vector<CheckItem> items;
  bool all_passed() const {
    for (const auto& it : items)
      if (!it.passed) return false;
    return !items.empty();
  }
};

struct SelfcheckOptions {
  bool f64 = false;  // tightens gradient tolerances to 1e-5 elementary / 1e-4 model
  uint64_t seed = 0;
  // Corrupts the checkpoint round-trip file before reading it back, so the
  // persistence item must fail while every other item still passes.
  bool inject_checkpoint_fault = false;
};

SelfcheckReport selfcheck(const SelfcheckOptions& opt = {});
std::string format_report(const SelfcheckReport& rep);

}  // namespace fpci::verify
