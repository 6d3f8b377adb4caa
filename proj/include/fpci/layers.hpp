#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fpci/errors.hpp"
#include "fpci/rng.hpp"
#include "fpci/tensor.hpp"

// Named-parameter registry and the small layer vocabulary built on it.
// Every learned weight lives in a ParamStore under a unique dotted path;
// initialization draws from an RNG keyed by (parameter name, global seed)
// so adding or removing unrelated parameters never shifts anyone's init.

namespace fpci::nn {

inline constexpr double kLeakySlope = 0.1;

inline bool valid_param_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '.' || c == '_';
    if (!ok) return false;
  }
  return true;
}

enum class Init { xavier, zeros, ones };

template <class R>
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed = 0) : seed_(seed) {}

  ad::Tensor<R> add(const std::string& name, ad::Shape shape, Init init = Init::xavier) {
    if (!valid_param_name(name))
      throw ArgumentError("parameter name '" + name + "' violates charset [a-zA-Z0-9._]");
    if (index_.count(name)) throw ArgumentError("duplicate parameter name '" + name + "'");
    const int64_t n = ad::shape_numel(shape);
    std::vector<R> vals(static_cast<size_t>(n), R(0));
    switch (init) {
      case Init::zeros:
        break;
      case Init::ones:
        std::fill(vals.begin(), vals.end(), R(1));
        break;
      case Init::xavier: {
        // fan_in/fan_out from the last two dims; vectors count as fan_out only
        int64_t fan_in = shape.size() >= 2 ? shape[shape.size() - 2] : 1;
        int64_t fan_out = shape.empty() ? 1 : shape.back();
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Rng rng(mix_seed(fnv1a(name), seed_));
        for (auto& v : vals) v = static_cast<R>(rng.uniform(-limit, limit));
        break;
      }
    }
    index_[name] = entries_.size();
    entries_.push_back({name, ad::Tensor<R>::leaf(std::move(shape), std::move(vals), true)});
    return entries_.back().tensor;
  }

  ad::Tensor<R>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ArgumentError("unknown parameter '" + name + "'");
    return entries_[it->second].tensor;
  }

  const ad::Tensor<R>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ArgumentError("unknown parameter '" + name + "'");
    return entries_[it->second].tensor;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  struct Entry {
    std::string name;
    ad::Tensor<R> tensor;
  };
  const std::vector<Entry>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }

  int64_t total_numel() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
  }

  void zero_grads() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

template <class R>
struct Linear {
  ad::Tensor<R> w;  // [in, out]
  ad::Tensor<R> b;  // [out]; undefined when bias-free

  static Linear create(ParamStore<R>& ps, const std::string& name, int64_t in, int64_t out,
                       bool bias = true, Init weight_init = Init::xavier) {
    Linear l;
    l.w = ps.add(name + ".w", {in, out}, weight_init);
    if (bias) l.b = ps.add(name + ".b", {out}, Init::zeros);
    return l;
  }

  ad::Tensor<R> operator()(const ad::Tensor<R>& x) const {
    return b.defined() ? ad::linear(x, w, b) : ad::linear(x, w);
  }
};

template <class R>
struct LayerNorm {
  ad::Tensor<R> gamma, beta;

  static LayerNorm create(ParamStore<R>& ps, const std::string& name, int64_t channels) {
    LayerNorm n;
    n.gamma = ps.add(name + ".gamma", {channels}, Init::ones);
    n.beta = ps.add(name + ".beta", {channels}, Init::zeros);
    return n;
  }

  ad::Tensor<R> operator()(const ad::Tensor<R>& x) const {
    return ad::layer_norm_rows(x, gamma, beta);
  }
};

// Stack of per-point linear layers with LeakyReLU between them; the final
// activation is optional so heads can stay linear.
template <class R>
struct Mlp {
  std::vector<Linear<R>> layers;
  bool act_last = false;

  static Mlp create(ParamStore<R>& ps, const std::string& name,
                    const std::vector<int64_t>& dims, bool act_last = false,
                    Init last_init = Init::xavier) {
    if (dims.size() < 2) throw ArgumentError("mlp '" + name + "' needs at least 2 dims");
    Mlp m;
    m.act_last = act_last;
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
      const bool last = (i + 2 == dims.size());
      m.layers.push_back(Linear<R>::create(ps, name + ".l" + std::to_string(i), dims[i],
                                           dims[i + 1], true, last ? last_init : Init::xavier));
    }
    return m;
  }

  ad::Tensor<R> operator()(const ad::Tensor<R>& x) const {
    ad::Tensor<R> h = x;
    for (size_t i = 0; i < layers.size(); ++i) {
      h = layers[i](h);
      if (i + 1 < layers.size() || act_last) h = ad::leaky_relu(h, kLeakySlope);
    }
    return h;
  }
};

}  // namespace fpci::nn
