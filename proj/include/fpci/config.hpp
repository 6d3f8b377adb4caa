#pragma once

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpci/errors.hpp"
#include "fpci/msformer.hpp"

namespace fpci {

// Network and loss configuration. JSON keys mirror the field names; absent
// keys keep defaults so small overrides stay small.
struct ModelConfig {
  int64_t points = 1024;
  std::vector<int64_t> divisors = {1, 4, 32};
  std::vector<int64_t> channels = {32, 64, 128};
  int64_t attn_dim = 64;
  int64_t knn_k = 8;
  int64_t cost_channels = 32;
  int64_t predictor_width = 64;

  // flags
  bool structure_branch = true;
  bool motion_compensation = true;
  msf::AttentionMode attention_mode = msf::AttentionMode::dual_cross;
  bool refine_net = true;

  // refine / fusion
  int64_t refine_channels = 32;
  int64_t refine_pt_k = 16;
  int64_t fusion_k = 16;

  // loss
  double alpha0 = 0.05, alpha1 = 0.1, alpha2 = 0.2;
  bool cd1 = true, cd2 = true, ms = true;

  int64_t level_count() const { return static_cast<int64_t>(divisors.size()); }
  int64_t level_size(int64_t l) const { return std::max<int64_t>(1, points / divisors[l]); }
  double alpha(int64_t l) const { return l == 0 ? alpha0 : (l == 1 ? alpha1 : alpha2); }

  void validate() const {
    if (points < 1) throw ArgumentError("config: points must be >= 1");
    if (divisors.size() != channels.size() || divisors.empty())
      throw ArgumentError("config: divisors and channels must be same-length, nonempty");
    for (size_t i = 1; i < divisors.size(); ++i)
      if (divisors[i] <= divisors[i - 1])
        throw ArgumentError("config: divisors must strictly increase");
    if (divisors[0] != 1) throw ArgumentError("config: first divisor must be 1");
    for (int64_t c : channels)
      if (c < 1) throw ArgumentError("config: channels must be positive");
    if (attn_dim < 1 || knn_k < 1 || cost_channels < 1 || predictor_width < 1)
      throw ArgumentError("config: widths must be positive");
    for (double a : {alpha0, alpha1, alpha2}) {
      if (a < 0) throw ArgumentError("config: loss alphas must be >= 0");
      if (a < 0.025 || a > 0.25)
        std::cerr << "warning: loss alpha " << a << " outside the recommended (0.025, 0.25)\n";
    }
  }
};

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int64_t batch_size = 4;
  int64_t lr_halving_period_epochs = 80;
  int64_t epochs = 320;
  uint64_t seed = 0;
  int64_t n_train = 64;
  int64_t n_test = 16;
  int64_t checkpoint_interval_epochs = 0;  // 0 = only at end
  int64_t threads = 1;
};

inline void from_json_into(const nlohmann::json& j, ModelConfig& c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("points", c.points);
  get("divisors", c.divisors);
  get("channels", c.channels);
  get("attn_dim", c.attn_dim);
  get("knn_k", c.knn_k);
  get("cost_channels", c.cost_channels);
  get("predictor_width", c.predictor_width);
  get("refine_channels", c.refine_channels);
  get("refine_pt_k", c.refine_pt_k);
  get("fusion_k", c.fusion_k);
  if (j.contains("flags")) {
    const auto& f = j.at("flags");
    if (f.contains("structure_branch")) c.structure_branch = f.at("structure_branch").get<bool>();
    if (f.contains("motion_compensation"))
      c.motion_compensation = f.at("motion_compensation").get<bool>();
    if (f.contains("refine_net")) c.refine_net = f.at("refine_net").get<bool>();
    if (f.contains("attention_mode")) {
      const std::string m = f.at("attention_mode").get<std::string>();
      if (m == "dual_cross")
        c.attention_mode = msf::AttentionMode::dual_cross;
      else if (m == "self_attention")
        c.attention_mode = msf::AttentionMode::self_attention;
      else
        throw ArgumentError("config: unknown attention_mode '" + m + "'");
    }
  }
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    if (l.contains("alpha0")) c.alpha0 = l.at("alpha0").get<double>();
    if (l.contains("alpha1")) c.alpha1 = l.at("alpha1").get<double>();
    if (l.contains("alpha2")) c.alpha2 = l.at("alpha2").get<double>();
    if (l.contains("cd1")) c.cd1 = l.at("cd1").get<bool>();
    if (l.contains("cd2")) c.cd2 = l.at("cd2").get<bool>();
    if (l.contains("ms")) c.ms = l.at("ms").get<bool>();
  }
  c.validate();
}

inline void from_json_into(const nlohmann::json& j, TrainConfig& c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("lr", c.lr);
  get("weight_decay", c.weight_decay);
  get("batch_size", c.batch_size);
  get("lr_halving_period_epochs", c.lr_halving_period_epochs);
  get("epochs", c.epochs);
  get("seed", c.seed);
  get("n_train", c.n_train);
  get("n_test", c.n_test);
  get("checkpoint_interval_epochs", c.checkpoint_interval_epochs);
  get("threads", c.threads);
}

inline nlohmann::json to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["points"] = c.points;
  j["divisors"] = c.divisors;
  j["channels"] = c.channels;
  j["attn_dim"] = c.attn_dim;
  j["knn_k"] = c.knn_k;
  j["cost_channels"] = c.cost_channels;
  j["predictor_width"] = c.predictor_width;
  j["refine_channels"] = c.refine_channels;
  j["refine_pt_k"] = c.refine_pt_k;
  j["fusion_k"] = c.fusion_k;
  j["flags"] = {
      {"structure_branch", c.structure_branch},
      {"motion_compensation", c.motion_compensation},
      {"refine_net", c.refine_net},
      {"attention_mode",
       c.attention_mode == msf::AttentionMode::dual_cross ? "dual_cross" : "self_attention"},
  };
  j["loss"] = {{"alpha0", c.alpha0}, {"alpha1", c.alpha1}, {"alpha2", c.alpha2},
               {"cd1", c.cd1},       {"cd2", c.cd2},       {"ms", c.ms}};
  return j;
}

}  // namespace fpci
