#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fpci/layers.hpp"

// FPCI checkpoint container: magic, version, named tensors as 32-bit floats,
// trailing CRC32 over everything that precedes it. Little-endian on disk.

namespace fpci::ckpt {

inline constexpr uint32_t kFormatVersion = 1;

struct TensorRecord {
  std::string name;
  std::vector<uint32_t> dims;
  std::vector<float> data;
};

void save(const std::string& path, const std::vector<TensorRecord>& tensors);
std::vector<TensorRecord> load(const std::string& path);

template <class R>
void save_params(const std::string& path, const nn::ParamStore<R>& ps) {
  std::vector<TensorRecord> recs;
  recs.reserve(ps.entries().size());
  for (const auto& e : ps.entries()) {
    TensorRecord r;
    r.name = e.name;
    for (int64_t d : e.tensor.shape()) r.dims.push_back(static_cast<uint32_t>(d));
    r.data.reserve(e.tensor.values().size());
    for (R v : e.tensor.values()) r.data.push_back(static_cast<float>(v));
    recs.push_back(std::move(r));
  }
  save(path, recs);
}

// Loads by name into an existing store; every record must match a parameter
// of identical shape and every parameter must be covered.
template <class R>
void load_params(const std::string& path, nn::ParamStore<R>& ps) {
  auto recs = load(path);
  if (recs.size() != ps.entries().size())
    throw FormatError("checkpoint: holds " + std::to_string(recs.size()) + " tensors, model has " +
                      std::to_string(ps.entries().size()));
  for (const auto& r : recs) {
    if (!ps.contains(r.name)) throw FormatError("checkpoint: unknown tensor '" + r.name + "'");
    auto& t = ps.get(r.name);
    std::vector<uint32_t> dims;
    for (int64_t d : t.shape()) dims.push_back(static_cast<uint32_t>(d));
    if (dims != r.dims) throw FormatError("checkpoint: shape mismatch for " + r.name);
    auto& vals = t.values();
    for (size_t i = 0; i < vals.size(); ++i) vals[i] = static_cast<R>(r.data[i]);
  }
}

}  // namespace fpci::ckpt
