#include "fpci/cloud_io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fpci/errors.hpp"

namespace fpci::io {

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

double parse_token(const std::string& tok, const std::string& path, int64_t line) {
  size_t used = 0;
  double v = 0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != tok.size())
    throw FormatError(path + ":" + std::to_string(line) + ": non-numeric token '" + tok + "'");
  return v;
}

}  // namespace

Cloud<double> read_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  Cloud<double> pc;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string a, b, c, extra;
    if (!(ss >> a >> b >> c))
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected 3 coordinates");
    if (ss >> extra)
      throw FormatError(path + ":" + std::to_string(lineno) + ": trailing token '" + extra + "'");
    pc.xyz.push_back(parse_token(a, path, lineno));
    pc.xyz.push_back(parse_token(b, path, lineno));
    pc.xyz.push_back(parse_token(c, path, lineno));
  }
  if (in.bad()) throw IoError("read failed: " + path);
  return pc;
}

void write_xyz(const std::string& path, const Cloud<double>& pc) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for write: " + path);
  char buf[96];
  for (int64_t i = 0; i < pc.size(); ++i) {
    const double* p = pc.row(i);
    std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g\n", p[0], p[1], p[2]);
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path);
}

Cloud<double> read_bin(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path);
  if (bytes.size() % 16 != 0)
    throw FormatError(path + ": size " + std::to_string(bytes.size()) +
                      " is not a multiple of 16-byte records");
  const size_t n = bytes.size() / 16;
  Cloud<double> pc(static_cast<int64_t>(n));
  for (size_t i = 0; i < n; ++i) {
    float rec[4];
    std::memcpy(rec, bytes.data() + i * 16, 16);
    for (int d = 0; d < 3; ++d) pc.row(static_cast<int64_t>(i))[d] = rec[d];
  }
  return pc;
}

void write_bin(const std::string& path, const Cloud<double>& pc) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for write: " + path);
  for (int64_t i = 0; i < pc.size(); ++i) {
    const float rec[4] = {static_cast<float>(pc.row(i)[0]), static_cast<float>(pc.row(i)[1]),
                          static_cast<float>(pc.row(i)[2]), 0.0f};
    out.write(reinterpret_cast<const char*>(rec), 16);
  }
  if (!out) throw IoError("write failed: " + path);
}

Cloud<double> read_cloud(const std::string& path) {
  if (ends_with(path, ".xyz")) return read_xyz(path);
  if (ends_with(path, ".bin")) return read_bin(path);
  throw ArgumentError("unsupported cloud format (want .xyz or .bin): " + path);
}

void write_cloud(const std::string& path, const Cloud<double>& pc) {
  if (ends_with(path, ".xyz")) return write_xyz(path, pc);
  if (ends_with(path, ".bin")) return write_bin(path, pc);
  throw ArgumentError("unsupported cloud format (want .xyz or .bin): " + path);
}

void write_sequence(const std::string& dir, const synth::SceneSpec& spec,
                    const synth::Sequence& seq) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory: " + dir);

  nlohmann::json manifest;
  manifest["seed"] = spec.seed;
  manifest["noise_sigma"] = spec.noise_sigma;
  manifest["times"] = synth::Sequence::kTimes;
  manifest["points"] = seq.size();
  auto kind_name = [](synth::SurfaceKind k) {
    switch (k) {
      case synth::SurfaceKind::box: return "box";
      case synth::SurfaceKind::sphere: return "sphere";
      case synth::SurfaceKind::plane: return "plane";
    }
    return "box";
  };
  for (const auto& o : spec.objects) {
    nlohmann::json jo;
    jo["kind"] = kind_name(o.kind);
    jo["size"] = o.size;
    jo["center"] = o.center;
    jo["velocity"] = o.velocity;
    jo["axis"] = o.axis;
    jo["angle"] = o.angle;
    jo["points"] = o.points;
    manifest["objects"].push_back(jo);
  }

  for (size_t f = 0; f < seq.frames.size(); ++f) {
    const std::string name = "frame_" + std::to_string(f) + ".xyz";
    write_xyz(dir + "/" + name, seq.frames[f]);
    manifest["frames"].push_back(name);
  }
  Cloud<double> flow;
  flow.xyz = seq.gt_flow_forward.vec;
  write_xyz(dir + "/gt_flow.xyz", flow);
  manifest["gt_flow"] = "gt_flow.xyz";

  std::ofstream out(dir + "/manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot open for write: " + dir + "/manifest.json");
  out << manifest.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + dir + "/manifest.json");
}

synth::Sequence read_sequence(const std::string& dir) {
  const std::string mpath = dir + "/manifest.json";
  std::ifstream in(mpath);
  if (!in) throw IoError("cannot open: " + mpath);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(mpath + ": " + e.what());
  }
  if (!manifest.contains("frames") || !manifest["frames"].is_array())
    throw FormatError(mpath + ": missing frames list");

  synth::Sequence seq;
  for (const auto& name : manifest["frames"])
    seq.frames.push_back(read_xyz(dir + "/" + name.get<std::string>()));
  if (seq.frames.size() != synth::Sequence::kTimes.size())
    throw FormatError(mpath + ": expected " + std::to_string(synth::Sequence::kTimes.size()) +
                      " frames, got " + std::to_string(seq.frames.size()));
  for (const auto& f : seq.frames)
    if (f.size() != seq.frames[0].size())
      throw FormatError(mpath + ": frames disagree on point count");

  if (manifest.contains("gt_flow")) {
    auto flow = read_xyz(dir + "/" + manifest["gt_flow"].get<std::string>());
    if (flow.size() != seq.frames[0].size())
      throw FormatError(mpath + ": ground-truth flow size mismatch");
    seq.gt_flow_forward = Flow<double>(flow.size(), FlowDirection::forward);
    seq.gt_flow_forward.vec = flow.xyz;
  }
  return seq;
}

std::vector<synth::Sequence> read_sequence_dirs(const std::string& root) {
  if (!std::filesystem::is_directory(root)) throw IoError("not a directory: " + root);
  std::vector<std::string> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory() && entry.path().filename().string().rfind("seq_", 0) == 0)
      dirs.push_back(entry.path().string());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw IoError("no seq_* directories under: " + root);
  std::vector<synth::Sequence> out;
  out.reserve(dirs.size());
  for (const auto& d : dirs) out.push_back(read_sequence(d));
  return out;
}

}  // namespace fpci::io
