#pragma once

#include <string>

#include "fpci/point_cloud.hpp"
#include "fpci/synth.hpp"

// Point cloud file IO. `.xyz` is ASCII "x y z" per line; `.bin` is the
// KITTI-style packed stream of little-endian float32 (x, y, z, reflectance)
// records, reflectance ignored on read and zeroed on write.

namespace fpci::io {

Cloud<double> read_xyz(const std::string& path);
void write_xyz(const std::string& path, const Cloud<double>& pc);

Cloud<double> read_bin(const std::string& path);
void write_bin(const std::string& path, const Cloud<double>& pc);

// Dispatch on the file extension (.xyz or .bin).
Cloud<double> read_cloud(const std::string& path);
void write_cloud(const std::string& path, const Cloud<double>& pc);

// One directory per sequence: frame_<i>.xyz per time step, gt_flow.xyz,
// and manifest.json recording the spec and frame times.
void write_sequence(const std::string& dir, const synth::SceneSpec& spec,
                    const synth::Sequence& seq);

// Reads a directory written by write_sequence back into frames (+ ground
// truth flow when present); labels are not persisted and come back empty.
synth::Sequence read_sequence(const std::string& dir);

// All seq_* subdirectories of root, ordered by name.
std::vector<synth::Sequence> read_sequence_dirs(const std::string& root);

}  // namespace fpci::io
