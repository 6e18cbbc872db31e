// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint container, little-endian throughout:
//   "GSNC" | u32 version | u32 record count
//   per record: u32 name length | name bytes | u32 rank | u64 extent x rank | f64 payload
// A training checkpoint stores the config ("config.<key>"), the step
// ("meta.step"), model and guide parameters ("gsn.*", "guide.*"), both
// optimizers ("opt.gen.*", "opt.guide.*") and the dataset ("data.samples").

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gsn/data.hpp"
#include "gsn/train.hpp"

namespace gsn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Extents may be zero, unlike Tensor shapes.
struct Record {
  std::string name;
  std::vector<std::uint64_t> extents;
  std::vector<double> values;

  bool operator==(const Record&) const = default;
};

void write_records(const std::filesystem::path& path, const std::vector<Record>& records);
/// Throws IoError if the file cannot be opened and FormatError naming the
/// first malformed record otherwise.
std::vector<Record> read_records(const std::filesystem::path& path);

struct Checkpoint {
  TrainState state;
  Dataset data;
};

std::vector<Record> checkpoint_records(const TrainState& state, const Dataset& data);
Checkpoint checkpoint_from_records(const std::vector<Record>& records);

void save_checkpoint(const std::filesystem::path& path, const TrainState& state, const Dataset& data);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gsn
