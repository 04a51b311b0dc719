#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "rap/encoders.hpp"

namespace rap {

struct CheckpointMeta {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::string config_hash;
  std::vector<double> loss_tail;  // most recent total losses, oldest first

  bool operator==(const CheckpointMeta&) const = default;
};

struct Checkpoint {
  DualEncoder model;
  CheckpointMeta meta;
};

// File layout (all header lines are plain text, one record per line):
//
//   RAPCKPT 1
//   encoder hidden=.. proj_dim=.. layers=.. heads=.. mlp_dim=.. vocab_size=..
//           frames=.. patches=.. patch_dim=.. max_tokens=.. positional=0|1 seed=..
//   step <n>
//   epoch <n>
//   config_hash <hex>
//   loss_tail <count> <v1> ... <vcount>
//   tensor <name> <rank> <extent>...        (one line per tensor, payload order)
//   payload_bytes <n>
//   end
//   <tensor values as little-endian IEEE-754 doubles, row-major, concatenated>
//
// The `encoder` line is a single line; it is wrapped above for width.

void save_checkpoint(const std::filesystem::path& path, const DualEncoder& model,
                     const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rap
