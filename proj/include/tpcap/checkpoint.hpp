#pragma once

#include <optional>
#include <string>
#include <unordered_map>

#include "tpcap/config.hpp"
#include "tpcap/registry.hpp"
#include "tpcap/tokenizer.hpp"

namespace tpcap {

// Checkpoint directory layout:
//   manifest.json  format_version, config snapshot, config_hash, seed,
//                  frozen_names, metrics, checksum, tensor table
//   weights.bin    concatenated little-endian float32 in manifest order
//   vocab.json     tokenizer vocabulary (when the model carries one)
inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointData {
  json manifest;
  std::unordered_map<std::string, Mat> tensors;
  std::optional<Tokenizer> vocab;
};

void save_checkpoint(const std::string& dir, const ParameterRegistry& reg,
                     const json& config_snapshot,
                     const std::string& config_hash_value, uint64_t seed,
                     const json& metrics, const Tokenizer* vocab);

// Reads and validates a checkpoint: offsets must match the tensor table and
// the manifest checksum must match the recomputed one.
CheckpointData load_checkpoint(const std::string& dir);

// Copies every registry parameter from the checkpoint (by name, strict shape
// check). A tensor missing from the checkpoint is a corruption error.
void load_registry_weights(const CheckpointData& ckpt, ParameterRegistry& reg);

}  // namespace tpcap
