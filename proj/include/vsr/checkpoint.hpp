#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "vsr/model.hpp"

namespace vsr {

// Single-container checkpoint: magic, u64 manifest length, JSON manifest,
// then raw little-endian f32 blobs in canonical parameter order. Reload
// restores every value bit-exactly.
struct Checkpoint {
  Model model;
  std::uint64_t step = 0;
  std::uint64_t rng_state = 0;
  nlohmann::json extra;  // configs of the producing run
};

std::uint64_t fnv1a64(const void* data, std::size_t bytes);

void save_checkpoint(const std::string& path, Model& model, std::uint64_t step,
                     std::uint64_t rng_state, const nlohmann::json& extra);
Checkpoint load_checkpoint(const std::string& path);

// Copies values of parameters whose canonical name starts with `filter`
// (empty = all) from a checkpoint into a freshly built model; shapes must
// agree. Returns the number of parameters copied.
int warm_start(Model& dst, const Checkpoint& src, const std::string& filter);

// Hash of every frozen (non-trainable) parameter, for partition-safety checks.
std::uint64_t frozen_set_hash(Model& model);

}  // namespace vsr
