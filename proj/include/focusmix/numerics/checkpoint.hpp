#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "focusmix/numerics/param_store.hpp"

namespace focusmix::numerics {

inline constexpr const char* kCheckpointFormat = "focusmix-ckpt-1";

// On-disk layout:
//   <compact JSON header>\n<blob section>
// The header is
//   {"format": "focusmix-ckpt-1", "config_hash": str, "step": int, "meta": {...},
//    "params": [{"name": str, "shape": [int], "dtype": "f32", "offset": int}, ...]}
// where each offset is in bytes from the start of the blob section and every
// blob is little-endian IEEE-754 binary32 in row-major order.
struct CheckpointInfo {
  std::string config_hash;
  std::uint64_t step = 0;
  nlohmann::json meta = nlohmann::json::object();
};

// Written to "<path>.tmp" and renamed over `path`.
void save_checkpoint(const std::string& path, const ParamStore<float>& store,
                     const CheckpointInfo& info);

struct LoadedCheckpoint {
  ParamStore<float> store;
  CheckpointInfo info;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// FNV-1a 64, hex. Stable across platforms, used to tag checkpoints with their config.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace focusmix::numerics
