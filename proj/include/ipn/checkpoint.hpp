#pragma once

#include <cstdint>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "ipn/networks.hpp"

namespace ipn::nets {

struct CheckpointMeta {
  ModelConfig config;
  std::uint64_t seed = 0;
  long iteration = 0;
  /// Free-form record (training config, notes); stored verbatim.
  nlohmann::json extra = nlohmann::json::object();
};

struct Checkpoint {
  IpnModel model{nullptr};
  CheckpointMeta meta;
};

/// Binary layout: "IPNCKPT\0", u32 version, u64 header length, JSON header,
/// then the float32 tensors back to back in header order. Little-endian.
void save_checkpoint(IpnModel& model, const CheckpointMeta& meta,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ipn::nets
