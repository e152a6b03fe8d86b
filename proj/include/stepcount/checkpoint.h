#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stepcount/estimators.h"

namespace stepcount {

struct CheckpointInfo {
  std::string architecture_id;
  std::uint64_t feature_hash = 0;
  std::uint32_t epoch = 0;
};

// Layout (little-endian): "SCKP", u32 version, u32 id length, id bytes,
// u64 feature config hash, u32 epoch, f64 label mean, f64 label scale,
// u32 tensor count, per tensor (u32 rank, u32 dims...), then every parameter
// as float32 in declaration order.
std::vector<std::uint8_t> encode_checkpoint(const CnnRegressor& model, std::uint32_t epoch);
CnnRegressor decode_checkpoint(const std::vector<std::uint8_t>& bytes, CheckpointInfo* info = nullptr);

void save_checkpoint(const CnnRegressor& model, std::uint32_t epoch, const std::filesystem::path& path);
CnnRegressor load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

}  // namespace stepcount
