#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "gcsich/fusionnet.hpp"

namespace gcsich::net {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

// Layout, all integers little-endian:
//   "GICH" | u16 version | u32 count |
//   count x ( u32 name_len | name | u8 dtype (0 f32, 1 f64) | u8 rank |
//             rank x u64 extent | values as IEEE-754 f32 or f64 )
std::vector<std::uint8_t> encode_checkpoint(const ParamSet& params);
ParamSet decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params);
ParamSet load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into `model`; names, shapes and dtypes must match
/// the model's parameter table exactly.
void load_into(FusionModel& model, const ParamSet& checkpoint);
FusionModel load_model(const std::filesystem::path& path, const ModelConfig& config);

}  // namespace gcsich::net
