#pragma once

#include <filesystem>
#include <optional>

#include "compnet/model.hpp"
#include "compnet/trainer.hpp"

namespace compnet::train {

// File layout, all integers little-endian:
//   "CMPN" | u32 version | u64 header length | JSON header | f64 payload
// The header lists model config, optional train config echo, parameter names
// and shapes, the epoch counter and free-form run metadata. The payload holds
// every parameter tensor followed by every velocity tensor, in header order.
inline constexpr char kCheckpointMagic[4] = {'C', 'M', 'P', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  OptimState optimizer;
  std::optional<TrainConfig> train_config;
  nlohmann::json run = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const Model& model, const OptimState& optimizer,
                     const std::optional<TrainConfig>& train_config = std::nullopt,
                     const nlohmann::json& run = nlohmann::json::object());

/// Throws IoError when unreadable and FormatError on bad magic, version,
/// header or payload size.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace compnet::train
