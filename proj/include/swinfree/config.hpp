#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "swinfree/attention.hpp"

namespace swinfree {

inline constexpr int kNumStages = 4;

struct StageConfig {
  Index depth = 2;
  Index window = 7;
  Index num_heads = 3;
  std::vector<bool> shift_pattern;  // one flag per block

  bool operator==(const StageConfig&) const = default;
};

struct ModelConfig {
  std::string name = "custom";
  std::string variant = "custom";
  Index img_size = 224;
  Index patch_size = 4;
  Index in_chans = 3;
  Index embed_dim = 96;
  std::array<StageConfig, kNumStages> stages{};
  AttentionMode mode = AttentionMode::shifted_baseline;
  NormKind norm = NormKind::layer;
  Activation act = Activation::gelu;
  Index num_classes = 1000;
  std::uint64_t seed = 0;

  Index stage_channels(int s) const { return embed_dim << s; }
  Index stage_resolution(int s) const { return (img_size / patch_size) >> s; }

  bool operator==(const ModelConfig&) const = default;
};

/// Throws ConfigError naming the first violated constraint.
void validate(const ModelConfig& cfg);

/// false, true, false, ... when `on`; all false otherwise.
std::vector<bool> alternating_shift(Index depth, bool on);

/// Per-stage geometry: P = resolution^2 patches, window M, N windows.
struct StageTrace {
  Index resolution = 0;
  Index window = 0;
  Index windows = 0;
  Index depth = 0;
  Index channels = 0;
  Index num_heads = 0;
  Index shifted_blocks = 0;

  Index patches() const { return resolution * resolution; }
};

std::array<StageTrace, kNumStages> stage_trace(const ModelConfig& cfg);

/// Build a config from a JSON document (ConfigFile keys). Preset keys
/// (variant, mode, dr) expand first; explicit fields override them.
ModelConfig expand_config(const nlohmann::ordered_json& doc);

/// Fully explicit JSON form; expand_config(config_to_json(c)) == c.
nlohmann::ordered_json config_to_json(const ModelConfig& cfg);

/// Preset name to ConfigFile keys, e.g. "swin-free-B-BR-DR14",
/// "swin-B-shift0011", "swin-free-B-win7x7x14x7".
nlohmann::ordered_json preset_json(std::string_view name);
ModelConfig preset(std::string_view name);

/// Every named model row the presets are meant to reproduce.
std::vector<std::string> known_presets();

std::string to_string(AttentionMode m);
std::string to_string(NormKind n);
std::string to_string(Activation a);

}  // namespace swinfree
