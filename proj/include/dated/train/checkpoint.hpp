#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "dated/common/jsonl.hpp"
#include "dated/lm/config.hpp"
#include "dated/lm/parameters.hpp"
#include "dated/train/optimizer.hpp"

namespace dated::train {

enum class Stage { kBase, kInstruct };

std::string_view stage_name(Stage stage);
std::optional<Stage> parse_stage(std::string_view name);

struct CheckpointMeta {
  lm::ModelConfig config;
  int64_t step = 0;
  int cutoff_year = 0;
  std::string tokenizer_fingerprint;
  Stage stage = Stage::kBase;
  Json training = Json::object();  // free-form run details
  bool operator==(const CheckpointMeta&) const = default;
};

struct Checkpoint {
  CheckpointMeta meta;
  lm::Parameters<float> params;
  std::optional<OptimizerState> optimizer;
  // Set by load_checkpoint when the file carried optimizer state that the
  // caller chose not to load.
  bool optimizer_dropped = false;
};

// File layout, little-endian:
//   magic "DATEDCKP", u32 format version, u32 metadata length,
//   metadata JSON, u64 parameter count, f32 parameters,
//   u8 has_optimizer [i64 step, f32 m, f32 v],
//   SHA-256 of every preceding byte.
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

// Throws IoError if unreadable, CorruptionError on truncation or checksum
// mismatch, InvalidArgument naming both versions on a version mismatch. No
// partially read checkpoint is ever returned.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           bool load_optimizer = true);

std::string checkpoint_digest(const Checkpoint& ckpt);

}  // namespace dated::train
