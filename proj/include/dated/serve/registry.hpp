#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "dated/lm/parameters.hpp"
#include "dated/tokenizer/bpe.hpp"
#include "dated/train/checkpoint.hpp"

namespace dated::serve {

// A loaded model. Never modified after registration; shared by every
// request that uses it.
struct LoadedModel {
  train::CheckpointMeta meta;
  lm::Parameters<float> params;
  std::shared_ptr<const tok::BpeTokenizer> tokenizer;
};

struct ModelEntry {
  std::string id;
  int cutoff_year = 0;
  train::Stage stage = train::Stage::kBase;
  std::filesystem::path checkpoint;
  std::string tokenizer_fingerprint;
  std::shared_ptr<const LoadedModel> model;
};

using CheckpointLoader = std::function<train::Checkpoint(const std::filesystem::path&)>;

// Reads the checkpoint without optimizer state.
train::Checkpoint load_for_serving(const std::filesystem::path& path);

class ModelRegistry {
 public:
  explicit ModelRegistry(CheckpointLoader loader = load_for_serving);

  // Loads `checkpoint` and publishes it under `id`. Throws InvalidArgument
  // for an empty or duplicate id, a tokenizer whose fingerprint differs
  // from the checkpoint's, or an `expected_cutoff` that disagrees with the
  // checkpoint; load errors propagate with the path in the message.
  // Registrations run one at a time; readers are never blocked by a load.
  ModelEntry register_model(const std::string& id, const std::filesystem::path& checkpoint,
                            std::shared_ptr<const tok::BpeTokenizer> tokenizer,
                            std::optional<int> expected_cutoff = std::nullopt);

  // Ordered by cutoff year, then id.
  std::vector<ModelEntry> list() const;
  // Throws NotFoundError.
  ModelEntry get(const std::string& id) const;
  bool contains(const std::string& id) const;
  size_t size() const;

 private:
  CheckpointLoader loader_;
  std::mutex register_mutex_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, ModelEntry> entries_;
};

// Registry file: {"models": [{"id", "checkpoint", "tokenizer", "cutoff_year"?}]}.
// Relative paths resolve against the file's directory. Tokenizers shared by
// several entries are loaded once. Returns the number of models registered.
size_t register_from_file(ModelRegistry& registry, const std::filesystem::path& file);

}  // namespace dated::serve
