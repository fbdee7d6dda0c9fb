#include "dated/serve/registry.hpp"

#include <algorithm>

#include "dated/common/error.hpp"
#include "dated/common/jsonl.hpp"

namespace dated::serve {

train::Checkpoint load_for_serving(const std::filesystem::path& path) {
  return train::load_checkpoint(path, /*load_optimizer=*/false);
}

ModelRegistry::ModelRegistry(CheckpointLoader loader) : loader_(std::move(loader)) {
  if (!loader_) throw InvalidArgument("registry needs a checkpoint loader");
}

ModelEntry ModelRegistry::register_model(const std::string& id,
                                         const std::filesystem::path& checkpoint,
                                         std::shared_ptr<const tok::BpeTokenizer> tokenizer,
                                         std::optional<int> expected_cutoff) {
  if (id.empty()) throw InvalidArgument("model id is empty");
  if (!tokenizer) throw InvalidArgument("model " + id + " has no tokenizer");
  std::lock_guard serial(register_mutex_);
  if (contains(id)) throw InvalidArgument("model id '" + id + "' is already registered");

  train::Checkpoint ckpt = loader_(checkpoint);
  const auto& meta = ckpt.meta;
  if (meta.tokenizer_fingerprint != tokenizer->fingerprint_hex()) {
    throw InvalidArgument("refusing " + id + ": checkpoint " + checkpoint.string() +
                          " was trained with tokenizer " + meta.tokenizer_fingerprint +
                          ", registry supplied " + tokenizer->fingerprint_hex());
  }
  if (meta.config.vocab_size != tokenizer->vocab_size()) {
    throw InvalidArgument("refusing " + id + ": vocabulary sizes differ");
  }
  if (expected_cutoff && *expected_cutoff != meta.cutoff_year) {
    throw InvalidArgument("refusing " + id + ": declared cutoff " +
                          std::to_string(*expected_cutoff) + " but checkpoint " +
                          checkpoint.string() + " records " + std::to_string(meta.cutoff_year));
  }

  auto model = std::make_shared<LoadedModel>();
  model->meta = meta;
  model->params = std::move(ckpt.params);
  model->tokenizer = std::move(tokenizer);

  ModelEntry entry;
  entry.id = id;
  entry.cutoff_year = meta.cutoff_year;
  entry.stage = meta.stage;
  entry.checkpoint = checkpoint;
  entry.tokenizer_fingerprint = meta.tokenizer_fingerprint;
  entry.model = std::move(model);

  std::unique_lock lock(mutex_);
  entries_.emplace(id, entry);
  return entry;
}

std::vector<ModelEntry> ModelRegistry::list() const {
  std::vector<ModelEntry> out;
  {
    std::shared_lock lock(mutex_);
    for (const auto& [id, e] : entries_) out.push_back(e);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.cutoff_year < b.cutoff_year; });
  return out;
}

ModelEntry ModelRegistry::get(const std::string& id) const {
  std::shared_lock lock(mutex_);
  const auto it = entries_.find(id);
  if (it == entries_.end()) throw NotFoundError("no model named '" + id + "'");
  return it->second;
}

bool ModelRegistry::contains(const std::string& id) const {
  std::shared_lock lock(mutex_);
  return entries_.count(id) > 0;
}

size_t ModelRegistry::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

size_t register_from_file(ModelRegistry& registry, const std::filesystem::path& file) {
  const Json j = read_json_file(file);
  const auto base = file.parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
  };
  std::map<std::filesystem::path, std::shared_ptr<const tok::BpeTokenizer>> tokenizers;
  size_t n = 0;
  try {
    for (const auto& m : j.at("models")) {
      const auto tok_path = resolve(m.at("tokenizer").get<std::string>());
      auto& tok = tokenizers[tok_path];
      if (!tok) tok = std::make_shared<tok::BpeTokenizer>(tok::BpeTokenizer::load(tok_path));
      std::optional<int> cutoff;
      if (m.contains("cutoff_year")) cutoff = m.at("cutoff_year").get<int>();
      registry.register_model(m.at("id").get<std::string>(),
                              resolve(m.at("checkpoint").get<std::string>()), tok, cutoff);
      ++n;
    }
  } catch (const Json::exception& e) {
    throw InvalidArgument("registry file " + file.string() + ": " + e.what());
  }
  return n;
}

}  // namespace dated::serve
