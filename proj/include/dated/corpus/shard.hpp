#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dated/common/date.hpp"
#include "dated/common/hash.hpp"
#include "dated/corpus/document.hpp"
#include "dated/corpus/partition.hpp"
#include "dated/tokenizer/bpe.hpp"

namespace dated::corpus {

// On-disk shard layout, little-endian:
//   [0, 8)    magic "DATEDTOK"
//   [8, 12)   format version (u32)
//   [12, 16)  token width in bytes (u32)
//   [16, 24)  token count (u64)
//   [24, 28)  cutoff year (i32)
//   [28, 32)  reserved, zero
//   [32, 64)  tokenizer fingerprint (SHA-256)
//   [64, ...) payload: token_count ids of token width bytes each
inline constexpr std::array<char, 8> kShardMagic = {'D', 'A', 'T', 'E',
                                                    'D', 'T', 'O', 'K'};
inline constexpr uint32_t kShardVersion = 1;
inline constexpr size_t kShardHeaderBytes = 64;

struct ShardHeader {
  uint32_t version = kShardVersion;
  uint32_t token_width = 4;
  uint64_t token_count = 0;
  int32_t cutoff_year = 0;
  Sha256Digest tokenizer_fingerprint{};
};

struct ShardOptions {
  uint64_t shard_size_tokens = 1u << 20;
  // When non-zero, shard_size_tokens must be at least this long.
  int sequence_length = 0;
  uint32_t token_width = 4;
  // Zero means unlimited; otherwise whole documents (plus separators) are
  // kept in input order while the running total stays within budget.
  uint64_t budget_tokens = 0;
};

struct ManifestDocument {
  std::string id;
  Date timestamp;
  uint64_t token_count = 0;  // excluding the trailing separator
};

struct ShardEntry {
  std::string path;  // relative to the manifest directory
  std::string checksum;  // SHA-256 of the payload bytes, hex
  uint64_t token_count = 0;
  // Documents contributing at least one token, as indices into
  // ShardManifest::documents, inclusive.
  size_t first_document = 0;
  size_t last_document = 0;
  std::string first_document_id;
  std::string last_document_id;
};

struct ShardManifest {
  int cutoff_year = 0;
  std::string tokenizer_fingerprint;
  int vocab_size = 0;
  tok::TokenId separator_id = tok::kEndOfText;
  uint32_t token_width = 4;
  uint64_t tokens_emitted = 0;
  uint64_t budget_tokens = 0;
  size_t documents_dropped_for_budget = 0;
  std::vector<ManifestDocument> documents;
  std::vector<ShardEntry> shards;

  Json to_json() const;
  static ShardManifest from_json(const Json& j);
  void save(const std::filesystem::path& path) const;
  static ShardManifest load(const std::filesystem::path& path);
};

inline constexpr const char* kManifestFileName = "manifest.json";

// Encodes `docs` in order, appending the separator after every document,
// and writes fixed-size shards plus `out_dir/manifest.json`. Documents are
// not re-filtered here: verify_partition is the independent check. On any
// write failure every file written so far is removed before IoError
// propagates.
ShardManifest shard_tokens(std::span<const TimestampedDocument> docs,
                           const tok::BpeTokenizer& tokenizer,
                           const ShardOptions& options, CutoffSpec spec,
                           const std::filesystem::path& out_dir);

// Reads a shard, validating magic, version and length. Throws
// CorruptionError on a malformed file.
std::vector<tok::TokenId> read_shard(const std::filesystem::path& path,
                                     ShardHeader* header = nullptr);

// Reads and concatenates every shard listed in the manifest.
std::vector<tok::TokenId> read_all_tokens(const std::filesystem::path& manifest_path);

// Checks shard integrity and temporal provenance. Timestamps come from the
// manifest; when `source_docs` is given they are cross-checked against it
// (documents absent from the source are violations). When `spec` is
// omitted the manifest cutoff applies.
PartitionReport verify_partition(
    const std::filesystem::path& manifest_path,
    std::optional<std::span<const TimestampedDocument>> source_docs = std::nullopt,
    std::optional<CutoffSpec> spec = std::nullopt);

}  // namespace dated::corpus
