#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dated/common/date.hpp"
#include "dated/common/hash.hpp"
#include "dated/common/jsonl.hpp"

namespace dated::tok {

using TokenId = int32_t;

// Ids 0..255 are the raw bytes; the specials follow; merges start after.
inline constexpr int kNumByteTokens = 256;
inline constexpr TokenId kEndOfText = 256;  // document separator, also BOS
inline constexpr TokenId kPad = 257;
inline constexpr TokenId kSystem = 258;
inline constexpr TokenId kUser = 259;
inline constexpr TokenId kAssistant = 260;
inline constexpr TokenId kEndOfTurn = 261;
inline constexpr int kNumSpecialTokens = 6;
inline constexpr TokenId kFirstMergeId = kNumByteTokens + kNumSpecialTokens;
inline constexpr int kMinVocabSize = kFirstMergeId;

std::string_view special_token_name(TokenId id);

using MergeRule = std::pair<TokenId, TokenId>;

// Byte-fallback BPE over whitespace-delimited pieces. Immutable after
// construction, so encode/decode may be called concurrently.
class BpeTokenizer {
 public:
  // Pure byte tokenizer (no merges).
  BpeTokenizer() : BpeTokenizer(std::vector<MergeRule>{}, 0) {}
  // Throws InvalidArgument if a rule references a token that does not exist
  // yet at its position in the list.
  BpeTokenizer(std::vector<MergeRule> merges, int trained_on_cutoff);

  int vocab_size() const { return static_cast<int>(vocab_.size()); }
  int trained_on_cutoff() const { return trained_on_cutoff_; }
  const std::vector<MergeRule>& merges() const { return merges_; }
  const Sha256Digest& fingerprint() const { return fingerprint_; }
  std::string fingerprint_hex() const { return to_hex(fingerprint_); }
  const std::string& token_bytes(TokenId id) const;

  // Total on arbitrary bytes. Special-token spellings in `text` are
  // encoded as plain bytes, never as specials.
  std::vector<TokenId> encode(std::string_view text) const;
  void encode_append(std::string_view text, std::vector<TokenId>& out) const;

  // Throws InvalidArgument naming the first out-of-range position.
  std::string decode(std::span<const TokenId> ids) const;

  Json to_json() const;
  static BpeTokenizer from_json(const Json& j);
  void save(const std::filesystem::path& path) const;
  static BpeTokenizer load(const std::filesystem::path& path);

 private:
  void encode_piece(std::string_view piece, std::vector<TokenId>& out) const;

  std::vector<MergeRule> merges_;
  std::vector<std::string> vocab_;
  std::unordered_map<uint64_t, int> merge_rank_;
  int trained_on_cutoff_ = 0;
  Sha256Digest fingerprint_{};
};

// Splits text into pieces: maximal runs of non-whitespace, each absorbing
// the single whitespace byte that precedes it; leftover whitespace forms
// its own pieces. Concatenating the pieces gives back `text`.
std::vector<std::string_view> pretokenize(std::string_view text);

struct BpeTrainingResult {
  BpeTokenizer tokenizer;
  std::vector<std::string> warnings;
};

// Deterministic BPE training. Among equally frequent pairs the one with the
// lowest (left id, right id) is merged first. Fewer merges than requested is
// a warning, not an error. Throws InvalidArgument if vocab_size <
// kMinVocabSize.
BpeTrainingResult train_bpe(std::span<const std::string> corpus, int vocab_size,
                            CutoffSpec cutoff);

}  // namespace dated::tok
