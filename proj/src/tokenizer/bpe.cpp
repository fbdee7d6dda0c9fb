#include "dated/tokenizer/bpe.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>
#include <tuple>

#include "dated/common/error.hpp"

namespace dated::tok {
namespace {

constexpr int kFormatVersion = 1;

uint64_t pair_key(TokenId a, TokenId b) {
  return (static_cast<uint64_t>(static_cast<uint32_t>(a)) << 32) |
         static_cast<uint32_t>(b);
}

bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
         c == '\f';
}

}  // namespace

std::string_view special_token_name(TokenId id) {
  switch (id) {
    case kEndOfText: return "<|endoftext|>";
    case kPad: return "<|pad|>";
    case kSystem: return "<|system|>";
    case kUser: return "<|user|>";
    case kAssistant: return "<|assistant|>";
    case kEndOfTurn: return "<|end|>";
    default: return {};
  }
}

std::vector<std::string_view> pretokenize(std::string_view text) {
  std::vector<std::string_view> pieces;
  size_t i = 0;
  const size_t n = text.size();
  while (i < n) {
    size_t start = i;
    if (is_space(text[i])) {
      size_t j = i;
      while (j < n && is_space(text[j])) ++j;
      if (j == n) {
        pieces.push_back(text.substr(start, n - start));
        break;
      }
      // All but the last whitespace byte stand alone.
      if (j - i > 1) pieces.push_back(text.substr(i, j - i - 1));
      start = j - 1;
      i = j;
    }
    while (i < n && !is_space(text[i])) ++i;
    pieces.push_back(text.substr(start, i - start));
  }
  return pieces;
}

BpeTokenizer::BpeTokenizer(std::vector<MergeRule> merges, int trained_on_cutoff)
    : merges_(std::move(merges)), trained_on_cutoff_(trained_on_cutoff) {
  vocab_.reserve(kFirstMergeId + merges_.size());
  for (int b = 0; b < kNumByteTokens; ++b) {
    vocab_.emplace_back(1, static_cast<char>(b));
  }
  for (TokenId id = kNumByteTokens; id < kFirstMergeId; ++id) {
    vocab_.emplace_back(special_token_name(id));
  }
  Sha256 h;
  h.update("dated-bpe/v1\n");
  for (size_t r = 0; r < merges_.size(); ++r) {
    auto [a, b] = merges_[r];
    const TokenId next = static_cast<TokenId>(vocab_.size());
    auto usable = [&](TokenId t) {
      return t >= 0 && t < next && (t < kNumByteTokens || t >= kFirstMergeId);
    };
    if (!usable(a) || !usable(b)) {
      throw InvalidArgument("merge rule " + std::to_string(r) +
                            " references unavailable token");
    }
    if (!merge_rank_.emplace(pair_key(a, b), static_cast<int>(r)).second) {
      throw InvalidArgument("duplicate merge rule " + std::to_string(r));
    }
    vocab_.push_back(vocab_[a] + vocab_[b]);
    h.update(std::to_string(a) + " " + std::to_string(b) + "\n");
  }
  fingerprint_ = h.finish();
}

const std::string& BpeTokenizer::token_bytes(TokenId id) const {
  if (id < 0 || id >= vocab_size()) {
    throw InvalidArgument("token id " + std::to_string(id) + " out of range");
  }
  return vocab_[id];
}

void BpeTokenizer::encode_piece(std::string_view piece,
                                std::vector<TokenId>& out) const {
  std::vector<TokenId> symbols;
  symbols.reserve(piece.size());
  for (unsigned char c : piece) symbols.push_back(c);
  if (!merges_.empty()) {
    while (symbols.size() > 1) {
      int best_rank = std::numeric_limits<int>::max();
      for (size_t i = 0; i + 1 < symbols.size(); ++i) {
        auto it = merge_rank_.find(pair_key(symbols[i], symbols[i + 1]));
        if (it != merge_rank_.end() && it->second < best_rank) {
          best_rank = it->second;
        }
      }
      if (best_rank == std::numeric_limits<int>::max()) break;
      const auto [a, b] = merges_[best_rank];
      const TokenId merged = kFirstMergeId + best_rank;
      size_t w = 0;
      for (size_t i = 0; i < symbols.size();) {
        if (i + 1 < symbols.size() && symbols[i] == a && symbols[i + 1] == b) {
          symbols[w++] = merged;
          i += 2;
        } else {
          symbols[w++] = symbols[i++];
        }
      }
      symbols.resize(w);
    }
  }
  out.insert(out.end(), symbols.begin(), symbols.end());
}

void BpeTokenizer::encode_append(std::string_view text,
                                 std::vector<TokenId>& out) const {
  for (auto piece : pretokenize(text)) encode_piece(piece, out);
}

std::vector<TokenId> BpeTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> out;
  encode_append(text, out);
  return out;
}

std::string BpeTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    const TokenId id = ids[i];
    if (id < 0 || id >= vocab_size()) {
      throw InvalidArgument("token id " + std::to_string(id) +
                            " at position " + std::to_string(i) +
                            " is outside vocabulary of size " +
                            std::to_string(vocab_size()));
    }
    out += vocab_[id];
  }
  return out;
}

Json BpeTokenizer::to_json() const {
  Json j;
  j["format"] = "dated-bpe";
  j["version"] = kFormatVersion;
  j["vocab_size"] = vocab_size();
  j["trained_on_cutoff"] = trained_on_cutoff_;
  Json specials = Json::object();
  for (TokenId id = kNumByteTokens; id < kFirstMergeId; ++id) {
    specials[std::string(special_token_name(id))] = id;
  }
  j["specials"] = specials;
  Json merges = Json::array();
  for (auto [a, b] : merges_) merges.push_back({a, b});
  j["merges"] = merges;
  Json vocab = Json::array();
  for (const auto& bytes : vocab_) {
    vocab.push_back(to_hex(std::span(
        reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size())));
  }
  j["vocab"] = vocab;
  j["fingerprint"] = fingerprint_hex();
  return j;
}

BpeTokenizer BpeTokenizer::from_json(const Json& j) {
  try {
    if (j.at("format") != "dated-bpe") {
      throw InvalidArgument("not a dated-bpe tokenizer file");
    }
    const int version = j.at("version").get<int>();
    if (version != kFormatVersion) {
      throw InvalidArgument("tokenizer format version " +
                            std::to_string(version) + " unsupported (expected " +
                            std::to_string(kFormatVersion) + ")");
    }
    std::vector<MergeRule> merges;
    for (const auto& m : j.at("merges")) {
      merges.emplace_back(m.at(0).get<TokenId>(), m.at(1).get<TokenId>());
    }
    BpeTokenizer tok(std::move(merges), j.at("trained_on_cutoff").get<int>());
    if (j.at("vocab_size").get<int>() != tok.vocab_size() ||
        j.at("fingerprint").get<std::string>() != tok.fingerprint_hex()) {
      throw CorruptionError("tokenizer fingerprint or vocab size mismatch");
    }
    const auto& vocab = j.at("vocab");
    if (vocab.size() != static_cast<size_t>(tok.vocab_size())) {
      throw CorruptionError("tokenizer vocab table has wrong length");
    }
    for (size_t i = 0; i < vocab.size(); ++i) {
      const auto& bytes = tok.vocab_[i];
      if (vocab[i].get<std::string>() !=
          to_hex(std::span(reinterpret_cast<const uint8_t*>(bytes.data()),
                           bytes.size()))) {
        throw CorruptionError("tokenizer vocab entry " + std::to_string(i) +
                              " disagrees with merges");
      }
    }
    return tok;
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("malformed tokenizer file: ") + e.what());
  }
}

void BpeTokenizer::save(const std::filesystem::path& path) const {
  write_json_file(path, to_json());
}

BpeTokenizer BpeTokenizer::load(const std::filesystem::path& path) {
  return from_json(read_json_file(path));
}

namespace {

struct Word {
  std::vector<TokenId> symbols;
  int64_t count = 0;
};

// Pair statistics with an ordered frontier: (-count, left, right).
class PairTable {
 public:
  void add(TokenId a, TokenId b, int64_t delta, size_t word) {
    const uint64_t key = pair_key(a, b);
    int64_t& c = counts_[key];
    if (c > 0) frontier_.erase({-c, a, b});
    c += delta;
    if (c > 0) {
      frontier_.insert({-c, a, b});
    } else {
      counts_.erase(key);
    }
    if (delta > 0) where_[key].push_back(word);
  }

  bool empty() const { return frontier_.empty(); }
  std::tuple<int64_t, TokenId, TokenId> best() const { return *frontier_.begin(); }

  std::vector<size_t> take_words(TokenId a, TokenId b) {
    auto it = where_.find(pair_key(a, b));
    if (it == where_.end()) return {};
    std::vector<size_t> words = std::move(it->second);
    where_.erase(it);
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    return words;
  }

 private:
  std::unordered_map<uint64_t, int64_t> counts_;
  std::unordered_map<uint64_t, std::vector<size_t>> where_;
  std::set<std::tuple<int64_t, TokenId, TokenId>> frontier_;
};

}  // namespace

BpeTrainingResult train_bpe(std::span<const std::string> corpus, int vocab_size,
                            CutoffSpec cutoff) {
  if (vocab_size < kMinVocabSize) {
    throw InvalidArgument("vocab_size " + std::to_string(vocab_size) +
                          " is below the minimum " +
                          std::to_string(kMinVocabSize));
  }
  // Ordered map keeps word indices, and therefore everything downstream,
  // independent of hash iteration order.
  std::map<std::string_view, int64_t> piece_counts;
  for (const auto& text : corpus) {
    for (auto piece : pretokenize(text)) ++piece_counts[piece];
  }
  std::vector<Word> words;
  words.reserve(piece_counts.size());
  for (const auto& [piece, count] : piece_counts) {
    Word w;
    for (unsigned char c : piece) w.symbols.push_back(c);
    w.count = count;
    words.push_back(std::move(w));
  }

  PairTable pairs;
  for (size_t wi = 0; wi < words.size(); ++wi) {
    const auto& s = words[wi].symbols;
    for (size_t i = 0; i + 1 < s.size(); ++i) {
      pairs.add(s[i], s[i + 1], words[wi].count, wi);
    }
  }

  const size_t wanted = static_cast<size_t>(vocab_size - kMinVocabSize);
  std::vector<MergeRule> merges;
  merges.reserve(wanted);
  while (merges.size() < wanted && !pairs.empty()) {
    auto [neg_count, a, b] = pairs.best();
    const TokenId merged = kFirstMergeId + static_cast<TokenId>(merges.size());
    merges.emplace_back(a, b);
    for (size_t wi : pairs.take_words(a, b)) {
      Word& w = words[wi];
      auto& s = w.symbols;
      bool present = false;
      for (size_t i = 0; i + 1 < s.size(); ++i) {
        if (s[i] == a && s[i + 1] == b) {
          present = true;
          break;
        }
      }
      if (!present) continue;
      for (size_t i = 0; i + 1 < s.size(); ++i) {
        pairs.add(s[i], s[i + 1], -w.count, wi);
      }
      size_t out = 0;
      for (size_t i = 0; i < s.size();) {
        if (i + 1 < s.size() && s[i] == a && s[i + 1] == b) {
          s[out++] = merged;
          i += 2;
        } else {
          s[out++] = s[i++];
        }
      }
      s.resize(out);
      for (size_t i = 0; i + 1 < s.size(); ++i) {
        pairs.add(s[i], s[i + 1], w.count, wi);
      }
    }
  }

  BpeTrainingResult result{BpeTokenizer(std::move(merges), cutoff.cutoff_year),
                           {}};
  if (result.tokenizer.vocab_size() < vocab_size) {
    result.warnings.push_back(
        "corpus supports only " +
        std::to_string(result.tokenizer.vocab_size() - kMinVocabSize) +
        " merges; vocabulary is " +
        std::to_string(result.tokenizer.vocab_size()) + " instead of " +
        std::to_string(vocab_size));
  }
  return result;
}

}  // namespace dated::tok
