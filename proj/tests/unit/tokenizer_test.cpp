#include <gtest/gtest.h>

#include <filesystem>
#include <atomic>
#include <thread>

#include "dated/common/error.hpp"
#include "dated/common/random.hpp"
#include "dated/tokenizer/bpe.hpp"
#include "dated/tokenizer/chat_template.hpp"

using namespace dated;
using namespace dated::tok;

namespace {

std::string random_bytes(Rng& rng, size_t n) {
  std::string s(n, '\0');
  for (auto& c : s) c = static_cast<char>(rng.below(256));
  return s;
}

std::string random_utf8(Rng& rng, size_t codepoints) {
  std::string s;
  for (size_t i = 0; i < codepoints; ++i) {
    uint32_t cp;
    switch (rng.below(4)) {
      case 0: cp = 0x20 + rng.below(0x5f); break;
      case 1: cp = 0xa0 + rng.below(0x700); break;
      case 2: cp = 0x4e00 + rng.below(0x5000); break;
      default: cp = 0x1f300 + rng.below(0x300); break;
    }
    if (cp < 0x80) {
      s += static_cast<char>(cp);
    } else if (cp < 0x800) {
      s += static_cast<char>(0xc0 | (cp >> 6));
      s += static_cast<char>(0x80 | (cp & 0x3f));
    } else if (cp < 0x10000) {
      s += static_cast<char>(0xe0 | (cp >> 12));
      s += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
      s += static_cast<char>(0x80 | (cp & 0x3f));
    } else {
      s += static_cast<char>(0xf0 | (cp >> 18));
      s += static_cast<char>(0x80 | ((cp >> 12) & 0x3f));
      s += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
      s += static_cast<char>(0x80 | (cp & 0x3f));
    }
  }
  return s;
}

std::vector<std::string> word_corpus(uint64_t seed, size_t bytes) {
  static const char* kSyllables[] = {"ma", "ket", "sha", "res", "ro", "se", "fel",
                                     "quar", "ter", "ear", "nin", "gs", "the", "of",
                                     "an", "com", "pa", "ny", "nou", "ced", "re",
                                     "ve", "nue", "gro", "wth", "ba", "nk", "20",
                                     "15", "19", "ew", "in", "fla", "tion"};
  Rng rng(seed);
  auto word = [&] {
    std::string w;
    const int k = 1 + static_cast<int>(rng.below(3));
    for (int i = 0; i < k; ++i) w += kSyllables[rng.below(std::size(kSyllables))];
    return w;
  };
  std::vector<std::string> docs;
  size_t total = 0;
  while (total < bytes) {
    std::string d;
    const int n = 20 + static_cast<int>(rng.below(60));
    for (int i = 0; i < n; ++i) {
      if (i) d += rng.below(10) == 0 ? "\n" : " ";
      d += word();
    }
    total += d.size();
    docs.push_back(std::move(d));
  }
  return docs;
}

}  // namespace

TEST(Bpe, FirstMergeIsMostFrequentPair) {
  const std::vector<std::string> corpus{"aaaa aaaa"};
  auto result = train_bpe(corpus, kMinVocabSize + 1, CutoffSpec{2013});
  ASSERT_EQ(result.tokenizer.merges().size(), 1u);
  EXPECT_EQ(result.tokenizer.merges()[0], (MergeRule{'a', 'a'}));
  EXPECT_EQ(result.tokenizer.trained_on_cutoff(), 2013);
}

TEST(Bpe, MinimumVocabIsPureBytes) {
  const std::vector<std::string> corpus{"hello world"};
  auto result = train_bpe(corpus, kMinVocabSize, CutoffSpec{2013});
  EXPECT_TRUE(result.tokenizer.merges().empty());
  EXPECT_EQ(result.tokenizer.vocab_size(), 262);
  EXPECT_EQ(result.tokenizer.encode("hi"), (std::vector<TokenId>{'h', 'i'}));
  EXPECT_THROW(train_bpe(corpus, kMinVocabSize - 1, CutoffSpec{2013}),
               InvalidArgument);
}

TEST(Bpe, TiesGoToLowestPair) {
  const std::vector<std::string> corpus{"ba dc"};
  auto result = train_bpe(corpus, kMinVocabSize + 1, CutoffSpec{2013});
  ASSERT_EQ(result.tokenizer.merges().size(), 1u);
  // Candidates with count 1: (' ','d'), ('b','a'), ('d','c').
  EXPECT_EQ(result.tokenizer.merges()[0], (MergeRule{' ', 'd'}));
}

TEST(Bpe, SmallCorpusWarnsInsteadOfFailing) {
  const std::vector<std::string> corpus{"abc"};
  auto result = train_bpe(corpus, 1000, CutoffSpec{2013});
  EXPECT_EQ(result.tokenizer.merges().size(), 2u);
  EXPECT_FALSE(result.warnings.empty());
}

TEST(Bpe, DeterministicOnOneMegabyte) {
  const auto corpus = word_corpus(99, 1 << 20);
  const auto a = train_bpe(corpus, 512, CutoffSpec{2013}).tokenizer;
  const auto b = train_bpe(corpus, 512, CutoffSpec{2013}).tokenizer;
  EXPECT_EQ(a.vocab_size(), 512);
  EXPECT_EQ(a.fingerprint_hex(), b.fingerprint_hex());
  EXPECT_EQ(a.merges(), b.merges());
}

TEST(Bpe, EncodeAppliesMergesInRankOrder) {
  // Naive oracle: repeatedly apply the lowest-ranked adjacent merge.
  const auto corpus = word_corpus(7, 50000);
  const auto tk = train_bpe(corpus, 400, CutoffSpec{2013}).tokenizer;
  for (const auto& piece : pretokenize(corpus[0])) {
    std::vector<TokenId> ids(piece.begin(), piece.end());
    for (auto& id : ids) id = static_cast<uint8_t>(id);
    while (true) {
      size_t best_rank = SIZE_MAX, at = 0;
      for (size_t i = 0; i + 1 < ids.size(); ++i) {
        for (size_t r = 0; r < tk.merges().size() && r < best_rank; ++r) {
          if (tk.merges()[r] == MergeRule{ids[i], ids[i + 1]}) {
            best_rank = r;
            at = i;
          }
        }
      }
      if (best_rank == SIZE_MAX) break;
      ids[at] = kFirstMergeId + static_cast<TokenId>(best_rank);
      ids.erase(ids.begin() + at + 1);
    }
    EXPECT_EQ(tk.encode(piece), ids) << piece;
  }
}

TEST(Bpe, EmptyAndByteFallback) {
  const BpeTokenizer bytes;
  EXPECT_TRUE(bytes.encode("").empty());
  EXPECT_EQ(bytes.encode("A"), (std::vector<TokenId>{0x41}));
  EXPECT_EQ(bytes.decode(std::vector<TokenId>{}), "");
}

TEST(Bpe, RoundTripsRandomBytesAndUtf8) {
  const auto tk = train_bpe(word_corpus(3, 100000), 600, CutoffSpec{2013}).tokenizer;
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const std::string x = random_bytes(rng, rng.below(1024) + 1);
    EXPECT_EQ(tk.decode(tk.encode(x)), x);
    const std::string u = random_utf8(rng, rng.below(300));
    EXPECT_EQ(tk.decode(tk.encode(u)), u);
  }
  const std::string hello = "Hello, \xe4\xb8\x96\xe7\x95\x8c";
  EXPECT_EQ(tk.decode(tk.encode(hello)), hello);
}

TEST(Bpe, SpecialSpellingsStayPlainBytes) {
  const BpeTokenizer tk;
  const auto ids = tk.encode("<|endoftext|>");
  for (auto id : ids) EXPECT_LT(id, kNumByteTokens);
}

TEST(Bpe, DecodeRejectsOutOfRangeWithPosition) {
  const BpeTokenizer tk;
  try {
    tk.decode(std::vector<TokenId>{65, 66, tk.vocab_size()});
    FAIL() << "expected an error";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("position 2"), std::string::npos) << e.what();
  }
}

TEST(Bpe, RejectsMergeReferencingFutureToken) {
  EXPECT_THROW(BpeTokenizer({{'a', 263}}, 2013), InvalidArgument);
}

TEST(Bpe, SaveLoadPreservesFingerprint) {
  const auto tk = train_bpe(word_corpus(5, 20000), 300, CutoffSpec{2015}).tokenizer;
  const auto path = std::filesystem::temp_directory_path() / "dated_tok_test.json";
  tk.save(path);
  const auto back = BpeTokenizer::load(path);
  EXPECT_EQ(back.fingerprint_hex(), tk.fingerprint_hex());
  EXPECT_EQ(back.trained_on_cutoff(), 2015);
  EXPECT_EQ(back.merges(), tk.merges());
  Json j = tk.to_json();
  j["fingerprint"] = std::string(64, '0');
  EXPECT_THROW(BpeTokenizer::from_json(j), CorruptionError);
  j = tk.to_json();
  j["version"] = 99;
  EXPECT_THROW(BpeTokenizer::from_json(j), InvalidArgument);
  std::filesystem::remove(path);
}

TEST(Bpe, ConcurrentEncodeIsConsistent) {
  const auto tk = train_bpe(word_corpus(9, 30000), 350, CutoffSpec{2013}).tokenizer;
  const auto docs = word_corpus(10, 20000);
  std::vector<std::vector<TokenId>> serial;
  for (const auto& d : docs) serial.push_back(tk.encode(d));
  std::vector<std::thread> threads;
  std::atomic<int> mismatches{0};
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&] {
      for (size_t i = 0; i < docs.size(); ++i) {
        if (tk.encode(docs[i]) != serial[i]) ++mismatches;
      }
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(mismatches.load(), 0);
}

TEST(Pretokenize, ConcatenatesBack) {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    std::string s;
    for (int k = 0; k < 40; ++k) s += " \tab\n"[rng.below(5)];
    std::string joined;
    for (auto p : pretokenize(s)) joined += p;
    EXPECT_EQ(joined, s);
  }
  const auto pieces = pretokenize("hi  there");
  ASSERT_EQ(pieces.size(), 3u);
  EXPECT_EQ(pieces[1], " ");
  EXPECT_EQ(pieces[2], " there");
}

TEST(ChatTemplate, RendersRolesAndTargets) {
  const BpeTokenizer tk;
  const std::vector<ChatMessage> msgs{{Role::kSystem, "s"},
                                      {Role::kUser, "u"},
                                      {Role::kAssistant, "a"}};
  const auto r = render_chat(tk, msgs, false);
  const std::vector<TokenId> expected{kEndOfText, kSystem, 's', kEndOfTurn, kUser, 'u',
                                      kEndOfTurn, kAssistant, 'a', kEndOfTurn};
  EXPECT_EQ(r.tokens, expected);
  const std::vector<uint8_t> targets{0, 0, 0, 0, 0, 0, 0, 0, 1, 1};
  EXPECT_EQ(r.is_target, targets);
  const auto g = render_chat(tk, std::span(msgs).first(2), true);
  EXPECT_EQ(g.tokens.back(), kAssistant);
}

TEST(ChatTemplate, TurnOrderChecks) {
  const std::vector<ChatMessage> ok{{Role::kUser, "q"}, {Role::kAssistant, "a"}};
  EXPECT_FALSE(check_turn_order(ok).has_value());
  const std::vector<ChatMessage> two_users{{Role::kUser, "q"}, {Role::kUser, "q"}};
  EXPECT_TRUE(check_turn_order(two_users).has_value());
  const std::vector<ChatMessage> late_system{{Role::kUser, "q"}, {Role::kSystem, "s"}};
  EXPECT_TRUE(check_turn_order(late_system).has_value());
  EXPECT_TRUE(check_turn_order(std::vector<ChatMessage>{}).has_value());
}
