#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dated/common/jsonl.hpp"
#include "dated/lm/parameters.hpp"
#include "dated/tokenizer/bpe.hpp"

namespace dated::eval {

struct Exemplar {
  std::string question;
  std::string answer;
  bool operator==(const Exemplar&) const = default;
};

struct McqItem {
  std::string id;
  std::string question;
  std::vector<std::string> choices;
  int gold = 0;
  std::vector<Exemplar> exemplars;

  // Throws InvalidArgument naming the item unless there are at least two
  // choices and gold indexes one of them.
  void validate() const;
  bool operator==(const McqItem&) const = default;
};

Json mcq_item_to_json(const McqItem& item);
McqItem mcq_item_from_json(const Json& j);
// One item per line. Items without an "id" are named by line number.
std::vector<McqItem> read_mcq_task(const std::filesystem::path& path);

enum class Normalization { kNone, kPerToken };
std::string_view normalization_name(Normalization n);
std::optional<Normalization> parse_normalization(std::string_view name);

struct McqOptions {
  Normalization normalization = Normalization::kPerToken;
  int shots = 0;
  uint64_t seed = 0;
};

// Picks `shots` exemplars for `item`: from its own exemplars when it has
// any, otherwise from the other items of `task` (question plus gold
// choice). The draw is a seeded shuffle keyed on (seed, item id).
std::vector<Exemplar> select_exemplars(const McqItem& item, std::span<const McqItem> task,
                                       int shots, uint64_t seed);

// "Question: q\nAnswer: a\n\n" per exemplar, then "Question: q\nAnswer:".
std::string mcq_context(const McqItem& item, std::span<const Exemplar> exemplars);
// The scored continuation for one choice: a space, then the choice text.
std::string mcq_continuation(std::string_view choice);

struct McqScore {
  int chosen = 0;
  std::vector<double> scores;  // one per choice, higher is better
  std::vector<size_t> continuation_tokens;
};

// Per choice, the summed log-probability of the continuation tokens given
// <|endoftext|> + context; per-token normalization divides by their count.
// The highest score wins, the lowest index on exact ties. Throws
// InvalidArgument naming the item when context plus continuation does not
// fit the context window.
McqScore score_mcq(const lm::Parameters<float>& params, const tok::BpeTokenizer& tokenizer,
                   const McqItem& item, std::span<const Exemplar> exemplars,
                   Normalization normalization);

struct McqRecord {
  std::string id;
  int gold = 0;
  int chosen = -1;  // -1 when the item failed
  std::vector<double> scores;
  bool correct = false;
  std::string error;
};

struct TaskResult {
  size_t total = 0;
  size_t correct = 0;
  size_t errors = 0;
  double accuracy = 0;
  std::vector<McqRecord> records;
  Json summary_json() const;
};

Json mcq_record_to_json(const McqRecord& r);

// Scores every item; an item that throws is counted incorrect and its error
// recorded. Throws InvalidArgument on an empty task.
TaskResult run_task(const lm::Parameters<float>& params, const tok::BpeTokenizer& tokenizer,
                    std::span<const McqItem> task, const McqOptions& options);

}  // namespace dated::eval
