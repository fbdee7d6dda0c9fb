#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dated/common/jsonl.hpp"
#include "dated/lm/generate.hpp"
#include "dated/lm/parameters.hpp"
#include "dated/tokenizer/bpe.hpp"

namespace dated::eval {

// Checkable constraint families. Words are maximal runs of non-whitespace;
// lines are the '\n'-separated pieces after trailing newlines are dropped;
// keyword matching ignores case.
enum class ConstraintKind {
  kMinWords,          // value
  kMaxWords,          // value
  kExactLines,        // value
  kContains,          // text
  kForbidden,         // text
  kKeywordAtLeast,    // text, value: whole-word occurrences >= value
  kStartsWith,        // text, after leading whitespace
  kEndsWith,          // text, before trailing whitespace
  kLowercase,         // no uppercase letter
  kUppercase,         // no lowercase letter
  kNoCommas,
  kBulletCount,       // value: lines starting with "* " or "- "
  kPlaceholdersAtLeast,  // value: "[...]" spans
  kJson,              // whole response parses as JSON
};

std::string_view constraint_kind_name(ConstraintKind kind);
std::optional<ConstraintKind> parse_constraint_kind(std::string_view name);

struct Constraint {
  ConstraintKind kind = ConstraintKind::kMinWords;
  std::string text;
  long value = 0;

  std::string describe() const;
  bool operator==(const Constraint&) const = default;
};

struct ConstraintItem {
  std::string id;
  std::string prompt;
  std::vector<Constraint> constraints;
  bool operator==(const ConstraintItem&) const = default;
};

// Constraint JSON: {"type": name, "text": ..., "value": ...} with the fields
// that kind uses. Throws InvalidArgument on an unknown type, a missing
// field, a negative count or an item without constraints.
Constraint constraint_from_json(const Json& j);
Json constraint_to_json(const Constraint& c);
ConstraintItem constraint_item_from_json(const Json& j);
std::vector<ConstraintItem> read_constraint_task(const std::filesystem::path& path);

struct ConstraintVerdict {
  std::string constraint;
  bool pass = false;
};

struct InstructionVerdict {
  bool pass = false;  // every constraint passed
  std::vector<ConstraintVerdict> verdicts;
};

size_t count_words(std::string_view text);
bool check_constraint(std::string_view response, const Constraint& c);
InstructionVerdict check_instruction(std::string_view response, const ConstraintItem& item);

struct InstructionRecord {
  std::string id;
  std::string response;
  InstructionVerdict verdict;
  std::string error;
};

struct InstructionResult {
  size_t total = 0;
  size_t passed = 0;
  size_t errors = 0;
  double prompt_level_strict = 0;
  std::vector<InstructionRecord> records;
  Json summary_json() const;
};

Json instruction_record_to_json(const InstructionRecord& r);

// Grades given responses; sizes must match.
InstructionResult grade_responses(std::span<const ConstraintItem> items,
                                  std::span<const std::string> responses);

// Generates a reply to each prompt as a single user turn through the chat
// template, then grades it. A failed generation counts as a failed prompt.
// Throws InvalidArgument on an empty task.
InstructionResult run_instruction_task(const lm::Parameters<float>& params,
                                       const tok::BpeTokenizer& tokenizer,
                                       std::span<const ConstraintItem> items,
                                       const lm::SamplingParams& sampling);

}  // namespace dated::eval
