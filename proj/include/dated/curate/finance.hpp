#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dated/common/date.hpp"
#include "dated/curate/endpoint.hpp"
#include "dated/curate/instruction.hpp"

namespace dated::curate {

enum class FinanceTask { kHeadlineReturn, kTranscriptCapex };

std::string_view finance_task_name(FinanceTask task);
std::optional<FinanceTask> parse_finance_task(std::string_view name);

struct FinancePromptRecord {
  FinanceTask kind = FinanceTask::kHeadlineReturn;
  std::string context;  // headline or transcript excerpt
  std::string entity;   // company or ticker
  Date as_of;
  int month() const { return as_of.month; }
  bool operator==(const FinancePromptRecord&) const = default;
};

Json finance_record_to_json(const FinancePromptRecord& r);
FinancePromptRecord finance_record_from_json(const Json& j);
// One record per line: {kind, context, entity, as_of}.
std::vector<FinancePromptRecord> read_finance_records(const std::filesystem::path& path);
void write_finance_records(const std::filesystem::path& path,
                           std::span<const FinancePromptRecord> records);

// Per-month quotas for `target` items given each month's supply: every month
// is raised one item at a time in calendar order while supply lasts, so
// unconstrained months end within one of each other and any remainder lands
// on the earliest months.
std::array<size_t, 12> balance_months(const std::array<size_t, 12>& supply, size_t target);

struct FinancePrompt {
  FinancePromptRecord record;
  std::string text;  // embeds as_of and restricts reasoning to earlier information
};

struct FinancePromptSet {
  int year = 0;
  std::vector<FinancePrompt> prompts;  // month order, sampled order within a month
  std::array<size_t, 12> supply{};
  std::array<size_t, 12> per_month{};
  std::vector<std::string> warnings;
};

std::string render_finance_prompt(const FinancePromptRecord& record);

// Samples `target` records of `year` balanced across months with a seeded
// shuffle per month. Months without supply and a total supply below target
// produce warnings. Throws InvalidArgument if a record is dated outside
// `year` or the input is empty.
FinancePromptSet build_finance_prompts(std::span<const FinancePromptRecord> records, int year,
                                       size_t target, uint64_t seed);

// Non-empty, and carries a direction word (up, down, increase, decrease,
// rise, fall, higher, lower, positive, negative) or a digit.
bool passes_shape_check(std::string_view response);

struct TeacherOptions {
  RetryPolicy retry;
  double temperature = 0.0;
  std::string source = "finance-teacher";
};

struct TeacherResult {
  std::vector<InstructionExample> examples;
  size_t dropped_shape = 0;     // replies failing passes_shape_check
  size_t dropped_endpoint = 0;  // prompts whose calls kept failing
  std::vector<std::string> warnings;
};

// Pairs each prompt with the teacher's reply as a time-sensitive example
// stamped with the record's as_of date. Endpoint failures are retried, then
// skipped and counted. Throws InvalidArgument on empty input and
// Error("teacher_failed") when no example survives.
TeacherResult generate_teacher_examples(std::span<const FinancePrompt> prompts,
                                        ChatEndpoint& teacher,
                                        const TeacherOptions& options = {});

}  // namespace dated::curate
