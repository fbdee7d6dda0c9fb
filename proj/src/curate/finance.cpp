#include "dated/curate/finance.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include "dated/common/random.hpp"

namespace dated::curate {
namespace {

const char* kMonthNames[] = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                             "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};

}  // namespace

std::string_view finance_task_name(FinanceTask task) {
  return task == FinanceTask::kHeadlineReturn ? "headline_return" : "transcript_capex";
}

std::optional<FinanceTask> parse_finance_task(std::string_view name) {
  if (name == "headline_return") return FinanceTask::kHeadlineReturn;
  if (name == "transcript_capex") return FinanceTask::kTranscriptCapex;
  return std::nullopt;
}

Json finance_record_to_json(const FinancePromptRecord& r) {
  return {{"kind", finance_task_name(r.kind)},
          {"context", r.context},
          {"entity", r.entity},
          {"as_of", r.as_of.to_string()}};
}

FinancePromptRecord finance_record_from_json(const Json& j) {
  FinancePromptRecord r;
  try {
    const auto kind = parse_finance_task(j.at("kind").get<std::string>());
    if (!kind) throw InvalidArgument("unknown finance task " + j.at("kind").dump());
    r.kind = *kind;
    r.context = j.at("context").get<std::string>();
    r.entity = j.value("entity", "");
    const auto d = parse_date(j.at("as_of").get<std::string>());
    if (!d) throw InvalidArgument("invalid as_of " + j.at("as_of").dump());
    r.as_of = *d;
  } catch (const Json::exception& ex) {
    throw InvalidArgument(std::string("malformed finance record: ") + ex.what());
  }
  return r;
}

std::vector<FinancePromptRecord> read_finance_records(const std::filesystem::path& path) {
  std::vector<FinancePromptRecord> out;
  for_each_line(path, [&](size_t line, const std::string& text) {
    try {
      out.push_back(finance_record_from_json(Json::parse(text)));
    } catch (const std::exception& ex) {
      throw InvalidArgument(path.string() + ":" + std::to_string(line) + ": " + ex.what());
    }
  });
  return out;
}

void write_finance_records(const std::filesystem::path& path,
                           std::span<const FinancePromptRecord> records) {
  std::string out;
  for (const auto& r : records) out += finance_record_to_json(r).dump() + "\n";
  write_file_atomic(path, out);
}

std::array<size_t, 12> balance_months(const std::array<size_t, 12>& supply, size_t target) {
  std::array<size_t, 12> alloc{};
  size_t remaining = std::min(target, std::accumulate(supply.begin(), supply.end(), size_t{0}));
  while (remaining > 0) {
    for (size_t m = 0; m < 12 && remaining > 0; ++m) {
      if (alloc[m] < supply[m]) {
        ++alloc[m];
        --remaining;
      }
    }
  }
  return alloc;
}

std::string render_finance_prompt(const FinancePromptRecord& r) {
  const std::string date = r.as_of.to_string();
  std::string head = "Today is " + date + ". Use only information that was available on or before " +
                     date + "; do not rely on anything that happened later.\n\n";
  if (r.kind == FinanceTask::kHeadlineReturn) {
    return head + "News headline about " + r.entity + ":\n" + r.context +
           "\n\nWill " + r.entity +
           "'s stock return over the next trading day be UP or DOWN? Give a short "
           "reason, then the answer.";
  }
  return head + "Excerpt from the " + r.entity + " earnings call:\n" + r.context +
         "\n\nWill " + r.entity +
         "'s capital expenditure next quarter INCREASE or DECREASE, and by roughly what "
         "percentage? Give a short reason, then the answer.";
}

FinancePromptSet build_finance_prompts(std::span<const FinancePromptRecord> records, int year,
                                       size_t target, uint64_t seed) {
  if (records.empty()) throw InvalidArgument("no finance records");
  FinancePromptSet set;
  set.year = year;
  std::array<std::vector<size_t>, 12> by_month;
  for (size_t i = 0; i < records.size(); ++i) {
    if (records[i].as_of.year != year) {
      throw InvalidArgument("record " + std::to_string(i) + " is dated " +
                            records[i].as_of.to_string() + ", outside " +
                            std::to_string(year));
    }
    by_month[records[i].month() - 1].push_back(i);
  }
  for (int m = 0; m < 12; ++m) set.supply[m] = by_month[m].size();
  set.per_month = balance_months(set.supply, target);

  std::string empty;
  for (int m = 0; m < 12; ++m) {
    if (set.supply[m] == 0) empty += std::string(empty.empty() ? "" : ", ") + kMonthNames[m];
  }
  if (!empty.empty()) {
    set.warnings.push_back("no records for " + empty + " " + std::to_string(year) +
                           "; their share went to the other months");
  }
  const size_t total = records.size();
  if (total < target) {
    set.warnings.push_back("only " + std::to_string(total) + " records for a target of " +
                           std::to_string(target));
  }

  Rng rng(seed);
  for (int m = 0; m < 12; ++m) {
    auto& idx = by_month[m];
    rng.shuffle(std::span(idx));
    for (size_t k = 0; k < set.per_month[m]; ++k) {
      const auto& r = records[idx[k]];
      set.prompts.push_back({r, render_finance_prompt(r)});
    }
  }
  return set;
}

bool passes_shape_check(std::string_view response) {
  static const char* kMarkers[] = {"up",     "down",   "increase", "decrease", "rise",
                                   "fall",   "higher", "lower",    "positive", "negative"};
  bool any = false;
  std::string word;
  auto flush = [&] {
    for (const char* m : kMarkers) any |= word == m;
    word.clear();
  };
  for (char c : response) {
    if (std::isdigit(static_cast<unsigned char>(c))) return true;
    if (std::isalpha(static_cast<unsigned char>(c))) {
      word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else {
      flush();
    }
  }
  flush();
  return any;
}

TeacherResult generate_teacher_examples(std::span<const FinancePrompt> prompts,
                                        ChatEndpoint& teacher, const TeacherOptions& options) {
  if (prompts.empty()) throw InvalidArgument("no prompts for the teacher");
  TeacherResult r;
  for (size_t i = 0; i < prompts.size(); ++i) {
    const auto& p = prompts[i];
    const std::vector<tok::ChatMessage> messages{{tok::Role::kUser, p.text}};
    std::string reply;
    try {
      reply = with_retries(options.retry,
                           [&] { return teacher.complete(messages, options.temperature); });
    } catch (const RetryableError& e) {
      ++r.dropped_endpoint;
      r.warnings.push_back("prompt " + std::to_string(i) + " skipped: " + e.what());
      continue;
    }
    if (!passes_shape_check(reply)) {
      ++r.dropped_shape;
      continue;
    }
    InstructionExample e;
    e.id = "finance-" + std::string(finance_task_name(p.record.kind)) + "-" +
           p.record.as_of.to_string() + "-" + std::to_string(i);
    e.messages = {{tok::Role::kUser, p.text}, {tok::Role::kAssistant, reply}};
    e.source = options.source;
    e.timestamp = p.record.as_of;
    e.sensitivity = Sensitivity::kTimeSensitive;
    r.examples.push_back(std::move(e));
  }
  if (r.examples.empty()) {
    throw Error("teacher_failed", "no teacher reply survived out of " +
                                      std::to_string(prompts.size()) + " prompts (" +
                                      std::to_string(r.dropped_shape) + " failed the shape check, " +
                                      std::to_string(r.dropped_endpoint) + " endpoint failures)");
  }
  return r;
}

}  // namespace dated::curate
