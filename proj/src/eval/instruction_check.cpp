#include "dated/eval/instruction_check.hpp"

#include <algorithm>
#include <cctype>

#include "dated/common/error.hpp"
#include "dated/tokenizer/chat_template.hpp"

namespace dated::eval {
namespace {

struct KindInfo {
  ConstraintKind kind;
  const char* name;
  bool needs_text;
  bool needs_value;
};

constexpr KindInfo kKinds[] = {
    {ConstraintKind::kMinWords, "min_words", false, true},
    {ConstraintKind::kMaxWords, "max_words", false, true},
    {ConstraintKind::kExactLines, "exact_lines", false, true},
    {ConstraintKind::kContains, "contains", true, false},
    {ConstraintKind::kForbidden, "forbidden", true, false},
    {ConstraintKind::kKeywordAtLeast, "keyword_at_least", true, true},
    {ConstraintKind::kStartsWith, "starts_with", true, false},
    {ConstraintKind::kEndsWith, "ends_with", true, false},
    {ConstraintKind::kLowercase, "lowercase", false, false},
    {ConstraintKind::kUppercase, "uppercase", false, false},
    {ConstraintKind::kNoCommas, "no_commas", false, false},
    {ConstraintKind::kBulletCount, "bullet_count", false, true},
    {ConstraintKind::kPlaceholdersAtLeast, "placeholders_at_least", false, true},
    {ConstraintKind::kJson, "json", false, false},
};

const KindInfo& info(ConstraintKind kind) {
  for (const auto& k : kKinds) {
    if (k.kind == kind) return k;
  }
  throw InvalidArgument("unknown constraint kind");
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  while (!text.empty() && text.back() == '\n') text.remove_suffix(1);
  std::vector<std::string_view> out;
  if (text.empty()) return out;
  size_t start = 0;
  for (;;) {
    const size_t nl = text.find('\n', start);
    out.push_back(text.substr(start, nl == std::string_view::npos ? nl : nl - start));
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return out;
}

size_t count_whole_words(const std::string& haystack, const std::string& word) {
  size_t n = 0;
  for (size_t pos = haystack.find(word); pos != std::string::npos;
       pos = haystack.find(word, pos + 1)) {
    const size_t end = pos + word.size();
    if ((pos == 0 || !is_word_char(haystack[pos - 1])) &&
        (end == haystack.size() || !is_word_char(haystack[end]))) {
      ++n;
    }
  }
  return n;
}

size_t count_placeholders(std::string_view text) {
  size_t n = 0;
  for (size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '[') continue;
    size_t j = i + 1;
    while (j < text.size() && text[j] != ']' && text[j] != '[') ++j;
    if (j < text.size() && text[j] == ']' && j > i + 1) {
      ++n;
      i = j;
    }
  }
  return n;
}

bool is_json(std::string_view text) {
  std::string_view t = trim(text);
  if (t.starts_with("```")) {
    const size_t nl = t.find('\n');
    if (nl == std::string_view::npos || !t.ends_with("```")) return false;
    t = trim(t.substr(nl + 1, t.size() - 3 - (nl + 1)));
  }
  return !t.empty() && Json::accept(t);
}

}  // namespace

std::string_view constraint_kind_name(ConstraintKind kind) { return info(kind).name; }

std::optional<ConstraintKind> parse_constraint_kind(std::string_view name) {
  for (const auto& k : kKinds) {
    if (name == k.name) return k.kind;
  }
  return std::nullopt;
}

std::string Constraint::describe() const {
  std::string s(constraint_kind_name(kind));
  const auto& i = info(kind);
  if (i.needs_text) s += " \"" + text + "\"";
  if (i.needs_value) s += " " + std::to_string(value);
  return s;
}

Constraint constraint_from_json(const Json& j) {
  Constraint c;
  try {
    const std::string type = j.at("type").get<std::string>();
    const auto kind = parse_constraint_kind(type);
    if (!kind) throw InvalidArgument("unknown constraint type '" + type + "'");
    c.kind = *kind;
    const auto& i = info(c.kind);
    if (i.needs_text) {
      c.text = j.at("text").get<std::string>();
      if (c.text.empty()) throw InvalidArgument(type + " needs non-empty text");
    }
    if (i.needs_value) {
      c.value = j.at("value").get<long>();
      if (c.value < 0) throw InvalidArgument(type + " needs a non-negative value");
    }
  } catch (const Json::exception& ex) {
    throw InvalidArgument(std::string("malformed constraint: ") + ex.what());
  }
  return c;
}

Json constraint_to_json(const Constraint& c) {
  Json j = {{"type", constraint_kind_name(c.kind)}};
  const auto& i = info(c.kind);
  if (i.needs_text) j["text"] = c.text;
  if (i.needs_value) j["value"] = c.value;
  return j;
}

ConstraintItem constraint_item_from_json(const Json& j) {
  ConstraintItem item;
  try {
    item.id = j.value("id", "");
    item.prompt = j.at("prompt").get<std::string>();
    for (const auto& c : j.at("constraints")) item.constraints.push_back(constraint_from_json(c));
  } catch (const Json::exception& ex) {
    throw InvalidArgument(std::string("malformed instruction item: ") + ex.what());
  }
  if (item.constraints.empty()) throw InvalidArgument("item " + item.id + " has no constraints");
  return item;
}

std::vector<ConstraintItem> read_constraint_task(const std::filesystem::path& path) {
  std::vector<ConstraintItem> out;
  for_each_line(path, [&](size_t line, const std::string& text) {
    try {
      auto item = constraint_item_from_json(Json::parse(text));
      if (item.id.empty()) item.id = "line" + std::to_string(line);
      out.push_back(std::move(item));
    } catch (const std::exception& ex) {
      throw InvalidArgument(path.string() + ":" + std::to_string(line) + ": " + ex.what());
    }
  });
  return out;
}

size_t count_words(std::string_view text) {
  size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

bool check_constraint(std::string_view response, const Constraint& c) {
  const auto value = static_cast<size_t>(c.value);
  switch (c.kind) {
    case ConstraintKind::kMinWords:
      return count_words(response) >= value;
    case ConstraintKind::kMaxWords:
      return count_words(response) <= value;
    case ConstraintKind::kExactLines:
      return lines_of(response).size() == value;
    case ConstraintKind::kContains:
      return lower(response).find(lower(c.text)) != std::string::npos;
    case ConstraintKind::kForbidden:
      return lower(response).find(lower(c.text)) == std::string::npos;
    case ConstraintKind::kKeywordAtLeast:
      return count_whole_words(lower(response), lower(c.text)) >= value;
    case ConstraintKind::kStartsWith:
      return trim(response).starts_with(c.text);
    case ConstraintKind::kEndsWith:
      return trim(response).ends_with(c.text);
    case ConstraintKind::kLowercase:
      return std::none_of(response.begin(), response.end(),
                          [](char ch) { return std::isupper(static_cast<unsigned char>(ch)); });
    case ConstraintKind::kUppercase:
      return std::none_of(response.begin(), response.end(),
                          [](char ch) { return std::islower(static_cast<unsigned char>(ch)); });
    case ConstraintKind::kNoCommas:
      return response.find(',') == std::string_view::npos;
    case ConstraintKind::kBulletCount: {
      size_t n = 0;
      for (auto line : lines_of(response)) {
        while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.remove_prefix(1);
        n += line.starts_with("* ") || line.starts_with("- ");
      }
      return n == value;
    }
    case ConstraintKind::kPlaceholdersAtLeast:
      return count_placeholders(response) >= value;
    case ConstraintKind::kJson:
      return is_json(response);
  }
  return false;
}

InstructionVerdict check_instruction(std::string_view response, const ConstraintItem& item) {
  InstructionVerdict v;
  v.pass = true;
  for (const auto& c : item.constraints) {
    const bool ok = check_constraint(response, c);
    v.verdicts.push_back({c.describe(), ok});
    v.pass = v.pass && ok;
  }
  return v;
}

Json instruction_record_to_json(const InstructionRecord& r) {
  Json verdicts = Json::array();
  for (const auto& v : r.verdict.verdicts) {
    verdicts.push_back({{"constraint", v.constraint}, {"pass", v.pass}});
  }
  Json j = {{"id", r.id}, {"response", r.response}, {"pass", r.verdict.pass},
            {"verdicts", verdicts}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

Json InstructionResult::summary_json() const {
  return {{"total", total}, {"passed", passed}, {"errors", errors},
          {"prompt_level_strict", prompt_level_strict}};
}

namespace {

void finish(InstructionResult& r) {
  r.total = r.records.size();
  for (const auto& rec : r.records) r.passed += rec.verdict.pass;
  r.prompt_level_strict = static_cast<double>(r.passed) / static_cast<double>(r.total);
}

}  // namespace

InstructionResult grade_responses(std::span<const ConstraintItem> items,
                                  std::span<const std::string> responses) {
  if (items.empty()) throw InvalidArgument("task has no items");
  if (items.size() != responses.size()) {
    throw InvalidArgument(std::to_string(items.size()) + " items but " +
                          std::to_string(responses.size()) + " responses");
  }
  InstructionResult r;
  for (size_t i = 0; i < items.size(); ++i) {
    r.records.push_back({items[i].id, responses[i], check_instruction(responses[i], items[i]), ""});
  }
  finish(r);
  return r;
}

InstructionResult run_instruction_task(const lm::Parameters<float>& params,
                                       const tok::BpeTokenizer& tokenizer,
                                       std::span<const ConstraintItem> items,
                                       const lm::SamplingParams& sampling) {
  if (items.empty()) throw InvalidArgument("task has no items");
  InstructionResult r;
  for (const auto& item : items) {
    InstructionRecord rec;
    rec.id = item.id;
    try {
      const std::vector<tok::ChatMessage> turn{{tok::Role::kUser, item.prompt}};
      const auto prompt = tok::render_chat(tokenizer, turn, true);
      const auto gen = lm::generate(params, prompt.tokens, sampling);
      rec.response = tokenizer.decode(gen.tokens);
      rec.verdict = check_instruction(rec.response, item);
    } catch (const std::exception& e) {
      rec.error = e.what();
      rec.verdict.pass = false;
      ++r.errors;
    }
    r.records.push_back(std::move(rec));
  }
  finish(r);
  return r;
}

}  // namespace dated::eval
