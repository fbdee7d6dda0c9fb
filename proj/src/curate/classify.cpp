#include "dated/curate/classify.hpp"

#include <algorithm>
#include <cctype>

namespace dated::curate {
namespace {

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::optional<std::string> find_year(std::string_view text) {
  for (size_t i = 0; i + 4 <= text.size(); ++i) {
    if (i > 0 && is_word_char(text[i - 1])) continue;
    if (!std::all_of(text.begin() + i, text.begin() + i + 4,
                     [](char c) { return c >= '0' && c <= '9'; })) {
      continue;
    }
    size_t end = i + 4;
    if (end < text.size() && text[end] == 's') ++end;
    if (end < text.size() && is_word_char(text[end])) continue;
    const int year = std::stoi(std::string(text.substr(i, 4)));
    if (year >= 1900 && year <= 2099) return std::string(text.substr(i, end - i));
  }
  return std::nullopt;
}

bool contains_phrase(const std::string& haystack, const std::string& phrase) {
  for (size_t pos = haystack.find(phrase); pos != std::string::npos;
       pos = haystack.find(phrase, pos + 1)) {
    const size_t end = pos + phrase.size();
    if ((pos == 0 || !is_word_char(haystack[pos - 1])) &&
        (end == haystack.size() || !is_word_char(haystack[end]))) {
      return true;
    }
  }
  return false;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

const std::vector<std::string>& default_dated_lexicon() {
  static const std::vector<std::string> kLexicon = {
      // relative time
      "today", "tonight", "yesterday", "tomorrow", "this week", "last week", "next week",
      "this month", "last month", "next month", "this year", "last year", "next year",
      "currently", "right now", "nowadays", "at the moment", "as of", "so far this",
      "latest", "most recent", "recently", "up to date", "up-to-date", "upcoming",
      "breaking news", "in the news", "trending", "just announced", "just released",
      // office holders and organisations that change
      "president of", "prime minister", "current president", "the current", "ceo of",
      "chancellor of", "secretary of state", "who is the king", "who is the queen",
      "election", "elected", "incumbent",
      // recurring events and results
      "world cup", "olympics", "olympic games", "super bowl", "oscar", "oscars",
      "grammy", "nobel prize", "champions league", "who won", "winner of", "standings",
      "box office", "billboard",
      // markets
      "stock price", "share price", "exchange rate", "market cap", "interest rate",
      "inflation rate", "bitcoin", "earnings call", "quarterly results",
      // released works and personalities
      "tv show", "tv series", "episode", "season", "sitcom", "movie", "film", "album",
      "box set", "script of", "lyrics", "celebrity", "iphone", "covid", "pandemic",
  };
  return kLexicon;
}

RuleBasedClassifier::RuleBasedClassifier(std::vector<std::string> lexicon) {
  for (auto& p : lexicon) {
    if (p.empty()) throw InvalidArgument("empty lexicon phrase");
    lexicon_.push_back(lower(p));
  }
}

std::optional<std::string> RuleBasedClassifier::first_marker(std::string_view text) const {
  if (auto y = find_year(text)) return y;
  const std::string l = lower(text);
  for (const auto& p : lexicon_) {
    if (contains_phrase(l, p)) return p;
  }
  return std::nullopt;
}

Sensitivity RuleBasedClassifier::classify(const InstructionExample& example) {
  for (const auto& m : example.messages) {
    if (first_marker(m.text)) return Sensitivity::kTimeSensitive;
  }
  return Sensitivity::kGeneral;
}

std::vector<tok::ChatMessage> classification_messages(const InstructionExample& example) {
  static const std::string kSystem =
      "You screen instruction-tuning data for a language model that must not learn "
      "anything dated after its training cutoff. Decide whether answering the "
      "conversation depends on facts that change over time or are tied to a date "
      "(news, office holders, prices, results, releases, anything 'current' or "
      "'latest'). Reply with exactly one word: TIME_SENSITIVE or GENERAL.\n\n"
      "Example: \"Who won the most recent World Cup?\" -> TIME_SENSITIVE\n"
      "Example: \"Explain what a binary search does.\" -> GENERAL\n"
      "Example: \"Please replicate the script of the TV show 'Friends' episode 10 of "
      "season 7.\" -> TIME_SENSITIVE";
  std::string convo;
  for (const auto& m : example.messages) {
    convo += std::string(tok::role_name(m.role)) + ": " + m.text + "\n";
  }
  return {{tok::Role::kSystem, kSystem},
          {tok::Role::kUser, "Conversation:\n" + convo + "\nVerdict:"}};
}

std::optional<Sensitivity> parse_verdict(std::string_view reply) {
  std::string t = trim(reply);
  if (!t.empty() && t.back() == '.') t.pop_back();
  if (t == "TIME_SENSITIVE") return Sensitivity::kTimeSensitive;
  if (t == "GENERAL") return Sensitivity::kGeneral;
  return std::nullopt;
}

EndpointClassifier::EndpointClassifier(ChatEndpoint& endpoint, RetryPolicy retry,
                                       int parse_attempts)
    : endpoint_(endpoint), retry_(std::move(retry)), parse_attempts_(parse_attempts) {
  if (parse_attempts_ < 1) throw InvalidArgument("parse_attempts must be at least 1");
}

Sensitivity EndpointClassifier::classify(const InstructionExample& example) {
  const auto messages = classification_messages(example);
  for (int i = 0; i < parse_attempts_; ++i) {
    const std::string reply =
        with_retries(retry_, [&] { return endpoint_.complete(messages, 0.0); });
    if (auto v = parse_verdict(reply)) return *v;
  }
  ++unparsed_;
  return Sensitivity::kUnknown;
}

double RemovalReport::removal_rate() const {
  return before == 0 ? 0.0 : static_cast<double>(removed()) / static_cast<double>(before);
}

std::string RemovalReport::percent() const {
  // Hundredths of a percent, rounded half up.
  const uint64_t bp = before == 0 ? 0 : (removed() * 20000 + before) / (2 * before);
  const std::string frac = std::to_string(bp % 100);
  return std::to_string(bp / 100) + "." + (frac.size() == 1 ? "0" + frac : frac) + "%";
}

Json RemovalReport::to_json() const {
  return {{"dataset", dataset},
          {"before", before},
          {"after", after},
          {"removed", removed()},
          {"removal_rate", removal_rate()},
          {"removal_percent", percent()}};
}

RemovalReport make_report(std::string dataset, uint64_t before, uint64_t after) {
  if (after > before) {
    throw InvalidArgument("report for " + dataset + " keeps " + std::to_string(after) +
                          " of " + std::to_string(before));
  }
  return {std::move(dataset), before, after};
}

FilterResult filter_dataset(std::string dataset, std::span<const InstructionExample> examples,
                            TimeSensitivityClassifier& classifier) {
  if (examples.empty()) throw InvalidArgument("dataset " + dataset + " is empty");
  FilterResult r;
  for (size_t i = 0; i < examples.size(); ++i) {
    Sensitivity verdict;
    try {
      verdict = classifier.classify(examples[i]);
    } catch (const Error& e) {
      throw FilterAborted("classifier " + classifier.name() + " failed on example '" +
                              examples[i].id + "' after " + std::to_string(i) +
                              " of " + std::to_string(examples.size()) + ": " + e.what(),
                          e.code(), i, make_report(dataset, i, r.kept.size()));
    }
    InstructionExample e = examples[i];
    e.sensitivity = verdict;
    if (verdict == Sensitivity::kGeneral) {
      r.kept.push_back(std::move(e));
    } else {
      if (verdict == Sensitivity::kUnknown) {
        ++r.unknown;
        r.warnings.push_back("example '" + e.id + "' has no usable verdict; excluded");
      }
      r.removed.push_back(std::move(e));
    }
  }
  r.report = make_report(std::move(dataset), examples.size(), r.kept.size());
  return r;
}

}  // namespace dated::curate
