#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dated/curate/endpoint.hpp"
#include "dated/curate/instruction.hpp"

namespace dated::curate {

class TimeSensitivityClassifier {
 public:
  virtual ~TimeSensitivityClassifier() = default;
  // kGeneral or kTimeSensitive; kUnknown when no verdict could be obtained.
  virtual Sensitivity classify(const InstructionExample& example) = 0;
  virtual std::string name() const = 0;
};

// Phrases that tie a request to a point in time: relative time words,
// recurring events, office holders, market quotes, released works.
const std::vector<std::string>& default_dated_lexicon();

// Flags any turn containing a year between 1900 and 2099 (optionally
// followed by "s") or a lexicon phrase, matched case-insensitively on word
// boundaries. Pure and thread-safe.
class RuleBasedClassifier : public TimeSensitivityClassifier {
 public:
  explicit RuleBasedClassifier(std::vector<std::string> lexicon = default_dated_lexicon());
  Sensitivity classify(const InstructionExample& example) override;
  std::string name() const override { return "rule"; }
  // The first marker found in `text`, for reports.
  std::optional<std::string> first_marker(std::string_view text) const;

 private:
  std::vector<std::string> lexicon_;  // lower case
};

// Fixed system prompt asking for a one-word verdict, with three worked
// examples.
std::vector<tok::ChatMessage> classification_messages(const InstructionExample& example);

// Accepts exactly TIME_SENSITIVE or GENERAL, ignoring surrounding
// whitespace and a trailing period.
std::optional<Sensitivity> parse_verdict(std::string_view reply);

// Asks a chat endpoint at temperature 0. Transport failures are retried per
// `retry` and then propagate as RetryableError. A reply that does not parse
// is asked again up to `parse_attempts` times in total, after which the
// example is kUnknown and counted in unparsed().
class EndpointClassifier : public TimeSensitivityClassifier {
 public:
  EndpointClassifier(ChatEndpoint& endpoint, RetryPolicy retry = {}, int parse_attempts = 3);
  Sensitivity classify(const InstructionExample& example) override;
  std::string name() const override { return "endpoint"; }
  size_t unparsed() const { return unparsed_; }

 private:
  ChatEndpoint& endpoint_;
  RetryPolicy retry_;
  int parse_attempts_;
  size_t unparsed_ = 0;
};

struct RemovalReport {
  std::string dataset;
  uint64_t before = 0;
  uint64_t after = 0;

  uint64_t removed() const { return before - after; }
  double removal_rate() const;  // (before - after) / before; 0 when empty
  // Percentage rounded half up to two decimals, e.g. "39.15%", computed in
  // integer arithmetic.
  std::string percent() const;
  Json to_json() const;
};

// Throws InvalidArgument unless 0 <= after <= before.
RemovalReport make_report(std::string dataset, uint64_t before, uint64_t after);

struct FilterResult {
  std::vector<InstructionExample> kept;     // classified general
  std::vector<InstructionExample> removed;  // time-sensitive or unknown
  size_t unknown = 0;
  RemovalReport report;
  std::vector<std::string> warnings;
};

// Raised when the classifier fails mid-run. Carries what was decided so far.
class FilterAborted : public Error {
 public:
  FilterAborted(const std::string& message, std::string cause_code, size_t processed,
                RemovalReport partial)
      : Error("filter_aborted", message),
        cause_code(std::move(cause_code)),
        processed(processed),
        partial(std::move(partial)) {}
  std::string cause_code;
  size_t processed;
  RemovalReport partial;  // over the first `processed` examples
};

// Classifies every example and splits the input in order. Each output
// example carries its verdict in `sensitivity`. Throws InvalidArgument on an
// empty dataset and FilterAborted when the classifier throws.
FilterResult filter_dataset(std::string dataset, std::span<const InstructionExample> examples,
                            TimeSensitivityClassifier& classifier);

}  // namespace dated::curate
