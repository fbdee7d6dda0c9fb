#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dated/common/date.hpp"
#include "dated/common/jsonl.hpp"
#include "dated/tokenizer/chat_template.hpp"

namespace dated::curate {

enum class Sensitivity { kGeneral, kTimeSensitive, kUnknown };

std::string_view sensitivity_name(Sensitivity s);
std::optional<Sensitivity> parse_sensitivity(std::string_view name);

struct InstructionExample {
  std::string id;
  std::vector<tok::ChatMessage> messages;
  std::string source;
  std::optional<Date> timestamp;
  Sensitivity sensitivity = Sensitivity::kUnknown;

  // Throws InvalidArgument unless there is a user and an assistant turn in
  // the allowed order.
  void validate() const;
  // First user turn, or "" when there is none.
  const std::string& prompt() const;
  bool operator==(const InstructionExample&) const = default;
};

Json example_to_json(const InstructionExample& e);
InstructionExample example_from_json(const Json& j);

// One example per line: {id, messages: [{role, content}], source, timestamp?,
// sensitivity}. Lines failing validation raise InvalidArgument naming the
// line number.
std::vector<InstructionExample> read_examples(const std::filesystem::path& path);
void write_examples(const std::filesystem::path& path,
                    const std::vector<InstructionExample>& examples);

// Training mix: an optional header line {"format": "dated-mix",
// "declared_cutoff": Y} followed by example lines.
struct InstructionMix {
  std::optional<int> declared_cutoff;
  std::vector<InstructionExample> examples;
};

InstructionMix read_mix(const std::filesystem::path& path);
void write_mix(const std::filesystem::path& path, const InstructionMix& mix);
std::string serialize_mix(const InstructionMix& mix);

}  // namespace dated::curate
