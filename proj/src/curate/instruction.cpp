#include "dated/curate/instruction.hpp"

#include <sstream>

#include "dated/common/error.hpp"

namespace dated::curate {

std::string_view sensitivity_name(Sensitivity s) {
  switch (s) {
    case Sensitivity::kGeneral: return "general";
    case Sensitivity::kTimeSensitive: return "time_sensitive";
    case Sensitivity::kUnknown: break;
  }
  return "unknown";
}

std::optional<Sensitivity> parse_sensitivity(std::string_view name) {
  if (name == "general") return Sensitivity::kGeneral;
  if (name == "time_sensitive") return Sensitivity::kTimeSensitive;
  if (name == "unknown") return Sensitivity::kUnknown;
  return std::nullopt;
}

void InstructionExample::validate() const {
  if (auto problem = tok::check_turn_order(messages)) {
    throw InvalidArgument("example '" + id + "': " + *problem);
  }
  bool user = false, assistant = false;
  for (const auto& m : messages) {
    user |= m.role == tok::Role::kUser;
    assistant |= m.role == tok::Role::kAssistant;
  }
  if (!user || !assistant) {
    throw InvalidArgument("example '" + id +
                          "' needs at least one user and one assistant turn");
  }
}

const std::string& InstructionExample::prompt() const {
  static const std::string kEmpty;
  for (const auto& m : messages) {
    if (m.role == tok::Role::kUser) return m.text;
  }
  return kEmpty;
}

Json example_to_json(const InstructionExample& e) {
  Json messages = Json::array();
  for (const auto& m : e.messages) {
    messages.push_back({{"role", tok::role_name(m.role)}, {"content", m.text}});
  }
  Json j{{"id", e.id},
         {"messages", messages},
         {"source", e.source},
         {"sensitivity", sensitivity_name(e.sensitivity)}};
  if (e.timestamp) j["timestamp"] = e.timestamp->to_string();
  return j;
}

InstructionExample example_from_json(const Json& j) {
  InstructionExample e;
  try {
    e.id = j.value("id", "");
    e.source = j.value("source", "");
    for (const auto& m : j.at("messages")) {
      const auto role = tok::parse_role(m.at("role").get<std::string>());
      if (!role) {
        throw InvalidArgument("unknown role " + m.at("role").dump());
      }
      e.messages.push_back({*role, m.at("content").get<std::string>()});
    }
    if (j.contains("timestamp") && !j["timestamp"].is_null()) {
      e.timestamp = parse_date(j["timestamp"].get<std::string>());
      if (!e.timestamp) {
        throw InvalidArgument("invalid timestamp " + j["timestamp"].dump());
      }
    }
    const auto s = parse_sensitivity(j.value("sensitivity", "unknown"));
    if (!s) throw InvalidArgument("invalid sensitivity " + j["sensitivity"].dump());
    e.sensitivity = *s;
  } catch (const Json::exception& ex) {
    throw InvalidArgument(std::string("malformed example: ") + ex.what());
  }
  e.validate();
  return e;
}

namespace {

void append_examples(const std::filesystem::path& path, bool allow_header,
                     InstructionMix& mix) {
  for_each_line(path, [&](size_t line, const std::string& text) {
    Json j;
    try {
      j = Json::parse(text);
    } catch (const Json::exception& ex) {
      throw InvalidArgument(path.string() + ":" + std::to_string(line) +
                            ": " + ex.what());
    }
    if (allow_header && line == 1 && j.is_object() &&
        j.value("format", "") == "dated-mix") {
      if (j.contains("declared_cutoff") && !j["declared_cutoff"].is_null()) {
        mix.declared_cutoff = j["declared_cutoff"].get<int>();
      }
      return;
    }
    try {
      mix.examples.push_back(example_from_json(j));
    } catch (const InvalidArgument& ex) {
      throw InvalidArgument(path.string() + ":" + std::to_string(line) + ": " +
                            ex.what());
    }
  });
}

}  // namespace

std::vector<InstructionExample> read_examples(const std::filesystem::path& path) {
  InstructionMix mix;
  append_examples(path, true, mix);
  return std::move(mix.examples);
}

void write_examples(const std::filesystem::path& path,
                    const std::vector<InstructionExample>& examples) {
  std::string out;
  for (const auto& e : examples) out += example_to_json(e).dump() + "\n";
  write_file_atomic(path, out);
}

InstructionMix read_mix(const std::filesystem::path& path) {
  InstructionMix mix;
  append_examples(path, true, mix);
  return mix;
}

std::string serialize_mix(const InstructionMix& mix) {
  Json header{{"format", "dated-mix"}, {"examples", mix.examples.size()}};
  header["declared_cutoff"] =
      mix.declared_cutoff ? Json(*mix.declared_cutoff) : Json(nullptr);
  std::string out = header.dump() + "\n";
  for (const auto& e : mix.examples) out += example_to_json(e).dump() + "\n";
  return out;
}

void write_mix(const std::filesystem::path& path, const InstructionMix& mix) {
  write_file_atomic(path, serialize_mix(mix));
}

}  // namespace dated::curate
