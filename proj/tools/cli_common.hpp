#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <optional>
#include <string>

#include "dated/common/jsonl.hpp"
#include "dated/tokenizer/bpe.hpp"

namespace dated::cli {

namespace fs = std::filesystem;

// Exit status for a check that ran and found problems (verification
// failures, guard refusals).
inline constexpr int kCheckFailed = 1;

// Thrown by a command to end with `code` after printing its own output.
struct ExitWith {
  int code;
};

// Uses `explicit_path` when given, otherwise tokenizer.json next to the
// checkpoint or one directory up.
tok::BpeTokenizer find_tokenizer(const std::optional<fs::path>& explicit_path,
                                 const fs::path& checkpoint);

void print_json(const Json& value);

void add_data_commands(CLI::App& app);
void add_train_commands(CLI::App& app);
void add_curate_commands(CLI::App& app);
void add_eval_commands(CLI::App& app);

}  // namespace dated::cli
