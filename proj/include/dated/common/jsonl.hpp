#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

namespace dated {

using Json = nlohmann::json;

// Calls `fn(line_number, line)` for every non-blank line. Line numbers are
// 1-based. Throws IoError when the file cannot be opened.
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(size_t, const std::string&)>& fn);

std::vector<Json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path,
                 const std::vector<Json>& records);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& value);

std::string read_file(const std::filesystem::path& path);
// Writes through a temporary sibling and renames into place.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& contents);

}  // namespace dated
