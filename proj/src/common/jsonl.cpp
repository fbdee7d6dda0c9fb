#include "dated/common/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "dated/common/error.hpp"

namespace dated {

void for_each_line(const std::filesystem::path& path,
                   const std::function<void(size_t, const std::string&)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(number, line);
  }
  if (in.bad()) throw IoError("read failure on " + path.string());
}

std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  std::vector<Json> out;
  for_each_line(path, [&](size_t number, const std::string& line) {
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw InvalidArgument(path.string() + ":" + std::to_string(number) +
                            ": " + e.what());
    }
  });
  return out;
}

void write_jsonl(const std::filesystem::path& path,
                 const std::vector<Json>& records) {
  std::string body;
  for (const auto& r : records) {
    body += r.dump();
    body += '\n';
  }
  write_file_atomic(path, body);
}

Json read_json_file(const std::filesystem::path& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& value) {
  write_file_atomic(path, value.dump(2) + "\n");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failure on " + path.string());
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::string& contents) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw IoError("write failure on " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace dated
