#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dated/common/date.hpp"
#include "dated/common/jsonl.hpp"

namespace dated::corpus {

struct TimestampedDocument {
  std::string id;
  std::string text;
  Date timestamp;
  std::string source;
  std::optional<std::string> url;
};

// Names of the record fields to read. Timestamps may be ISO-8601 strings or
// epoch seconds (string or number).
struct FieldMapping {
  std::string text = "text";
  std::string timestamp = "timestamp";
  std::string id = "id";
  std::string url = "url";
  std::string source = "source";
};

struct IngestRejection {
  size_t line = 0;
  std::string reason;
};

struct IngestStats {
  size_t records = 0;
  size_t accepted = 0;
  size_t rejected = 0;
  std::vector<IngestRejection> rejections;
};

// Parses one record. Returns the rejection reason on failure. A missing id
// becomes "<fallback_source>:<line>".
std::optional<TimestampedDocument> parse_document(const Json& record,
                                                  const FieldMapping& mapping,
                                                  const std::string& fallback_source,
                                                  size_t line, std::string* reason);

// Streams documents from a line-delimited file. Malformed records are
// counted in stats() and skipped. When the stream is exhausted, next()
// throws InvalidArgument if more than half of the records were malformed.
class DocumentReader {
 public:
  DocumentReader(const std::filesystem::path& path, FieldMapping mapping = {});

  std::optional<TimestampedDocument> next();
  const IngestStats& stats() const { return stats_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  FieldMapping mapping_;
  std::string source_;
  size_t line_ = 0;
  IngestStats stats_;
  bool finished_ = false;
};

struct IngestResult {
  std::vector<TimestampedDocument> documents;
  IngestStats stats;
};

IngestResult ingest_documents(const std::filesystem::path& path,
                              const FieldMapping& mapping = {});

Json document_to_json(const TimestampedDocument& doc);
void write_documents(const std::filesystem::path& path,
                     std::span<const TimestampedDocument> docs);

}  // namespace dated::corpus
