#include "dated/corpus/document.hpp"

#include "dated/common/error.hpp"

namespace dated::corpus {
namespace {

bool blank(const std::string& s) {
  return s.find_first_not_of(" \t\r\n\v\f") == std::string::npos;
}

constexpr size_t kMaxKeptRejections = 1000;

}  // namespace

std::optional<TimestampedDocument> parse_document(const Json& record,
                                                  const FieldMapping& mapping,
                                                  const std::string& fallback_source,
                                                  size_t line, std::string* reason) {
  auto fail = [&](std::string why) -> std::optional<TimestampedDocument> {
    if (reason) *reason = std::move(why);
    return std::nullopt;
  };
  if (!record.is_object()) return fail("record is not an object");
  auto text_it = record.find(mapping.text);
  if (text_it == record.end() || !text_it->is_string()) {
    return fail("missing text field '" + mapping.text + "'");
  }
  TimestampedDocument doc;
  doc.text = text_it->get<std::string>();
  if (blank(doc.text)) return fail("text is empty");

  auto ts_it = record.find(mapping.timestamp);
  if (ts_it == record.end()) {
    return fail("missing timestamp field '" + mapping.timestamp + "'");
  }
  std::optional<Date> date;
  if (ts_it->is_string()) {
    date = parse_date(ts_it->get<std::string>());
  } else if (ts_it->is_number_integer()) {
    date = date_from_epoch_seconds(ts_it->get<int64_t>());
  }
  if (!date) return fail("invalid timestamp " + ts_it->dump());
  doc.timestamp = *date;

  auto id_it = record.find(mapping.id);
  if (id_it != record.end() && id_it->is_string()) {
    doc.id = id_it->get<std::string>();
  } else if (id_it != record.end() && id_it->is_number_integer()) {
    doc.id = std::to_string(id_it->get<int64_t>());
  } else {
    doc.id = fallback_source + ":" + std::to_string(line);
  }
  auto src_it = record.find(mapping.source);
  doc.source = src_it != record.end() && src_it->is_string()
                   ? src_it->get<std::string>()
                   : fallback_source;
  auto url_it = record.find(mapping.url);
  if (url_it != record.end() && url_it->is_string()) {
    doc.url = url_it->get<std::string>();
  }
  return doc;
}

DocumentReader::DocumentReader(const std::filesystem::path& path,
                               FieldMapping mapping)
    : path_(path),
      in_(path, std::ios::binary),
      mapping_(std::move(mapping)),
      source_(path.stem().string()) {
  if (!in_) throw IoError("cannot open document source " + path.string());
}

std::optional<TimestampedDocument> DocumentReader::next() {
  if (finished_) return std::nullopt;
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (blank(line)) continue;
    ++stats_.records;
    std::string reason;
    std::optional<TimestampedDocument> doc;
    try {
      doc = parse_document(Json::parse(line), mapping_, source_, line_, &reason);
    } catch (const Json::parse_error&) {
      reason = "unparseable record";
    }
    if (doc) {
      ++stats_.accepted;
      return doc;
    }
    ++stats_.rejected;
    if (stats_.rejections.size() < kMaxKeptRejections) {
      stats_.rejections.push_back({line_, reason});
    }
  }
  if (in_.bad()) throw IoError("read failure on " + path_.string());
  finished_ = true;
  if (stats_.rejected * 2 > stats_.records) {
    std::string msg = path_.string() + ": " + std::to_string(stats_.rejected) +
                      " of " + std::to_string(stats_.records) +
                      " records malformed";
    for (size_t i = 0; i < std::min<size_t>(3, stats_.rejections.size()); ++i) {
      msg += "; line " + std::to_string(stats_.rejections[i].line) + ": " +
             stats_.rejections[i].reason;
    }
    throw InvalidArgument(msg);
  }
  return std::nullopt;
}

IngestResult ingest_documents(const std::filesystem::path& path,
                              const FieldMapping& mapping) {
  DocumentReader reader(path, mapping);
  IngestResult result;
  while (auto doc = reader.next()) result.documents.push_back(std::move(*doc));
  result.stats = reader.stats();
  return result;
}

Json document_to_json(const TimestampedDocument& doc) {
  Json j{{"id", doc.id},
         {"text", doc.text},
         {"timestamp", doc.timestamp.to_string()},
         {"source", doc.source}};
  if (doc.url) j["url"] = *doc.url;
  return j;
}

void write_documents(const std::filesystem::path& path,
                     std::span<const TimestampedDocument> docs) {
  std::vector<Json> records;
  records.reserve(docs.size());
  for (const auto& d : docs) records.push_back(document_to_json(d));
  write_jsonl(path, records);
}

}  // namespace dated::corpus
