#include "dated/corpus/shard.hpp"

#include <cstring>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "dated/common/error.hpp"

namespace dated::corpus {
namespace {

void put_u32(uint8_t* p, uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<uint8_t>(v >> (8 * i));
}
void put_u64(uint8_t* p, uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<uint8_t>(v >> (8 * i));
}
uint32_t get_u32(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
  return v;
}
uint64_t get_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

std::vector<uint8_t> encode_payload(std::span<const tok::TokenId> tokens,
                                    uint32_t width) {
  std::vector<uint8_t> out(tokens.size() * width);
  for (size_t i = 0; i < tokens.size(); ++i) {
    const uint32_t v = static_cast<uint32_t>(tokens[i]);
    for (uint32_t b = 0; b < width; ++b) {
      out[i * width + b] = static_cast<uint8_t>(v >> (8 * b));
    }
  }
  return out;
}

std::string shard_name(size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "shard-%05zu.bin", index);
  return buf;
}

void write_shard(const std::filesystem::path& path, const ShardHeader& header,
                 std::span<const uint8_t> payload) {
  uint8_t head[kShardHeaderBytes] = {};
  std::memcpy(head, kShardMagic.data(), kShardMagic.size());
  put_u32(head + 8, header.version);
  put_u32(head + 12, header.token_width);
  put_u64(head + 16, header.token_count);
  put_u32(head + 24, static_cast<uint32_t>(header.cutoff_year));
  std::memcpy(head + 32, header.tokenizer_fingerprint.data(), 32);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create shard " + path.string());
  out.write(reinterpret_cast<const char*>(head), sizeof(head));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  out.flush();
  if (!out) throw IoError("write failure on shard " + path.string());
}

struct RawShard {
  ShardHeader header;
  std::vector<uint8_t> payload;
};

RawShard read_raw_shard(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptionError("cannot open shard " + path.string());
  uint8_t head[kShardHeaderBytes];
  in.read(reinterpret_cast<char*>(head), sizeof(head));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(head))) {
    throw CorruptionError("truncated shard header in " + path.string());
  }
  if (std::memcmp(head, kShardMagic.data(), kShardMagic.size()) != 0) {
    throw CorruptionError("bad magic in " + path.string());
  }
  RawShard raw;
  raw.header.version = get_u32(head + 8);
  raw.header.token_width = get_u32(head + 12);
  raw.header.token_count = get_u64(head + 16);
  raw.header.cutoff_year = static_cast<int32_t>(get_u32(head + 24));
  std::memcpy(raw.header.tokenizer_fingerprint.data(), head + 32, 32);
  if (raw.header.version != kShardVersion) {
    throw CorruptionError("shard " + path.string() + " has format version " +
                          std::to_string(raw.header.version) + ", expected " +
                          std::to_string(kShardVersion));
  }
  const uint32_t w = raw.header.token_width;
  if (w != 2 && w != 4) {
    throw CorruptionError("unsupported token width in " + path.string());
  }
  raw.payload.assign(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
  if (raw.payload.size() != raw.header.token_count * w) {
    throw CorruptionError("shard " + path.string() + " declares " +
                          std::to_string(raw.header.token_count) +
                          " tokens but carries " +
                          std::to_string(raw.payload.size()) + " payload bytes");
  }
  return raw;
}

std::vector<tok::TokenId> decode_payload(const RawShard& raw) {
  const uint32_t w = raw.header.token_width;
  std::vector<tok::TokenId> out(raw.header.token_count);
  for (size_t i = 0; i < out.size(); ++i) {
    uint32_t v = 0;
    for (uint32_t b = 0; b < w; ++b) {
      v |= static_cast<uint32_t>(raw.payload[i * w + b]) << (8 * b);
    }
    out[i] = static_cast<tok::TokenId>(v);
  }
  return out;
}

}  // namespace

Json ShardManifest::to_json() const {
  Json docs = Json::array();
  for (const auto& d : documents) {
    docs.push_back({{"id", d.id},
                    {"timestamp", d.timestamp.to_string()},
                    {"tokens", d.token_count}});
  }
  Json shard_list = Json::array();
  for (const auto& s : shards) {
    shard_list.push_back({{"path", s.path},
                          {"checksum", s.checksum},
                          {"tokens", s.token_count},
                          {"first_document", s.first_document},
                          {"last_document", s.last_document},
                          {"first_document_id", s.first_document_id},
                          {"last_document_id", s.last_document_id}});
  }
  return Json{{"format", "dated-shards"},
              {"version", kShardVersion},
              {"cutoff_year", cutoff_year},
              {"tokenizer_fingerprint", tokenizer_fingerprint},
              {"vocab_size", vocab_size},
              {"separator_id", separator_id},
              {"token_width", token_width},
              {"tokens_emitted", tokens_emitted},
              {"budget_tokens", budget_tokens},
              {"documents_dropped_for_budget", documents_dropped_for_budget},
              {"documents", docs},
              {"shards", shard_list}};
}

ShardManifest ShardManifest::from_json(const Json& j) {
  try {
    if (j.at("format") != "dated-shards") {
      throw InvalidArgument("not a shard manifest");
    }
    ShardManifest m;
    m.cutoff_year = j.at("cutoff_year").get<int>();
    m.tokenizer_fingerprint = j.at("tokenizer_fingerprint").get<std::string>();
    m.vocab_size = j.at("vocab_size").get<int>();
    m.separator_id = j.at("separator_id").get<tok::TokenId>();
    m.token_width = j.at("token_width").get<uint32_t>();
    m.tokens_emitted = j.at("tokens_emitted").get<uint64_t>();
    m.budget_tokens = j.value("budget_tokens", uint64_t{0});
    m.documents_dropped_for_budget =
        j.value("documents_dropped_for_budget", size_t{0});
    for (const auto& d : j.at("documents")) {
      auto date = parse_date(d.at("timestamp").get<std::string>());
      if (!date) throw InvalidArgument("manifest document has invalid timestamp");
      m.documents.push_back({d.at("id").get<std::string>(), *date,
                             d.at("tokens").get<uint64_t>()});
    }
    for (const auto& s : j.at("shards")) {
      ShardEntry e;
      e.path = s.at("path").get<std::string>();
      e.checksum = s.at("checksum").get<std::string>();
      e.token_count = s.at("tokens").get<uint64_t>();
      e.first_document = s.at("first_document").get<size_t>();
      e.last_document = s.at("last_document").get<size_t>();
      e.first_document_id = s.at("first_document_id").get<std::string>();
      e.last_document_id = s.at("last_document_id").get<std::string>();
      m.shards.push_back(std::move(e));
    }
    return m;
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("malformed manifest: ") + e.what());
  }
}

void ShardManifest::save(const std::filesystem::path& path) const {
  write_json_file(path, to_json());
}

ShardManifest ShardManifest::load(const std::filesystem::path& path) {
  return from_json(read_json_file(path));
}

ShardManifest shard_tokens(std::span<const TimestampedDocument> docs,
                           const tok::BpeTokenizer& tokenizer,
                           const ShardOptions& options, CutoffSpec spec,
                           const std::filesystem::path& out_dir) {
  if (options.shard_size_tokens == 0) {
    throw InvalidArgument("shard_size_tokens must be positive");
  }
  if (options.sequence_length > 0 &&
      options.shard_size_tokens < static_cast<uint64_t>(options.sequence_length)) {
    throw InvalidArgument("shard_size_tokens " +
                          std::to_string(options.shard_size_tokens) +
                          " is shorter than the sequence length " +
                          std::to_string(options.sequence_length));
  }
  if (options.token_width != 2 && options.token_width != 4) {
    throw InvalidArgument("token width must be 2 or 4 bytes");
  }
  const uint64_t id_limit = options.token_width == 4
                                ? (uint64_t{1} << 32)
                                : (uint64_t{1} << (8 * options.token_width));
  if (static_cast<uint64_t>(tokenizer.vocab_size()) > id_limit) {
    throw InvalidArgument("vocabulary of " +
                          std::to_string(tokenizer.vocab_size()) +
                          " does not fit in " +
                          std::to_string(options.token_width) + "-byte ids");
  }

  ShardManifest manifest;
  manifest.cutoff_year = spec.cutoff_year;
  manifest.tokenizer_fingerprint = tokenizer.fingerprint_hex();
  manifest.vocab_size = tokenizer.vocab_size();
  manifest.separator_id = tok::kEndOfText;
  manifest.token_width = options.token_width;
  manifest.budget_tokens = options.budget_tokens;

  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  ShardHeader header;
  header.token_width = options.token_width;
  header.cutoff_year = spec.cutoff_year;
  header.tokenizer_fingerprint = tokenizer.fingerprint();

  std::vector<tok::TokenId> buffer;
  buffer.reserve(options.shard_size_tokens);
  size_t shard_first_doc = 0;

  auto flush = [&](size_t last_doc) {
    const std::string name = shard_name(manifest.shards.size());
    const auto payload = encode_payload(buffer, options.token_width);
    header.token_count = buffer.size();
    const auto path = out_dir / name;
    written.push_back(path);
    write_shard(path, header, payload);
    ShardEntry e;
    e.path = name;
    e.checksum = to_hex(sha256(payload));
    e.token_count = buffer.size();
    e.first_document = shard_first_doc;
    e.last_document = last_doc;
    e.first_document_id = manifest.documents[shard_first_doc].id;
    e.last_document_id = manifest.documents[last_doc].id;
    manifest.shards.push_back(std::move(e));
    buffer.clear();
  };

  try {
    std::vector<tok::TokenId> tokens;
    for (size_t i = 0; i < docs.size(); ++i) {
      tokens.clear();
      tokenizer.encode_append(docs[i].text, tokens);
      tokens.push_back(tok::kEndOfText);
      if (options.budget_tokens > 0 &&
          manifest.tokens_emitted + tokens.size() > options.budget_tokens) {
        manifest.documents_dropped_for_budget = docs.size() - i;
        break;
      }
      for (auto t : tokens) {
        if (static_cast<uint64_t>(static_cast<uint32_t>(t)) >= id_limit) {
          throw InvalidArgument("token id " + std::to_string(t) +
                                " exceeds the shard token width");
        }
      }
      const size_t doc_index = manifest.documents.size();
      manifest.documents.push_back(
          {docs[i].id, docs[i].timestamp, tokens.size() - 1});
      manifest.tokens_emitted += tokens.size();
      size_t pos = 0;
      while (pos < tokens.size()) {
        if (buffer.empty()) shard_first_doc = doc_index;
        const size_t take = std::min<size_t>(
            tokens.size() - pos, options.shard_size_tokens - buffer.size());
        buffer.insert(buffer.end(), tokens.begin() + pos,
                      tokens.begin() + pos + take);
        pos += take;
        if (buffer.size() == options.shard_size_tokens) flush(doc_index);
      }
    }
    if (!buffer.empty()) flush(manifest.documents.size() - 1);
    written.push_back(out_dir / kManifestFileName);
    manifest.save(out_dir / kManifestFileName);
  } catch (const std::exception& e) {
    std::error_code ec;
    for (const auto& p : written) std::filesystem::remove(p, ec);
    if (dynamic_cast<const InvalidArgument*>(&e)) throw;
    throw IoError(std::string("sharding failed, partial output removed: ") +
                  e.what());
  }
  return manifest;
}

std::vector<tok::TokenId> read_shard(const std::filesystem::path& path,
                                     ShardHeader* header) {
  RawShard raw = read_raw_shard(path);
  if (header) *header = raw.header;
  return decode_payload(raw);
}

std::vector<tok::TokenId> read_all_tokens(const std::filesystem::path& manifest_path) {
  const auto manifest = ShardManifest::load(manifest_path);
  const auto dir = manifest_path.parent_path();
  std::vector<tok::TokenId> out;
  out.reserve(manifest.tokens_emitted);
  for (const auto& s : manifest.shards) {
    RawShard raw = read_raw_shard(dir / s.path);
    if (to_hex(sha256(raw.payload)) != s.checksum) {
      throw CorruptionError("checksum mismatch in shard " + s.path);
    }
    auto tokens = decode_payload(raw);
    out.insert(out.end(), tokens.begin(), tokens.end());
  }
  return out;
}

PartitionReport verify_partition(
    const std::filesystem::path& manifest_path,
    std::optional<std::span<const TimestampedDocument>> source_docs,
    std::optional<CutoffSpec> spec) {
  const auto manifest = ShardManifest::load(manifest_path);
  const CutoffSpec cutoff = spec.value_or(CutoffSpec{manifest.cutoff_year});
  const auto dir = manifest_path.parent_path();

  PartitionReport report;
  report.docs_seen = manifest.documents.size();

  std::vector<tok::TokenId> stream;
  bool stream_intact = true;
  for (const auto& s : manifest.shards) {
    try {
      RawShard raw = read_raw_shard(dir / s.path);
      std::string problem;
      if (to_hex(sha256(raw.payload)) != s.checksum) {
        problem = "checksum mismatch";
      } else if (raw.header.token_count != s.token_count) {
        problem = "token count disagrees with manifest";
      } else if (raw.header.token_width != manifest.token_width) {
        problem = "token width disagrees with manifest";
      } else if (raw.header.cutoff_year != manifest.cutoff_year) {
        problem = "cutoff year disagrees with manifest";
      } else if (to_hex(raw.header.tokenizer_fingerprint) !=
                 manifest.tokenizer_fingerprint) {
        problem = "tokenizer fingerprint disagrees with manifest";
      }
      if (!problem.empty()) {
        report.corruptions.push_back(s.path + ": " + problem);
        stream_intact = false;
        continue;
      }
      report.tokens_emitted += raw.header.token_count;
      auto tokens = decode_payload(raw);
      stream.insert(stream.end(), tokens.begin(), tokens.end());
    } catch (const CorruptionError& e) {
      report.corruptions.push_back(s.path + ": " + e.what());
      stream_intact = false;
    }
  }

  // Document table must account for every token and every separator.
  if (stream_intact) {
    size_t pos = 0;
    bool consistent = true;
    for (const auto& d : manifest.documents) {
      for (uint64_t k = 0; k < d.token_count && consistent; ++k, ++pos) {
        if (pos >= stream.size() || stream[pos] == manifest.separator_id) {
          consistent = false;
        }
      }
      if (!consistent || pos >= stream.size() ||
          stream[pos] != manifest.separator_id) {
        consistent = false;
        break;
      }
      ++pos;
    }
    if (!consistent || pos != stream.size() ||
        stream.size() != manifest.tokens_emitted) {
      report.corruptions.push_back(
          "document table disagrees with shard payloads");
    }
  }

  std::unordered_map<std::string, const TimestampedDocument*> by_id;
  if (source_docs) {
    for (const auto& d : *source_docs) by_id.emplace(d.id, &d);
  }
  for (const auto& d : manifest.documents) {
    std::optional<Violation> v;
    if (source_docs) {
      auto it = by_id.find(d.id);
      if (it == by_id.end()) {
        v = Violation{d.id, std::nullopt, "document not found in source"};
      } else if (!cutoff.admits(it->second->timestamp)) {
        v = Violation{d.id, it->second->timestamp,
                      "dated on or after " + cutoff.boundary().to_string()};
      } else if (it->second->timestamp != d.timestamp) {
        v = Violation{d.id, it->second->timestamp,
                      "manifest timestamp " + d.timestamp.to_string() +
                          " disagrees with source"};
      }
    } else if (!cutoff.admits(d.timestamp)) {
      v = Violation{d.id, d.timestamp,
                    "dated on or after " + cutoff.boundary().to_string()};
    }
    if (v) {
      report.violations.push_back(std::move(*v));
      ++report.docs_rejected;
    } else {
      ++report.docs_kept;
    }
  }
  return report;
}

}  // namespace dated::corpus
