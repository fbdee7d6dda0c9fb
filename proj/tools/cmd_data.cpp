#include <spdlog/spdlog.h>

#include "cli_common.hpp"
#include "dated/common/error.hpp"
#include "dated/corpus/partition.hpp"
#include "dated/corpus/shard.hpp"
#include "dated/synth/dated_news.hpp"

namespace dated::cli {
namespace {

struct MappingFlags {
  corpus::FieldMapping mapping;
  void add(CLI::App* cmd) {
    cmd->add_option("--text-field", mapping.text, "Record field holding the text")
        ->capture_default_str();
    cmd->add_option("--timestamp-field", mapping.timestamp)->capture_default_str();
    cmd->add_option("--id-field", mapping.id)->capture_default_str();
    cmd->add_option("--url-field", mapping.url)->capture_default_str();
  }
};

// A file, or every *.jsonl file of a directory in name order.
std::vector<corpus::TimestampedDocument> read_corpus(const fs::path& input,
                                                     const corpus::FieldMapping& mapping) {
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input)) {
      if (e.path().extension() == ".jsonl") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw InvalidArgument("no .jsonl files in " + input.string());
  } else {
    files.push_back(input);
  }
  std::vector<corpus::TimestampedDocument> docs;
  for (const auto& f : files) {
    auto r = corpus::ingest_documents(f, mapping);
    spdlog::info("{}: {} records, {} accepted, {} rejected", f.string(), r.stats.records,
                 r.stats.accepted, r.stats.rejected);
    for (const auto& rej : r.stats.rejections) {
      spdlog::debug("  line {}: {}", rej.line, rej.reason);
    }
    std::move(r.documents.begin(), r.documents.end(), std::back_inserter(docs));
  }
  return docs;
}

Json report_json(const corpus::PartitionReport& r) {
  Json violations = Json::array();
  for (const auto& v : r.violations) {
    violations.push_back({{"doc_id", v.doc_id},
                          {"timestamp", v.timestamp ? v.timestamp->to_string() : ""},
                          {"reason", v.reason}});
  }
  return {{"docs_seen", r.docs_seen},         {"docs_kept", r.docs_kept},
          {"docs_rejected", r.docs_rejected}, {"tokens_emitted", r.tokens_emitted},
          {"violations", violations},         {"corruptions", r.corruptions},
          {"valid", r.valid()}};
}

void add_partition(CLI::App& app) {
  auto* cmd = app.add_subcommand("partition", "Keep documents dated before Y-01-01 and shard them");
  auto input = std::make_shared<fs::path>();
  auto out = std::make_shared<fs::path>();
  auto tokenizer = std::make_shared<fs::path>();
  auto year = std::make_shared<int>();
  auto opts = std::make_shared<corpus::ShardOptions>();
  auto mapping = std::make_shared<MappingFlags>();
  cmd->add_option("--input", *input, "Document file or directory of .jsonl files")->required();
  cmd->add_option("--cutoff-year", *year, "Keep documents strictly before Y-01-01")->required();
  cmd->add_option("--tokenizer", *tokenizer, "Tokenizer file")->required();
  cmd->add_option("--out", *out, "Output directory for shards and manifest.json")->required();
  cmd->add_option("--budget-tokens", opts->budget_tokens, "Token budget, 0 for none")
      ->capture_default_str();
  cmd->add_option("--shard-size", opts->shard_size_tokens, "Tokens per shard")->capture_default_str();
  cmd->add_option("--sequence-length", opts->sequence_length,
                  "Reject shard sizes shorter than this");
  mapping->add(cmd);
  cmd->callback([=] {
    const auto docs = read_corpus(*input, mapping->mapping);
    const CutoffSpec spec{*year};
    const auto part = corpus::partition_by_cutoff(docs, spec);
    const auto tok = tok::BpeTokenizer::load(*tokenizer);
    const auto manifest = corpus::shard_tokens(part.kept, tok, *opts, spec, *out);
    Json j = report_json(part.report);
    j["shards"] = manifest.shards.size();
    j["tokens_emitted"] = manifest.tokens_emitted;
    j["documents_dropped_for_budget"] = manifest.documents_dropped_for_budget;
    j["manifest"] = (*out / corpus::kManifestFileName).string();
    print_json(j);
  });
}

void add_verify(CLI::App& app) {
  auto* cmd = app.add_subcommand("verify", "Check shard checksums and that no document crosses the cutoff");
  auto manifest = std::make_shared<fs::path>();
  auto source = std::make_shared<std::optional<fs::path>>();
  auto year = std::make_shared<std::optional<int>>();
  auto mapping = std::make_shared<MappingFlags>();
  cmd->add_option("--manifest", *manifest)->required();
  cmd->add_option("--source", *source, "Cross-check timestamps against this document file");
  cmd->add_option("--cutoff-year", *year, "Check against this cutoff instead of the manifest's");
  mapping->add(cmd);
  cmd->callback([=] {
    std::optional<std::vector<corpus::TimestampedDocument>> docs;
    if (*source) docs = read_corpus(**source, mapping->mapping);
    std::optional<std::span<const corpus::TimestampedDocument>> span;
    if (docs) span = std::span<const corpus::TimestampedDocument>(*docs);
    std::optional<CutoffSpec> spec;
    if (*year) spec = CutoffSpec{**year};
    const auto report = corpus::verify_partition(*manifest, span, spec);
    print_json(report_json(report));
    if (!report.valid()) throw ExitWith{kCheckFailed};
  });
}

void add_tokenizer(CLI::App& app) {
  auto* group = app.add_subcommand("tokenizer", "Tokenizer tools");
  group->require_subcommand(1);
  auto* cmd = group->add_subcommand("train", "Train byte-level BPE on documents before the cutoff");
  auto input = std::make_shared<fs::path>();
  auto out = std::make_shared<fs::path>();
  auto vocab = std::make_shared<int>(32000);
  auto year = std::make_shared<int>();
  auto mapping = std::make_shared<MappingFlags>();
  cmd->add_option("--input", *input, "Document file or directory of .jsonl files")->required();
  cmd->add_option("--vocab-size", *vocab)->capture_default_str();
  cmd->add_option("--cutoff-year", *year)->required();
  cmd->add_option("--out", *out)->required();
  mapping->add(cmd);
  cmd->callback([=] {
    const auto docs = read_corpus(*input, mapping->mapping);
    const CutoffSpec spec{*year};
    const auto part = corpus::partition_by_cutoff(docs, spec);
    std::vector<std::string> texts;
    texts.reserve(part.kept.size());
    for (const auto& d : part.kept) texts.push_back(d.text);
    spdlog::info("training on {} of {} documents", texts.size(), docs.size());
    auto r = tok::train_bpe(texts, *vocab, spec);
    for (const auto& w : r.warnings) spdlog::warn("{}", w);
    r.tokenizer.save(*out);
    print_json({{"out", out->string()},
                {"vocab_size", r.tokenizer.vocab_size()},
                {"trained_on_cutoff", r.tokenizer.trained_on_cutoff()},
                {"fingerprint", r.tokenizer.fingerprint_hex()}});
  });
}

void add_synth(CLI::App& app) {
  auto* cmd = app.add_subcommand("synth", "Write the synthetic dated-news corpus");
  auto out = std::make_shared<fs::path>();
  auto opts = std::make_shared<synth::NewsOptions>();
  cmd->add_option("--out", *out, "Directory for train.jsonl and heldout.jsonl")->required();
  cmd->add_option("--seed", opts->seed)->capture_default_str();
  cmd->add_option("--entities", opts->entities_per_quarter)->capture_default_str();
  cmd->add_option("--mentions", opts->mentions_per_entity)->capture_default_str();
  cmd->callback([=] {
    const auto news = synth::generate_news(*opts);
    fs::create_directories(*out);
    corpus::write_documents(*out / "train.jsonl", news.train);
    corpus::write_documents(*out / "heldout.jsonl", news.heldout);
    print_json({{"train", news.train.size()}, {"heldout", news.heldout.size()}});
  });
}

}  // namespace

void add_data_commands(CLI::App& app) {
  add_partition(app);
  add_verify(app);
  add_tokenizer(app);
  add_synth(app);
}

}  // namespace dated::cli
