#include <httplib.h>
#include <spdlog/spdlog.h>

#include "cli_common.hpp"
#include "dated/common/error.hpp"
#include "dated/eval/instruction_check.hpp"
#include "dated/eval/mcq.hpp"
#include "dated/probe/perplexity.hpp"
#include "dated/probe/series.hpp"
#include "dated/serve/http_api.hpp"

namespace dated::cli {
namespace {

std::optional<Quarter> quarter_flag(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const auto q = Quarter::parse(s);
  if (!q) throw InvalidArgument("bad quarter '" + s + "', expected e.g. 2013Q1");
  return q;
}

void add_probe(CLI::App& app) {
  auto* cmd = app.add_subcommand("probe", "Quarterly relative perplexity and the fitted cutoff");
  auto ckpt = std::make_shared<fs::path>();
  auto corpus_path = std::make_shared<fs::path>();
  auto out = std::make_shared<fs::path>();
  auto tokenizer = std::make_shared<std::optional<fs::path>>();
  auto opts = std::make_shared<probe::SeriesOptions>();
  auto first = std::make_shared<std::string>();
  auto last = std::make_shared<std::string>();
  cmd->add_option("--ckpt", *ckpt)->required();
  cmd->add_option("--corpus", *corpus_path, "Dated held-out documents")->required();
  cmd->add_option("--out", *out)->required();
  cmd->add_option("--tokenizer", *tokenizer, "Defaults to tokenizer.json beside the checkpoint");
  cmd->add_option("--per-quarter", opts->per_quarter, "Sample cap per quarter, 0 for all")
      ->capture_default_str();
  cmd->add_option("--min-per-quarter", opts->min_per_quarter)->capture_default_str();
  cmd->add_option("--seed", opts->seed)->capture_default_str();
  cmd->add_option("--first", *first, "First quarter, e.g. 2013Q1");
  cmd->add_option("--last", *last, "Last quarter, e.g. 2024Q4");
  cmd->callback([=] {
    const auto c = train::load_checkpoint(*ckpt, false);
    const auto tok = find_tokenizer(*tokenizer, *ckpt);
    probe::require_matching_tokenizer(c.meta, tok);
    const auto docs = corpus::ingest_documents(*corpus_path).documents;
    probe::SeriesOptions o = *opts;
    o.first = quarter_flag(*first);
    o.last = quarter_flag(*last);
    const auto series = probe::relative_series(c.params, tok, docs, o, c.meta.cutoff_year);
    const auto estimate = probe::detect_cutoff(series);
    fs::create_directories(*out);
    probe::write_series_csv(*out / "series.csv", series);
    write_file_atomic(*out / "series.svg", probe::render_series_svg(series, estimate));
    const Json report = {{"series", series.to_json()}, {"estimate", estimate.to_json()}};
    write_json_file(*out / "report.json", report);
    print_json({{"cutoff_year", c.meta.cutoff_year}, {"estimate", estimate.to_json()}});
  });
}

void write_records(const fs::path& path, std::vector<Json> lines) { write_jsonl(path, lines); }

void add_eval(CLI::App& app) {
  auto* group = app.add_subcommand("eval", "Benchmark scoring");
  group->require_subcommand(1);

  auto* mcq = group->add_subcommand("mcq", "Multiple choice by log-likelihood");
  auto ckpt = std::make_shared<fs::path>();
  auto task = std::make_shared<fs::path>();
  auto out = std::make_shared<std::optional<fs::path>>();
  auto tokenizer = std::make_shared<std::optional<fs::path>>();
  auto shots = std::make_shared<int>(0);
  auto norm = std::make_shared<std::string>("per-token");
  auto seed = std::make_shared<uint64_t>(0);
  mcq->add_option("--ckpt", *ckpt)->required();
  mcq->add_option("--task", *task)->required();
  mcq->add_option("--shots", *shots)->check(CLI::IsMember({0, 5}))->capture_default_str();
  mcq->add_option("--normalization", *norm)
      ->check(CLI::IsMember({"none", "per-token"}))
      ->capture_default_str();
  mcq->add_option("--seed", *seed)->capture_default_str();
  mcq->add_option("--tokenizer", *tokenizer);
  mcq->add_option("--out", *out, "Per-item records");
  mcq->callback([=] {
    const auto c = train::load_checkpoint(*ckpt, false);
    const auto tok = find_tokenizer(*tokenizer, *ckpt);
    probe::require_matching_tokenizer(c.meta, tok);
    const auto items = eval::read_mcq_task(*task);
    const eval::McqOptions o{*eval::parse_normalization(*norm), *shots, *seed};
    const auto r = eval::run_task(c.params, tok, items, o);
    if (*out) {
      std::vector<Json> lines;
      for (const auto& rec : r.records) lines.push_back(eval::mcq_record_to_json(rec));
      write_records(**out, lines);
    }
    Json j = r.summary_json();
    j["shots"] = *shots;
    j["normalization"] = *norm;
    print_json(j);
  });

  auto* ife = group->add_subcommand("ifeval", "Verifiable instruction following, prompt-level strict");
  auto ckpt2 = std::make_shared<fs::path>();
  auto task2 = std::make_shared<fs::path>();
  auto out2 = std::make_shared<std::optional<fs::path>>();
  auto tokenizer2 = std::make_shared<std::optional<fs::path>>();
  auto max_tokens = std::make_shared<int>(256);
  ife->add_option("--ckpt", *ckpt2)->required();
  ife->add_option("--task", *task2)->required();
  ife->add_option("--max-tokens", *max_tokens)->capture_default_str();
  ife->add_option("--tokenizer", *tokenizer2);
  ife->add_option("--out", *out2, "Per-item records");
  ife->callback([=] {
    const auto c = train::load_checkpoint(*ckpt2, false);
    const auto tok = find_tokenizer(*tokenizer2, *ckpt2);
    probe::require_matching_tokenizer(c.meta, tok);
    const auto items = eval::read_constraint_task(*task2);
    lm::SamplingParams s;
    s.max_new_tokens = *max_tokens;
    const auto r = eval::run_instruction_task(c.params, tok, items, s);
    if (*out2) {
      std::vector<Json> lines;
      for (const auto& rec : r.records) lines.push_back(eval::instruction_record_to_json(rec));
      write_records(**out2, lines);
    }
    print_json(r.summary_json());
  });
}

void add_serve(CLI::App& app) {
  auto* cmd = app.add_subcommand("serve", "HTTP API over a registry of dated models");
  auto registry_file = std::make_shared<fs::path>();
  auto port = std::make_shared<int>(8080);
  auto host = std::make_shared<std::string>("127.0.0.1");
  cmd->add_option("--registry", *registry_file)->required();
  cmd->add_option("--port", *port)->capture_default_str();
  cmd->add_option("--host", *host)->capture_default_str();
  cmd->callback([=] {
    serve::ModelRegistry registry;
    const size_t n = serve::register_from_file(registry, *registry_file);
    for (const auto& e : registry.list()) {
      spdlog::info("{}: cutoff {}, {}, {}", e.id, e.cutoff_year, train::stage_name(e.stage),
                   e.checkpoint.string());
    }
    serve::ChatService chat(registry);
    httplib::Server server;
    serve::install_routes(server, registry, chat);
    spdlog::info("serving {} model(s) on http://{}:{}", n, *host, *port);
    if (!server.listen(*host, *port)) {
      throw IoError("cannot listen on " + *host + ":" + std::to_string(*port));
    }
  });
}

}  // namespace

void add_eval_commands(CLI::App& app) {
  add_probe(app);
  add_eval(app);
  add_serve(app);
}

}  // namespace dated::cli
