#include <spdlog/spdlog.h>

#include "cli_common.hpp"
#include "dated/common/error.hpp"
#include "dated/curate/classify.hpp"
#include "dated/curate/endpoint.hpp"
#include "dated/curate/finance.hpp"
#include "dated/curate/mix.hpp"

namespace dated::cli {
namespace {

struct EndpointFlags {
  curate::EndpointConfig config;
  void add(CLI::App* cmd) {
    cmd->add_option("--endpoint-url", config.base_url, "Chat-completions base URL");
    cmd->add_option("--endpoint-path", config.path)->capture_default_str();
    cmd->add_option("--endpoint-model", config.model, "Model name sent to the endpoint");
    cmd->add_option("--api-key-env", config.api_key_env, "Variable holding the API key")
        ->capture_default_str();
    cmd->add_option("--timeout", config.timeout_seconds)->capture_default_str();
  }
};

void add_filter(CLI::App& group) {
  auto* cmd = group.add_subcommand("filter", "Drop time-sensitive examples and report the removal rate");
  auto in = std::make_shared<fs::path>();
  auto report = std::make_shared<std::optional<fs::path>>();
  auto out = std::make_shared<std::optional<fs::path>>();
  auto removed = std::make_shared<std::optional<fs::path>>();
  auto classifier = std::make_shared<std::string>("rule");
  auto dataset = std::make_shared<std::string>();
  auto endpoint = std::make_shared<EndpointFlags>();
  cmd->add_option("--in", *in, "Instruction examples")->required();
  cmd->add_option("--classifier", *classifier)
      ->check(CLI::IsMember({"rule", "endpoint"}))
      ->capture_default_str();
  cmd->add_option("--report", *report, "Write the removal report here");
  cmd->add_option("--out", *out, "Write kept examples here");
  cmd->add_option("--removed", *removed, "Write removed examples here");
  cmd->add_option("--dataset", *dataset, "Dataset name for the report (default: file stem)");
  endpoint->add(cmd);
  cmd->callback([=] {
    const auto examples = curate::read_examples(*in);
    const std::string name = dataset->empty() ? in->stem().string() : *dataset;
    std::unique_ptr<curate::TimeSensitivityClassifier> c;
    std::unique_ptr<curate::HttpChatEndpoint> http;
    if (*classifier == "rule") {
      c = std::make_unique<curate::RuleBasedClassifier>();
    } else {
      http = std::make_unique<curate::HttpChatEndpoint>(endpoint->config);
      c = std::make_unique<curate::EndpointClassifier>(*http);
    }
    curate::FilterResult r;
    try {
      r = curate::filter_dataset(name, examples, *c);
    } catch (const curate::FilterAborted& e) {
      spdlog::error("{}", e.what());
      print_json({{"aborted", true}, {"partial", e.partial.to_json()}});
      throw ExitWith{2};
    }
    for (const auto& w : r.warnings) spdlog::warn("{}", w);
    if (*out) curate::write_examples(**out, r.kept);
    if (*removed) curate::write_examples(**removed, r.removed);
    Json j = r.report.to_json();
    j["unknown"] = r.unknown;
    j["classifier"] = c->name();
    if (*report) write_json_file(**report, j);
    print_json(j);
  });
}

void add_finance(CLI::App& group) {
  auto* cmd = group.add_subcommand("finance", "Build month-balanced finance prompts and teacher answers");
  auto records = std::make_shared<fs::path>();
  auto year = std::make_shared<int>();
  auto target = std::make_shared<size_t>(6000);
  auto seed = std::make_shared<uint64_t>(0);
  auto prompts_out = std::make_shared<std::optional<fs::path>>();
  auto out = std::make_shared<std::optional<fs::path>>();
  auto endpoint = std::make_shared<EndpointFlags>();
  cmd->add_option("--records", *records, "Dated headline and transcript records")->required();
  cmd->add_option("--year", *year)->required();
  cmd->add_option("--target", *target)->capture_default_str();
  cmd->add_option("--seed", *seed)->capture_default_str();
  cmd->add_option("--prompts", *prompts_out, "Write the rendered prompts here");
  cmd->add_option("--out", *out, "Write teacher examples here (needs --endpoint-url)");
  endpoint->add(cmd);
  cmd->callback([=] {
    const auto recs = curate::read_finance_records(*records);
    const auto set = curate::build_finance_prompts(recs, *year, *target, *seed);
    for (const auto& w : set.warnings) spdlog::warn("{}", w);
    Json j = {{"year", set.year}, {"prompts", set.prompts.size()}, {"per_month", set.per_month},
              {"supply", set.supply}, {"warnings", set.warnings}};
    if (*prompts_out) {
      std::vector<Json> lines;
      for (const auto& p : set.prompts) {
        Json l = curate::finance_record_to_json(p.record);
        l["prompt"] = p.text;
        lines.push_back(l);
      }
      write_jsonl(**prompts_out, lines);
    }
    if (*out) {
      if (endpoint->config.base_url.empty()) throw InvalidArgument("--out needs --endpoint-url");
      curate::HttpChatEndpoint teacher(endpoint->config);
      const auto r = curate::generate_teacher_examples(set.prompts, teacher, {});
      for (const auto& w : r.warnings) spdlog::warn("{}", w);
      curate::write_examples(**out, r.examples);
      j["examples"] = r.examples.size();
      j["dropped_shape"] = r.dropped_shape;
      j["dropped_endpoint"] = r.dropped_endpoint;
    }
    print_json(j);
  });
}

void add_mix(CLI::App& group) {
  auto* cmd = group.add_subcommand("mix", "Combine general and year-specific examples for one cutoff");
  auto year = std::make_shared<int>();
  auto general = std::make_shared<fs::path>();
  auto specific = std::make_shared<fs::path>();
  auto seed = std::make_shared<uint64_t>(0);
  auto out = std::make_shared<fs::path>();
  cmd->add_option("--year", *year, "Cutoff year the mix is declared for")->required();
  cmd->add_option("--general", *general)->required();
  cmd->add_option("--specific", *specific)->required();
  cmd->add_option("--seed", *seed)->capture_default_str();
  cmd->add_option("--out", *out)->required();
  cmd->callback([=] {
    const auto g = curate::read_examples(*general);
    const auto s = curate::read_examples(*specific);
    const auto mix = curate::assemble_year_mix(g, s, *year, *seed);
    curate::write_mix(*out, mix);
    print_json({{"declared_cutoff", mix.declared_cutoff.value_or(*year)},
                {"examples", mix.examples.size()},
                {"general", g.size()},
                {"year_specific", s.size()}});
  });
}

}  // namespace

void add_curate_commands(CLI::App& app) {
  auto* group = app.add_subcommand("curate", "Instruction data curation");
  group->require_subcommand(1);
  add_filter(*group);
  add_finance(*group);
  add_mix(*group);
}

}  // namespace dated::cli
