// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

#include "../support/reference_model.hpp"
#include "../support/temp_dir.hpp"
#include "cutoff_experiment.hpp"
#include "dated/common/error.hpp"
#include "dated/common/jsonl.hpp"
#include "dated/common/random.hpp"
#include "dated/corpus/partition.hpp"
#include "dated/corpus/shard.hpp"
#include "dated/curate/classify.hpp"
#include "dated/curate/mix.hpp"
#include "dated/eval/mcq.hpp"
#include "dated/lm/config.hpp"
#include "dated/lm/loss.hpp"
#include "dated/lm/transformer.hpp"
#include "dated/probe/perplexity.hpp"
#include "dated/probe/series.hpp"
#include "dated/serve/chat.hpp"
#include "dated/serve/http_api.hpp"
#include "dated/serve/registry.hpp"
#include "dated/train/checkpoint.hpp"
#include "dated/train/schedule.hpp"
#include "dated/train/trainer.hpp"

#ifndef DATED_TEST_DATA
#define DATED_TEST_DATA "tests/data"
#endif

using namespace dated;
namespace fs = std::filesystem;
using oracle::TempDir;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Collects failed sub-checks so a criterion reports every miss, not the first.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    ++total_;
    if (!ok && misses_.size() < 5) misses_.push_back(what);
    failed_ += !ok;
  }
  Outcome outcome(const std::string& summary) const {
    if (failed_ == 0) return {true, summary};
    std::ostringstream s;
    s << failed_ << "/" << total_ << " checks failed";
    for (const auto& m : misses_) s << "; " << m;
    return {false, s.str()};
  }

 private:
  size_t total_ = 0, failed_ = 0;
  std::vector<std::string> misses_;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

// ---------------------------------------------------------------------------

Outcome param_accounting() {
  const auto cfg = lm::ModelConfig::reference_scale();
  const auto pc = lm::param_count(cfg);
  const auto b = [](long long n) { return lm::billions_truncated(n); };
  Checks c;
  c.expect(b(pc.embedding) == 0.13, fmt("embedding %.2fB", b(pc.embedding)));
  c.expect(b(pc.non_embedding) == 1.21, fmt("non-embedding %.2fB", b(pc.non_embedding)));
  c.expect(b(pc.total) == 1.34, fmt("total %.2fB", b(pc.total)));
  c.expect(pc.total == oracle::reference_param_total(cfg), "total disagrees with the shape walk");
  c.expect(pc.total == pc.embedding + pc.non_embedding, "parts do not sum to the total");
  return c.outcome(fmt("embedding %lld (%.2fB), non-embedding %lld (%.2fB), total %lld (%.2fB)",
                       static_cast<long long>(pc.embedding), b(pc.embedding),
                       static_cast<long long>(pc.non_embedding), b(pc.non_embedding),
                       static_cast<long long>(pc.total), b(pc.total)));
}

// ---------------------------------------------------------------------------

Outcome temporal_soundness() {
  Rng rng(2013);
  const int64_t lo = Date{2010, 1, 1}.days_since_epoch();
  const int64_t hi = Date{2026, 1, 1}.days_since_epoch();
  std::vector<corpus::TimestampedDocument> docs;
  for (int i = 0; i < 1000; ++i) {
    docs.push_back({"d" + std::to_string(i), "text " + std::to_string(rng.below(1'000'000)),
                    Date::from_days_since_epoch(lo + rng.below(hi - lo)), "acceptance",
                    std::nullopt});
  }
  Checks c;
  size_t violations = 0;
  const int trials = 50;
  for (int t = 0; t < trials; ++t) {
    const CutoffSpec spec{2011 + static_cast<int>(rng.below(15))};
    const auto p = corpus::partition_by_cutoff(docs, spec);
    size_t recount = 0;
    for (const auto& d : docs) recount += d.timestamp < Date{spec.cutoff_year, 1, 1};
    for (const auto& d : p.kept) violations += !(d.timestamp < Date{spec.cutoff_year, 1, 1});
    c.expect(p.kept.size() == recount, fmt("cutoff %d kept %zu, recount %zu", spec.cutoff_year,
                                           p.kept.size(), recount));
  }
  c.expect(violations == 0, fmt("%zu kept documents on or after the cutoff", violations));

  // Planted post-cutoff documents, one per trial, must always be reported.
  TempDir dir("acc_soundness");
  size_t caught = 0;
  const int plants = 20;
  for (int t = 0; t < plants; ++t) {
    const CutoffSpec spec{2014 + static_cast<int>(rng.below(10))};
    auto kept = corpus::partition_by_cutoff(docs, spec).kept;
    kept.resize(std::min<size_t>(kept.size(), 40));
    corpus::TimestampedDocument late{"planted", "leak",
                                     Date{spec.cutoff_year, 1 + int(rng.below(12)), 1},
                                     "acceptance", std::nullopt};
    kept.insert(kept.begin() + rng.below(kept.size() + 1), late);
    const fs::path out = dir.path() / std::to_string(t);
    corpus::shard_tokens(kept, tok::BpeTokenizer{}, corpus::ShardOptions{}, spec, out);
    const auto r = corpus::verify_partition(out / corpus::kManifestFileName);
    const bool hit = r.violations.size() == 1 && r.violations[0].doc_id == "planted";
    caught += hit;
    c.expect(hit, fmt("plant %d not caught", t));
  }
  return c.outcome(fmt("1000 docs x %d cutoffs, 0 violations; %zu/%d planted documents caught",
                       trials, caught, plants));
}

// ---------------------------------------------------------------------------

struct ExperimentState {
  std::optional<acceptance::ExperimentResult> result;
  std::string error;
};

Outcome cutoff_reversal(ExperimentState& state, const fs::path& work) {
  auto cfg = acceptance::default_experiment();
  cfg.work_dir = work;
  cfg.log = [](const std::string& s) { std::fprintf(stderr, "  %s\n", s.c_str()); };
  try {
    state.result = acceptance::run_cutoff_experiment(cfg);
  } catch (const std::exception& e) {
    state.error = e.what();
    throw;
  }
  Checks c;
  std::string summary;
  for (const auto& m : state.result->models) {
    const int got = m.estimate.breakpoint_index;
    const double ratio = m.pre_mean > 0 ? m.post_mean / m.pre_mean : 0;
    c.expect(!m.estimate.degenerate && std::abs(got - m.true_breakpoint) <= 2,
             fmt("cutoff %d: break index %d vs true %d", m.cutoff_year, got, m.true_breakpoint));
    c.expect(ratio >= 1.10, fmt("cutoff %d: post/pre %.3f", m.cutoff_year, ratio));
    summary += fmt("%scutoff %d break %s (true %s) post/pre %.3f", summary.empty() ? "" : "; ",
                   m.cutoff_year, m.estimate.breakpoint.label().c_str(),
                   m.series.buckets.at(m.true_breakpoint).quarter.label().c_str(), ratio);
  }
  c.expect(state.result->models.size() == 2, "expected two models");
  return c.outcome(summary);
}

// ---------------------------------------------------------------------------

Outcome gradient_check() {
  lm::ModelConfig cfg;
  cfg.sequence_length = 16;
  cfg.n_layers = 2;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.ffn_hidden = 48;
  cfg.vocab_size = 64;
  auto p = lm::init_parameters(cfg, 31).cast<double>();
  Rng rng(99);
  const auto layout = p.layout();
  for (const auto& t : layout.tensors()) {
    for (size_t i = 0; i < t.size(); ++i) {
      double& v = p.values[t.offset + i];
      v = t.kind == lm::TensorKind::kNormScale ? 1.0 + 0.3 * rng.normal() : v * 5.0;
    }
  }
  const int B = 2, T = 8;
  std::vector<tok::TokenId> tokens(B * T), targets(B * T);
  for (auto& x : tokens) x = static_cast<tok::TokenId>(rng.below(cfg.vocab_size));
  for (auto& x : targets) x = static_cast<tok::TokenId>(rng.below(cfg.vocab_size));
  targets[5] = lm::kIgnoreIndex;

  lm::Workspace<double> ws;
  auto loss_of = [&] {
    return lm::cross_entropy<double>(ws.forward(p, tokens, B, T), cfg.vocab_size, targets);
  };
  std::vector<double> dlogits(size_t(B) * T * cfg.vocab_size);
  lm::cross_entropy<double>(ws.forward(p, tokens, B, T), cfg.vocab_size, targets,
                            lm::kIgnoreIndex, dlogits);
  std::vector<double> grads(p.values.size(), 0.0);
  ws.backward(p, dlogits, grads);

  Checks c;
  double worst = 0;
  std::string worst_name;
  const double h = 1e-5;
  for (const auto& t : layout.tensors()) {
    double num = 0, den_a = 0, den_n = 0;
    for (size_t i = 0; i < t.size(); ++i) {
      double& w = p.values[t.offset + i];
      const double w0 = w;
      w = w0 + h;
      const double up = loss_of();
      w = w0 - h;
      const double down = loss_of();
      w = w0;
      const double fd = (up - down) / (2 * h);
      const double a = grads[t.offset + i];
      num += (a - fd) * (a - fd);
      den_a += a * a;
      den_n += fd * fd;
    }
    const double rel = std::sqrt(num) / std::max({std::sqrt(den_a), std::sqrt(den_n), 1e-12});
    if (rel > worst) {
      worst = rel;
      worst_name = t.name;
    }
    c.expect(rel < 1e-4, fmt("%s rel err %.2e", t.name.c_str(), rel));
  }
  return c.outcome(fmt("%zu tensors, worst rel err %.2e (%s)", layout.tensors().size(), worst,
                       worst_name.c_str()));
}

// ---------------------------------------------------------------------------

lm::ModelConfig small_byte_config(int seq) {
  lm::ModelConfig c;
  c.vocab_size = tok::kMinVocabSize;
  c.sequence_length = seq;
  c.n_layers = 2;
  c.d_model = 32;
  c.n_heads = 4;
  c.ffn_hidden = 64;
  return c;
}

lm::Parameters<float> sharp_params(int seq, uint64_t seed, float scale) {
  auto p = lm::init_parameters(small_byte_config(seq), seed);
  for (auto& v : p.values) v *= scale;
  return p;
}

std::string random_text(Rng& rng, size_t len) {
  std::string s;
  for (size_t i = 0; i < len; ++i) s += static_cast<char>('a' + rng.below(26));
  return s;
}

// Windows are recomputed here: window k feeds stream[kT, kT + T) and its rows
// predict the next id. Log-softmax of the raw logits in long double.
double brute_force_perplexity(const lm::Parameters<float>& params, const std::string& text) {
  const size_t T = params.config.sequence_length;
  const int V = params.config.vocab_size;
  std::vector<tok::TokenId> stream{tok::kEndOfText};
  for (unsigned char ch : text) stream.push_back(ch);
  lm::Workspace<float> ws;
  long double nll = 0;
  for (size_t start = 0; start + 1 < stream.size(); start += T) {
    const size_t end = std::min(start + T, stream.size() - 1);
    const std::vector<tok::TokenId> ctx(stream.begin() + start, stream.begin() + end);
    const auto logits = ws.forward(params, ctx, 1, static_cast<int>(ctx.size()));
    for (size_t r = 0; r < ctx.size(); ++r) {
      nll -= oracle::reference_log_prob(logits.data() + r * V, V, stream[start + r + 1]);
    }
  }
  return static_cast<double>(std::exp(nll / static_cast<long double>(stream.size() - 1)));
}

Outcome perplexity_oracle() {
  const auto params = sharp_params(16, 31, 3.0f);
  const tok::BpeTokenizer bytes;
  Rng rng(77);
  std::vector<std::string> texts;
  for (int i = 0; i < 20; ++i) texts.push_back(random_text(rng, 1 + rng.below(70)));
  const auto r = probe::perplexity(params, bytes, texts);
  Checks c;
  double worst = 0, mean = 0;
  for (size_t i = 0; i < texts.size(); ++i) {
    const double want = brute_force_perplexity(params, texts[i]);
    const double got = r.per_document[i];
    mean += want / texts.size();
    worst = std::max(worst, rel_err(got, want));
    c.expect(rel_err(got, want) <= 1e-6, fmt("doc %zu: %.9g vs %.9g", i, got, want));
  }
  c.expect(rel_err(r.mean_perplexity, mean) <= 1e-6,
           fmt("mean %.9g vs %.9g", r.mean_perplexity, mean));
  return c.outcome(fmt("20 documents (mean perplexity %.2f), worst rel err %.2e", mean, worst));
}

// ---------------------------------------------------------------------------

Outcome removal_rates() {
  Checks c;
  const struct {
    const char* name;
    size_t before, after;
    const char* want;
  } table[] = {{"Coconot", 11136, 6776, "39.15%"},
               {"OpenAssistant", 29980, 23934, "20.17%"},
               {"Alpaca", 79755, 64614, "18.98%"}};
  std::string summary;
  for (const auto& row : table) {
    const auto r = curate::make_report(row.name, row.before, row.after);
    c.expect(r.percent() == row.want, fmt("%s: %s", row.name, r.percent().c_str()));
    summary += fmt("%zu->%zu %s, ", row.before, row.after, r.percent().c_str());
  }
  const auto rows = read_jsonl(fs::path(DATED_TEST_DATA) / "labeled_100.jsonl");
  std::vector<curate::InstructionExample> examples;
  size_t planted = 0;
  for (const auto& j : rows) {
    examples.push_back(curate::example_from_json(j));
    planted += j.at("expected") == "time_sensitive";
  }
  curate::RuleBasedClassifier rule;
  const auto r = curate::filter_dataset("fixture", examples, rule);
  const auto want = curate::make_report("fixture", rows.size(), rows.size() - planted);
  c.expect(r.report.percent() == want.percent() && r.report.after == want.after,
           fmt("fixture %s, planted %s", r.report.percent().c_str(), want.percent().c_str()));
  return c.outcome(summary + fmt("fixture %zu->%zu %s (planted %zu)", r.report.before,
                                 r.report.after, r.report.percent().c_str(), planted));
}

// ---------------------------------------------------------------------------

Outcome schedule_exactness() {
  Checks c;
  const int64_t total = 1000;
  const auto s = train::TrainSchedule::finetuning(total);
  const int64_t w = s.warmup_steps();
  c.expect(s.peak_lr == 2e-4, fmt("peak %.3g", s.peak_lr));
  c.expect(w == 100, fmt("warmup steps %lld", static_cast<long long>(w)));
  const struct {
    int64_t step;
    double want;
    const char* what;
  } points[] = {{w / 2, 1e-4, "warmup midpoint"},
                {w, 2e-4, "warmup end"},
                {w + (total - w) / 2, 1.1e-4, "cosine midpoint"},
                {total, 2e-5, "final step"}};
  std::string summary;
  for (const auto& pt : points) {
    const double got = train::lr_at(s, pt.step);
    c.expect(std::abs(got - pt.want) <= 1e-12 * pt.want,
             fmt("%s: %.12g vs %.12g", pt.what, got, pt.want));
    summary += fmt("%s%s %.4g", summary.empty() ? "" : ", ", pt.what, got);
  }
  return c.outcome(summary);
}

// ---------------------------------------------------------------------------

Outcome breakpoint_detector() {
  Checks c;
  Rng rng(2024);
  int hits = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 48;
    const int b = 8 + static_cast<int>(rng.below(32));
    std::vector<double> x(n), y(n);
    for (int i = 0; i < n; ++i) {
      x[i] = i;
      const double clean = i <= b ? 1.0 - 0.004 * i : 1.0 - 0.004 * b + 0.15 + 0.01 * (i - b);
      y[i] = clean + 0.02 * rng.normal();
    }
    hits += std::abs(probe::detect_breakpoint(x, y).breakpoint_index - b) <= 2;
  }
  c.expect(hits >= 95, fmt("Monte Carlo %d/100", hits));

  int exact = 0;
  for (int b = 1; b <= 44; ++b) {
    std::vector<double> xs, ys;
    for (int i = 0; i < 48; ++i) {
      xs.push_back(i);
      ys.push_back(i <= b ? 2.0 - 0.01 * i : 2.0 - 0.01 * b + 0.05 + 0.03 * (i - b));
    }
    const bool ok = probe::detect_breakpoint(xs, ys).breakpoint_index == b;
    exact += ok;
    c.expect(ok, fmt("noiseless break %d missed", b));
  }

  int invariant = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 6 + static_cast<int>(rng.below(40));
    std::vector<double> x(n), y(n), z(n);
    for (int i = 0; i < n; ++i) {
      x[i] = i;
      y[i] = rng.normal();
    }
    const double a = std::exp(rng.normal() * 3), shift = rng.normal() * 100;
    for (int i = 0; i < n; ++i) z[i] = a * y[i] + shift;
    const bool ok = probe::detect_breakpoint(x, y).breakpoint_index ==
                    probe::detect_breakpoint(x, z).breakpoint_index;
    invariant += ok;
    c.expect(ok, fmt("invariance trial %d", trial));
  }
  return c.outcome(fmt("noisy %d/100 within 2, noiseless %d/44 exact, invariant %d/100", hits,
                       exact, invariant));
}

// ---------------------------------------------------------------------------

eval::McqItem random_item(Rng& rng, int n, std::string id) {
  eval::McqItem item;
  item.id = std::move(id);
  item.question = "What is " + random_text(rng, 5) + "?";
  for (int k = 0; k < n; ++k) item.choices.push_back(random_text(rng, 1 + rng.below(6)));
  item.gold = static_cast<int>(rng.below(n));
  return item;
}

double hand_summed_score(const lm::Parameters<float>& params, const std::string& context,
                         const std::string& choice) {
  std::vector<tok::TokenId> prefix{tok::kEndOfText};
  for (unsigned char ch : context) prefix.push_back(ch);
  lm::Workspace<float> ws;
  const int V = params.config.vocab_size;
  long double sum = 0;
  for (unsigned char ch : " " + choice) {
    const auto logits = ws.forward(params, prefix, 1, static_cast<int>(prefix.size()));
    sum += oracle::reference_log_prob(logits.data() + (prefix.size() - 1) * V, V, ch);
    prefix.push_back(ch);
  }
  return static_cast<double>(sum);
}

// Tightest interval with at most (1 - mass) / 2 probability in each tail.
std::pair<int, int> binomial_band(int n, double p, double mass) {
  std::vector<double> pmf(n + 1);
  for (int k = 0; k <= n; ++k) {
    pmf[k] = std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                      k * std::log(p) + (n - k) * std::log(1 - p));
  }
  const double tail = (1 - mass) / 2;
  int lo = 0, hi = n;
  double acc = 0;
  while (acc + pmf[lo] <= tail) acc += pmf[lo++];
  acc = 0;
  while (acc + pmf[hi] <= tail) acc += pmf[hi--];
  return {lo, hi};
}

Outcome eval_scorer() {
  Checks c;
  const auto params = sharp_params(64, 11, 6.0f);
  const tok::BpeTokenizer bytes;
  Rng rng(5);
  double worst = 0;
  for (int i = 0; i < 10; ++i) {
    const auto item = random_item(rng, 2 + i % 3, "item" + std::to_string(i));
    const auto s = eval::score_mcq(params, bytes, item, {}, eval::Normalization::kNone);
    const std::string ctx = eval::mcq_context(item, {});
    for (size_t k = 0; k < item.choices.size(); ++k) {
      const double want = hand_summed_score(params, ctx, item.choices[k]);
      worst = std::max(worst, rel_err(s.scores[k], want));
      c.expect(rel_err(s.scores[k], want) <= 1e-6,
               fmt("%s choice %zu: %.9g vs %.9g", item.id.c_str(), k, s.scores[k], want));
    }
  }

  const auto [lo, hi] = binomial_band(400, 0.25, 0.99);
  const auto uniform_ish = sharp_params(64, 21, 6.0f);
  std::vector<eval::McqItem> task;
  for (int i = 0; i < 400; ++i) task.push_back(random_item(rng, 4, "u" + std::to_string(i)));
  const auto r = eval::run_task(uniform_ish, bytes, task, {});
  c.expect(r.errors == 0, fmt("%zu scoring errors", r.errors));
  c.expect(r.correct >= size_t(lo) && r.correct <= size_t(hi),
           fmt("accuracy %.4f outside [%.4f, %.4f]", r.accuracy, lo / 400.0, hi / 400.0));
  return c.outcome(fmt("10 items worst rel err %.2e; random model %zu/400 = %.4f in [%.4f, %.4f]",
                       worst, r.correct, r.accuracy, lo / 400.0, hi / 400.0));
}

// ---------------------------------------------------------------------------

Outcome serving(const ExperimentState& state, const fs::path& work) {
  if (!state.result) {
    return {false, "no experiment checkpoints: " + state.error};
  }
  const auto& models = state.result->models;
  auto tokenizer =
      std::make_shared<const tok::BpeTokenizer>(tok::BpeTokenizer::load(state.result->tokenizer));
  const fs::path faulty = work / "faulty.ckpt";
  {
    auto ckpt = train::load_checkpoint(models.back().checkpoint, false);
    ckpt.params.values[ckpt.params.layout().output + 7] = std::numeric_limits<float>::quiet_NaN();
    train::save_checkpoint(faulty, ckpt);
  }
  serve::ModelRegistry registry;
  for (auto it = models.rbegin(); it != models.rend(); ++it) {
    registry.register_model("dated-" + std::to_string(it->cutoff_year), it->checkpoint, tokenizer);
  }
  registry.register_model("dated-faulty", faulty, tokenizer);
  serve::ChatService chat(registry);
  httplib::Server server;
  serve::install_routes(server, registry, chat);
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  struct Stop {
    httplib::Server& s;
    std::thread& t;
    ~Stop() {
      s.stop();
      t.join();
    }
  } stop{server, thread};

  httplib::Client cli("127.0.0.1", port);
  Checks c;
  const auto list_res = cli.Get("/v1/models");
  c.expect(list_res && list_res->status == 200, "GET /v1/models failed");
  std::vector<std::string> ids;
  std::vector<int> years;
  if (list_res) {
    for (const auto& m : Json::parse(list_res->body)) {
      ids.push_back(m.at("id"));
      years.push_back(m.at("cutoff_year"));
    }
  }
  c.expect(ids.size() == 3 && ids[0] == "dated-2018" && ids[1] == "dated-2022" &&
               std::is_sorted(years.begin(), years.end()),
           "models not listed in cutoff order");

  const Json body = {{"model", "dated-2018"},
                     {"messages", {{{"role", "user"}, {"content", "What happened this quarter?"}}}},
                     {"temperature", 0.8},
                     {"top_k", 40},
                     {"max_tokens", 24},
                     {"seed", 2024}};
  auto post = [&](const char* path, const Json& j) {
    auto r = cli.Post(path, j.dump(), "application/json");
    return r ? std::make_pair(r->status, r->body) : std::make_pair(0, std::string());
  };
  const auto a = post("/v1/chat", body);
  const auto b = post("/v1/chat", body);
  c.expect(a.first == 200 && a == b, "seeded chat did not replay");

  Json other = body;
  other["model"] = "dated-2022";
  const auto solo_2022 = post("/v1/chat", other);
  Json cmp = body;
  cmp.erase("model");
  cmp["models"] = {"dated-2018", "dated-2022"};
  const auto pair = post("/v1/compare", cmp);
  c.expect(pair.first == 200, fmt("compare status %d", pair.first));
  bool equal = false;
  if (pair.first == 200) {
    const auto results = Json::parse(pair.second).at("results");
    equal = results.size() == 2 && serve::to_wire(results[0]) == a.second &&
            serve::to_wire(results[1]) == solo_2022.second;
  }
  c.expect(equal, "compare slots differ from standalone chats");

  cmp["models"] = {"dated-faulty", "dated-2022"};
  const auto faulted = post("/v1/compare", cmp);
  bool isolated = false;
  if (faulted.first == 200) {
    const auto results = Json::parse(faulted.second).at("results");
    isolated = results.size() == 2 && results[0].contains("error") &&
               serve::to_wire(results[1]) == solo_2022.second;
  }
  c.expect(isolated, "fault-injected slot did not isolate");
  return c.outcome(fmt("listed %zu models in year order, replay identical, compare byte-equal, "
                       "faulty slot isolated (port %d)",
                       ids.size(), port));
}

// ---------------------------------------------------------------------------

curate::InstructionExample example(std::string id, std::optional<Date> ts,
                                   curate::Sensitivity s) {
  curate::InstructionExample e;
  e.id = std::move(id);
  e.messages = {{tok::Role::kUser, "What moved the index?"},
                {tok::Role::kAssistant, "Rates."}};
  e.timestamp = ts;
  e.sensitivity = s;
  e.source = "acceptance";
  return e;
}

Outcome leakage_guards() {
  train::Checkpoint base;
  base.meta.config = small_byte_config(32);
  base.meta.cutoff_year = 2020;
  base.meta.tokenizer_fingerprint = tok::BpeTokenizer().fingerprint_hex();
  base.params = lm::init_parameters(base.meta.config, 3);
  const tok::BpeTokenizer bytes;
  const auto general = example("g0", std::nullopt, curate::Sensitivity::kGeneral);

  Checks c;
  int refused = 0;
  auto expect_refusal = [&](const char* what, const std::function<void()>& fn) {
    try {
      fn();
      c.expect(false, std::string(what) + " accepted");
    } catch (const LeakageError&) {
      ++refused;
    } catch (const std::exception& e) {
      c.expect(false, std::string(what) + " failed with " + e.what());
    }
  };

  expect_refusal("declared 2022 mix on a 2020 base", [&] {
    curate::InstructionMix mix{2022, {general}};
    train::finetune(base, bytes, mix, {});
  });
  expect_refusal("2020-05-01 example in a 2020 mix", [&] {
    const auto late = example("late", Date{2020, 5, 1}, curate::Sensitivity::kTimeSensitive);
    const std::vector<curate::InstructionExample> g{general}, y{late};
    curate::assemble_year_mix(g, y, 2020, 1);
  });
  expect_refusal("late time-sensitive example in a finetune mix", [&] {
    curate::InstructionMix mix{2020, {general, example("jan", Date{2020, 1, 1},
                                                       curate::Sensitivity::kTimeSensitive)}};
    train::finetune(base, bytes, mix, {});
  });
  c.expect(refused == 3, fmt("%d/3 refused", refused));
  return c.outcome(fmt("%d/3 guard fixtures refused", refused));
}

}  // namespace

// Usage: acceptance [--only NAME]... [WORK_DIR]
int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "dated_acceptance";
  std::vector<std::string> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      only.push_back(argv[++i]);
    } else {
      work = arg;
    }
  }
  fs::remove_all(work);
  fs::create_directories(work);
  ExperimentState experiment;

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"parameter-accounting", param_accounting},
      {"temporal-soundness", temporal_soundness},
      {"gradient-check", gradient_check},
      {"perplexity-oracle", perplexity_oracle},
      {"removal-rate-arithmetic", removal_rates},
      {"schedule-exactness", schedule_exactness},
      {"breakpoint-detector", breakpoint_detector},
      {"eval-scorer-oracle", eval_scorer},
      {"leakage-guards", leakage_guards},
      {"synthetic-cutoff-reversal", [&] { return cutoff_reversal(experiment, work / "experiment"); }},
      {"serving-end-to-end", [&] { return serving(experiment, work); }},
  };

  int failed = 0, ran = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    ++ran;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %s (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), secs,
                o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  fs::remove_all(work);
  return failed == 0 ? 0 : 1;
}
