#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "../support/temp_dir.hpp"
#include "dated/common/error.hpp"
#include "dated/common/random.hpp"
#include "dated/corpus/partition.hpp"
#include "dated/corpus/shard.hpp"
#include "dated/lm/loss.hpp"
#include "dated/lm/transformer.hpp"
#include "dated/train/checkpoint.hpp"
#include "dated/train/optimizer.hpp"
#include "dated/train/schedule.hpp"
#include "dated/train/trainer.hpp"

using namespace dated;
using namespace dated::train;
namespace fs = std::filesystem;
using dated::oracle::TempDir;

namespace {

double closed_form_lr(double peak, double min_lr, int64_t warmup, int64_t total,
                      int64_t step) {
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return min_lr + 0.5 * (peak - min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

lm::ModelConfig toy_config(int d = 32, int layers = 2, int seq = 32) {
  lm::ModelConfig c;
  c.vocab_size = tok::kMinVocabSize;
  c.sequence_length = seq;
  c.n_layers = layers;
  c.d_model = d;
  c.n_heads = 2;
  c.ffn_hidden = d * 8 / 3;
  return c;
}

std::string words(Rng& rng, size_t bytes) {
  static const char* kSyl[] = {"ka", "lo", "mi", "nu", "re", "ta", "so", "vi"};
  std::string out;
  while (out.size() < bytes) {
    const int n = 1 + static_cast<int>(rng.below(3));
    for (int i = 0; i < n; ++i) out += kSyl[rng.below(8)];
    out += rng.below(10) == 0 ? ". " : " ";
  }
  return out;
}

// Byte-tokenized documents dated before `cutoff`, sharded into `dir`.
fs::path make_corpus(const fs::path& dir, const tok::BpeTokenizer& tokenizer, int cutoff,
                     size_t docs, size_t bytes_per_doc, uint64_t seed = 1) {
  Rng rng(seed);
  std::vector<corpus::TimestampedDocument> d;
  for (size_t i = 0; i < docs; ++i) {
    d.push_back({"d" + std::to_string(i), words(rng, bytes_per_doc),
                 Date{cutoff - 1 - static_cast<int>(i % 3), 1 + static_cast<int>(i % 12), 5},
                 "toy", std::nullopt});
  }
  corpus::ShardOptions opts;
  opts.shard_size_tokens = 1 << 16;
  corpus::shard_tokens(d, tokenizer, opts, CutoffSpec{cutoff}, dir);
  return dir / corpus::kManifestFileName;
}

Checkpoint toy_checkpoint(uint64_t seed = 3) {
  Checkpoint c;
  c.meta.config = toy_config();
  c.meta.step = 17;
  c.meta.cutoff_year = 2020;
  c.meta.tokenizer_fingerprint = tok::BpeTokenizer().fingerprint_hex();
  c.meta.training = {{"note", "toy"}};
  c.params = lm::init_parameters(c.meta.config, seed);
  OptimizerState st;
  st.step = 17;
  st.m.assign(c.params.values.size(), 0.25f);
  st.v.assign(c.params.values.size(), 0.5f);
  c.optimizer = st;
  return c;
}

curate::InstructionExample arithmetic_example(int i, Rng& rng) {
  const int a = static_cast<int>(rng.below(10)), b = static_cast<int>(rng.below(10));
  curate::InstructionExample e;
  e.id = "ex" + std::to_string(i);
  e.messages = {{tok::Role::kUser, std::to_string(a) + "+" + std::to_string(b) + "?"},
                {tok::Role::kAssistant, std::to_string(a + b)}};
  e.source = "toy";
  e.sensitivity = curate::Sensitivity::kGeneral;
  return e;
}

}  // namespace

TEST(Schedule, FinetuneClosedFormPoints) {
  const TrainSchedule s = TrainSchedule::finetuning(1000);
  ASSERT_EQ(s.warmup_steps(), 100);
  EXPECT_NEAR(lr_at(s, 50), 1e-4, 1e-18);
  EXPECT_NEAR(lr_at(s, 100), 2e-4, 1e-18);
  EXPECT_NEAR(lr_at(s, 550), 1.1e-4, 1e-18);
  EXPECT_EQ(lr_at(s, 1000), s.min_lr());
  EXPECT_NEAR(lr_at(s, 1000), 2e-5, 1e-18);
  EXPECT_EQ(lr_at(s, 0), 0.0);
}

TEST(Schedule, MatchesIndependentOracleEverywhere) {
  for (int64_t total : {1, 7, 10, 999, 1000}) {
    for (double wf : {0.0, 0.1, 0.5}) {
      TrainSchedule s = TrainSchedule::finetuning(total);
      s.warmup_fraction = wf;
      const int64_t w = std::llround(wf * static_cast<double>(total));
      if (w >= total) {
        EXPECT_THROW(s.validate(), InvalidArgument);
        continue;
      }
      double peak_seen = 0;
      for (int64_t t = 0; t <= total; ++t) {
        const double got = lr_at(s, t);
        EXPECT_NEAR(got, closed_form_lr(s.peak_lr, s.min_lr(), w, total, t), 1e-15)
            << "total " << total << " wf " << wf << " step " << t;
        peak_seen = std::max(peak_seen, got);
      }
      EXPECT_NEAR(peak_seen, s.peak_lr, 1e-18);
      EXPECT_EQ(lr_at(s, total), s.min_lr());
    }
  }
}

TEST(Schedule, ContinuousAndBounded) {
  const TrainSchedule s = TrainSchedule::finetuning(5000);
  double prev = lr_at(s, 0);
  const double max_jump = s.peak_lr / static_cast<double>(s.warmup_steps());
  for (int64_t t = 1; t <= s.total_steps; ++t) {
    const double cur = lr_at(s, t);
    EXPECT_LE(std::abs(cur - prev), max_jump * (1 + 1e-9));
    EXPECT_LE(cur, s.peak_lr);
    EXPECT_GE(cur, 0.0);
    if (t > s.warmup_steps()) {
      EXPECT_GE(cur, s.min_lr());
    }
    prev = cur;
  }
}

TEST(Schedule, PretrainingStartsAtPeak) {
  const TrainSchedule s = TrainSchedule::pretraining(25000);
  EXPECT_EQ(s.warmup_steps(), 0);
  EXPECT_EQ(lr_at(s, 0), 2e-4);
  EXPECT_EQ(s.batch_size_sequences, 2048);
}

TEST(Schedule, RejectsOutOfRangeAndBadFields) {
  const TrainSchedule s = TrainSchedule::finetuning(100);
  EXPECT_THROW(lr_at(s, -1), InvalidArgument);
  EXPECT_THROW(lr_at(s, 101), InvalidArgument);
  TrainSchedule bad = s;
  bad.warmup_fraction = 1.0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = s;
  bad.total_steps = 0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = s;
  bad.min_lr_ratio = 1.5;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  EXPECT_EQ(TrainSchedule::from_json(s.to_json()).to_json(), s.to_json());
}

TEST(AdamW, SingleStepMatchesHandComputation) {
  const auto cfg = toy_config(16, 1, 8);
  const lm::ParameterLayout layout(cfg);
  auto params = lm::init_parameters(cfg, 5);
  const auto before = params.values;
  Rng rng(9);
  std::vector<float> grads(layout.total());
  for (auto& g : grads) g = static_cast<float>(rng.normal() * 1e-3);
  const double norm = global_norm(grads);
  ASSERT_LT(norm, 1.0);  // no clipping in this case
  const auto g0 = grads;

  AdamW opt(layout);
  EXPECT_DOUBLE_EQ(opt.step(params.values, grads, 1e-2), norm);
  for (const auto& t : layout.tensors()) {
    const double wd = t.kind == lm::TensorKind::kNormScale ? 0.0 : 0.1;
    for (size_t i = t.offset; i < t.offset + t.size(); i += 7) {
      // After one step mhat = g and vhat = g^2.
      const double g = g0[i];
      const double expect =
          before[i] * (1 - 1e-2 * wd) - 1e-2 * g / (std::abs(g) + 1e-8);
      EXPECT_NEAR(params.values[i], expect, 1e-6) << t.name << " " << i;
    }
  }
  EXPECT_EQ(opt.state().step, 1);
}

TEST(AdamW, ClipsToUnitNormAndReportsPreClipNorm) {
  const auto cfg = toy_config(16, 1, 8);
  const lm::ParameterLayout layout(cfg);
  auto params = lm::init_parameters(cfg, 5);
  std::vector<float> grads(layout.total(), 1.0f);
  AdamW opt(layout);
  const double norm = opt.step(params.values, grads, 1e-3);
  EXPECT_NEAR(norm, std::sqrt(static_cast<double>(layout.total())), 1e-3);
  EXPECT_NEAR(global_norm(grads), 1.0, 1e-5);
}

TEST(AdamW, NonFiniteGradientLeavesStateUntouched) {
  const auto cfg = toy_config(16, 1, 8);
  const lm::ParameterLayout layout(cfg);
  auto params = lm::init_parameters(cfg, 5);
  const auto before = params.values;
  std::vector<float> grads(layout.total(), 0.1f);
  grads[3] = std::numeric_limits<float>::infinity();
  AdamW opt(layout);
  EXPECT_FALSE(std::isfinite(opt.step(params.values, grads, 1e-3)));
  EXPECT_EQ(params.values, before);
  EXPECT_EQ(opt.state().step, 0);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  TempDir dir("ckpt_rt");
  const Checkpoint c = toy_checkpoint();
  save_checkpoint(dir.path() / "a.ckpt", c);
  const Checkpoint back = load_checkpoint(dir.path() / "a.ckpt");
  EXPECT_EQ(back.meta, c.meta);
  EXPECT_EQ(back.params.values, c.params.values);
  ASSERT_TRUE(back.optimizer.has_value());
  EXPECT_EQ(*back.optimizer, *c.optimizer);
  EXPECT_FALSE(back.optimizer_dropped);
  EXPECT_EQ(checkpoint_digest(back), checkpoint_digest(c));
  save_checkpoint(dir.path() / "b.ckpt", back);
  std::ifstream a(dir.path() / "a.ckpt", std::ios::binary), b(dir.path() / "b.ckpt", std::ios::binary);
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a), {}),
            std::string(std::istreambuf_iterator<char>(b), {}));
}

TEST(Checkpoint, LoadingWithoutOptimizerFlagsIt) {
  TempDir dir("ckpt_opt");
  const Checkpoint c = toy_checkpoint();
  save_checkpoint(dir.path() / "a.ckpt", c);
  const Checkpoint back = load_checkpoint(dir.path() / "a.ckpt", false);
  EXPECT_EQ(back.params.values, c.params.values);
  EXPECT_FALSE(back.optimizer.has_value());
  EXPECT_TRUE(back.optimizer_dropped);

  Checkpoint bare = c;
  bare.optimizer.reset();
  save_checkpoint(dir.path() / "bare.ckpt", bare);
  EXPECT_FALSE(load_checkpoint(dir.path() / "bare.ckpt", false).optimizer_dropped);
}

TEST(Checkpoint, TruncationAndTamperingAreCorruption) {
  TempDir dir("ckpt_bad");
  save_checkpoint(dir.path() / "a.ckpt", toy_checkpoint());
  const auto size = fs::file_size(dir.path() / "a.ckpt");
  for (uintmax_t keep : {uintmax_t{0}, uintmax_t{10}, size / 2, size - 1}) {
    fs::copy_file(dir.path() / "a.ckpt", dir.path() / "t.ckpt",
                  fs::copy_options::overwrite_existing);
    fs::resize_file(dir.path() / "t.ckpt", keep);
    EXPECT_THROW(load_checkpoint(dir.path() / "t.ckpt"), CorruptionError) << keep;
  }
  {
    std::fstream f(dir.path() / "a.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(size / 2));
    f.put('\x5a');
  }
  EXPECT_THROW(load_checkpoint(dir.path() / "a.ckpt"), CorruptionError);
  EXPECT_THROW(load_checkpoint(dir.path() / "missing.ckpt"), IoError);
}

TEST(Checkpoint, VersionMismatchNamesBothVersions) {
  TempDir dir("ckpt_ver");
  save_checkpoint(dir.path() / "a.ckpt", toy_checkpoint());
  {
    std::fstream f(dir.path() / "a.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const char v[4] = {9, 0, 0, 0};
    f.write(v, 4);
  }
  try {
    load_checkpoint(dir.path() / "a.ckpt");
    FAIL() << "expected a version error";
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('9'), std::string::npos) << msg;
    EXPECT_NE(msg.find('1'), std::string::npos) << msg;
  }
}

TEST(Pretrain, ZeroStepsEqualsInitialization) {
  TempDir dir("pt_zero");
  const tok::BpeTokenizer tokenizer;
  const auto manifest = make_corpus(dir.path() / "shards", tokenizer, 2020, 20, 400);
  PretrainOptions o;
  o.config = toy_config();
  o.schedule = TrainSchedule::pretraining(1);
  o.schedule.total_steps = 0;
  o.seed = 11;
  o.out_dir = dir.path() / "run";
  const auto r = pretrain(manifest, tokenizer, o);
  EXPECT_TRUE(r.trace.empty());
  EXPECT_EQ(r.checkpoint.params.values, lm::init_parameters(o.config, 11).values);
  EXPECT_EQ(r.checkpoint.meta.stage, Stage::kBase);
  EXPECT_EQ(r.checkpoint.meta.cutoff_year, 2020);
  EXPECT_EQ(r.checkpoint.meta.tokenizer_fingerprint, tokenizer.fingerprint_hex());
  EXPECT_TRUE(fs::exists(o.out_dir / "final.ckpt"));
}

TEST(Pretrain, SameSeedIsBitReproducible) {
  TempDir dir("pt_det");
  const tok::BpeTokenizer tokenizer;
  const auto manifest = make_corpus(dir.path() / "shards", tokenizer, 2020, 40, 600);
  PretrainOptions o;
  o.config = toy_config();
  o.schedule = TrainSchedule::pretraining(12);
  o.schedule.batch_size_sequences = 4;
  o.schedule.peak_lr = 1e-3;
  o.micro_batch = 2;
  o.checkpoint_every = 5;
  o.seed = 21;
  o.out_dir = dir.path() / "a";
  const auto a = pretrain(manifest, tokenizer, o);
  o.out_dir = dir.path() / "b";
  const auto b = pretrain(manifest, tokenizer, o);
  EXPECT_EQ(a.checkpoint.params.values, b.checkpoint.params.values);
  ASSERT_EQ(a.trace.size(), 12u);
  for (size_t i = 0; i < a.trace.size(); ++i) {
    EXPECT_EQ(a.trace[i].step, static_cast<int64_t>(i + 1));
    EXPECT_EQ(a.trace[i].loss, b.trace[i].loss);
    EXPECT_EQ(a.trace[i].lr, b.trace[i].lr);
    EXPECT_TRUE(std::isfinite(a.trace[i].loss));
  }
  EXPECT_TRUE(fs::exists(dir.path() / "a" / "step-000005.ckpt"));
  EXPECT_TRUE(fs::exists(dir.path() / "a" / "step-000010.ckpt"));
  std::ifstream la(dir.path() / "a" / "loss.jsonl"), lb(dir.path() / "b" / "loss.jsonl");
  const std::string ta(std::istreambuf_iterator<char>(la), {});
  EXPECT_EQ(ta, std::string(std::istreambuf_iterator<char>(lb), {}));
  EXPECT_EQ(std::count(ta.begin(), ta.end(), '\n'), 12);

  o.seed = 22;
  o.out_dir.clear();
  EXPECT_NE(pretrain(manifest, tokenizer, o).checkpoint.params.values,
            a.checkpoint.params.values);
}

TEST(Pretrain, MicroBatchingMatchesFullBatch) {
  TempDir dir("pt_micro");
  const tok::BpeTokenizer tokenizer;
  const auto manifest = make_corpus(dir.path() / "shards", tokenizer, 2020, 40, 600);
  PretrainOptions o;
  o.config = toy_config();
  o.schedule = TrainSchedule::pretraining(3);
  o.schedule.batch_size_sequences = 4;
  o.seed = 4;
  const auto whole = pretrain(manifest, tokenizer, o);
  o.micro_batch = 1;
  const auto split = pretrain(manifest, tokenizer, o);
  for (size_t i = 0; i < whole.trace.size(); ++i) {
    EXPECT_NEAR(whole.trace[i].loss, split.trace[i].loss, 1e-5);
  }
  for (size_t i = 0; i < whole.checkpoint.params.values.size(); i += 97) {
    EXPECT_NEAR(whole.checkpoint.params.values[i], split.checkpoint.params.values[i], 1e-5);
  }
}

TEST(Pretrain, NanAbortsAndKeepsLastGood) {
  TempDir dir("pt_nan");
  const tok::BpeTokenizer tokenizer;
  const auto manifest = make_corpus(dir.path() / "shards", tokenizer, 2020, 20, 400);
  PretrainOptions o;
  o.config = toy_config();
  o.schedule = TrainSchedule::pretraining(10);
  o.schedule.batch_size_sequences = 2;
  o.seed = 5;
  o.out_dir = dir.path() / "run";
  o.inject_nan_at_step = 4;
  std::vector<LossRecord> seen;
  o.on_step = [&](const LossRecord& r) { seen.push_back(r); };
  EXPECT_THROW(pretrain(manifest, tokenizer, o), NumericError);
  ASSERT_EQ(seen.size(), 3u);
  const auto last_good = load_checkpoint(o.out_dir / "last-good.ckpt");
  EXPECT_EQ(last_good.meta.step, 3);
  EXPECT_TRUE(lm::all_finite<float>(last_good.params.values));

  EXPECT_FALSE(fs::exists(o.out_dir / "final.ckpt"));

  // The retained parameters are exactly those of a clean run after step 3.
  o.inject_nan_at_step.reset();
  o.on_step = nullptr;
  o.checkpoint_every = 3;
  o.out_dir = dir.path() / "clean";
  pretrain(manifest, tokenizer, o);
  EXPECT_EQ(load_checkpoint(o.out_dir / "step-000003.ckpt").params.values,
            last_good.params.values);
}

TEST(Pretrain, RefusesMismatchedTokenizerOrConfig) {
  TempDir dir("pt_mismatch");
  const tok::BpeTokenizer bytes;
  const auto manifest = make_corpus(dir.path() / "shards", bytes, 2020, 20, 400);
  Rng rng(2);
  std::vector<std::string> corpus{words(rng, 20000)};
  const auto other = tok::train_bpe(corpus, 300, CutoffSpec{2020}).tokenizer;
  PretrainOptions o;
  o.config = toy_config();
  o.schedule = TrainSchedule::pretraining(1);
  o.schedule.batch_size_sequences = 1;
  EXPECT_THROW(pretrain(manifest, other, o), InvalidArgument);
  o.config.vocab_size = 300;
  EXPECT_THROW(pretrain(manifest, bytes, o), InvalidArgument);

  const tok::BpeTokenizer late(std::vector<tok::MergeRule>{}, 2023);
  const auto late_manifest = make_corpus(dir.path() / "late", late, 2020, 20, 400);
  o.config = toy_config();
  EXPECT_THROW(pretrain(late_manifest, late, o), LeakageError);
}

TEST(Pretrain, RefusesCorruptOrLeakyShards) {
  TempDir dir("pt_corrupt");
  const tok::BpeTokenizer tokenizer;
  const auto manifest = make_corpus(dir.path() / "shards", tokenizer, 2020, 20, 400);
  PretrainOptions o;
  o.config = toy_config();
  o.schedule = TrainSchedule::pretraining(1);
  o.schedule.batch_size_sequences = 1;

  auto m = corpus::ShardManifest::load(manifest);
  const fs::path shard = dir.path() / "shards" / m.shards[0].path;
  {
    std::fstream f(shard, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(corpus::kShardHeaderBytes + 5));
    f.put('\x7f');
  }
  EXPECT_THROW(pretrain(manifest, tokenizer, o), CorruptionError);

  const auto clean = make_corpus(dir.path() / "leaky", tokenizer, 2020, 20, 400);
  m = corpus::ShardManifest::load(clean);
  m.documents[3].timestamp = Date{2021, 2, 1};
  m.save(clean);
  EXPECT_THROW(pretrain(clean, tokenizer, o), LeakageError);
}

TEST(Pretrain, ToyRunCutsLossByThirty) {
  // L=4, d=128 on two million tokens for 500 steps.
  TempDir dir("pt_toy");
  const tok::BpeTokenizer tokenizer;
  const auto manifest = make_corpus(dir.path() / "shards", tokenizer, 2020, 500, 4000);
  ASSERT_GE(corpus::ShardManifest::load(manifest).tokens_emitted, 2'000'000u);
  PretrainOptions o;
  o.config = toy_config(128, 4, 64);
  o.config.n_heads = 4;
  o.schedule = TrainSchedule::pretraining(500);
  o.schedule.batch_size_sequences = 8;
  o.schedule.peak_lr = 2e-3;
  o.seed = 1;
  const auto r = pretrain(manifest, tokenizer, o);
  ASSERT_EQ(r.trace.size(), 500u);
  auto mean = [&](size_t from, size_t n) {
    double s = 0;
    for (size_t i = from; i < from + n; ++i) s += r.trace[i].loss;
    return s / static_cast<double>(n);
  };
  const double initial = r.trace[0].loss, final = mean(490, 10);
  EXPECT_NEAR(initial, std::log(static_cast<double>(tok::kMinVocabSize)), 0.2);
  EXPECT_LT(final, 0.7 * initial) << initial << " -> " << final;
  for (const auto& rec : r.trace) EXPECT_TRUE(std::isfinite(rec.loss));
  for (size_t i = 1; i < r.trace.size(); ++i) {
    EXPECT_GT(r.trace[i].tokens, r.trace[i - 1].tokens);
  }
}

TEST(Finetune, GuardRejectsLateDeclaredCutoff) {
  Checkpoint base = toy_checkpoint();
  base.meta.cutoff_year = 2020;
  Rng rng(1);
  curate::InstructionMix mix;
  mix.declared_cutoff = 2022;
  mix.examples.push_back(arithmetic_example(0, rng));
  EXPECT_THROW(check_finetune_guard(base.meta, mix), LeakageError);
  EXPECT_THROW(finetune(base, tok::BpeTokenizer(), mix, {}), LeakageError);
  mix.declared_cutoff = 2020;
  EXPECT_NO_THROW(check_finetune_guard(base.meta, mix));
}

TEST(Finetune, GuardNamesLateTimeSensitiveExamples) {
  Checkpoint base = toy_checkpoint();
  base.meta.cutoff_year = 2020;
  Rng rng(1);
  curate::InstructionMix mix;
  mix.declared_cutoff = 2020;
  for (int i = 0; i < 4; ++i) mix.examples.push_back(arithmetic_example(i, rng));
  mix.examples[1].sensitivity = curate::Sensitivity::kTimeSensitive;
  mix.examples[1].timestamp = Date{2019, 12, 31};
  mix.examples[2].sensitivity = curate::Sensitivity::kTimeSensitive;
  mix.examples[2].timestamp = Date{2020, 1, 1};
  mix.examples[3].timestamp = Date{2023, 5, 1};  // general content is timeless
  try {
    check_finetune_guard(base.meta, mix);
    FAIL() << "expected a leakage error";
  } catch (const LeakageError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("ex2"), std::string::npos) << msg;
    EXPECT_EQ(msg.find("ex1"), std::string::npos) << msg;
    EXPECT_EQ(msg.find("ex3"), std::string::npos) << msg;
  }
}

TEST(Finetune, EmptyMixAndWrongStageAreErrors) {
  Checkpoint base = toy_checkpoint();
  curate::InstructionMix mix;
  EXPECT_THROW(finetune(base, tok::BpeTokenizer(), mix, {}), InvalidArgument);
  Rng rng(1);
  mix.examples.push_back(arithmetic_example(0, rng));
  base.meta.stage = Stage::kInstruct;
  EXPECT_THROW(finetune(base, tok::BpeTokenizer(), mix, {}), InvalidArgument);
}

TEST(Finetune, ChatBatchMasksEverythingButAssistantTurns) {
  const tok::BpeTokenizer tokenizer;
  Rng rng(3);
  std::vector<curate::InstructionExample> ex{arithmetic_example(0, rng),
                                             arithmetic_example(1, rng)};
  const auto batch = build_chat_batch(tokenizer, ex, 32);
  ASSERT_EQ(batch.batch, 2);
  const int seq = batch.seq;
  for (int b = 0; b < 2; ++b) {
    const auto r = tok::render_chat(tokenizer, ex[b].messages, false);
    ASSERT_LE(r.tokens.size() - 1, static_cast<size_t>(seq));
    const std::string answer = ex[b].messages[1].text;
    std::string target_text;
    int end_turns = 0;
    for (int t = 0; t < seq; ++t) {
      const auto target = batch.targets[b * seq + t];
      if (target == lm::kIgnoreIndex) continue;
      if (target == tok::kEndOfTurn) {
        ++end_turns;
      } else {
        target_text += static_cast<char>(target);
      }
      EXPECT_EQ(r.tokens.at(t + 1), target);
    }
    EXPECT_EQ(target_text, answer);
    EXPECT_EQ(end_turns, 1);
    for (size_t t = r.tokens.size() - 1; t < static_cast<size_t>(seq); ++t) {
      EXPECT_EQ(batch.tokens[b * seq + t], tok::kPad);
    }
  }
  EXPECT_THROW(build_chat_batch(tokenizer, ex, 8), InvalidArgument);
}

TEST(Finetune, SingleTargetLossEqualsLmLoss) {
  const tok::BpeTokenizer tokenizer;
  Rng rng(4);
  std::vector<curate::InstructionExample> ex{arithmetic_example(0, rng)};
  auto batch = build_chat_batch(tokenizer, ex, 32);
  const auto params = lm::init_parameters(toy_config(), 8);
  lm::Workspace<float> ws;
  const auto logits = ws.forward(params, batch.tokens, 1, batch.seq);
  int kept = -1;
  for (int t = 0; t < batch.seq; ++t) {
    if (batch.targets[t] == lm::kIgnoreIndex) continue;
    if (kept < 0) {
      kept = t;
    } else {
      batch.targets[t] = lm::kIgnoreIndex;
    }
  }
  ASSERT_GE(kept, 0);
  const double expect = -lm::token_log_prob<float>(
      logits.subspan(static_cast<size_t>(kept) * tok::kMinVocabSize, tok::kMinVocabSize),
      batch.targets[kept]);
  EXPECT_NEAR(batch_loss(params, batch), expect, 1e-6);
}

TEST(Finetune, LossFallsEveryEpochAndStageBecomesInstruct) {
  TempDir dir("ft_toy");
  const tok::BpeTokenizer tokenizer;
  const auto manifest = make_corpus(dir.path() / "shards", tokenizer, 2020, 20, 400);
  PretrainOptions po;
  po.config = toy_config(48, 2, 32);
  po.schedule = TrainSchedule::pretraining(1);
  po.schedule.total_steps = 0;
  po.seed = 2;
  const auto base = pretrain(manifest, tokenizer, po).checkpoint;

  Rng rng(6);
  curate::InstructionMix mix;
  mix.declared_cutoff = 2020;
  for (int i = 0; i < 200; ++i) mix.examples.push_back(arithmetic_example(i, rng));
  FinetuneOptions fo;
  fo.schedule.peak_lr = 3e-3;
  fo.batch_size = 8;
  fo.seed = 3;
  fo.out_dir = dir.path() / "ft";
  const auto r = finetune(base, tokenizer, mix, fo);
  ASSERT_EQ(r.epoch_losses.size(), 3u);
  EXPECT_LT(r.epoch_losses[1], r.epoch_losses[0]);
  EXPECT_LT(r.epoch_losses[2], r.epoch_losses[1]);
  EXPECT_EQ(r.run.trace.size(), 3u * 25u);
  EXPECT_EQ(r.run.checkpoint.meta.stage, Stage::kInstruct);
  EXPECT_EQ(r.run.checkpoint.meta.cutoff_year, 2020);
  const auto saved = load_checkpoint(fo.out_dir / "final.ckpt");
  EXPECT_EQ(saved.meta.stage, Stage::kInstruct);
  EXPECT_EQ(saved.params.values, r.run.checkpoint.params.values);
}
