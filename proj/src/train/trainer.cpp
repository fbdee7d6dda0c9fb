#include "dated/train/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "dated/common/error.hpp"
#include "dated/common/random.hpp"
#include "dated/corpus/shard.hpp"
#include "dated/lm/loss.hpp"
#include "dated/lm/transformer.hpp"

namespace dated::train {
namespace {

constexpr uint64_t kDataStream = 0x9e3779b97f4a7c15ULL;

size_t count_targets(std::span<const tok::TokenId> targets) {
  size_t n = 0;
  for (auto t : targets) n += t != lm::kIgnoreIndex;
  return n;
}

// Forward/backward over micro-batches, then one optimizer update. The loss
// is the mean over every target token of the full batch.
class StepRunner {
 public:
  struct Outcome {
    double loss = 0;
    double grad_norm = 0;
    size_t targets = 0;
  };

  Outcome run(lm::Parameters<float>& params, AdamW& opt,
              std::span<const TokenBatch> micro, double lr, bool poison) {
    grads_.assign(params.values.size(), 0.0f);
    size_t total = 0;
    for (const auto& b : micro) total += count_targets(b.targets);
    if (total == 0) throw InvalidArgument("batch has no target tokens");
    Outcome out;
    out.targets = total;
    for (const auto& b : micro) {
      const size_t n = count_targets(b.targets);
      if (n == 0) continue;
      const auto logits = ws_.forward(params, b.tokens, b.batch, b.seq);
      dlogits_.resize(logits.size());
      const double loss = lm::cross_entropy<float>(
          logits, params.config.vocab_size, b.targets, lm::kIgnoreIndex, dlogits_);
      const float weight = static_cast<float>(static_cast<double>(n) / total);
      for (auto& g : dlogits_) g *= weight;
      ws_.backward(params, dlogits_, grads_);
      out.loss += loss * n / static_cast<double>(total);
    }
    if (poison) grads_[0] = std::numeric_limits<float>::quiet_NaN();
    out.grad_norm = global_norm(grads_);
    if (!std::isfinite(out.loss) || !std::isfinite(out.grad_norm)) return out;
    opt.step(params.values, grads_, lr);
    return out;
  }

 private:
  lm::Workspace<float> ws_;
  std::vector<float> grads_;
  std::vector<float> dlogits_;
};

class TraceWriter {
 public:
  explicit TraceWriter(const std::filesystem::path& out_dir) {
    if (out_dir.empty()) return;
    std::filesystem::create_directories(out_dir);
    out_.open(out_dir / "loss.jsonl", std::ios::trunc);
    if (!out_) throw IoError("cannot write " + (out_dir / "loss.jsonl").string());
  }
  void add(const LossRecord& r) {
    if (out_.is_open()) out_ << loss_record_to_json(r).dump() << '\n' << std::flush;
  }

 private:
  std::ofstream out_;
};

std::vector<TokenBatch> split_micro(const TokenBatch& full, int micro) {
  if (micro <= 0 || micro >= full.batch) return {full};
  std::vector<TokenBatch> parts;
  const size_t row = full.seq;
  for (int start = 0; start < full.batch; start += micro) {
    const int n = std::min(micro, full.batch - start);
    TokenBatch b;
    b.batch = n;
    b.seq = full.seq;
    b.tokens.assign(full.tokens.begin() + start * row,
                    full.tokens.begin() + (start + n) * row);
    b.targets.assign(full.targets.begin() + start * row,
                     full.targets.begin() + (start + n) * row);
    parts.push_back(std::move(b));
  }
  return parts;
}

std::filesystem::path step_path(const std::filesystem::path& dir, int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step-%06lld.ckpt", static_cast<long long>(step));
  return dir / buf;
}

}  // namespace

Json loss_record_to_json(const LossRecord& r) {
  Json j{{"step", r.step},
         {"loss", r.loss},
         {"lr", r.lr},
         {"tokens", r.tokens},
         {"grad_norm", r.grad_norm}};
  if (r.epoch > 0) j["epoch"] = r.epoch;
  return j;
}

TrainResult pretrain(const std::filesystem::path& manifest_path,
                     const tok::BpeTokenizer& tokenizer,
                     const PretrainOptions& options) {
  const lm::ModelConfig& config = options.config;
  config.validate();
  TrainSchedule schedule = options.schedule;
  {
    TrainSchedule check = schedule;
    check.total_steps = std::max<int64_t>(check.total_steps, 1);
    check.validate();
  }
  if (schedule.total_steps < 0) throw InvalidArgument("total_steps is negative");

  const auto manifest = corpus::ShardManifest::load(manifest_path);
  if (manifest.tokenizer_fingerprint != tokenizer.fingerprint_hex()) {
    throw InvalidArgument("shards were built with tokenizer " +
                          manifest.tokenizer_fingerprint + ", not " +
                          tokenizer.fingerprint_hex());
  }
  if (manifest.vocab_size != tokenizer.vocab_size() ||
      config.vocab_size != tokenizer.vocab_size()) {
    throw InvalidArgument("model vocab " + std::to_string(config.vocab_size) +
                          " does not match tokenizer vocab " +
                          std::to_string(tokenizer.vocab_size()));
  }
  if (tokenizer.trained_on_cutoff() > manifest.cutoff_year) {
    throw LeakageError("tokenizer trained on data up to " +
                       std::to_string(tokenizer.trained_on_cutoff()) +
                       " cannot be used for a " +
                       std::to_string(manifest.cutoff_year) + " model");
  }
  const auto report = corpus::verify_partition(manifest_path);
  if (!report.corruptions.empty()) {
    throw CorruptionError("shard verification failed: " + report.corruptions.front());
  }
  if (!report.violations.empty()) {
    throw LeakageError("shard verification found " +
                       std::to_string(report.violations.size()) +
                       " post-cutoff documents, first " + report.violations[0].doc_id);
  }

  Checkpoint ckpt;
  ckpt.params = lm::init_parameters(config, options.seed);
  ckpt.meta.config = config;
  ckpt.meta.cutoff_year = manifest.cutoff_year;
  ckpt.meta.tokenizer_fingerprint = tokenizer.fingerprint_hex();
  ckpt.meta.stage = Stage::kBase;
  ckpt.meta.training = {{"seed", options.seed},
                        {"schedule", schedule.to_json()},
                        {"manifest_tokens", manifest.tokens_emitted}};

  TrainResult result;
  TraceWriter trace(options.out_dir);
  auto save = [&](const std::filesystem::path& path) {
    if (options.out_dir.empty()) return;
    save_checkpoint(path, ckpt);
    result.saved.push_back(path);
  };

  if (schedule.total_steps > 0) {
    const auto tokens = corpus::read_all_tokens(manifest_path);
    const size_t T = config.sequence_length;
    const size_t windows = tokens.size() > T ? (tokens.size() - 1) / T : 0;
    if (windows == 0) {
      throw InvalidArgument("corpus of " + std::to_string(tokens.size()) +
                            " tokens is shorter than one training sequence");
    }
    std::vector<size_t> order(windows);
    std::iota(order.begin(), order.end(), size_t{0});
    Rng data_rng(options.seed ^ kDataStream);
    data_rng.shuffle(std::span(order));
    size_t cursor = 0;

    AdamW opt(lm::ParameterLayout(config), options.optimizer);
    StepRunner runner;
    const int B = schedule.batch_size_sequences;
    TokenBatch batch;
    batch.batch = B;
    batch.seq = static_cast<int>(T);
    uint64_t consumed = 0;

    for (int64_t s = 0; s < schedule.total_steps; ++s) {
      batch.tokens.clear();
      batch.targets.clear();
      for (int b = 0; b < B; ++b) {
        if (cursor == order.size()) {
          data_rng.shuffle(std::span(order));
          cursor = 0;
        }
        const size_t start = order[cursor++] * T;
        batch.tokens.insert(batch.tokens.end(), tokens.begin() + start,
                            tokens.begin() + start + T);
        batch.targets.insert(batch.targets.end(), tokens.begin() + start + 1,
                             tokens.begin() + start + T + 1);
      }
      const double lr = lr_at(schedule, s);
      const auto micro = split_micro(batch, options.micro_batch);
      const bool poison = options.inject_nan_at_step && *options.inject_nan_at_step == s + 1;
      const auto outcome = runner.run(ckpt.params, opt, micro, lr, poison);
      if (!std::isfinite(outcome.loss) || !std::isfinite(outcome.grad_norm)) {
        save(options.out_dir / "last-good.ckpt");
        throw NumericError("non-finite " +
                           std::string(std::isfinite(outcome.loss) ? "gradient" : "loss") +
                           " at step " + std::to_string(s + 1) +
                           "; last good checkpoint is step " + std::to_string(s));
      }
      consumed += outcome.targets;
      ckpt.meta.step = s + 1;
      LossRecord rec{s + 1, outcome.loss, lr, consumed, outcome.grad_norm, 0};
      result.trace.push_back(rec);
      trace.add(rec);
      if (options.on_step) options.on_step(rec);
      if (options.save_optimizer) ckpt.optimizer = opt.state();
      if (options.checkpoint_every > 0 && (s + 1) % options.checkpoint_every == 0 &&
          s + 1 < schedule.total_steps) {
        save(step_path(options.out_dir, s + 1));
      }
    }
    ckpt.meta.training["tokens_consumed"] = consumed;
  }
  save(options.out_dir / "final.ckpt");
  result.checkpoint = std::move(ckpt);
  return result;
}

void check_finetune_guard(const CheckpointMeta& base, const curate::InstructionMix& mix) {
  if (mix.declared_cutoff && *mix.declared_cutoff > base.cutoff_year) {
    throw LeakageError("dataset declares cutoff " + std::to_string(*mix.declared_cutoff) +
                       " but the base model's cutoff is " +
                       std::to_string(base.cutoff_year));
  }
  const CutoffSpec spec{base.cutoff_year};
  std::vector<std::string> offenders;
  for (const auto& e : mix.examples) {
    if (e.sensitivity == curate::Sensitivity::kGeneral) continue;
    if (!e.timestamp) {
      if (e.sensitivity == curate::Sensitivity::kTimeSensitive) {
        offenders.push_back(e.id + " (time-sensitive, undated)");
      }
      continue;
    }
    if (!spec.admits(*e.timestamp)) {
      offenders.push_back(e.id + " (" + e.timestamp->to_string() + ")");
    }
  }
  if (!offenders.empty()) {
    std::string list;
    for (size_t i = 0; i < offenders.size() && i < 5; ++i) {
      list += (i ? ", " : "") + offenders[i];
    }
    throw LeakageError(std::to_string(offenders.size()) +
                       " example(s) fall on or after " + spec.boundary().to_string() +
                       ": " + list);
  }
}

TokenBatch build_chat_batch(const tok::BpeTokenizer& tokenizer,
                            std::span<const curate::InstructionExample> examples,
                            int max_sequence_length) {
  std::vector<tok::RenderedChat> rendered;
  rendered.reserve(examples.size());
  int seq = 1;
  for (const auto& e : examples) {
    rendered.push_back(tok::render_chat(tokenizer, e.messages, false));
    const int len = static_cast<int>(rendered.back().tokens.size()) - 1;
    if (len > max_sequence_length) {
      throw InvalidArgument("example '" + e.id + "' renders to " + std::to_string(len + 1) +
                            " tokens, more than the context window allows");
    }
    seq = std::max(seq, len);
  }
  TokenBatch b;
  b.batch = static_cast<int>(examples.size());
  b.seq = seq;
  b.tokens.assign(static_cast<size_t>(b.batch) * seq, tok::kPad);
  b.targets.assign(static_cast<size_t>(b.batch) * seq, lm::kIgnoreIndex);
  for (int r = 0; r < b.batch; ++r) {
    const auto& c = rendered[r];
    for (size_t i = 0; i + 1 < c.tokens.size(); ++i) {
      b.tokens[r * seq + i] = c.tokens[i];
      if (c.is_target[i + 1]) b.targets[r * seq + i] = c.tokens[i + 1];
    }
  }
  return b;
}

double batch_loss(const lm::Parameters<float>& params, const TokenBatch& batch) {
  lm::Workspace<float> ws;
  return lm::cross_entropy<float>(ws.forward(params, batch.tokens, batch.batch, batch.seq),
                                  params.config.vocab_size, batch.targets);
}

FinetuneResult finetune(const Checkpoint& base, const tok::BpeTokenizer& tokenizer,
                        const curate::InstructionMix& mix,
                        const FinetuneOptions& options) {
  if (base.meta.stage != Stage::kBase) {
    throw InvalidArgument("fine-tuning expects a base checkpoint");
  }
  if (base.meta.tokenizer_fingerprint != tokenizer.fingerprint_hex()) {
    throw InvalidArgument("tokenizer does not match the base checkpoint");
  }
  if (mix.examples.empty()) throw InvalidArgument("instruction dataset is empty");
  if (options.batch_size < 1) throw InvalidArgument("batch_size must be positive");
  check_finetune_guard(base.meta, mix);
  for (const auto& e : mix.examples) e.validate();

  const size_t n = mix.examples.size();
  const int64_t per_epoch = static_cast<int64_t>((n + options.batch_size - 1) / options.batch_size);
  TrainSchedule schedule = options.schedule;
  schedule.total_steps = per_epoch * schedule.epochs;
  schedule.batch_size_sequences = options.batch_size;
  schedule.validate();

  FinetuneResult out;
  Checkpoint& ckpt = out.run.checkpoint;
  ckpt.meta = base.meta;
  ckpt.meta.stage = Stage::kInstruct;
  ckpt.meta.step = 0;
  ckpt.meta.training = {{"seed", options.seed},
                        {"schedule", schedule.to_json()},
                        {"base_step", base.meta.step},
                        {"examples", n}};
  if (mix.declared_cutoff) ckpt.meta.training["dataset_cutoff"] = *mix.declared_cutoff;
  ckpt.params = base.params;

  // Render everything once so over-long examples fail before any update.
  build_chat_batch(tokenizer, mix.examples, base.meta.config.sequence_length);

  AdamW opt(lm::ParameterLayout(base.meta.config), options.optimizer);
  StepRunner runner;
  TraceWriter trace(options.out_dir);
  Rng rng(options.seed);
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  uint64_t consumed = 0;
  int64_t step = 0;
  std::vector<curate::InstructionExample> chunk;
  for (int epoch = 1; epoch <= schedule.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    double weighted = 0;
    size_t epoch_targets = 0;
    for (size_t start = 0; start < n; start += options.batch_size) {
      chunk.clear();
      for (size_t i = start; i < std::min(n, start + options.batch_size); ++i) {
        chunk.push_back(mix.examples[order[i]]);
      }
      const TokenBatch batch =
          build_chat_batch(tokenizer, chunk, base.meta.config.sequence_length);
      const double lr = lr_at(schedule, step);
      const auto outcome = runner.run(ckpt.params, opt, std::span(&batch, 1), lr, false);
      if (!std::isfinite(outcome.loss) || !std::isfinite(outcome.grad_norm)) {
        throw NumericError("non-finite loss during fine-tuning at step " +
                           std::to_string(step + 1));
      }
      ++step;
      consumed += outcome.targets;
      weighted += outcome.loss * outcome.targets;
      epoch_targets += outcome.targets;
      LossRecord rec{step, outcome.loss, lr, consumed, outcome.grad_norm, epoch};
      out.run.trace.push_back(rec);
      trace.add(rec);
      if (options.on_step) options.on_step(rec);
    }
    out.epoch_losses.push_back(weighted / static_cast<double>(epoch_targets));
  }
  ckpt.meta.step = step;
  ckpt.meta.training["epoch_losses"] = out.epoch_losses;
  if (!options.out_dir.empty()) {
    const auto path = options.out_dir / "final.ckpt";
    save_checkpoint(path, ckpt);
    out.run.saved.push_back(path);
  }
  return out;
}

}  // namespace dated::train
