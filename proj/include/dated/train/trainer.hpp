#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dated/curate/instruction.hpp"
#include "dated/lm/config.hpp"
#include "dated/lm/parameters.hpp"
#include "dated/tokenizer/bpe.hpp"
#include "dated/train/checkpoint.hpp"
#include "dated/train/optimizer.hpp"
#include "dated/train/schedule.hpp"

namespace dated::train {

struct LossRecord {
  int64_t step = 0;  // updates completed, starting at 1
  double loss = 0;   // nats per target token, before the update
  double lr = 0;
  uint64_t tokens = 0;  // target tokens consumed so far
  double grad_norm = 0;
  int epoch = 0;  // fine-tuning only
};

Json loss_record_to_json(const LossRecord& r);

// A padded batch. targets[i] is the id expected after tokens[i], or
// lm::kIgnoreIndex.
struct TokenBatch {
  int batch = 0;
  int seq = 0;
  std::vector<tok::TokenId> tokens;
  std::vector<tok::TokenId> targets;
};

struct PretrainOptions {
  lm::ModelConfig config;
  TrainSchedule schedule;  // total_steps and batch_size_sequences apply
  uint64_t seed = 0;
  AdamWConfig optimizer;
  int micro_batch = 0;  // sequences per forward pass; 0 means whole batch
  int64_t checkpoint_every = 0;  // 0 keeps only the final checkpoint
  bool save_optimizer = true;
  std::filesystem::path out_dir;  // checkpoints and loss.jsonl; may be empty
  std::function<void(const LossRecord&)> on_step;
  // Test hook: poisons the gradients of the given update with NaN.
  std::optional<int64_t> inject_nan_at_step;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> trace;
  std::vector<std::filesystem::path> saved;
};

// Refuses to start unless verify_partition passes, the manifest fingerprint
// and vocabulary match `tokenizer` and the config, and the tokenizer cutoff
// does not exceed the manifest cutoff. Non-overlapping windows of
// sequence_length + 1 tokens are visited in a seeded shuffled order. On a
// non-finite loss or gradient the run throws NumericError after writing
// `last-good.ckpt` (the parameters before the failing update).
TrainResult pretrain(const std::filesystem::path& manifest_path,
                     const tok::BpeTokenizer& tokenizer,
                     const PretrainOptions& options);

struct FinetuneOptions {
  TrainSchedule schedule = TrainSchedule::finetuning(1);  // total_steps derived
  int batch_size = 8;
  uint64_t seed = 0;
  AdamWConfig optimizer;
  std::filesystem::path out_dir;
  std::function<void(const LossRecord&)> on_step;
};

struct FinetuneResult {
  TrainResult run;
  std::vector<double> epoch_losses;  // token-weighted mean per epoch
};

// Throws LeakageError if the mix declares a cutoff after the base's, or an
// example that is not `general` is dated on or after the base boundary.
void check_finetune_guard(const CheckpointMeta& base, const curate::InstructionMix& mix);

// Renders examples through the chat template, one per row, padding with
// <|pad|> to the longest rendering. Only assistant content and its <|end|> are targets.
TokenBatch build_chat_batch(const tok::BpeTokenizer& tokenizer,
                            std::span<const curate::InstructionExample> examples,
                            int max_sequence_length);

// Mean cross-entropy over the batch's targets.
double batch_loss(const lm::Parameters<float>& params, const TokenBatch& batch);

FinetuneResult finetune(const Checkpoint& base, const tok::BpeTokenizer& tokenizer,
                        const curate::InstructionMix& mix,
                        const FinetuneOptions& options);

}  // namespace dated::train
