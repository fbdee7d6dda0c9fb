#include <spdlog/spdlog.h>

#include "cli_common.hpp"
#include "dated/common/error.hpp"
#include "dated/corpus/shard.hpp"
#include "dated/train/trainer.hpp"

namespace dated::cli {
namespace {

void log_step(const train::LossRecord& r, int64_t every) {
  if (every > 0 && r.step % every == 0) {
    spdlog::info("step {:>6}  loss {:.4f}  lr {:.3e}  grad {:.3f}  tokens {}", r.step, r.loss,
                 r.lr, r.grad_norm, r.tokens);
  }
}

void copy_tokenizer(const tok::BpeTokenizer& tok, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  tok.save(out_dir / "tokenizer.json");
}

// Config file: {"model": {...}, "batch_size", "peak_lr", "warmup_fraction",
// "micro_batch", "checkpoint_every", "weight_decay"}; all but "model" optional.
void add_train(CLI::App& app) {
  auto* cmd = app.add_subcommand("train", "Pretrain a model on a verified partition");
  auto manifest = std::make_shared<fs::path>();
  auto config = std::make_shared<fs::path>();
  auto out = std::make_shared<fs::path>();
  auto tokenizer = std::make_shared<fs::path>();
  auto steps = std::make_shared<int64_t>(1000);
  auto seed = std::make_shared<uint64_t>(0);
  auto log_every = std::make_shared<int64_t>(10);
  cmd->add_option("--manifest", *manifest)->required();
  cmd->add_option("--config", *config, "Model and optimisation settings (JSON)")->required();
  cmd->add_option("--tokenizer", *tokenizer, "Tokenizer the shards were encoded with")->required();
  cmd->add_option("--steps", *steps)->capture_default_str();
  cmd->add_option("--seed", *seed)->capture_default_str();
  cmd->add_option("--out", *out)->required();
  cmd->add_option("--log-every", *log_every)->capture_default_str();
  cmd->callback([=] {
    const Json cfg = read_json_file(*config);
    train::PretrainOptions opt;
    opt.config = lm::ModelConfig::from_json(cfg.at("model"));
    opt.schedule = train::TrainSchedule::pretraining(*steps);
    opt.schedule.batch_size_sequences = cfg.value("batch_size", opt.schedule.batch_size_sequences);
    opt.schedule.peak_lr = cfg.value("peak_lr", opt.schedule.peak_lr);
    opt.schedule.warmup_fraction = cfg.value("warmup_fraction", opt.schedule.warmup_fraction);
    opt.micro_batch = cfg.value("micro_batch", 0);
    opt.checkpoint_every = cfg.value("checkpoint_every", int64_t{0});
    opt.optimizer.weight_decay = cfg.value("weight_decay", opt.optimizer.weight_decay);
    opt.seed = *seed;
    opt.out_dir = *out;
    const int64_t every = *log_every;
    opt.on_step = [every](const train::LossRecord& r) { log_step(r, every); };
    const auto tok = tok::BpeTokenizer::load(*tokenizer);
    copy_tokenizer(tok, *out);
    const auto result = train::pretrain(*manifest, tok, opt);
    Json saved = Json::array();
    for (const auto& p : result.saved) saved.push_back(p.string());
    print_json({{"steps", result.trace.size()},
                {"first_loss", result.trace.empty() ? 0.0 : result.trace.front().loss},
                {"final_loss", result.trace.empty() ? 0.0 : result.trace.back().loss},
                {"checkpoints", saved}});
  });
}

void add_finetune(CLI::App& app) {
  auto* cmd = app.add_subcommand("finetune", "Instruction-tune a base checkpoint on a year mix");
  auto base = std::make_shared<fs::path>();
  auto data = std::make_shared<fs::path>();
  auto out = std::make_shared<fs::path>();
  auto tokenizer = std::make_shared<std::optional<fs::path>>();
  auto opt = std::make_shared<train::FinetuneOptions>();
  opt->schedule = train::TrainSchedule::finetuning(1);
  cmd->add_option("--base", *base, "Base checkpoint")->required();
  cmd->add_option("--data", *data, "Instruction mix file")->required();
  cmd->add_option("--out", *out)->required();
  cmd->add_option("--tokenizer", *tokenizer, "Defaults to tokenizer.json beside the base");
  cmd->add_option("--epochs", opt->schedule.epochs)->capture_default_str();
  cmd->add_option("--batch-size", opt->batch_size)->capture_default_str();
  cmd->add_option("--peak-lr", opt->schedule.peak_lr)->capture_default_str();
  cmd->add_option("--seed", opt->seed)->capture_default_str();
  cmd->callback([=] {
    const auto ckpt = train::load_checkpoint(*base, false);
    const auto tok = find_tokenizer(*tokenizer, *base);
    const auto mix = curate::read_mix(*data);
    train::FinetuneOptions o = *opt;
    o.out_dir = *out;
    o.on_step = [](const train::LossRecord& r) { log_step(r, 10); };
    copy_tokenizer(tok, *out);
    const auto result = train::finetune(ckpt, tok, mix, o);
    print_json({{"epoch_losses", result.epoch_losses},
                {"steps", result.run.trace.size()},
                {"checkpoint", result.run.saved.empty() ? "" : result.run.saved.back().string()}});
  });
}

}  // namespace

void add_train_commands(CLI::App& app) {
  add_train(app);
  add_finetune(app);
}

}  // namespace dated::cli
