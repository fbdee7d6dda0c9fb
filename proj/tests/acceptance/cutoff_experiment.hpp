#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dated/lm/config.hpp"
#include "dated/probe/series.hpp"
#include "dated/synth/dated_news.hpp"

namespace dated::acceptance {

struct ExperimentConfig {
  synth::NewsOptions news;
  lm::ModelConfig model;
  int tokenizer_vocab = 512;
  int tokenizer_cutoff = 2018;
  int64_t steps = 300;
  int batch = 16;
  double peak_lr = 2e-3;
  double warmup_fraction = 0.02;
  uint64_t seed = 7;
  std::vector<int> cutoffs{2018, 2022};
  std::filesystem::path work_dir;
  std::function<void(const std::string&)> log;
};

struct ModelOutcome {
  int cutoff_year = 0;
  probe::PerplexitySeries series;
  probe::CutoffEstimate estimate;
  int true_breakpoint = 0;  // index of the last pre-cutoff quarter
  double pre_mean = 0;      // mean relative perplexity before the cutoff
  double post_mean = 0;
  double initial_loss = 0;
  double final_loss = 0;
  double seconds = 0;
  std::filesystem::path checkpoint;
};

struct ExperimentResult {
  std::vector<ModelOutcome> models;
  std::filesystem::path tokenizer;
};

ExperimentConfig default_experiment();

ExperimentResult run_cutoff_experiment(const ExperimentConfig& config);

}  // namespace dated::acceptance
