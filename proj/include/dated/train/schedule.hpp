#pragma once

#include <cstdint>

#include "dated/common/jsonl.hpp"

namespace dated::train {

struct TrainSchedule {
  double peak_lr = 2e-4;
  int64_t total_steps = 25000;
  int batch_size_sequences = 2048;
  double warmup_fraction = 0.0;
  double min_lr_ratio = 0.1;
  int epochs = 1;

  static TrainSchedule pretraining(int64_t total_steps);
  // 10% linear warmup then cosine, three epochs.
  static TrainSchedule finetuning(int64_t total_steps);

  double min_lr() const { return min_lr_ratio * peak_lr; }
  // round(warmup_fraction * total_steps)
  int64_t warmup_steps() const;
  void validate() const;
  Json to_json() const;
  static TrainSchedule from_json(const Json& j);
};

// Linear from 0 to peak over the W warmup steps, then cosine from peak to
// min_lr at total_steps. Throws InvalidArgument outside [0, total_steps].
double lr_at(const TrainSchedule& schedule, int64_t step);

}  // namespace dated::train
