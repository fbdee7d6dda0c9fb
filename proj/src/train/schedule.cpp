#include "dated/train/schedule.hpp"

#include <cmath>
#include <numbers>

#include "dated/common/error.hpp"

namespace dated::train {

TrainSchedule TrainSchedule::pretraining(int64_t total_steps) {
  TrainSchedule s;
  s.total_steps = total_steps;
  return s;
}

TrainSchedule TrainSchedule::finetuning(int64_t total_steps) {
  TrainSchedule s;
  s.total_steps = total_steps;
  s.warmup_fraction = 0.10;
  s.epochs = 3;
  return s;
}

int64_t TrainSchedule::warmup_steps() const {
  return std::llround(warmup_fraction * static_cast<double>(total_steps));
}

void TrainSchedule::validate() const {
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    throw InvalidArgument("warmup_fraction must be in [0, 1)");
  }
  if (!(peak_lr > 0.0)) throw InvalidArgument("peak_lr must be positive");
  if (!(min_lr_ratio >= 0.0 && min_lr_ratio <= 1.0)) {
    throw InvalidArgument("min_lr must lie in [0, peak_lr]");
  }
  if (total_steps < 1) throw InvalidArgument("total_steps must be at least 1");
  if (warmup_steps() >= total_steps) {
    throw InvalidArgument("warmup of " + std::to_string(warmup_steps()) +
                          " steps leaves no decay phase in " + std::to_string(total_steps));
  }
  if (epochs < 1) throw InvalidArgument("epochs must be at least 1");
  if (batch_size_sequences < 1) throw InvalidArgument("batch size must be positive");
}

Json TrainSchedule::to_json() const {
  return {{"peak_lr", peak_lr},
          {"total_steps", total_steps},
          {"batch_size_sequences", batch_size_sequences},
          {"warmup_fraction", warmup_fraction},
          {"min_lr_ratio", min_lr_ratio},
          {"epochs", epochs}};
}

TrainSchedule TrainSchedule::from_json(const Json& j) {
  TrainSchedule s;
  s.peak_lr = j.value("peak_lr", s.peak_lr);
  s.total_steps = j.value("total_steps", s.total_steps);
  s.batch_size_sequences = j.value("batch_size_sequences", s.batch_size_sequences);
  s.warmup_fraction = j.value("warmup_fraction", s.warmup_fraction);
  s.min_lr_ratio = j.value("min_lr_ratio", s.min_lr_ratio);
  s.epochs = j.value("epochs", s.epochs);
  return s;
}

double lr_at(const TrainSchedule& s, int64_t step) {
  if (step < 0 || step > s.total_steps) {
    throw InvalidArgument("step " + std::to_string(step) + " outside [0, " +
                          std::to_string(s.total_steps) + "]");
  }
  const int64_t w = s.warmup_steps();
  if (step == s.total_steps) return s.min_lr();
  if (step < w) return s.peak_lr * static_cast<double>(step) / static_cast<double>(w);
  const double progress =
      static_cast<double>(step - w) / static_cast<double>(s.total_steps - w);
  return s.min_lr() +
         0.5 * (s.peak_lr - s.min_lr()) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace dated::train
