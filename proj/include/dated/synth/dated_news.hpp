#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dated/common/date.hpp"
#include "dated/corpus/document.hpp"

namespace dated::synth {

// Templated news about fictional companies. Every quarter has its own set
// of entities whose names are built from a syllable window that slides one
// syllable per quarter, so vocabulary drifts steadily over time. Each
// quarter's facts are restated several times in the training stream and
// once more, in wording not used for that fact, for probing.
struct NewsOptions {
  Quarter first{2013, 1};
  Quarter last{2024, 4};
  int entities_per_quarter = 32;
  int mentions_per_entity = 2;       // training documents per fact, first quarter
  double mention_growth = 0.03;      // extra mentions per quarter (volume grows)
  int heldout_per_entity = 1;
  int syllable_window = 64;
  uint64_t seed = 2024;
};

struct NewsCorpus {
  std::vector<corpus::TimestampedDocument> train;
  std::vector<corpus::TimestampedDocument> heldout;
};

NewsCorpus generate_news(const NewsOptions& options);

}  // namespace dated::synth
