#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dated/common/date.hpp"
#include "dated/common/jsonl.hpp"
#include "dated/corpus/document.hpp"
#include "dated/lm/parameters.hpp"
#include "dated/tokenizer/bpe.hpp"

namespace dated::probe {

struct Bucket {
  Quarter quarter;
  bool present = false;  // enough documents to be scored
  size_t available = 0;  // documents dated in the quarter
  size_t documents = 0;  // documents scored
  uint64_t tokens = 0;
  double mean_perplexity = 0;
  double relative = 0;  // mean_perplexity / divisor
};

struct PerplexitySeries {
  int cutoff_year = 0;
  std::vector<Bucket> buckets;  // contiguous quarters, oldest first
  double divisor = 0;           // mean of present buckets' mean perplexities
  size_t input_documents = 0;
  size_t excluded_documents = 0;  // empty after tokenization
  size_t outside_range = 0;       // dated outside [first, last]
  size_t unsampled = 0;           // over the per-quarter sample size
  Json to_json() const;
};

// One scored document.
struct ScoredDocument {
  Quarter quarter;
  double perplexity = 0;
  uint64_t tokens = 0;
};

// Buckets pre-scored documents into [first, last]. Quarters with fewer than
// `min_per_quarter` documents are absent. Throws InvalidArgument when no
// quarter is present.
PerplexitySeries series_from_scores(std::span<const ScoredDocument> scores,
                                    Quarter first, Quarter last,
                                    size_t min_per_quarter);

struct SeriesOptions {
  size_t per_quarter = 0;  // sample cap per quarter; 0 scores everything
  size_t min_per_quarter = 1;
  uint64_t seed = 0;
  std::optional<Quarter> first;  // defaults to the earliest document
  std::optional<Quarter> last;
};

PerplexitySeries relative_series(const lm::Parameters<float>& params,
                                 const tok::BpeTokenizer& tokenizer,
                                 std::span<const corpus::TimestampedDocument> docs,
                                 const SeriesOptions& options, int cutoff_year);

struct CutoffEstimate {
  bool degenerate = false;  // flat series: no reversal to report
  int breakpoint_index = -1;  // quarters since the first bucket
  Quarter breakpoint;         // last quarter of the pre segment
  double slope_pre = 0;
  double slope_post = 0;
  double intercept_pre = 0;
  double intercept_post = 0;
  double sse = 0;
  double gap = 0;  // mean(post) - mean(pre)
  Json to_json() const;
};

// Two-segment least squares over (index, value) points; each segment keeps at
// least two points. Returns the split minimizing total squared error, ties
// to the earliest. Throws InvalidArgument for fewer than 6 points.
CutoffEstimate detect_breakpoint(std::span<const double> index,
                                 std::span<const double> value);

// Runs detect_breakpoint on the present buckets of `series`, with calendar
// indices so gaps keep slopes per quarter.
CutoffEstimate detect_cutoff(const PerplexitySeries& series);

void write_series_csv(const std::filesystem::path& path, const PerplexitySeries& series);

// Relative perplexity against quarter with the fitted break marked.
std::string render_series_svg(const PerplexitySeries& series,
                              const CutoffEstimate& estimate);

}  // namespace dated::probe
