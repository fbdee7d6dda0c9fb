#include "dated/probe/series.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "dated/common/error.hpp"
#include "dated/common/random.hpp"
#include "dated/probe/perplexity.hpp"

namespace dated::probe {

Json PerplexitySeries::to_json() const {
  Json rows = Json::array();
  for (const auto& b : buckets) {
    Json r{{"quarter", b.quarter.label()},
           {"present", b.present},
           {"available", b.available},
           {"documents", b.documents},
           {"tokens", b.tokens}};
    if (b.present) {
      r["mean_perplexity"] = b.mean_perplexity;
      r["relative"] = b.relative;
    }
    rows.push_back(r);
  }
  return {{"cutoff_year", cutoff_year},
          {"divisor", divisor},
          {"normalization", "series_mean"},
          {"input_documents", input_documents},
          {"excluded_documents", excluded_documents},
          {"outside_range", outside_range},
          {"unsampled", unsampled},
          {"buckets", rows}};
}

Json CutoffEstimate::to_json() const {
  if (degenerate) return {{"degenerate", true}};
  return {{"degenerate", false},
          {"breakpoint_index", breakpoint_index},
          {"breakpoint", breakpoint.label()},
          {"slope_pre", slope_pre},
          {"slope_post", slope_post},
          {"sse", sse},
          {"gap", gap}};
}

PerplexitySeries series_from_scores(std::span<const ScoredDocument> scores,
                                    Quarter first, Quarter last,
                                    size_t min_per_quarter) {
  if (last < first) throw InvalidArgument("series ends before it starts");
  PerplexitySeries s;
  const int n = last.index_from(first) + 1;
  s.buckets.resize(n);
  std::vector<double> sums(n, 0.0);
  for (int i = 0; i < n; ++i) s.buckets[i].quarter = first.plus(i);
  for (const auto& d : scores) {
    const int i = d.quarter.index_from(first);
    if (i < 0 || i >= n) {
      ++s.outside_range;
      continue;
    }
    auto& b = s.buckets[i];
    ++b.documents;
    ++b.available;
    b.tokens += d.tokens;
    sums[i] += d.perplexity;
  }
  double total = 0;
  int present = 0;
  for (int i = 0; i < n; ++i) {
    auto& b = s.buckets[i];
    if (b.documents == 0 || b.documents < min_per_quarter) continue;
    b.present = true;
    b.mean_perplexity = sums[i] / static_cast<double>(b.documents);
    total += b.mean_perplexity;
    ++present;
  }
  if (present == 0) throw InvalidArgument("no quarter has enough documents");
  s.divisor = total / present;
  for (auto& b : s.buckets) {
    if (b.present) b.relative = b.mean_perplexity / s.divisor;
  }
  return s;
}

PerplexitySeries relative_series(const lm::Parameters<float>& params,
                                 const tok::BpeTokenizer& tokenizer,
                                 std::span<const corpus::TimestampedDocument> docs,
                                 const SeriesOptions& options, int cutoff_year) {
  if (docs.empty()) throw InvalidArgument("probe corpus is empty");
  Quarter first = options.first.value_or(Quarter::of(docs[0].timestamp));
  Quarter last = options.last.value_or(Quarter::of(docs[0].timestamp));
  if (!options.first || !options.last) {
    for (const auto& d : docs) {
      const Quarter q = Quarter::of(d.timestamp);
      if (!options.first) first = std::min(first, q);
      if (!options.last) last = std::max(last, q);
    }
  }

  std::map<Quarter, std::vector<size_t>> by_quarter;
  size_t outside = 0;
  for (size_t i = 0; i < docs.size(); ++i) {
    const Quarter q = Quarter::of(docs[i].timestamp);
    if (q < first || last < q) {
      ++outside;
      continue;
    }
    by_quarter[q].push_back(i);
  }

  Rng rng(options.seed);
  std::vector<ScoredDocument> scored;
  std::map<Quarter, size_t> available;
  size_t excluded = 0, unsampled = 0;
  for (auto& [q, idx] : by_quarter) {
    available[q] = idx.size();
    if (options.per_quarter > 0 && idx.size() > options.per_quarter) {
      rng.shuffle(std::span(idx));
      unsampled += idx.size() - options.per_quarter;
      idx.resize(options.per_quarter);
      std::sort(idx.begin(), idx.end());
    }
    for (size_t i : idx) {
      const auto ids = tokenizer.encode(docs[i].text);
      if (ids.empty()) {
        ++excluded;
        continue;
      }
      const DocumentScore s = score_document(params, ids);
      scored.push_back({q, s.perplexity(), s.tokens});
    }
  }
  PerplexitySeries s = series_from_scores(scored, first, last, options.min_per_quarter);
  for (auto& b : s.buckets) {
    auto it = available.find(b.quarter);
    b.available = it == available.end() ? 0 : it->second;
  }
  s.cutoff_year = cutoff_year;
  s.input_documents = docs.size();
  s.excluded_documents = excluded;
  s.outside_range = outside;
  s.unsampled = unsampled;
  return s;
}

namespace {

struct Line {
  double slope = 0, intercept = 0, sse = 0;
};

Line fit(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  Line l;
  l.slope = sxx > 0 ? sxy / sxx : 0.0;
  l.intercept = my - l.slope * mx;
  for (size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (l.intercept + l.slope * x[i]);
    l.sse += r * r;
  }
  return l;
}

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

CutoffEstimate detect_breakpoint(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("index and value lengths differ");
  const size_t n = y.size();
  if (n < 6) {
    throw InvalidArgument("breakpoint detection needs at least 6 points, got " +
                          std::to_string(n));
  }
  CutoffEstimate est;
  const double my = mean(y);
  double sst = 0;
  for (double v : y) sst += (v - my) * (v - my);
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  if (*hi - *lo <= 1e-12 * std::max(std::abs(my), 1e-300)) {
    est.degenerate = true;
    return est;
  }
  // A later split must beat the incumbent by more than rounding noise; the
  // margin scales with the data so the argmin survives scaling and shifts.
  const double margin = 1e-10 * sst;
  double best = INFINITY;
  for (size_t b = 1; b + 2 < n; ++b) {
    const Line pre = fit(x.first(b + 1), y.first(b + 1));
    const Line post = fit(x.subspan(b + 1), y.subspan(b + 1));
    const double sse = pre.sse + post.sse;
    if (sse < best - margin) {
      best = sse;
      est.breakpoint_index = static_cast<int>(std::lround(x[b]));
      est.slope_pre = pre.slope;
      est.slope_post = post.slope;
      est.intercept_pre = pre.intercept;
      est.intercept_post = post.intercept;
      est.sse = sse;
      est.gap = mean(y.subspan(b + 1)) - mean(y.first(b + 1));
    }
  }
  return est;
}

CutoffEstimate detect_cutoff(const PerplexitySeries& series) {
  if (series.buckets.empty()) throw InvalidArgument("empty series");
  std::vector<double> x, y;
  for (size_t i = 0; i < series.buckets.size(); ++i) {
    if (!series.buckets[i].present) continue;
    x.push_back(static_cast<double>(i));
    y.push_back(series.buckets[i].relative);
  }
  CutoffEstimate est = detect_breakpoint(x, y);
  if (!est.degenerate) {
    est.breakpoint = series.buckets.front().quarter.plus(est.breakpoint_index);
  }
  return est;
}

void write_series_csv(const std::filesystem::path& path, const PerplexitySeries& series) {
  std::string out = "quarter,present,documents,tokens,mean_perplexity,relative\n";
  char buf[256];
  for (const auto& b : series.buckets) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%zu,%llu,%.9g,%.9g\n", b.quarter.label().c_str(),
                  b.present ? 1 : 0, b.documents,
                  static_cast<unsigned long long>(b.tokens),
                  b.present ? b.mean_perplexity : 0.0, b.present ? b.relative : 0.0);
    out += buf;
  }
  write_file_atomic(path, out);
}

std::string render_series_svg(const PerplexitySeries& series,
                              const CutoffEstimate& estimate) {
  const double W = 720, H = 360, pad = 48;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& b : series.buckets) {
    if (!b.present) continue;
    lo = std::min(lo, b.relative);
    hi = std::max(hi, b.relative);
  }
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double n = std::max<double>(1, series.buckets.size() - 1);
  auto px = [&](double i) { return pad + i / n * (W - 2 * pad); };
  auto py = [&](double v) { return H - pad - (v - lo) / (hi - lo) * (H - 2 * pad); };
  char buf[256];
  std::string svg;
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\">\n",
                W, H);
  svg += buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.0f\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">"
                "Relative perplexity, cutoff %d</text>\n",
                pad, series.cutoff_year);
  svg += buf;
  svg += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (size_t i = 0; i < series.buckets.size(); ++i) {
    if (!series.buckets[i].present) continue;
    std::snprintf(buf, sizeof(buf), "%.1f,%.1f ", px(i), py(series.buckets[i].relative));
    svg += buf;
  }
  svg += "\"/>\n";
  for (size_t i = 0; i < series.buckets.size(); i += 4) {
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.0f\" font-family=\"sans-serif\" font-size=\"10\">"
                  "%d</text>\n",
                  px(i), H - pad + 16, series.buckets[i].quarter.year);
    svg += buf;
  }
  if (!estimate.degenerate && estimate.breakpoint_index >= 0) {
    const double x = px(estimate.breakpoint_index + 0.5);
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.1f\" y1=\"%.0f\" x2=\"%.1f\" y2=\"%.0f\" stroke=\"#d62728\" "
                  "stroke-dasharray=\"4 3\"/>\n",
                  x, pad, x, H - pad);
    svg += buf;
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace dated::probe
