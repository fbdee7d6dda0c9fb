#include "dated/synth/dated_news.hpp"

#include <algorithm>
#include <cmath>

#include "dated/common/error.hpp"
#include "dated/common/random.hpp"

namespace dated::synth {
namespace {

std::vector<std::string> syllable_inventory(size_t needed, uint64_t seed) {
  static const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p",
                                  "r", "s", "t", "v", "z", "br", "tr", "kl", "st",
                                  "zh", "qu"};
  static const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
  static const char* kCodas[] = {"", "n", "r", "x", "l"};
  std::vector<std::string> all;
  for (auto o : kOnsets)
    for (auto v : kVowels)
      for (auto c : kCodas) all.push_back(std::string(o) + v + c);
  Rng rng(seed);
  rng.shuffle(std::span(all));
  if (needed > all.size()) {
    throw InvalidArgument("syllable inventory too small for the requested span");
  }
  all.resize(needed);
  return all;
}

std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 32);
  return s;
}

struct Fact {
  std::string company, product;
  int revenue = 0;
};

std::string fill(const char* tmpl, const Fact& f) {
  std::string out;
  for (const char* p = tmpl; *p; ++p) {
    if (*p == '{' && p[2] == '}') {
      switch (p[1]) {
        case 'E': out += f.company; break;
        case 'P': out += f.product; break;
        case 'N': out += std::to_string(f.revenue); break;
        default: out += std::string(p, 3);
      }
      p += 2;
    } else {
      out += *p;
    }
  }
  return out;
}

constexpr const char* kTemplates[] = {
    "{E} unveiled {P}, its new product, and reported revenue of {N} million.",
    "{E} reported revenue of {N} million after the launch of {P}.",
    "Shares of {E} moved as {P} went on sale. Revenue reached {N} million.",
    "Analysts said {P} from {E} helped revenue climb to {N} million.",
    "{E} says {P} lifted revenue to {N} million.",
    "{E}, maker of {P}, posted {N} million in revenue, according to a report.",
    "This quarter {E} began selling {P}; revenue came to {N} million.",
    "{P} is the latest from {E}, which booked {N} million in revenue.",
};constexpr int kTemplateCount = static_cast<int>(std::size(kTemplates));

}  // namespace

NewsCorpus generate_news(const NewsOptions& o) {
  if (o.last < o.first) throw InvalidArgument("last quarter precedes first");
  const int max_mentions = static_cast<int>(std::lround(
      o.mentions_per_entity * (1.0 + o.mention_growth * (o.last.index_from(o.first)))));
  if (max_mentions + o.heldout_per_entity > kTemplateCount) {
    throw InvalidArgument("mentions plus held-out restatements exceed " +
                          std::to_string(kTemplateCount) + " templates");
  }
  if (o.entities_per_quarter < 1 || o.mentions_per_entity < 1 || o.syllable_window < 4) {
    throw InvalidArgument("news generator needs positive entity, mention and window sizes");
  }
  const int quarters = o.last.index_from(o.first) + 1;
  const auto syllables =
      syllable_inventory(static_cast<size_t>(quarters + o.syllable_window), o.seed);
  Rng rng(o.seed + 1);
  NewsCorpus out;

  for (int qi = 0; qi < quarters; ++qi) {
    const Quarter q = o.first.plus(qi);
    const Date start{q.year, (q.q - 1) * 3 + 1, 1};
    const Quarter next = q.plus(1);
    const int64_t d0 = start.days_since_epoch();
    const int64_t span = Date{next.year, (next.q - 1) * 3 + 1, 1}.days_since_epoch() - d0;
    auto syllable = [&] {
      return syllables[qi + rng.below(static_cast<uint64_t>(o.syllable_window))];
    };
    const int mentions = static_cast<int>(
        std::lround(o.mentions_per_entity * (1.0 + o.mention_growth * qi)));

    for (int e = 0; e < o.entities_per_quarter; ++e) {
      Fact f;
      const int parts = 2 + static_cast<int>(rng.below(2));
      for (int k = 0; k < parts; ++k) f.company += syllable();
      f.company = capitalize(f.company);
      f.product = capitalize(syllable() + syllable());
      f.revenue = 10 + static_cast<int>(rng.below(990));
      const Date day = Date::from_days_since_epoch(d0 + rng.below(span));
      const std::string stem = q.label() + "-e" + std::to_string(e);

      // Training mentions and held-out restatements walk the template ring
      // from the same offset, so held-out wording is unseen for this fact
      // while it has fewer mentions than templates.
      for (int m = 0; m < mentions; ++m) {
        const char* tmpl = kTemplates[(e + m) % kTemplateCount];
        out.train.push_back({"t" + stem + "-" + std::to_string(m), fill(tmpl, f), day,
                             "synthetic-news", std::nullopt});
      }
      for (int h = 0; h < o.heldout_per_entity; ++h) {
        const char* tmpl = kTemplates[(e + mentions + h) % kTemplateCount];
        out.heldout.push_back({"h" + stem + "-" + std::to_string(h), fill(tmpl, f), day,
                               "synthetic-news", std::nullopt});
      }
    }
  }
  // Interleave quarters as a crawl would; the order within the stream is
  // otherwise irrelevant to the cutoff filter.
  rng.shuffle(std::span(out.train));
  return out;
}

}  // namespace dated::synth
