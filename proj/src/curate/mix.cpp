#include "dated/curate/mix.hpp"

#include <algorithm>
#include <unordered_set>

#include "dated/common/error.hpp"
#include "dated/common/random.hpp"

namespace dated::curate {

std::vector<std::string> mix_offenders(std::span<const InstructionExample> general,
                                       std::span<const InstructionExample> year_specific,
                                       int year) {
  const CutoffSpec spec{year};
  std::vector<std::string> out;
  for (const auto& e : year_specific) {
    if (!e.timestamp) {
      out.push_back(e.id + " (year-specific, undated)");
    } else if (!spec.admits(*e.timestamp)) {
      out.push_back(e.id + " (dated " + e.timestamp->to_string() + ")");
    }
  }
  for (const auto& e : general) {
    if (e.sensitivity == Sensitivity::kGeneral) continue;
    if (!e.timestamp) {
      out.push_back(e.id + " (" + std::string(sensitivity_name(e.sensitivity)) + ", undated)");
    } else if (!spec.admits(*e.timestamp)) {
      out.push_back(e.id + " (dated " + e.timestamp->to_string() + ")");
    }
  }
  return out;
}

InstructionMix assemble_year_mix(std::span<const InstructionExample> general,
                                 std::span<const InstructionExample> year_specific, int year,
                                 uint64_t seed) {
  if (general.empty() && year_specific.empty()) {
    throw InvalidArgument("nothing to mix");
  }
  const auto offenders = mix_offenders(general, year_specific, year);
  if (!offenders.empty()) {
    std::string msg = std::to_string(offenders.size()) + " example(s) cross the " +
                      std::to_string(year) + "-01-01 boundary: ";
    for (size_t i = 0; i < offenders.size() && i < 10; ++i) {
      msg += (i ? ", " : "") + offenders[i];
    }
    if (offenders.size() > 10) msg += ", ...";
    throw LeakageError(msg);
  }
  InstructionMix mix;
  mix.declared_cutoff = year;
  mix.examples.assign(general.begin(), general.end());
  mix.examples.insert(mix.examples.end(), year_specific.begin(), year_specific.end());
  std::unordered_set<std::string> ids;
  for (const auto& e : mix.examples) {
    if (!ids.insert(e.id).second) throw InvalidArgument("duplicate example id '" + e.id + "'");
  }
  std::sort(mix.examples.begin(), mix.examples.end(), [](const auto& a, const auto& b) {
    return std::tie(a.source, a.id) < std::tie(b.source, b.id);
  });
  Rng rng(seed);
  rng.shuffle(std::span(mix.examples));
  return mix;
}

}  // namespace dated::curate
