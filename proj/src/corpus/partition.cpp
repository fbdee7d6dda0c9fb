#include "dated/corpus/partition.hpp"

namespace dated::corpus {

bool CutoffFilter::offer(const TimestampedDocument& doc) {
  ++report_.docs_seen;
  if (spec_.admits(doc.timestamp)) {
    ++report_.docs_kept;
    return true;
  }
  ++report_.docs_rejected;
  return false;
}

Partition partition_by_cutoff(std::span<const TimestampedDocument> docs,
                              CutoffSpec spec) {
  CutoffFilter filter(spec);
  Partition out;
  for (const auto& doc : docs) {
    if (filter.offer(doc)) out.kept.push_back(doc);
  }
  out.report = filter.report();
  return out;
}

}  // namespace dated::corpus
