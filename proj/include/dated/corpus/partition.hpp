#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dated/common/date.hpp"
#include "dated/corpus/document.hpp"

namespace dated::corpus {

struct Violation {
  std::string doc_id;
  std::optional<Date> timestamp;  // nullopt when the document is unknown
  std::string reason;
};

struct PartitionReport {
  size_t docs_seen = 0;
  size_t docs_kept = 0;
  size_t docs_rejected = 0;
  uint64_t tokens_emitted = 0;
  std::vector<Violation> violations;
  // Shards whose bytes disagree with the manifest. Kept apart from
  // violations: corruption says nothing about temporal provenance.
  std::vector<std::string> corruptions;

  bool valid() const { return violations.empty() && corruptions.empty(); }
};

// Streaming form of partition_by_cutoff.
class CutoffFilter {
 public:
  explicit CutoffFilter(CutoffSpec spec) : spec_(spec) {}

  // True if `doc` is admissible (timestamp strictly before the boundary).
  bool offer(const TimestampedDocument& doc);
  const PartitionReport& report() const { return report_; }

 private:
  CutoffSpec spec_;
  PartitionReport report_;
};

struct Partition {
  std::vector<TimestampedDocument> kept;
  PartitionReport report;
};

Partition partition_by_cutoff(std::span<const TimestampedDocument> docs,
                              CutoffSpec spec);

}  // namespace dated::corpus
