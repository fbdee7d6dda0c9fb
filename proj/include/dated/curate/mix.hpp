#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dated/curate/instruction.hpp"

namespace dated::curate {

// Examples that may not enter a mix with cutoff `year`: year-specific ones
// not dated before the boundary, and anything else not marked general that
// is undated or dated on or after it. Each entry is "<id> (<reason>)".
std::vector<std::string> mix_offenders(std::span<const InstructionExample> general,
                                       std::span<const InstructionExample> year_specific,
                                       int year);

// Concatenates both lists, sorts by (source, id), then shuffles with `seed`.
// Throws LeakageError naming offenders, InvalidArgument on duplicate ids or
// when both lists are empty.
InstructionMix assemble_year_mix(std::span<const InstructionExample> general,
                                 std::span<const InstructionExample> year_specific, int year,
                                 uint64_t seed);

}  // namespace dated::curate
