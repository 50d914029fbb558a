#pragma once

#include <array>
#include <cstdint>

#include "sage/tools/schema.hpp"

namespace sage::tools {

struct HardNegative {
    ToolCall call;
    ViolationKind intended;
    // True when the schema had no slot for the requested class and a
    // MissingRequired mutant was produced instead.
    bool substituted = false;
};

// TypeError, HallucinatedKey and LogicError mutants of a valid call, in that
// order. Each fails validate_call with exactly its intended class. Throws
// std::invalid_argument if the call is invalid or no mutant (not even the
// MissingRequired substitute) exists.
std::array<HardNegative, 3> negative_constraint_samples(const ToolCall& call, const ToolSchema& schema,
                                                        std::uint64_t seed);

// Names that never appear in generated schemas; used for HallucinatedKey.
const std::vector<std::string>& decoy_keys();

// Random schema with 1-6 params of mixed types and domains, and a random call
// that validates against it.
ToolSchema random_schema(std::uint64_t seed);
ToolCall random_valid_call(const ToolSchema& schema, std::uint64_t seed);

}  // namespace sage::tools
