#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sage/tools/schema.hpp"

namespace sage::tools {

struct PlanStep {
    std::string id;
    ToolCall call;  // template; argument values may reference earlier steps
};

struct PlanDAG {
    std::vector<PlanStep> steps;
    std::vector<std::pair<std::string, std::string>> deps;  // (from, to): from runs first
};

enum class PlanStatus { Valid, CycleError, UnknownDep };
std::string to_string(PlanStatus s);

struct PlanValidation {
    PlanStatus status = PlanStatus::Valid;
    std::vector<std::string> order;  // topological order when valid
    std::vector<std::string> cycle;  // one cycle, first node repeated at the end
    std::string detail;
};

// Kahn's algorithm; ties broken by step declaration order. Duplicate step ids
// are reported as UnknownDep since edges to them are ambiguous.
PlanValidation validate_plan_dag(const PlanDAG& plan);

json to_json(const PlanDAG& plan);
PlanDAG plan_from_json(const json& j);

}  // namespace sage::tools
