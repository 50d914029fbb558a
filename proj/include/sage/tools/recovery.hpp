#pragma once

#include <cstdint>
#include <vector>

#include "sage/tools/agent.hpp"

namespace sage::tools {

struct RecoveryBenchConfig {
    int train_episodes = 300;  // with injected faults
    int clean_episodes = 100;
    int eval_episodes = 200;
    int max_turns = 6;
    std::size_t verifier_steps = 200;
    double verifier_lr = 1e-2;
    std::uint64_t seed = 0;
};

struct RecoveryBenchResult {
    double verifier_loss = 0.0;
    double irr_off = 0.0;
    double irr_on = 0.0;
    std::vector<EpisodeResult> off;
    std::vector<EpisodeResult> on;
};

// Episodes over the benign tasks in order; when `inject`, episode i gets a
// timeout (odd i) or parameter mismatch (even i) at turn 1.
std::vector<EpisodeResult> run_benign(const SchemaRegistry& registry, const std::vector<Task>& tasks,
                                      const StepVerifier* verifier, std::uint64_t seed, int episodes, bool inject,
                                      int max_turns);

// Trains an MCH verifier on unverified episodes, then runs the same faulted
// evaluation episodes with recovery unverified and verified.
RecoveryBenchResult recovery_bench(const SchemaRegistry& registry, const std::vector<Task>& tasks,
                                   const RecoveryBenchConfig& config);

}  // namespace sage::tools
