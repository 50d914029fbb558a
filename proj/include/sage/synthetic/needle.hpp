#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sage/model/model.hpp"

namespace sage::synthetic {

// Needle retrieval: a value token is planted among filler tokens more than
// one local window before a final QUERY token; the answer is the value.
//
// Token layout: 0 = QUERY, [1, 1 + num_values) values, then fillers.
struct NeedleTaskConfig {
    std::size_t length = 128;
    std::size_t local_window = 32;
    int num_values = 8;
    int num_fillers = 22;
    bool landmark_aligned = false;  // plant only at positions divisible by k
    std::size_t k_landmark = 16;
};

struct NeedleExample {
    model::TokenSeq tokens;
    std::size_t needle_position = 0;
    int answer = 0;
};

inline constexpr int kNeedleQuery = 0;

int needle_vocab_size(const NeedleTaskConfig& config);
NeedleExample make_needle_example(const NeedleTaskConfig& config, std::uint64_t seed);
std::vector<NeedleExample> make_needle_set(const NeedleTaskConfig& config, std::size_t count, std::uint64_t seed);
model::TargetedSequence to_targeted(const NeedleExample& example);

}  // namespace sage::synthetic
