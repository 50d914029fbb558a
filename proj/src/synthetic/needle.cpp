#include "sage/synthetic/needle.hpp"

#include <random>
#include <stdexcept>

namespace sage::synthetic {

int needle_vocab_size(const NeedleTaskConfig& config) { return 1 + config.num_values + config.num_fillers; }

NeedleExample make_needle_example(const NeedleTaskConfig& config, std::uint64_t seed) {
    if (config.length <= config.local_window + 1) {
        throw std::invalid_argument("needle task: length must exceed the local window");
    }
    if (config.num_values < 2 || config.num_fillers < 1) throw std::invalid_argument("needle task: empty token sets");
    std::mt19937_64 rng(seed);
    const std::size_t last = config.length - 1;
    // Farthest position the query still sees through its local window.
    const std::size_t limit = last - config.local_window;
    std::vector<std::size_t> slots;
    for (std::size_t p = 0; p <= limit; ++p)
        if (!config.landmark_aligned || p % config.k_landmark == 0) slots.push_back(p);

    NeedleExample ex;
    ex.tokens.resize(config.length);
    std::uniform_int_distribution<int> filler(1 + config.num_values, config.num_values + config.num_fillers);
    for (auto& t : ex.tokens) t = filler(rng);
    ex.needle_position = slots[std::uniform_int_distribution<std::size_t>(0, slots.size() - 1)(rng)];
    ex.answer = 1 + std::uniform_int_distribution<int>(0, config.num_values - 1)(rng);
    ex.tokens[ex.needle_position] = ex.answer;
    ex.tokens[last] = kNeedleQuery;
    return ex;
}

std::vector<NeedleExample> make_needle_set(const NeedleTaskConfig& config, std::size_t count, std::uint64_t seed) {
    std::vector<NeedleExample> out;
    std::vector<std::uint64_t> seeds(count);
    std::mt19937_64 rng(seed);
    for (auto& s : seeds) s = rng();
    for (auto s : seeds) out.push_back(make_needle_example(config, s));
    return out;
}

model::TargetedSequence to_targeted(const NeedleExample& example) {
    return {example.tokens, {example.tokens.size() - 1}, {example.answer}};
}

}  // namespace sage::synthetic
