#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "sage/model/model.hpp"
#include "sage/synthetic/arithmetic.hpp"
#include "sage/synthetic/needle.hpp"

namespace sage::synthetic {

struct TrainConfig {
    std::size_t steps = 2000;
    std::size_t batch = 16;
    double lr = 3e-3;
    double clip_norm = 1.0;
    bool with_mch = true;  // add the confidence-head loss on step labels
    // Called after every step with the step number (from 1) and its dual loss.
    std::function<void(std::size_t, const model::LossParts&)> on_step;
};

// Dual-loss training (plus MCH loss) with minibatches taken in corpus order,
// wrapping around. Returns the per-step dual loss.
std::vector<double> train_arithmetic(model::SageModel& m, const std::vector<LabeledTrace>& corpus,
                                     const TrainConfig& config);

model::ModelConfig arithmetic_model_config(const ArithmeticVocab& v);

// Defaults used by the ablation suites: corpus, seeds and schedule fixed.
struct ArithmeticSetup {
    ArithmeticConfig task;
    int per_task = 10;
    std::uint64_t corpus_seed = 7;
    std::uint64_t model_seed = 1;
    TrainConfig train;
};
model::SageModel train_default_arithmetic(const ArithmeticSetup& setup);

struct NeedleTrainConfig {
    NeedleTaskConfig task;
    std::size_t steps = 1200;
    std::size_t batch = 8;
    double lr = 5e-3;
    double clip_norm = 1.0;
    // Fraction of each batch planted at landmark positions (curriculum).
    double aligned_fraction = 0.5;
    std::uint64_t seed = 1;
};

model::ModelConfig needle_model_config(const NeedleTaskConfig& task, int k_landmark);
std::vector<double> train_needle(model::SageModel& m, const NeedleTrainConfig& config);
// Argmax next-token accuracy at the query position.
double needle_accuracy(const model::SageModel& m, const std::vector<NeedleExample>& examples);

}  // namespace sage::synthetic
