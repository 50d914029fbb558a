#include "sage/synthetic/training.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sage::synthetic {

std::vector<double> train_arithmetic(model::SageModel& m, const std::vector<LabeledTrace>& corpus,
                                     const TrainConfig& config) {
    if (corpus.empty()) throw std::invalid_argument("train_arithmetic: empty corpus");
    if (config.batch == 0) throw std::invalid_argument("train_arithmetic: zero batch");
    model::Adam opt(model::tensors_of(m.parameters()), {.lr = config.lr, .clip_norm = config.clip_norm});
    std::vector<double> losses;
    std::size_t cursor = 0;
    for (std::size_t step = 1; step <= config.steps; ++step) {
        opt.zero_grad();
        std::vector<model::MaskedSequence> batch;
        for (std::size_t i = 0; i < config.batch; ++i) {
            const auto& tr = corpus[cursor++ % corpus.size()];
            batch.push_back(tr.sequence);
            // Per-sequence MCH gradients are summed over the batch, not averaged.
            if (config.with_mch) m.mch_loss(tr.sequence.tokens, tr.step_labels, true);
        }
        const auto l = m.dual_loss(batch, true);
        opt.step();
        losses.push_back(l.total);
        if (config.on_step) config.on_step(step, l);
    }
    return losses;
}

model::ModelConfig arithmetic_model_config(const ArithmeticVocab& v) {
    model::ModelConfig c;
    c.vocab_nl = c.vocab_code = v.size();
    c.max_seq_len = 16;
    return c;
}

model::SageModel train_default_arithmetic(const ArithmeticSetup& setup) {
    ArithmeticVocab v(setup.task.max_operand);
    model::SageModel m(arithmetic_model_config(v), setup.model_seed);
    train_arithmetic(m, make_corpus(setup.task, v, setup.per_task, setup.corpus_seed), setup.train);
    return m;
}

model::ModelConfig needle_model_config(const NeedleTaskConfig& task, int k_landmark) {
    model::ModelConfig c;
    c.n_layers = 2;
    c.d_model = 32;
    c.n_heads = 2;
    c.d_ff = 64;
    c.vocab_nl = c.vocab_code = needle_vocab_size(task);
    c.max_seq_len = static_cast<int>(task.length);
    c.k_landmark = k_landmark;
    c.local_window = static_cast<int>(task.local_window);
    return c;
}

std::vector<double> train_needle(model::SageModel& m, const NeedleTrainConfig& config) {
    if (config.batch == 0) throw std::invalid_argument("train_needle: zero batch");
    model::Adam opt(model::tensors_of(m.parameters()), {.lr = config.lr, .clip_norm = config.clip_norm});
    const auto aligned = static_cast<std::size_t>(std::lround(config.aligned_fraction * static_cast<double>(config.batch)));
    std::vector<double> losses;
    std::uint64_t example_seed = config.seed * 1000003ULL;
    for (std::size_t step = 1; step <= config.steps; ++step) {
        std::vector<model::TargetedSequence> batch;
        for (std::size_t i = 0; i < config.batch; ++i) {
            auto tc = config.task;
            tc.landmark_aligned = i < aligned;
            batch.push_back(to_targeted(make_needle_example(tc, ++example_seed)));
        }
        opt.zero_grad();
        losses.push_back(m.targeted_loss(batch, true));
        opt.step();
    }
    return losses;
}

double needle_accuracy(const model::SageModel& m, const std::vector<NeedleExample>& examples) {
    if (examples.empty()) throw std::invalid_argument("needle_accuracy: no examples");
    std::size_t ok = 0;
    for (const auto& e : examples) {
        const auto lp = m.next_token_log_probs(e.tokens);
        ok += std::max_element(lp.begin(), lp.end()) - lp.begin() == e.answer;
    }
    return static_cast<double>(ok) / static_cast<double>(examples.size());
}

}  // namespace sage::synthetic
