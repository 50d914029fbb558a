#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sage/model/model.hpp"
#include "sage/model/vocab.hpp"

namespace sage::synthetic {

// Addition traces: prompt [Q a b], reasoning [a + b = c], conclusion [A c <eos>].
// The hallucinated variant reasons [a + a = 2a] and concludes 2a, ignoring b.
struct ArithmeticConfig {
    int max_operand = 9;
    // Probability of a hallucinated trace in the corpus, per task class.
    double hallucination_rate = 0.1;
    double tricky_hallucination_rate = 0.6;
    int tricky_min_b = 7;  // tasks with b >= this are tricky
};

struct ArithmeticTask {
    int a = 0;
    int b = 0;
    int answer() const { return a + b; }
};

class ArithmeticVocab {
public:
    explicit ArithmeticVocab(int max_operand);

    const model::Vocabulary& vocab() const noexcept { return vocab_; }
    int size() const { return static_cast<int>(vocab_.size()); }
    int q() const { return 0; }
    int ans() const { return 1; }
    int plus() const { return 2; }
    int eq() const { return 3; }
    int eos() const { return 4; }
    int sep() const { return 5; }
    int number(int n) const;
    // -1 when the token is not a number.
    int value(int token) const;

private:
    int max_number_;
    model::Vocabulary vocab_;
};

// Step-correctness label for every position of a trace.
struct LabeledTrace {
    model::MaskedSequence sequence;
    std::vector<std::pair<std::size_t, bool>> step_labels;
    bool hallucinated = false;
};

bool is_tricky(const ArithmeticConfig& config, const ArithmeticTask& task);

model::TokenSeq prompt_tokens(const ArithmeticVocab& v, const ArithmeticTask& task);
model::TokenSeq correct_reasoning(const ArithmeticVocab& v, const ArithmeticTask& task);
model::TokenSeq hallucinated_reasoning(const ArithmeticVocab& v, const ArithmeticTask& task);
model::TokenSeq conclusion_tokens(const ArithmeticVocab& v, int answer);
LabeledTrace make_trace(const ArithmeticVocab& v, const ArithmeticTask& task, bool hallucinated);

std::vector<ArithmeticTask> all_tasks(const ArithmeticConfig& config);
// Deterministic corpus: every task appears `per_task` times, hallucinated at
// its class rate (exact counts, rounded), then shuffled with `seed`.
std::vector<LabeledTrace> make_corpus(const ArithmeticConfig& config, const ArithmeticVocab& v, int per_task,
                                      std::uint64_t seed);
// Suite of `count` tasks drawn uniformly with replacement.
std::vector<ArithmeticTask> make_suite(const ArithmeticConfig& config, std::size_t count, std::uint64_t seed);

// A generated completion split at the answer marker.
struct ParsedCompletion {
    model::TokenSeq reasoning;
    std::optional<int> answer;
};
ParsedCompletion parse_completion(const ArithmeticVocab& v, const model::TokenSeq& completion);

}  // namespace sage::synthetic
