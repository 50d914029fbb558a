#include "sage/synthetic/arithmetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace sage::synthetic {

namespace {

std::vector<std::string> arithmetic_tokens(int max_number) {
    std::vector<std::string> t{"Q", "A", "+", "=", "<eos>", "<sep>"};
    for (int n = 0; n <= max_number; ++n) t.push_back(std::to_string(n));
    return t;
}

}  // namespace

ArithmeticVocab::ArithmeticVocab(int max_operand)
    : max_number_(2 * max_operand), vocab_(arithmetic_tokens(2 * max_operand)) {
    if (max_operand < 1) throw std::invalid_argument("arithmetic vocab: max_operand must be >= 1");
}

int ArithmeticVocab::number(int n) const {
    if (n < 0 || n > max_number_) throw std::invalid_argument("arithmetic vocab: number out of range");
    return 6 + n;
}

int ArithmeticVocab::value(int token) const { return token >= 6 && token <= 6 + max_number_ ? token - 6 : -1; }

bool is_tricky(const ArithmeticConfig& config, const ArithmeticTask& task) { return task.b >= config.tricky_min_b; }

model::TokenSeq prompt_tokens(const ArithmeticVocab& v, const ArithmeticTask& t) {
    return {v.q(), v.number(t.a), v.number(t.b)};
}

model::TokenSeq correct_reasoning(const ArithmeticVocab& v, const ArithmeticTask& t) {
    return {v.number(t.a), v.plus(), v.number(t.b), v.eq(), v.number(t.a + t.b)};
}

model::TokenSeq hallucinated_reasoning(const ArithmeticVocab& v, const ArithmeticTask& t) {
    return {v.number(t.a), v.plus(), v.number(t.a), v.eq(), v.number(2 * t.a)};
}

model::TokenSeq conclusion_tokens(const ArithmeticVocab& v, int answer) { return {v.ans(), v.number(answer), v.eos()}; }

LabeledTrace make_trace(const ArithmeticVocab& v, const ArithmeticTask& task, bool hallucinated) {
    LabeledTrace out;
    out.hallucinated = hallucinated && task.a != task.b;
    auto prompt = prompt_tokens(v, task);
    auto reasoning = hallucinated ? hallucinated_reasoning(v, task) : correct_reasoning(v, task);
    auto conclusion = conclusion_tokens(v, hallucinated ? 2 * task.a : task.answer());
    auto& seq = out.sequence;
    seq.tokens = prompt;
    seq.tokens.insert(seq.tokens.end(), reasoning.begin(), reasoning.end());
    seq.tokens.insert(seq.tokens.end(), conclusion.begin(), conclusion.end());
    seq.reasoning_mask.assign(seq.tokens.size(), false);
    for (std::size_t i = 0; i < reasoning.size(); ++i) seq.reasoning_mask[prompt.size() + i] = true;
    // A step is correct while the trace still agrees with the true derivation.
    const std::size_t diverge = out.hallucinated ? prompt.size() + 2 : seq.tokens.size();
    for (std::size_t i = prompt.size(); i < seq.tokens.size(); ++i) out.step_labels.push_back({i, i < diverge});
    return out;
}

std::vector<ArithmeticTask> all_tasks(const ArithmeticConfig& config) {
    std::vector<ArithmeticTask> out;
    for (int a = 0; a <= config.max_operand; ++a)
        for (int b = 0; b <= config.max_operand; ++b) out.push_back({a, b});
    return out;
}

std::vector<LabeledTrace> make_corpus(const ArithmeticConfig& config, const ArithmeticVocab& v, int per_task,
                                      std::uint64_t seed) {
    if (per_task < 1) throw std::invalid_argument("make_corpus: per_task must be >= 1");
    std::vector<LabeledTrace> out;
    for (const auto& task : all_tasks(config)) {
        const double rate = is_tricky(config, task) ? config.tricky_hallucination_rate : config.hallucination_rate;
        const int bad = static_cast<int>(std::lround(rate * per_task));
        for (int i = 0; i < per_task; ++i) out.push_back(make_trace(v, task, i < bad));
    }
    std::mt19937_64 rng(seed);
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

std::vector<ArithmeticTask> make_suite(const ArithmeticConfig& config, std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> d(0, config.max_operand);
    std::vector<ArithmeticTask> out;
    for (std::size_t i = 0; i < count; ++i) {
        const int a = d(rng);
        out.push_back({a, d(rng)});
    }
    return out;
}

ParsedCompletion parse_completion(const ArithmeticVocab& v, const model::TokenSeq& completion) {
    ParsedCompletion out;
    auto it = std::find(completion.begin(), completion.end(), v.ans());
    out.reasoning.assign(completion.begin(), it);
    if (it != completion.end() && it + 1 != completion.end()) {
        const int val = v.value(*(it + 1));
        if (val >= 0) out.answer = val;
    }
    return out;
}

}  // namespace sage::synthetic
