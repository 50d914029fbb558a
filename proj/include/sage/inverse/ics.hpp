#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "sage/model/model.hpp"

namespace sage::inverse {

using model::TokenSeq;

// Reconstruction distribution q(. | trace) over prompt tokens, as log-probabilities.
class PromptReconstructor {
public:
    virtual ~PromptReconstructor() = default;
    virtual std::vector<double> log_probs(std::span<const int> trace) const = 0;
};

// The model's inverse head applied to the trace encoded on its own.
class ModelReconstructor final : public PromptReconstructor {
public:
    explicit ModelReconstructor(const model::SageModel& model) : model_(model) {}
    std::vector<double> log_probs(std::span<const int> trace) const override;

private:
    const model::SageModel& model_;
};

// Laplace-smoothed unigram of the trace itself: q(v) = (count(v) + 1) / (|trace| + V).
class BagOfTokensReconstructor final : public PromptReconstructor {
public:
    explicit BagOfTokensReconstructor(std::size_t vocab_size);
    std::vector<double> log_probs(std::span<const int> trace) const override;

private:
    std::size_t vocab_size_;
};

// Mean log q(x_i | trace) over prompt tokens; higher is more consistent, always <= 0.
double compute_ics(std::span<const double> log_q, std::span<const int> prompt);
double compute_ics(const PromptReconstructor& reconstructor, std::span<const int> trace, std::span<const int> prompt);

struct Candidate {
    TokenSeq tokens;
    double logp = 0.0;
    double ics = 0.0;
    double energy = 0.0;
};

// E(z) = -logp - lambda * ICS(z); lower is better.
double energy(const Candidate& candidate, double lambda);

// Index of the minimum-energy candidate. Ties go to higher logp, then to the
// lexicographically smaller token sequence, then to the lower index.
std::size_t rerank_index(std::span<const Candidate> candidates, double lambda);
// Winner with its energy filled in.
Candidate rerank_candidates(std::span<const Candidate> candidates, double lambda);

struct VoteSample {
    TokenSeq answer;
    double ics = 0.0;
};

struct VoteResult {
    TokenSeq winner;
    std::map<TokenSeq, int> tally;
    std::vector<std::size_t> filtered_out;  // sample indices
    bool fell_back = false;                  // every sample was below the floor
};

// Plurality vote. Ties go to the highest summed ICS, then the smaller answer.
VoteResult majority_vote(std::span<const VoteSample> samples);
// Drops samples with ICS < ics_floor before voting; if nothing survives the
// vote runs on all samples.
VoteResult ir_guided_vote(std::span<const VoteSample> samples,
                          double ics_floor = -std::numeric_limits<double>::infinity());

}  // namespace sage::inverse
