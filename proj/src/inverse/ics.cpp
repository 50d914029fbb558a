#include "sage/inverse/ics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sage::inverse {

std::vector<double> ModelReconstructor::log_probs(std::span<const int> trace) const {
    if (trace.empty()) throw std::invalid_argument("compute_ics: empty reasoning trace");
    return model_.inverse_log_probs(trace);
}

BagOfTokensReconstructor::BagOfTokensReconstructor(std::size_t vocab_size) : vocab_size_(vocab_size) {
    if (vocab_size == 0) throw std::invalid_argument("BagOfTokensReconstructor: empty vocabulary");
}

std::vector<double> BagOfTokensReconstructor::log_probs(std::span<const int> trace) const {
    std::vector<double> counts(vocab_size_, 1.0);
    for (int t : trace) {
        if (t < 0 || static_cast<std::size_t>(t) >= vocab_size_) {
            throw std::invalid_argument("BagOfTokensReconstructor: token " + std::to_string(t) + " out of range");
        }
        counts[static_cast<std::size_t>(t)] += 1.0;
    }
    const double z = std::log(static_cast<double>(trace.size() + vocab_size_));
    for (double& c : counts) c = std::log(c) - z;
    return counts;
}

double compute_ics(std::span<const double> log_q, std::span<const int> prompt) {
    if (prompt.empty()) throw std::invalid_argument("compute_ics: empty prompt");
    double s = 0.0;
    for (int t : prompt) {
        if (t < 0 || static_cast<std::size_t>(t) >= log_q.size()) {
            throw std::invalid_argument("compute_ics: prompt token " + std::to_string(t) + " out of range");
        }
        s += log_q[static_cast<std::size_t>(t)];
    }
    return s / static_cast<double>(prompt.size());
}

double compute_ics(const PromptReconstructor& reconstructor, std::span<const int> trace, std::span<const int> prompt) {
    if (trace.empty()) throw std::invalid_argument("compute_ics: empty reasoning trace");
    if (prompt.empty()) throw std::invalid_argument("compute_ics: empty prompt");
    return compute_ics(reconstructor.log_probs(trace), prompt);
}

double energy(const Candidate& candidate, double lambda) {
    if (!(lambda >= 0.0)) throw std::invalid_argument("energy: lambda must be >= 0");
    return -candidate.logp - lambda * candidate.ics;
}

std::size_t rerank_index(std::span<const Candidate> candidates, double lambda) {
    if (candidates.empty()) throw std::invalid_argument("rerank_candidates: no candidates");
    std::size_t best = 0;
    double best_e = energy(candidates[0], lambda);
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const double e = energy(candidates[i], lambda);
        const auto& c = candidates[i];
        const auto& b = candidates[best];
        bool better = e < best_e;
        if (e == best_e) better = c.logp > b.logp || (c.logp == b.logp && c.tokens < b.tokens);
        if (better) {
            best = i;
            best_e = e;
        }
    }
    return best;
}

Candidate rerank_candidates(std::span<const Candidate> candidates, double lambda) {
    Candidate c = candidates[rerank_index(candidates, lambda)];
    c.energy = energy(c, lambda);
    return c;
}

namespace {

VoteResult vote_over(std::span<const VoteSample> samples, const std::vector<bool>& keep) {
    VoteResult r;
    std::map<TokenSeq, double> ics_sum;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!keep[i]) {
            r.filtered_out.push_back(i);
            continue;
        }
        r.tally[samples[i].answer] += 1;
        ics_sum[samples[i].answer] += samples[i].ics;
    }
    const TokenSeq* best = nullptr;
    for (const auto& [answer, count] : r.tally) {
        if (!best) {
            best = &answer;
            continue;
        }
        const int bc = r.tally.at(*best);
        // Map order already puts the smaller answer first on a full tie.
        if (count > bc || (count == bc && ics_sum.at(answer) > ics_sum.at(*best))) best = &answer;
    }
    r.winner = *best;
    return r;
}

}  // namespace

VoteResult majority_vote(std::span<const VoteSample> samples) {
    if (samples.empty()) throw std::invalid_argument("vote: no samples");
    return vote_over(samples, std::vector<bool>(samples.size(), true));
}

VoteResult ir_guided_vote(std::span<const VoteSample> samples, double ics_floor) {
    if (samples.empty()) throw std::invalid_argument("vote: no samples");
    std::vector<bool> keep(samples.size());
    bool any = false;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        keep[i] = !(samples[i].ics < ics_floor);
        any = any || keep[i];
    }
    if (!any) {
        auto r = majority_vote(samples);
        r.fell_back = true;
        return r;
    }
    return vote_over(samples, keep);
}

}  // namespace sage::inverse
