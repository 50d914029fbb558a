#include "sage/hybrid/controller.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "sage/inverse/ics.hpp"

namespace sage::hybrid {

std::string to_string(Mode mode) { return mode == Mode::Normal ? "normal" : "reasoning"; }

double step_entropy(std::span<const double> logits) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : logits)
        if (std::isnan(v)) throw std::invalid_argument("step_entropy: NaN logit");
    for (double v : logits) m = std::max(m, v);
    if (!std::isfinite(m)) throw std::invalid_argument("step_entropy: no finite logit");
    double z = 0.0;
    for (double v : logits) z += std::exp(v - m);
    const double lse = m + std::log(z);
    double h = 0.0;
    for (double v : logits) {
        if (v == -std::numeric_limits<double>::infinity()) continue;
        const double lp = v - lse;
        h -= std::exp(lp) * lp;
    }
    return std::max(h, 0.0);
}

double entropy_of_log_probs(std::span<const double> log_probs) { return step_entropy(log_probs); }

GateDecision gate(double entropy, double tau) {
    return {entropy, entropy > tau ? Mode::Reasoning : Mode::Normal, tau};
}

double CostLedger::bound() const { return static_cast<double>(n_steps) * (c_base + mu * c_mch); }

double CostLedger::cost_ratio() const {
    if (n_steps == 0 || c_base == 0.0) throw std::invalid_argument("cost_ratio: empty ledger or zero base cost");
    return c_total / (static_cast<double>(n_steps) * c_base);
}

CostLedger cost_account(std::span<const GateDecision> trace, double c_base, double c_mch) {
    if (trace.empty()) throw std::invalid_argument("cost_account: empty trace");
    if (c_base < 0.0 || c_mch < 0.0) throw std::invalid_argument("cost_account: negative unit cost");
    CostLedger l;
    l.c_base = c_base;
    l.c_mch = c_mch;
    l.n_steps = trace.size();
    for (const auto& d : trace) {
        const bool slow = d.mode == Mode::Reasoning;
        l.n_slow += slow;
        l.c_total += slow ? c_base + c_mch : c_base;
    }
    l.mu = static_cast<double>(l.n_slow) / static_cast<double>(l.n_steps);
    return l;
}

double switching_rate(std::span<const double> entropies, double tau) {
    if (entropies.empty()) throw std::invalid_argument("switching_rate: no entropies");
    std::size_t slow = 0;
    for (double h : entropies) slow += h > tau;
    return static_cast<double>(slow) / static_cast<double>(entropies.size());
}

double calibrate_tau(std::vector<double> entropies, double target_mu) {
    if (entropies.empty()) throw std::invalid_argument("calibrate_tau: no entropies");
    if (!(target_mu >= 0.0 && target_mu <= 1.0)) throw std::invalid_argument("calibrate_tau: target outside [0,1]");
    std::sort(entropies.begin(), entropies.end());
    if (switching_rate(entropies, -std::numeric_limits<double>::infinity()) <= target_mu) {
        return -std::numeric_limits<double>::infinity();
    }
    for (double tau : entropies)
        if (switching_rate(entropies, tau) <= target_mu) return tau;
    return entropies.back();
}

LasCandidate evaluate_candidate(const RolloutModel& model, const TokenSeq& state, const TokenSeq& step,
                                std::size_t depth) {
    LasCandidate c;
    c.step = step;
    TokenSeq s = state;
    s.insert(s.end(), step.begin(), step.end());
    std::vector<double> conf{model.confidence(s)};
    for (std::size_t d = 0; d < depth && !model.terminal(s); ++d) {
        const auto next = model.greedy_step(s);
        if (next.empty()) break;
        s.insert(s.end(), next.begin(), next.end());
        conf.push_back(model.confidence(s));
    }
    const double mean = std::accumulate(conf.begin(), conf.end(), 0.0) / static_cast<double>(conf.size());
    double var = 0.0;
    for (double v : conf) var += (v - mean) * (v - mean);
    c.score_std = std::sqrt(var / static_cast<double>(conf.size()));
    c.score = mean + model.ics(s);
    return c;
}

LasResult look_ahead_simulate(const RolloutModel& model, const TokenSeq& state, const LasConfig& config,
                              std::mt19937_64& rng) {
    if (config.k_candidates == 0) throw std::invalid_argument("look_ahead_simulate: zero candidates");
    if (config.depth == 0) throw std::invalid_argument("look_ahead_simulate: depth must be >= 1");
    LasResult r;
    auto score_batch = [&](const std::vector<TokenSeq>& steps) {
        for (const auto& st : steps) {
            auto c = evaluate_candidate(model, state, st, config.depth);
            c.stable = c.score_std < config.stability_threshold;
            r.candidates.push_back(std::move(c));
        }
    };
    auto best_of = [&](bool stable_only) -> std::ptrdiff_t {
        std::ptrdiff_t best = -1;
        for (std::size_t i = 0; i < r.candidates.size(); ++i) {
            if (stable_only && !r.candidates[i].stable) continue;
            if (best < 0 || r.candidates[i].score > r.candidates[static_cast<std::size_t>(best)].score) {
                best = static_cast<std::ptrdiff_t>(i);
            }
        }
        return best;
    };
    auto first = model.propose(state, config.k_candidates, rng);
    if (first.empty()) throw std::invalid_argument("look_ahead_simulate: model proposed no candidates");
    score_batch(first);
    auto best = best_of(true);
    if (best < 0) {
        r.resampled = true;
        score_batch(model.propose(state, config.k_candidates, rng));
        best = best_of(true);
        if (best < 0) best = best_of(false);
    }
    r.chosen_index = static_cast<std::size_t>(best);
    r.chosen = r.candidates[r.chosen_index].step;
    r.score = r.candidates[r.chosen_index].score;
    return r;
}

ModelRollout::ModelRollout(const model::SageModel& model, TokenSeq prompt, int stop_token, int trace_end)
    : model_(model), prompt_(std::move(prompt)), stop_token_(stop_token), trace_end_(trace_end) {
    if (prompt_.empty()) throw std::invalid_argument("ModelRollout: empty prompt");
}

std::vector<TokenSeq> ModelRollout::propose(const TokenSeq& state, std::size_t k, std::mt19937_64& rng) const {
    const auto lp = model_.next_token_log_probs(state);
    std::vector<double> p;
    for (double v : lp) p.push_back(std::exp(v));
    std::discrete_distribution<int> pick(p.begin(), p.end());
    std::vector<TokenSeq> out;
    for (std::size_t i = 0; i < k; ++i) {
        TokenSeq c{pick(rng)};
        if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(std::move(c));
    }
    return out;
}

TokenSeq ModelRollout::greedy_step(const TokenSeq& state) const {
    auto lp = model_.next_token_log_probs(state);
    return {static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin())};
}

bool ModelRollout::terminal(const TokenSeq& state) const {
    return (!state.empty() && state.back() == stop_token_) ||
           state.size() >= static_cast<std::size_t>(model_.config().max_seq_len);
}

double ModelRollout::confidence(const TokenSeq& state) const { return model_.step_confidence(state); }

TokenSeq ModelRollout::trace_of(const TokenSeq& state) const {
    TokenSeq t(state.begin() + static_cast<std::ptrdiff_t>(std::min(prompt_.size(), state.size())), state.end());
    auto end = std::find(t.begin(), t.end(), trace_end_);
    t.erase(end, t.end());
    return t;
}

double ModelRollout::ics(const TokenSeq& state) const {
    const auto trace = trace_of(state);
    if (trace.empty()) return -std::numeric_limits<double>::infinity();  // nothing to reconstruct from
    return inverse::compute_ics(model_.inverse_log_probs(trace), prompt_);
}

DecodeResult hybrid_decode(const ModelRollout& rollout, const TokenSeq& prompt, const HybridConfig& config) {
    DecodeResult r;
    TokenSeq state = prompt;
    std::mt19937_64 rng(config.seed);
    for (std::size_t s = 0; s < config.max_new && !rollout.terminal(state); ++s) {
        const auto lp = rollout.model().next_token_log_probs(state);
        const auto decision = gate(entropy_of_log_probs(lp), config.tau);
        r.decisions.push_back(decision);
        TokenSeq step;
        if (decision.mode == Mode::Normal) {
            step = {static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin())};
        } else {
            step = look_ahead_simulate(rollout, state, config.las, rng).chosen;
        }
        state.insert(state.end(), step.begin(), step.end());
        r.completion.insert(r.completion.end(), step.begin(), step.end());
    }
    if (!r.decisions.empty()) r.ledger = cost_account(r.decisions, config.c_base, config.c_mch);
    return r;
}

}  // namespace sage::hybrid
