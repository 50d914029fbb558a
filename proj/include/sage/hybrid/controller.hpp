#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sage/model/model.hpp"

namespace sage::hybrid {

using model::TokenSeq;

enum class Mode { Normal, Reasoning };
std::string to_string(Mode mode);

struct GateDecision {
    double entropy = 0.0;  // nats
    Mode mode = Mode::Normal;
    double threshold = 0.0;
};

// Shannon entropy (nats) of softmax(logits). -inf logits carry zero mass.
double step_entropy(std::span<const double> logits);
// Entropy of an already-normalised log-probability vector.
double entropy_of_log_probs(std::span<const double> log_probs);

// Reasoning iff entropy > tau (strict).
GateDecision gate(double entropy, double tau);

struct CostLedger {
    std::size_t n_steps = 0;
    std::size_t n_slow = 0;
    double c_base = 1.0;
    double c_mch = 1.0;
    double mu = 0.0;
    double c_total = 0.0;

    // N (c_base + mu c_mch)
    double bound() const;
    bool within_bound(double tol = 1e-9) const { return c_total <= bound() + tol; }
    // c_total / (N c_base)
    double cost_ratio() const;
};

CostLedger cost_account(std::span<const GateDecision> trace, double c_base, double c_mch);

// Smallest tau in the entropy sample whose switching rate does not exceed
// target_mu. Returns -inf when every step may engage.
double calibrate_tau(std::vector<double> entropies, double target_mu);
double switching_rate(std::span<const double> entropies, double tau);

// Environment for Look-Ahead Simulation. States are token sequences and a
// step appends tokens to the state.
class RolloutModel {
public:
    virtual ~RolloutModel() = default;
    virtual std::vector<TokenSeq> propose(const TokenSeq& state, std::size_t k, std::mt19937_64& rng) const = 0;
    virtual TokenSeq greedy_step(const TokenSeq& state) const = 0;
    virtual bool terminal(const TokenSeq& state) const = 0;
    // Meta-cognitive confidence of the latest step, in (0, 1).
    virtual double confidence(const TokenSeq& state) const = 0;
    // Inverse consistency of the state's trace.
    virtual double ics(const TokenSeq& state) const = 0;
};

struct LasConfig {
    std::size_t k_candidates = 4;
    std::size_t depth = 2;  // greedy continuation steps after the candidate
    double stability_threshold = 0.1;
};

struct LasCandidate {
    TokenSeq step;
    double score = 0.0;      // mean rollout confidence + final ICS
    double score_std = 0.0;  // std of per-step confidence along the rollout
    bool stable = false;
};

struct LasResult {
    TokenSeq chosen;
    double score = 0.0;
    std::size_t chosen_index = 0;  // into `candidates`
    bool resampled = false;
    std::vector<LasCandidate> candidates;
};

LasCandidate evaluate_candidate(const RolloutModel& model, const TokenSeq& state, const TokenSeq& step,
                                std::size_t depth);
// Commit the best stable candidate; if none is stable, propose a second batch
// once and commit the best-scoring candidate seen. Ties go to the lower index.
LasResult look_ahead_simulate(const RolloutModel& model, const TokenSeq& state, const LasConfig& config,
                              std::mt19937_64& rng);

// SageModel-backed rollouts. The trace scored by ICS is the part of the
// state after the prompt, cut at `trace_end` when present.
class ModelRollout final : public RolloutModel {
public:
    ModelRollout(const model::SageModel& model, TokenSeq prompt, int stop_token, int trace_end);

    // k draws from the next-token distribution, duplicates removed.
    std::vector<TokenSeq> propose(const TokenSeq& state, std::size_t k, std::mt19937_64& rng) const override;
    TokenSeq greedy_step(const TokenSeq& state) const override;
    bool terminal(const TokenSeq& state) const override;
    double confidence(const TokenSeq& state) const override;
    double ics(const TokenSeq& state) const override;

    TokenSeq trace_of(const TokenSeq& state) const;
    const model::SageModel& model() const noexcept { return model_; }

private:
    const model::SageModel& model_;
    TokenSeq prompt_;
    int stop_token_;
    int trace_end_;
};

struct HybridConfig {
    double tau = 1.0;
    double c_base = 1.0;
    double c_mch = 1.0;
    std::size_t max_new = 16;
    LasConfig las;
    std::uint64_t seed = 0;  // candidate sampling
};

struct DecodeResult {
    TokenSeq completion;
    std::vector<GateDecision> decisions;
    CostLedger ledger;
};

// Token-level hybrid decoding: greedy in Normal mode, LAS over sampled next
// tokens in Reasoning mode. Deterministic per seed.
DecodeResult hybrid_decode(const ModelRollout& rollout, const TokenSeq& prompt, const HybridConfig& config);

}  // namespace sage::hybrid
