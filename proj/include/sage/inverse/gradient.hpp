#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "sage/model/model.hpp"

namespace sage::inverse {

using model::TokenSeq;

// Autoregressive categorical policy small enough to enumerate:
// P(z) = prod_t softmax(theta[t][prev_t])[z_t], prev_0 = vocab (start symbol).
class SequencePolicy {
public:
    SequencePolicy(std::size_t vocab, std::size_t length, std::vector<double> theta);
    static SequencePolicy random(std::size_t vocab, std::size_t length, double scale, std::uint64_t seed);

    std::size_t vocab() const noexcept { return vocab_; }
    std::size_t length() const noexcept { return length_; }
    std::size_t num_params() const noexcept { return theta_.size(); }
    std::span<const double> theta() const noexcept { return theta_; }
    std::span<double> theta() noexcept { return theta_; }

    std::vector<double> probs(std::size_t t, int prev) const;
    double log_prob(std::span<const int> z) const;
    // d log P(z) / d theta, dense.
    std::vector<double> grad_log_prob(std::span<const int> z) const;
    TokenSeq sample(std::mt19937_64& rng) const;
    // Every sequence in lexicographic order.
    std::vector<TokenSeq> enumerate() const;

private:
    std::size_t index(std::size_t t, std::size_t prev, std::size_t v) const;

    std::size_t vocab_;
    std::size_t length_;
    std::vector<double> theta_;
};

using RewardFn = std::function<double(std::span<const int>)>;

// sum_z P(z) grad log P(z) R(z) by enumeration.
std::vector<double> exact_gradient(const SequencePolicy& policy, const RewardFn& reward);
// sum_z P(z) R(z) by enumeration.
double expected_reward(const SequencePolicy& policy, const RewardFn& reward);

// (1/N) sum_i grad_i (R_i - b) for precomputed score vectors.
std::vector<double> score_function_estimate(const std::vector<std::vector<double>>& grad_log_probs,
                                            std::span<const double> rewards, double baseline);

// Per-sample terms g_i = grad log P(z_i) (R(z_i) - b) with their statistics.
struct EstimatorRun {
    std::vector<double> mean;
    std::vector<double> variance;  // per component, unbiased sample variance
    double total_variance = 0.0;   // trace of the sample covariance
    std::size_t samples = 0;
};

// Draws N sequences from the policy with `seed` and averages the score-function terms.
std::vector<double> inverse_gradient_estimate(const SequencePolicy& policy, const RewardFn& reward,
                                              std::size_t num_samples, double baseline, std::uint64_t seed);
EstimatorRun inverse_gradient_run(const SequencePolicy& policy, const RewardFn& reward, std::size_t num_samples,
                                  double baseline, std::uint64_t seed);

// Paired comparison of two baselines on shared samples. For each component
// the per-sample difference is t-tested against zero; p-values are two-sided
// (normal approximation) and Bonferroni-adjusted across components.
struct BaselineComparison {
    EstimatorRun first;
    EstimatorRun second;
    double min_adjusted_p = 1.0;
};
BaselineComparison compare_baselines(const SequencePolicy& policy, const RewardFn& reward, std::size_t num_samples,
                                     double baseline_a, double baseline_b, std::uint64_t seed);

// ||a - b|| / max(||b||, tiny)
double relative_error(std::span<const double> estimate, std::span<const double> exact);

}  // namespace sage::inverse
