#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace sage::reliability {

struct ReliabilityParams {
    double eps = 0.1;
    double alpha = 0.8;      // detector sensitivity
    double beta_spec = 1.0;  // detector specificity; 1 means no false alarms
    double eps_retry = 0.05;
    double s_engage = 1.0;
    double p_recovered = 0.7;
    std::size_t n_steps = 20;
    double c_base = 1.0;
    double c_mch = 1.0;
    double mu = 0.2;

    // Throws std::invalid_argument naming the offending field.
    void validate() const;
    // Keys are the field names above; unknown keys are rejected.
    static ReliabilityParams from_key_values(const std::map<std::string, std::string>& kv);
};

// (1 - eps)^n
double chain_success(double eps, std::size_t n);
// eps (1 - alpha) + eps alpha eps_retry
double effective_error(double eps, double alpha, double eps_retry);
// Detect-retry error rate when false alarms on correct steps also trigger a
// retry: effective_error + (1 - eps)(1 - beta_spec) eps_retry.
double effective_error_with_false_alarms(double eps, double alpha, double beta_spec, double eps_retry);
// S (p + (1 - p) alpha p_rec) + (1 - S) p
double hybrid_success_step(double p, double s_engage, double alpha, double p_recovered);
// p_step^N for N = 0..n_max
std::vector<double> survival_curve(double p_step, std::size_t n_max);
// 1 + mu c_mch / c_base
double cost_ratio_bound(double mu, double c_base, double c_mch);
// alpha > eps / (1 + eps), reported as a flag only.
bool variance_condition(double eps, double alpha);

struct McConfig {
    std::size_t trials = 1'000'000;
    std::uint64_t seed = 1;
    // Trials are split into independently seeded partitions run on separate
    // threads; results merge in partition order, so they do not depend on
    // scheduling.
    std::size_t partitions = 1;
};

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t trials = 0;

    // |mean - value| / std_error; 0 when both are exact and equal.
    double z_score(double value) const;
    bool agrees(double value, double n_se = 3.0) const { return z_score(value) <= n_se; }
};

// Fraction of n-step chains with no erroneous step.
McEstimate mc_chain_success(double eps, std::size_t n, const McConfig& mc);
// Per-step detect-retry process: an erroneous step is flagged with
// probability alpha, a correct one with probability 1 - beta_spec; a flagged
// step is resampled once with error rate eps_retry.
McEstimate mc_effective_error(const ReliabilityParams& p, const McConfig& mc);
// One hybrid step: engage with S, fail with 1 - p, a failure in Reasoning
// mode is caught with alpha and recovered with p_recovered.
McEstimate mc_hybrid_step(double p, double s_engage, double alpha, double p_recovered, const McConfig& mc);
// Survival of n hybrid steps simulated step by step.
McEstimate mc_hybrid_survival(const ReliabilityParams& p, std::size_t n, const McConfig& mc);

// Sample variance of the number of erroneous steps over `trials` chains.
double variance_scaling(double eps, std::size_t n, std::size_t trials, std::uint64_t seed);
// Least-squares slope of y against x through the origin.
double slope_through_origin(std::span<const double> x, std::span<const double> y);

}  // namespace sage::reliability
