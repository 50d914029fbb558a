#include "sage/inverse/gradient.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sage::inverse {

SequencePolicy::SequencePolicy(std::size_t vocab, std::size_t length, std::vector<double> theta)
    : vocab_(vocab), length_(length), theta_(std::move(theta)) {
    if (vocab == 0 || length == 0) throw std::invalid_argument("SequencePolicy: vocab and length must be >= 1");
    if (theta_.size() != length * (vocab + 1) * vocab) {
        throw std::invalid_argument("SequencePolicy: theta must have length * (vocab + 1) * vocab entries");
    }
}

SequencePolicy SequencePolicy::random(std::size_t vocab, std::size_t length, double scale, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    std::vector<double> theta(length * (vocab + 1) * vocab);
    for (double& v : theta) v = n(rng);
    return SequencePolicy(vocab, length, std::move(theta));
}

std::size_t SequencePolicy::index(std::size_t t, std::size_t prev, std::size_t v) const {
    return (t * (vocab_ + 1) + prev) * vocab_ + v;
}

std::vector<double> SequencePolicy::probs(std::size_t t, int prev) const {
    const auto pr = static_cast<std::size_t>(prev);
    std::vector<double> p(vocab_);
    double m = -INFINITY;
    for (std::size_t v = 0; v < vocab_; ++v) m = std::max(m, theta_[index(t, pr, v)]);
    double z = 0.0;
    for (std::size_t v = 0; v < vocab_; ++v) z += p[v] = std::exp(theta_[index(t, pr, v)] - m);
    for (double& x : p) x /= z;
    return p;
}

double SequencePolicy::log_prob(std::span<const int> z) const {
    if (z.size() != length_) throw std::invalid_argument("SequencePolicy: sequence length mismatch");
    double lp = 0.0;
    int prev = static_cast<int>(vocab_);
    for (std::size_t t = 0; t < length_; ++t) {
        lp += std::log(probs(t, prev)[static_cast<std::size_t>(z[t])]);
        prev = z[t];
    }
    return lp;
}

std::vector<double> SequencePolicy::grad_log_prob(std::span<const int> z) const {
    if (z.size() != length_) throw std::invalid_argument("SequencePolicy: sequence length mismatch");
    std::vector<double> g(theta_.size(), 0.0);
    int prev = static_cast<int>(vocab_);
    for (std::size_t t = 0; t < length_; ++t) {
        const auto p = probs(t, prev);
        const auto pr = static_cast<std::size_t>(prev);
        for (std::size_t v = 0; v < vocab_; ++v) g[index(t, pr, v)] -= p[v];
        g[index(t, pr, static_cast<std::size_t>(z[t]))] += 1.0;
        prev = z[t];
    }
    return g;
}

TokenSeq SequencePolicy::sample(std::mt19937_64& rng) const {
    TokenSeq z;
    int prev = static_cast<int>(vocab_);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t t = 0; t < length_; ++t) {
        const auto p = probs(t, prev);
        double r = u(rng), c = 0.0;
        int pick = static_cast<int>(vocab_) - 1;
        for (std::size_t v = 0; v < vocab_; ++v) {
            c += p[v];
            if (r < c) {
                pick = static_cast<int>(v);
                break;
            }
        }
        z.push_back(pick);
        prev = pick;
    }
    return z;
}

std::vector<TokenSeq> SequencePolicy::enumerate() const {
    std::vector<TokenSeq> out;
    TokenSeq z(length_, 0);
    while (true) {
        out.push_back(z);
        std::size_t i = length_;
        while (i > 0) {
            --i;
            if (++z[i] < static_cast<int>(vocab_)) break;
            z[i] = 0;
            if (i == 0) return out;
        }
    }
}

std::vector<double> exact_gradient(const SequencePolicy& policy, const RewardFn& reward) {
    std::vector<double> g(policy.num_params(), 0.0);
    for (const auto& z : policy.enumerate()) {
        const double w = std::exp(policy.log_prob(z)) * reward(z);
        const auto gl = policy.grad_log_prob(z);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += w * gl[i];
    }
    return g;
}

double expected_reward(const SequencePolicy& policy, const RewardFn& reward) {
    double s = 0.0;
    for (const auto& z : policy.enumerate()) s += std::exp(policy.log_prob(z)) * reward(z);
    return s;
}

std::vector<double> score_function_estimate(const std::vector<std::vector<double>>& grad_log_probs,
                                            std::span<const double> rewards, double baseline) {
    if (grad_log_probs.empty()) throw std::invalid_argument("score_function_estimate: no samples");
    if (grad_log_probs.size() != rewards.size()) {
        throw std::invalid_argument("score_function_estimate: one reward per sample required");
    }
    std::vector<double> g(grad_log_probs.front().size(), 0.0);
    for (std::size_t s = 0; s < grad_log_probs.size(); ++s) {
        const double adv = rewards[s] - baseline;
        if (adv == 0.0) continue;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad_log_probs[s][i] * adv;
    }
    for (double& v : g) v /= static_cast<double>(grad_log_probs.size());
    return g;
}

namespace {

// Streaming mean/variance (Welford) over per-sample vectors.
struct Moments {
    explicit Moments(std::size_t dim) : mean(dim, 0.0), m2(dim, 0.0) {}
    void add(const std::vector<double>& x) {
        ++n;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = x[i] - mean[i];
            mean[i] += d / static_cast<double>(n);
            m2[i] += d * (x[i] - mean[i]);
        }
    }
    EstimatorRun finish() const {
        EstimatorRun r;
        r.samples = n;
        r.mean = mean;
        r.variance.resize(mean.size());
        for (std::size_t i = 0; i < mean.size(); ++i) {
            r.variance[i] = n > 1 ? m2[i] / static_cast<double>(n - 1) : 0.0;
            r.total_variance += r.variance[i];
        }
        return r;
    }
    std::size_t n = 0;
    std::vector<double> mean, m2;
};

}  // namespace

EstimatorRun inverse_gradient_run(const SequencePolicy& policy, const RewardFn& reward, std::size_t num_samples,
                                  double baseline, std::uint64_t seed) {
    if (num_samples == 0) throw std::invalid_argument("inverse_gradient_estimate: num_samples must be >= 1");
    std::mt19937_64 rng(seed);
    Moments m(policy.num_params());
    for (std::size_t s = 0; s < num_samples; ++s) {
        const auto z = policy.sample(rng);
        auto g = policy.grad_log_prob(z);
        const double adv = reward(z) - baseline;
        for (double& v : g) v *= adv;
        m.add(g);
    }
    return m.finish();
}

std::vector<double> inverse_gradient_estimate(const SequencePolicy& policy, const RewardFn& reward,
                                              std::size_t num_samples, double baseline, std::uint64_t seed) {
    if (num_samples == 0) throw std::invalid_argument("inverse_gradient_estimate: num_samples must be >= 1");
    std::mt19937_64 rng(seed);
    std::vector<std::vector<double>> grads;
    std::vector<double> rewards;
    grads.reserve(num_samples);
    for (std::size_t s = 0; s < num_samples; ++s) {
        const auto z = policy.sample(rng);
        grads.push_back(policy.grad_log_prob(z));
        rewards.push_back(reward(z));
    }
    return score_function_estimate(grads, rewards, baseline);
}

BaselineComparison compare_baselines(const SequencePolicy& policy, const RewardFn& reward, std::size_t num_samples,
                                     double baseline_a, double baseline_b, std::uint64_t seed) {
    if (num_samples < 2) throw std::invalid_argument("compare_baselines: need at least two samples");
    std::mt19937_64 rng(seed);
    const std::size_t P = policy.num_params();
    Moments a(P), b(P), diff(P);
    for (std::size_t s = 0; s < num_samples; ++s) {
        const auto z = policy.sample(rng);
        const auto g = policy.grad_log_prob(z);
        const double r = reward(z);
        std::vector<double> ga(P), gb(P), gd(P);
        for (std::size_t i = 0; i < P; ++i) {
            ga[i] = g[i] * (r - baseline_a);
            gb[i] = g[i] * (r - baseline_b);
            gd[i] = ga[i] - gb[i];
        }
        a.add(ga);
        b.add(gb);
        diff.add(gd);
    }
    BaselineComparison out{a.finish(), b.finish(), 1.0};
    const auto d = diff.finish();
    for (std::size_t i = 0; i < P; ++i) {
        if (d.variance[i] <= 0.0) continue;  // identical terms: no evidence of a difference
        const double t = d.mean[i] / std::sqrt(d.variance[i] / static_cast<double>(num_samples));
        const double p = std::erfc(std::abs(t) / std::sqrt(2.0));
        out.min_adjusted_p = std::min(out.min_adjusted_p, std::min(1.0, p * static_cast<double>(P)));
    }
    return out;
}

double relative_error(std::span<const double> estimate, std::span<const double> exact) {
    if (estimate.size() != exact.size()) throw std::invalid_argument("relative_error: size mismatch");
    double d = 0.0, n = 0.0;
    for (std::size_t i = 0; i < exact.size(); ++i) {
        d += (estimate[i] - exact[i]) * (estimate[i] - exact[i]);
        n += exact[i] * exact[i];
    }
    return std::sqrt(d) / std::max(std::sqrt(n), 1e-300);
}

}  // namespace sage::inverse
