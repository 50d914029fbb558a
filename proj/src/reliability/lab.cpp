#include "sage/reliability/lab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <thread>

#include "sage/common/kv.hpp"

namespace sage::reliability {

namespace {

void check_prob(const char* name, double v) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(std::string(name) + " must lie in [0,1]");
}

// Portable uniform in [0,1) from the top 53 bits.
inline double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
inline bool draw(std::mt19937_64& rng, double p) { return unit(rng) < p; }

struct Moments {
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t n = 0;
};

template <typename Trial>
McEstimate run_mc(const McConfig& mc, Trial trial) {
    if (mc.trials == 0) throw std::invalid_argument("monte carlo: trials must be positive");
    const std::size_t parts = std::max<std::size_t>(1, std::min(mc.partitions, mc.trials));
    std::vector<Moments> acc(parts);
    auto work = [&](std::size_t part) {
        std::seed_seq ss{static_cast<std::uint32_t>(mc.seed), static_cast<std::uint32_t>(mc.seed >> 32),
                         static_cast<std::uint32_t>(part)};
        std::mt19937_64 rng(ss);
        const std::size_t count = mc.trials / parts + (part < mc.trials % parts ? 1 : 0);
        Moments m;
        for (std::size_t i = 0; i < count; ++i) {
            const double v = trial(rng);
            m.sum += v;
            m.sum_sq += v * v;
        }
        m.n = count;
        acc[part] = m;
    };
    if (parts == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t part = 0; part < parts; ++part) pool.emplace_back(work, part);
        for (auto& t : pool) t.join();
    }
    Moments total;
    for (const auto& m : acc) {
        total.sum += m.sum;
        total.sum_sq += m.sum_sq;
        total.n += m.n;
    }
    const double n = static_cast<double>(total.n);
    McEstimate e;
    e.trials = total.n;
    e.mean = total.sum / n;
    const double var = total.n > 1 ? std::max(0.0, (total.sum_sq - n * e.mean * e.mean) / (n - 1.0)) : 0.0;
    e.std_error = std::sqrt(var / n);
    return e;
}

double get(const std::map<std::string, std::string>& kv, const std::string& key, double fallback) {
    const auto it = kv.find(key);
    return it == kv.end() ? fallback : parse_double(key, it->second);
}

}  // namespace

void ReliabilityParams::validate() const {
    check_prob("eps", eps);
    check_prob("alpha", alpha);
    check_prob("beta_spec", beta_spec);
    check_prob("eps_retry", eps_retry);
    check_prob("s_engage", s_engage);
    check_prob("p_recovered", p_recovered);
    check_prob("mu", mu);
    if (!(c_base > 0.0)) throw std::invalid_argument("c_base must be positive");
    if (!(c_mch >= 0.0)) throw std::invalid_argument("c_mch must be non-negative");
}

ReliabilityParams ReliabilityParams::from_key_values(const std::map<std::string, std::string>& kv) {
    static const char* known[] = {"eps", "alpha", "beta_spec", "eps_retry", "s_engage",
                                  "p_recovered", "n_steps", "c_base", "c_mch", "mu"};
    for (const auto& [k, v] : kv) {
        bool ok = false;
        for (const char* name : known) ok = ok || k == name;
        if (!ok) throw std::invalid_argument("unknown key '" + k + "'");
    }
    ReliabilityParams p;
    p.eps = get(kv, "eps", p.eps);
    p.alpha = get(kv, "alpha", p.alpha);
    p.beta_spec = get(kv, "beta_spec", p.beta_spec);
    p.eps_retry = get(kv, "eps_retry", p.eps_retry);
    p.s_engage = get(kv, "s_engage", p.s_engage);
    p.p_recovered = get(kv, "p_recovered", p.p_recovered);
    p.c_base = get(kv, "c_base", p.c_base);
    p.c_mch = get(kv, "c_mch", p.c_mch);
    p.mu = get(kv, "mu", p.mu);
    if (const auto it = kv.find("n_steps"); it != kv.end()) {
        const long long n = parse_int("n_steps", it->second);
        if (n < 0) throw std::invalid_argument("n_steps must be non-negative");
        p.n_steps = static_cast<std::size_t>(n);
    }
    p.validate();
    return p;
}

double chain_success(double eps, std::size_t n) {
    check_prob("eps", eps);
    return std::pow(1.0 - eps, static_cast<double>(n));
}

double effective_error(double eps, double alpha, double eps_retry) {
    return eps * (1.0 - alpha) + eps * alpha * eps_retry;
}

double effective_error_with_false_alarms(double eps, double alpha, double beta_spec, double eps_retry) {
    return effective_error(eps, alpha, eps_retry) + (1.0 - eps) * (1.0 - beta_spec) * eps_retry;
}

double hybrid_success_step(double p, double s_engage, double alpha, double p_recovered) {
    return s_engage * (p + (1.0 - p) * alpha * p_recovered) + (1.0 - s_engage) * p;
}

std::vector<double> survival_curve(double p_step, std::size_t n_max) {
    check_prob("p_step", p_step);
    std::vector<double> out(n_max + 1);
    for (std::size_t n = 0; n <= n_max; ++n) out[n] = std::pow(p_step, static_cast<double>(n));
    return out;
}

double cost_ratio_bound(double mu, double c_base, double c_mch) { return 1.0 + mu * c_mch / c_base; }

bool variance_condition(double eps, double alpha) { return alpha > eps / (1.0 + eps); }

double McEstimate::z_score(double value) const {
    const double d = std::abs(mean - value);
    if (std_error == 0.0) return d == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return d / std_error;
}

McEstimate mc_chain_success(double eps, std::size_t n, const McConfig& mc) {
    return run_mc(mc, [&](std::mt19937_64& rng) {
        for (std::size_t i = 0; i < n; ++i)
            if (draw(rng, eps)) return 0.0;
        return 1.0;
    });
}

McEstimate mc_effective_error(const ReliabilityParams& p, const McConfig& mc) {
    return run_mc(mc, [&](std::mt19937_64& rng) {
        const bool error = draw(rng, p.eps);
        const bool flagged = draw(rng, error ? p.alpha : 1.0 - p.beta_spec);
        if (!flagged) return error ? 1.0 : 0.0;
        return draw(rng, p.eps_retry) ? 1.0 : 0.0;
    });
}

namespace {

bool hybrid_step_ok(std::mt19937_64& rng, double p, double s, double alpha, double p_rec) {
    const bool engaged = draw(rng, s);
    if (draw(rng, p)) return true;
    return engaged && draw(rng, alpha) && draw(rng, p_rec);
}

}  // namespace

McEstimate mc_hybrid_step(double p, double s_engage, double alpha, double p_recovered, const McConfig& mc) {
    return run_mc(mc, [&](std::mt19937_64& rng) {
        return hybrid_step_ok(rng, p, s_engage, alpha, p_recovered) ? 1.0 : 0.0;
    });
}

McEstimate mc_hybrid_survival(const ReliabilityParams& p, std::size_t n, const McConfig& mc) {
    const double ps = 1.0 - p.eps;
    return run_mc(mc, [&](std::mt19937_64& rng) {
        for (std::size_t i = 0; i < n; ++i)
            if (!hybrid_step_ok(rng, ps, p.s_engage, p.alpha, p.p_recovered)) return 0.0;
        return 1.0;
    });
}

double variance_scaling(double eps, std::size_t n, std::size_t trials, std::uint64_t seed) {
    if (trials < 2) throw std::invalid_argument("variance_scaling: need at least two trials");
    McConfig mc{trials, seed, 1};
    const auto e = run_mc(mc, [&](std::mt19937_64& rng) {
        double errors = 0.0;
        for (std::size_t i = 0; i < n; ++i) errors += draw(rng, eps);
        return errors;
    });
    // std_error^2 * trials is the sample variance.
    return e.std_error * e.std_error * static_cast<double>(e.trials);
}

double slope_through_origin(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.empty()) throw std::invalid_argument("slope_through_origin: size mismatch");
    double xy = 0.0, xx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        xy += x[i] * y[i];
        xx += x[i] * x[i];
    }
    if (xx == 0.0) throw std::invalid_argument("slope_through_origin: all x are zero");
    return xy / xx;
}

}  // namespace sage::reliability
