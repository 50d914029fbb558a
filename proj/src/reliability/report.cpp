#include "sage/reliability/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <stdexcept>

#include "sage/common/kv.hpp"
#include "sage/reliability/information.hpp"

namespace sage::reliability {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json mc_json(const McEstimate& e, double analytic) {
    return {{"analytic", analytic}, {"mc_mean", e.mean}, {"std_error", e.std_error},
            {"z", e.z_score(analytic)}, {"trials", e.trials}};
}

Check mc_check(std::string name, const McEstimate& e, double analytic) {
    return {std::move(name), true, e.agrees(analytic, 3.0), mc_json(e, analytic)};
}

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t salt) { return seed * 0x9E3779B97F4A7C15ULL + salt; }

}  // namespace

CostBoundReport cost_bound_check(std::span<const hybrid::CostLedger> ledgers) {
    CostBoundReport r;
    r.ledgers = ledgers.size();
    r.max_slack = -std::numeric_limits<double>::infinity();
    r.min_slack = std::numeric_limits<double>::infinity();
    for (const auto& l : ledgers) {
        const double slack = l.bound() - l.c_total;
        r.max_slack = std::max(r.max_slack, slack);
        r.min_slack = std::min(r.min_slack, slack);
        r.violations += !l.within_bound();
        if (l.n_steps > 0 && l.c_base > 0.0) r.max_ratio = std::max(r.max_ratio, l.cost_ratio());
    }
    if (ledgers.empty()) r.max_slack = r.min_slack = 0.0;
    return r;
}

std::vector<hybrid::CostLedger> random_ledgers(std::size_t count, std::size_t max_len, std::uint64_t seed) {
    if (max_len == 0) throw std::invalid_argument("random_ledgers: max_len must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> len(1, max_len);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<hybrid::CostLedger> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t n = len(rng);
        const double mu = u(rng);
        const double c_base = 2.0 * (1.0 - u(rng));
        const double c_mch = 2.0 * u(rng);
        std::vector<hybrid::GateDecision> trace(n);
        for (auto& d : trace) d.mode = u(rng) < mu ? hybrid::Mode::Reasoning : hybrid::Mode::Normal;
        out.push_back(hybrid::cost_account(trace, c_base, c_mch));
    }
    return out;
}

Scenario Scenario::from_key_values(const std::map<std::string, std::string>& kv) {
    std::map<std::string, std::string> params;
    Scenario s;
    auto count = [](const std::string& k, const std::string& v) {
        const long long n = parse_int(k, v);
        if (n < 0) throw std::invalid_argument(k + " must be non-negative");
        return static_cast<std::size_t>(n);
    };
    for (const auto& [k, v] : kv) {
        if (k == "trials") s.mc.trials = count(k, v);
        else if (k == "seed") s.mc.seed = count(k, v);
        else if (k == "partitions") s.mc.partitions = count(k, v);
        else if (k == "n_max") s.n_max = count(k, v);
        else if (k == "variance_trials") s.variance_trials = count(k, v);
        else if (k == "joints") s.joints = count(k, v);
        else if (k == "bound_joints") s.bound_joints = count(k, v);
        else if (k == "ledgers") s.ledgers = count(k, v);
        else params.emplace(k, v);
    }
    s.params = ReliabilityParams::from_key_values(params);
    if (s.mc.trials == 0) throw std::invalid_argument("trials must be positive");
    if (s.variance_trials < 1000) throw std::invalid_argument("variance_trials must be at least 1000");
    return s;
}

Scenario Scenario::from_file(const std::string& path) { return from_key_values(parse_key_values(read_text_file(path))); }

bool LabReport::all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed || !c.asserted; });
}

json LabReport::to_json() const {
    json j;
    j["all_passed"] = all_passed();
    j["checks"] = json::array();
    for (const auto& c : checks) {
        json e{{"name", c.name}, {"asserted", c.asserted}, {"passed", c.passed}};
        for (const auto& [k, v] : c.detail.items()) e[k] = v;
        j["checks"].push_back(e);
    }
    return j;
}

std::string LabReport::survival_csv() const {
    std::string out = "n,standard,hybrid\n";
    for (std::size_t n = 0; n < survival_standard.size(); ++n)
        out += std::to_string(n) + "," + fmt(survival_standard[n]) + "," + fmt(survival_hybrid[n]) + "\n";
    return out;
}

std::string LabReport::variance_csv() const {
    std::string out = "n,variance,binomial\n";
    for (const auto& [n, v] : variance)
        out += std::to_string(n) + "," + fmt(v) + "," + fmt(static_cast<double>(n) * eps * (1.0 - eps)) + "\n";
    return out;
}

LabReport run_lab(const Scenario& sc) {
    const auto& p = sc.params;
    p.validate();
    LabReport r;
    r.eps = p.eps;
    McConfig mc = sc.mc;

    const double eps_prime = effective_error_with_false_alarms(p.eps, p.alpha, p.beta_spec, p.eps_retry);
    mc.seed = sub_seed(sc.mc.seed, 1);
    auto ce = mc_check("effective_error", mc_effective_error(p, mc), eps_prime);
    ce.detail["closed_form"] = effective_error(p.eps, p.alpha, p.eps_retry);
    r.checks.push_back(ce);

    // eps' < eps needs something to detect, a better-than-certain retry, and
    // no false alarms.
    const bool applicable = p.eps > 0.0 && p.alpha > 0.0 && p.eps_retry < 1.0 && p.beta_spec == 1.0;
    r.checks.push_back({"effective_error_reduces", true, !applicable || eps_prime < p.eps,
                        {{"applicable", applicable}, {"eps", p.eps}, {"eps_prime", eps_prime}}});

    mc.seed = sub_seed(sc.mc.seed, 2);
    r.checks.push_back(mc_check("chain_success", mc_chain_success(p.eps, p.n_steps, mc), chain_success(p.eps, p.n_steps)));

    const double ps = 1.0 - p.eps;
    const double ph = hybrid_success_step(ps, p.s_engage, p.alpha, p.p_recovered);
    mc.seed = sub_seed(sc.mc.seed, 3);
    r.checks.push_back(mc_check("hybrid_step", mc_hybrid_step(ps, p.s_engage, p.alpha, p.p_recovered, mc), ph));
    mc.seed = sub_seed(sc.mc.seed, 4);
    r.checks.push_back(
        mc_check("hybrid_survival", mc_hybrid_survival(p, p.n_steps, mc), std::pow(ph, static_cast<double>(p.n_steps))));

    r.survival_standard = survival_curve(ps, sc.n_max);
    r.survival_hybrid = survival_curve(ph, sc.n_max);
    const bool strict = ph > ps;
    std::size_t dominance_failures = 0;
    for (std::size_t n = 1; n <= sc.n_max; ++n) {
        const double h = r.survival_hybrid[n], s = r.survival_standard[n];
        dominance_failures += strict ? !(h > s) : !(h >= s);
    }
    r.checks.push_back({"survival_dominance", true, dominance_failures == 0,
                        {{"p_standard", ps}, {"p_hybrid", ph}, {"strict", strict}, {"failures", dominance_failures}}});

    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < sc.variance_ns.size(); ++i) {
        const std::size_t n = sc.variance_ns[i];
        const double v = variance_scaling(p.eps, n, sc.variance_trials, sub_seed(sc.mc.seed, 10 + i));
        r.variance.emplace_back(n, v);
        xs.push_back(static_cast<double>(n));
        ys.push_back(v);
    }
    const double slope = slope_through_origin(xs, ys);
    const double expect = p.eps * (1.0 - p.eps);
    const bool slope_ok = expect == 0.0 ? slope == 0.0 : std::abs(slope - expect) <= 0.1 * expect;
    r.checks.push_back({"variance_scaling", true, slope_ok, {{"slope", slope}, {"binomial_slope", expect}}});

    r.checks.push_back({"variance_condition", false, variance_condition(p.eps, p.alpha),
                        {{"alpha", p.alpha}, {"threshold", p.eps / (1.0 + p.eps)}}});

    // Cost ratio from a ledger with exactly mu N slow steps.
    const std::size_t n_ledger = 1000;
    const auto n_slow = static_cast<std::size_t>(std::llround(p.mu * static_cast<double>(n_ledger)));
    std::vector<hybrid::GateDecision> trace(n_ledger);
    for (std::size_t i = 0; i < n_slow; ++i) trace[i].mode = hybrid::Mode::Reasoning;
    const auto ledger = hybrid::cost_account(trace, p.c_base, p.c_mch);
    const double closed = cost_ratio_bound(p.mu, p.c_base, p.c_mch);
    r.checks.push_back({"cost_ratio", true,
                        ledger.within_bound() && std::abs(ledger.cost_ratio() - closed) <= 1e-12 * closed,
                        {{"mu", ledger.mu}, {"cost_ratio", ledger.cost_ratio()}, {"closed_form", closed}}});

    const auto ledgers = random_ledgers(sc.ledgers, 64, sub_seed(sc.mc.seed, 5));
    const auto cb = cost_bound_check(ledgers);
    r.checks.push_back({"cost_bound", true, cb.violations == 0,
                        {{"ledgers", cb.ledgers}, {"violations", cb.violations}, {"max_slack", cb.max_slack},
                         {"min_slack", cb.min_slack}}});

    std::mt19937_64 rng(sub_seed(sc.mc.seed, 6));
    std::uniform_int_distribution<std::size_t> side(1, 4);
    double max_residual = 0.0;
    std::size_t monotone_violations = 0;
    for (std::size_t i = 0; i < sc.joints; ++i) {
        const auto j = DiscreteJoint::random({side(rng), side(rng), side(rng), side(rng)}, rng, i % 2 ? 0.3 : 0.0);
        const auto s = entropy_suite(j);
        max_residual = std::max(max_residual, std::abs(s.identity_residual()));
        monotone_violations += s.h_k1 > s.h_k + 1e-12;
    }
    r.checks.push_back({"entropy_chain_rule", true, max_residual <= 1e-12 && monotone_violations == 0,
                        {{"joints", sc.joints}, {"max_residual", max_residual},
                         {"monotonicity_violations", monotone_violations}}});

    std::size_t satisfied = 0;
    for (std::size_t i = 0; i < sc.bound_joints; ++i) {
        const auto j = DiscreteJoint::random({side(rng), side(rng), side(rng)}, rng, i % 2 ? 0.3 : 0.0);
        satisfied += info_bound_check(j).satisfied;
    }
    const double rate = sc.bound_joints ? static_cast<double>(satisfied) / static_cast<double>(sc.bound_joints) : 0.0;
    r.checks.push_back({"info_bound", false, satisfied == sc.bound_joints,
                        {{"joints", sc.bound_joints}, {"satisfied", satisfied}, {"rate", rate}}});
    return r;
}

}  // namespace sage::reliability
