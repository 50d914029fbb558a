#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "sage/inverse/gradient.hpp"
#include "sage/inverse/ics.hpp"

using namespace sage;
using namespace sage::inverse;

namespace {

// Fixed reconstruction table, independent of the trace.
class TableReconstructor final : public PromptReconstructor {
public:
    explicit TableReconstructor(std::vector<double> probs) : probs_(std::move(probs)) {}
    std::vector<double> log_probs(std::span<const int>) const override {
        std::vector<double> out;
        for (double p : probs_) out.push_back(std::log(p));
        return out;
    }

private:
    std::vector<double> probs_;
};

double toy_reward(std::span<const int> z) {
    return (z[0] == 2 ? 1.0 : 0.0) + (z[1] == 1 ? 0.5 : 0.0) + (z[0] == z[1] ? 0.25 : 0.0);
}

// Reward 1 for the single target trace (2, 1).
double target_reward(std::span<const int> z) { return z[0] == 2 && z[1] == 1 ? 1.0 : 0.0; }

SequencePolicy estimator_policy() { return SequencePolicy::random(3, 2, 0.3, 19); }

}  // namespace

TEST_CASE("ICS of hand-built reconstructions") {
    TableReconstructor uniform(std::vector<double>(16, 1.0 / 16));
    CHECK(compute_ics(uniform, std::vector<int>{1, 2}, std::vector<int>{3, 4, 5}) ==
          doctest::Approx(-std::log(16.0)).epsilon(1e-15));

    // Mass concentrated on the prompt tokens approaches zero from below.
    double prev = -INFINITY;
    for (double rest : {1e-2, 1e-4, 1e-8}) {
        std::vector<double> p(16, rest / 14);
        p[3] = p[4] = (1.0 - rest) / 2;
        const double ics = compute_ics(TableReconstructor(p), std::vector<int>{0}, std::vector<int>{3, 4});
        CHECK(ics < 0.0);
        CHECK(ics > prev);
        prev = ics;
    }
    CHECK(prev > -std::log(2.0) - 1e-7);

    // Trace A doubles the probability of every prompt token relative to B.
    std::vector<double> pa(8, 0.05), pb(8, 0.1);
    pa[1] = 0.2, pa[2] = 0.2, pb[1] = 0.1, pb[2] = 0.1;
    pa[0] = 1.0 - 0.2 - 0.2 - 5 * 0.05;
    pb[0] = 1.0 - 0.1 - 0.1 - 5 * 0.1;
    const std::vector<int> prompt{1, 2, 2};
    const double a = compute_ics(TableReconstructor(pa), std::vector<int>{0}, prompt);
    const double b = compute_ics(TableReconstructor(pb), std::vector<int>{0}, prompt);
    CHECK(a > b);
    CHECK(a - b == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    CHECK_THROWS_AS(compute_ics(uniform, std::vector<int>{}, std::vector<int>{1}), std::invalid_argument);
    CHECK_THROWS_AS(compute_ics(uniform, std::vector<int>{1}, std::vector<int>{}), std::invalid_argument);
}

TEST_CASE("bag-of-tokens reconstructor") {
    BagOfTokensReconstructor r(4);
    auto lq = r.log_probs(std::vector<int>{2, 2, 0});
    CHECK(std::exp(lq[2]) == doctest::Approx(3.0 / 7.0));
    CHECK(std::exp(lq[1]) == doctest::Approx(1.0 / 7.0));
    CHECK(compute_ics(r, std::vector<int>{1, 3}, std::vector<int>{1, 3}) >
          compute_ics(r, std::vector<int>{0, 0}, std::vector<int>{1, 3}));
}

TEST_CASE("energy values") {
    Candidate c{{1}, -1.0, -2.0, 0.0};
    CHECK(energy(c, 0.5) == 2.0);
    CHECK(energy(c, 0.0) == 1.0);
    Candidate a{{1}, -3.0, -0.5, 0.0}, b{{2}, -3.0, -1.5, 0.0};
    CHECK(energy(a, 0.7) < energy(b, 0.7));
    CHECK_THROWS_AS(energy(c, -0.1), std::invalid_argument);
}

TEST_CASE("reranking") {
    std::vector<Candidate> one{{{4, 2}, -2.0, -1.0, 0.0}};
    CHECK(rerank_candidates(one, 3.0).tokens == one[0].tokens);
    CHECK_THROWS_AS(rerank_candidates(std::vector<Candidate>{}, 0.5), std::invalid_argument);

    // Plausible but hollow candidate 0 versus consistent candidates 1 and 2.
    std::vector<Candidate> cands{{{1}, -1.0, -5.0, 0.0}, {{2}, -2.0, -1.0, 0.0}, {{3}, -2.5, -0.9, 0.0}};
    CHECK(rerank_index(cands, 0.0) == 0);
    // Crossover between 0 and 1 at dlogp / dICS = 1 / 4.
    const double lambda_star = (cands[0].logp - cands[1].logp) / (cands[1].ics - cands[0].ics);
    CHECK(lambda_star == doctest::Approx(0.25));
    for (int i = 0; i <= 400; ++i) {
        const double lambda = i * 0.005;
        // Exhaustive oracle over the three energies.
        std::size_t want = 0;
        double best = INFINITY;
        for (std::size_t j = 0; j < cands.size(); ++j) {
            const double e = -cands[j].logp - lambda * cands[j].ics;
            if (e < best || (e == best && cands[j].logp > cands[want].logp)) {
                best = e;
                want = j;
            }
        }
        CAPTURE(lambda);
        CHECK(rerank_index(cands, lambda) == want);
        if (lambda < lambda_star) CHECK(want == 0);
        if (lambda > lambda_star + 1e-9) CHECK(want != 0);
    }

    // Ties: higher logp, then lexicographic order.
    std::vector<Candidate> tie{{{5}, -1.0, -1.0, 0.0}, {{4}, -0.5, -2.0, 0.0}};
    CHECK(rerank_index(tie, 0.5) == 1);
    std::vector<Candidate> same{{{5, 1}, -1.0, -1.0, 0.0}, {{4, 9}, -1.0, -1.0, 0.0}};
    CHECK(rerank_index(same, 0.5) == 1);
    std::vector<Candidate> identical(3, Candidate{{7, 7}, -1.0, -1.0, 0.0});
    CHECK(rerank_index(identical, 0.5) == 0);

    // Shifting every logp by a constant never changes the winner.
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-5.0, 0.0);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<Candidate> cs;
        for (int j = 0; j < 6; ++j) cs.push_back({{j}, u(rng), u(rng), 0.0});
        const double shift = u(rng);
        auto shifted = cs;
        for (auto& c : shifted) c.logp += shift;
        REQUIRE(rerank_index(cs, 0.5) == rerank_index(shifted, 0.5));
    }
}

TEST_CASE("IR-guided voting") {
    std::vector<VoteSample> unanimous(5, VoteSample{{9}, -1.0});
    auto r = ir_guided_vote(unanimous, -2.0);
    CHECK(r.winner == TokenSeq{9});
    CHECK(r.filtered_out.empty());

    std::vector<VoteSample> mixed;
    for (int i = 0; i < 5; ++i) mixed.push_back({{4}, -3.0});
    for (int i = 0; i < 3; ++i) mixed.push_back({{7}, -0.5});
    CHECK(majority_vote(mixed).winner == TokenSeq{4});
    auto ir = ir_guided_vote(mixed, -1.0);
    CHECK(ir.winner == TokenSeq{7});
    CHECK(ir.filtered_out.size() == 5);
    int total = 0;
    for (auto& [a, n] : ir.tally) total += n;
    CHECK(total + static_cast<int>(ir.filtered_out.size()) == 8);

    auto fallback = ir_guided_vote(mixed, 0.0);
    CHECK(fallback.fell_back);
    CHECK(fallback.winner == TokenSeq{4});

    // Exhaustive: with the floor at -inf the IR vote is the vanilla vote.
    const std::vector<double> ics_levels{-2.0, -1.0};
    for (int k = 1; k <= 6; ++k) {
        int combos = 1;
        for (int i = 0; i < k; ++i) combos *= 6;  // 3 answers x 2 ICS levels
        for (int code = 0; code < combos; ++code) {
            std::vector<VoteSample> s;
            int c = code;
            for (int i = 0; i < k; ++i) {
                s.push_back({{c % 3}, ics_levels[(c / 3) % 2]});
                c /= 6;
            }
            auto a = ir_guided_vote(s);
            auto b = majority_vote(s);
            REQUIRE(a.winner == b.winner);
            REQUIRE(a.tally == b.tally);
            REQUIRE(a.filtered_out.empty());
        }
    }

    // Tie on counts is resolved by summed ICS.
    std::vector<VoteSample> tie{{{1}, -2.0}, {{2}, -0.5}, {{1}, -2.0}, {{2}, -0.5}};
    CHECK(majority_vote(tie).winner == TokenSeq{2});
}

TEST_CASE("sequence policy enumeration and gradients") {
    auto policy = SequencePolicy::random(3, 2, 0.8, 4);
    auto all = policy.enumerate();
    CHECK(all.size() == 9);
    double total = 0.0;
    for (const auto& z : all) total += std::exp(policy.log_prob(z));
    CHECK(total == doctest::Approx(1.0).epsilon(1e-14));

    // grad log P against central differences.
    for (const auto& z : all) {
        auto g = policy.grad_log_prob(z);
        for (std::size_t i = 0; i < policy.num_params(); ++i) {
            auto p = policy;
            p.theta()[i] += 1e-6;
            const double up = p.log_prob(z);
            p.theta()[i] -= 2e-6;
            const double dn = p.log_prob(z);
            REQUIRE(g[i] == doctest::Approx((up - dn) / 2e-6).epsilon(1e-6).scale(1e-8));
        }
    }

    // Exact gradient of E[R] against central differences of the enumerated expectation.
    auto exact = exact_gradient(policy, toy_reward);
    for (std::size_t i = 0; i < policy.num_params(); ++i) {
        auto p = policy;
        p.theta()[i] += 1e-6;
        const double up = expected_reward(p, toy_reward);
        p.theta()[i] -= 2e-6;
        const double dn = expected_reward(p, toy_reward);
        CHECK(exact[i] == doctest::Approx((up - dn) / 2e-6).epsilon(1e-6).scale(1e-8));
    }
}

TEST_CASE("score-function estimator") {
    auto policy = SequencePolicy::random(3, 2, 0.8, 4);
    auto constant = [](std::span<const int>) { return 0.7; };
    for (std::size_t n : {1u, 10u, 1000u}) {
        auto g = inverse_gradient_estimate(policy, constant, n, 0.7, 3);
        for (double v : g) CHECK(v == 0.0);
    }
    CHECK_THROWS_AS(inverse_gradient_estimate(policy, constant, 0, 0.0, 1), std::invalid_argument);

    const auto target = estimator_policy();
    const auto exact = exact_gradient(target, target_reward);
    for (double b : {0.0, expected_reward(target, target_reward)}) {
        auto est = inverse_gradient_estimate(target, target_reward, 100000, b, 11);
        const double rel = relative_error(est, exact);
        MESSAGE("baseline " << b << ": relative error at 1e5 samples " << rel);
        CHECK(rel < 0.02);
    }

    // Same seed, same estimate.
    CHECK(inverse_gradient_estimate(policy, toy_reward, 500, 0.2, 5) ==
          inverse_gradient_estimate(policy, toy_reward, 500, 0.2, 5));
}

TEST_CASE("estimator error shrinks like 1/sqrt(N)") {
    for (std::uint64_t pseed : {4u, 19u, 23u}) {
        auto policy = SequencePolicy::random(3, 2, 0.8, pseed);
        const auto exact = exact_gradient(policy, toy_reward);
        const auto run = inverse_gradient_run(policy, toy_reward, 1000, 0.0, 1);
        // Expected error scale sqrt(trace(Cov) / N); averaged over independent seeds.
        std::vector<double> mean_err;
        for (std::size_t n : {1000u, 10000u, 100000u}) {
            double sq = 0.0;
            const int reps = 6;
            for (int r = 0; r < reps; ++r) {
                auto g = inverse_gradient_estimate(policy, toy_reward, n, 0.0, 1000 * pseed + r);
                double e = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i) e += (g[i] - exact[i]) * (g[i] - exact[i]);
                sq += e;
            }
            const double rms = std::sqrt(sq / reps);
            const double predicted = std::sqrt(run.total_variance / static_cast<double>(n));
            CAPTURE(n);
            CHECK(rms < 2.0 * predicted);
            CHECK(rms > 0.4 * predicted);
            mean_err.push_back(rms);
        }
        CHECK(mean_err[1] < mean_err[0]);
        CHECK(mean_err[2] < mean_err[1]);
    }
}

TEST_CASE("baselines change variance but not the mean") {
    auto policy = estimator_policy();
    const double b_star = expected_reward(policy, target_reward);
    auto cmp = compare_baselines(policy, target_reward, 100000, 0.0, b_star, 77);
    MESSAGE("Bonferroni-adjusted min p " << cmp.min_adjusted_p << ", variance " << cmp.first.total_variance << " -> "
                                         << cmp.second.total_variance);
    CHECK(cmp.min_adjusted_p > 0.01);
    CHECK(cmp.second.total_variance < cmp.first.total_variance);
    auto half = compare_baselines(policy, toy_reward, 100000, 0.0, 0.5, 78);
    CHECK(half.first.total_variance != half.second.total_variance);
    CHECK(half.min_adjusted_p > 0.01);
}
