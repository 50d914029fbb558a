#include <array>
#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "sage/hybrid/controller.hpp"

using namespace sage;
using namespace sage::hybrid;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Nine-state chain. From each state the successors are listed in prior order;
// greedy decoding takes the first. State 5 is a contradiction.
struct ToyMdp final : RolloutModel {
    std::array<std::vector<int>, 9> next{{{1, 2}, {3, 7}, {4, 8}, {5}, {6}, {5}, {6}, {7}, {8}}};
    std::array<double, 9> conf{0.9, 0.8, 0.85, 0.7, 0.9, 0.05, 0.88, 0.6, 0.8};
    static constexpr int kContradiction = 5;

    std::vector<model::TokenSeq> propose(const model::TokenSeq& s, std::size_t k, std::mt19937_64&) const override {
        std::vector<model::TokenSeq> out;
        for (int n : next[static_cast<std::size_t>(s.back())])
            if (out.size() < k) out.push_back({n});
        return out;
    }
    model::TokenSeq greedy_step(const model::TokenSeq& s) const override {
        return {next[static_cast<std::size_t>(s.back())].front()};
    }
    bool terminal(const model::TokenSeq&) const override { return false; }
    double confidence(const model::TokenSeq& s) const override { return conf[static_cast<std::size_t>(s.back())]; }
    double ics(const model::TokenSeq& s) const override {
        for (int t : s)
            if (t == kContradiction) return -10.0;
        return 0.0;
    }
};

// Exhaustive oracle: does greedy rollout from each state hit the
// contradiction within `depth` further steps?
std::array<bool, 9> doomed_within(const ToyMdp& mdp, std::size_t depth) {
    std::array<bool, 9> out{};
    for (int s = 0; s < 9; ++s) {
        int cur = s;
        bool hit = cur == ToyMdp::kContradiction;
        for (std::size_t d = 0; d < depth; ++d) {
            cur = mdp.next[static_cast<std::size_t>(cur)].front();
            hit = hit || cur == ToyMdp::kContradiction;
        }
        out[static_cast<std::size_t>(s)] = hit;
    }
    return out;
}

// Returns fixed candidate lists and constant scores.
struct ConstantModel final : RolloutModel {
    std::vector<model::TokenSeq> cands;
    std::vector<model::TokenSeq> propose(const model::TokenSeq&, std::size_t k, std::mt19937_64&) const override {
        return {cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(std::min(k, cands.size()))};
    }
    model::TokenSeq greedy_step(const model::TokenSeq&) const override { return {0}; }
    bool terminal(const model::TokenSeq&) const override { return false; }
    double confidence(const model::TokenSeq& s) const override { return 0.5 + 0.01 * s.back(); }
    double ics(const model::TokenSeq&) const override { return -1.0; }
};

std::vector<GateDecision> random_trace(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> len(1, 200);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    const double tau = u(rng);
    std::vector<GateDecision> t;
    for (int i = len(rng); i > 0; --i) t.push_back(gate(u(rng), tau));
    return t;
}

}  // namespace

TEST_CASE("step entropy") {
    CHECK(step_entropy(std::vector<double>{0, 0, 0, 0}) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
    CHECK(step_entropy(std::vector<double>{0, -kInf, -kInf}) == 0.0);
    CHECK(step_entropy(std::vector<double>{50, 0, 0}) < 1e-18);
    // Oracle: -sum p ln p evaluated directly for p = (0.5, 0.25, 0.25).
    const double p[3] = {0.5, 0.25, 0.25};
    double h = 0.0;
    for (double v : p) h -= v * std::log(v);
    CHECK(step_entropy(std::vector<double>{std::log(0.5), std::log(0.25), std::log(0.25)}) ==
          doctest::Approx(h).epsilon(1e-13));
    CHECK(h == doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-15));
    // Shift invariance.
    CHECK(step_entropy(std::vector<double>{1.0, 2.0, 3.0}) ==
          doctest::Approx(step_entropy(std::vector<double>{101.0, 102.0, 103.0})).epsilon(1e-12));
    CHECK_THROWS_AS(step_entropy(std::vector<double>{-kInf, -kInf}), std::invalid_argument);
    CHECK_THROWS_AS(step_entropy(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("gate boundary") {
    CHECK(gate(0.7, 0.7).mode == Mode::Normal);
    CHECK(gate(0.7 + 1e-9, 0.7).mode == Mode::Reasoning);
    CHECK(gate(0.3, 0.7).threshold == 0.7);

    std::vector<double> ent{0.0, 0.1, 2.0, 5.0, 1e6};
    CHECK(switching_rate(ent, kInf) == 0.0);
    std::vector<GateDecision> t;
    for (double h : ent) t.push_back(gate(h, kInf));
    CHECK(cost_account(t, 1.0, 1.0).mu == 0.0);
}

TEST_CASE("gate monotone in tau on a fixed logits trace") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n(0.0, 1.5);
    std::vector<double> ent;
    for (int s = 0; s < 500; ++s) {
        std::vector<double> logits(6);
        for (auto& v : logits) v = n(rng);
        ent.push_back(step_entropy(logits));
    }
    double prev = 1.0;
    for (double tau = 0.0; tau <= 2.0; tau += 0.01) {
        const double mu = switching_rate(ent, tau);
        CHECK(mu <= prev);
        prev = mu;
    }
}

TEST_CASE("cost accounting") {
    std::vector<GateDecision> fast(10, gate(0.0, 1.0)), slow(10, gate(2.0, 1.0));
    auto f = cost_account(fast, 2.0, 3.0);
    CHECK(f.c_total == 20.0);
    CHECK(f.mu == 0.0);
    auto s = cost_account(slow, 2.0, 3.0);
    CHECK(s.c_total == 50.0);
    CHECK(s.mu == 1.0);

    // mu = 0.2 with c_mch = c_base: ratio 1.2.
    std::vector<GateDecision> mixed(fast.begin(), fast.begin() + 8);
    mixed.insert(mixed.end(), slow.begin(), slow.begin() + 2);
    auto m = cost_account(mixed, 1.0, 1.0);
    CHECK(m.mu == 0.2);
    CHECK(m.cost_ratio() == 1.2);
    CHECK(m.within_bound(0.0));
    CHECK_THROWS_AS(cost_account(std::vector<GateDecision>{}, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("cost bound on random traces") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> c(0.0, 5.0);
    std::size_t violations = 0;
    for (int i = 0; i < 10000; ++i) {
        const auto t = random_trace(rng);
        const auto l = cost_account(t, c(rng), c(rng));
        violations += !l.within_bound();
        // Equality: every slow step pays exactly c_base + c_mch.
        CHECK(std::abs(l.c_total - l.bound()) <= 1e-9 * std::max(1.0, l.bound()));
    }
    CHECK(violations == 0);
}

TEST_CASE("tau calibration hits the target switching rate") {
    std::mt19937_64 rng(5);
    std::exponential_distribution<double> e(1.0);
    std::vector<double> held(1000);
    for (auto& h : held) h = e(rng);
    for (double target : {0.0, 0.05, 0.2, 0.5, 0.999}) {
        const double tau = calibrate_tau(held, target);
        CHECK(switching_rate(held, tau) <= target);
        CHECK(switching_rate(held, tau) >= target - 1e-3);  // continuous sample, no ties
    }
    CHECK(calibrate_tau(held, 1.0) == -kInf);
    CHECK_THROWS_AS(calibrate_tau({}, 0.2), std::invalid_argument);
    CHECK_THROWS_AS(calibrate_tau(held, 1.5), std::invalid_argument);
}

TEST_CASE("look-ahead avoids the toy contradiction that greedy walks into") {
    ToyMdp mdp;
    std::mt19937_64 rng(0);
    LasConfig cfg{2, 2, 0.1};
    const auto doomed = doomed_within(mdp, cfg.depth);
    const int greedy_choice = mdp.greedy_step({0}).front();
    CHECK(doomed[static_cast<std::size_t>(greedy_choice)]);

    auto r = look_ahead_simulate(mdp, {0}, cfg, rng);
    REQUIRE(r.chosen.size() == 1);
    CHECK_FALSE(doomed[static_cast<std::size_t>(r.chosen[0])]);
    CHECK_FALSE(r.resampled);
    // The oracle agrees for every state with two successors.
    for (int s = 0; s < 9; ++s) {
        const auto& succ = mdp.next[static_cast<std::size_t>(s)];
        if (succ.size() < 2) continue;
        const bool some_safe = !doomed[static_cast<std::size_t>(succ[0])] || !doomed[static_cast<std::size_t>(succ[1])];
        auto rs = look_ahead_simulate(mdp, {s}, cfg, rng);
        if (some_safe) CHECK_FALSE(doomed[static_cast<std::size_t>(rs.chosen[0])]);
    }
}

TEST_CASE("look-ahead degenerate cases") {
    ConstantModel m;
    std::mt19937_64 rng(0);
    m.cands = {{3}, {4}};
    auto one = look_ahead_simulate(m, {0}, {1, 3, 0.1}, rng);
    CHECK(one.chosen == model::TokenSeq{3});
    CHECK(one.candidates.size() == 1);

    m.cands = {{2}, {2}, {2}};
    auto same = look_ahead_simulate(m, {0}, {3, 2, 0.1}, rng);
    CHECK(same.chosen_index == 0);
    CHECK(same.candidates[0].score == same.candidates[1].score);
    CHECK(same.candidates[1].score == same.candidates[2].score);

    // Nothing stable: one resample, then best-so-far.
    auto unstable = look_ahead_simulate(m, {0}, {3, 2, 0.0}, rng);
    CHECK(unstable.resampled);
    CHECK(unstable.candidates.size() == 6);
    CHECK(unstable.chosen_index == 0);

    m.cands.clear();
    CHECK_THROWS_AS(look_ahead_simulate(m, {0}, {2, 2, 0.1}, rng), std::invalid_argument);
    m.cands = {{1}};
    CHECK_THROWS_AS(look_ahead_simulate(m, {0}, {0, 2, 0.1}, rng), std::invalid_argument);
    CHECK_THROWS_AS(look_ahead_simulate(m, {0}, {1, 0, 0.1}, rng), std::invalid_argument);
}

TEST_CASE("hybrid decoding with closed and open gates") {
    model::ModelConfig c;
    c.n_layers = 1;
    c.d_model = 16;
    c.n_heads = 2;
    c.d_ff = 32;
    c.vocab_nl = 10;
    c.vocab_code = 10;
    c.max_seq_len = 12;
    model::SageModel m(c, 3);
    const model::TokenSeq prompt{1, 2, 3};
    ModelRollout rollout(m, prompt, 9, 8);

    HybridConfig closed;
    closed.tau = kInf;
    closed.max_new = 5;
    auto fast = hybrid_decode(rollout, prompt, closed);
    auto greedy = m.greedy(prompt, 5, 9);
    CHECK(fast.completion == greedy);
    CHECK(fast.ledger.mu == 0.0);

    HybridConfig open = closed;
    open.tau = -kInf;
    open.c_mch = 2.0;
    auto slow = hybrid_decode(rollout, prompt, open);
    CHECK(slow.ledger.mu == 1.0);
    CHECK(slow.ledger.c_total == doctest::Approx(3.0 * static_cast<double>(slow.ledger.n_steps)));
    CHECK(hybrid_decode(rollout, prompt, open).completion == slow.completion);
}
