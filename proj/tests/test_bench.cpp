#include <cmath>
#include <limits>

#include "doctest.h"
#include "sage/bench/arithmetic_bench.hpp"
#include "sage/synthetic/training.hpp"

using namespace sage;
using namespace sage::bench;

namespace {

RankRecord record(int a, int b, std::vector<std::pair<std::optional<int>, double>> samples) {
    RankRecord r;
    r.task = {a, b};
    for (const auto& [ans, ics] : samples) {
        RankedSample s;
        s.answer = ans;
        s.ics = ics;
        r.samples.push_back(s);
    }
    return r;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

TEST_CASE("votes on recorded samples") {
    // Two hallucinated answers with poor ICS outvote the right one.
    const auto r = record(3, 4, {{6, -3.0}, {6, -2.8}, {7, -0.9}, {std::nullopt, -0.1}});
    const auto o = vote(r, -1.5);
    CHECK(o.vanilla == 6);
    CHECK(o.ir == 7);
    CHECK(vote(r, -kInf).ir == 6);
    CHECK_FALSE(vote(record(1, 1, {{std::nullopt, 0.0}}), -1.0).vanilla);

    const std::vector<RankRecord> recs{r, record(1, 2, {{3, -0.5}, {3, -2.0}})};
    const auto acc = vote_accuracy(recs, -1.5);
    CHECK(acc.vanilla == 0.5);
    CHECK(acc.ir == 1.0);
    CHECK_THROWS_AS(vote_accuracy({}, 0.0), std::invalid_argument);

    // -1.0 and -1.5 both keep only the 7; the earlier grid entry wins.
    CHECK(calibrate_ics_floor(recs, {-4.0, -1.0, -1.5}) == -1.0);
    CHECK(calibrate_ics_floor(recs, {-4.0}) == -4.0);
    CHECK_THROWS_AS(calibrate_ics_floor(recs, {}), std::invalid_argument);
}

TEST_CASE("efficient rows") {
    std::vector<GateRow> rows(4);
    rows[0] = {"fast", kInf, NAN, 0.80, 100, 0, 100};
    rows[1] = {"slow", -kInf, NAN, 0.90, 400, 1, 100};
    rows[2] = {"hybrid", 0.3, 0.1, 0.86, 200, 0.1, 100};  // 95.6% at 50%
    rows[3] = {"hybrid", 0.1, 0.2, 0.85, 150, 0.2, 100};  // 94.4%
    const auto e = efficient_rows(rows);
    REQUIRE(e.size() == 1);
    CHECK(e[0].tau == 0.3);
    CHECK_THROWS_AS(efficient_rows({rows[0]}), std::invalid_argument);
}

TEST_CASE("rank and gate on a small model") {
    synthetic::ArithmeticVocab v(4);
    synthetic::ArithmeticConfig tc;
    tc.max_operand = 4;
    model::SageModel m(synthetic::arithmetic_model_config(v), 5);
    const auto suite = synthetic::make_suite(tc, 6, 1);
    RankConfig rc;
    rc.k = 5;
    rc.max_new = 8;
    const auto recs = rank_suite(m, v, suite, rc);
    REQUIRE(recs.size() == 6);
    for (const auto& r : recs) {
        CHECK(r.samples.size() == 5);
        for (const auto& s : r.samples) {
            CHECK(s.logp <= r.samples[r.greedy_winner].logp);
            const auto prompt = synthetic::prompt_tokens(v, r.task);
            CHECK(s.logp == doctest::Approx(m.sequence_log_prob(prompt, s.completion)).epsilon(1e-12));
        }
    }
    // Per-task seeding: a prefix of the suite reproduces the same samples.
    const auto head = rank_suite(m, v, {suite.begin(), suite.begin() + 2}, rc);
    CHECK(head[1].samples[3].completion == recs[1].samples[3].completion);
    rc.k = 0;
    CHECK_THROWS_AS(rank_suite(m, v, suite, rc), std::invalid_argument);

    GateBenchConfig gc;
    gc.max_new = 8;
    const auto fast = run_gate(m, v, suite, kInf, gc);
    CHECK(fast.mode == "fast");
    CHECK(fast.mu == 0.0);
    CHECK(fast.cost == doctest::Approx(static_cast<double>(fast.steps) * gc.c_base));
    const auto slow = run_gate(m, v, suite, -kInf, gc);
    CHECK(slow.mode == "slow");
    CHECK(slow.mu == 1.0);
    CHECK(slow.cost == doctest::Approx(static_cast<double>(slow.steps) * (gc.c_base + gc.c_mch)));
    const auto again = run_gate(m, v, suite, -kInf, gc);
    CHECK(again.accuracy == slow.accuracy);
    CHECK(again.cost == slow.cost);

    gc.target_mus = {0.0, 1.0};
    const auto rows = gate_bench(m, v, suite, suite, gc);
    REQUIRE(rows.size() == 4);
    CHECK(rows[2].target_mu == 0.0);
    CHECK(rows[2].mu <= rows[3].mu);
}
