#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "sage/distill/distill.hpp"

using namespace sage;
using namespace sage::tools;
using namespace sage::distill;

namespace {

const Task& task_by_id(const std::vector<Task>& tasks, const std::string& id) {
    return *std::find_if(tasks.begin(), tasks.end(), [&](const Task& t) { return t.id == id; });
}

Trajectory scripted(const Task& task, const SchemaRegistry& reg, std::vector<std::string> actions, int max_turns,
                    std::optional<FaultKind> fault = std::nullopt) {
    ScriptedPolicy p(std::move(actions));
    ToolEnv env(reg, task, 4);
    if (fault) env.inject_error(*fault, 1);
    return from_episode(task, run_episode(p, env, max_turns, 4));
}

// Fixed log-probabilities keyed by task id and success.
struct TableScorer final : TrajectoryScorer {
    double shift = 0.0;
    double log_prob(const Trajectory& t) const override {
        return -static_cast<double>(t.steps.size()) * 0.7 + (t.success ? 0.3 : -0.2) + shift;
    }
};

double oracle_neg_log_sigmoid(double z) { return std::log(1.0 + std::exp(-z)); }

}  // namespace

TEST_CASE("critique templates") {
    const auto reg = default_registry();
    const auto tasks = default_tasks();
    const auto& t = task_by_id(tasks, "fly-lis");
    const auto& schema = *reg.find("book_flight");
    const auto& call = t.oracle_calls[0];

    // Audit table: violation class -> expected template and named slot.
    struct Row {
        CallVariant variant;
        ViolationKind kind;
        bool names_param;
    };
    for (const Row row : {Row{CallVariant::TypeError, ViolationKind::TypeError, true},
                          Row{CallVariant::HallucinatedKey, ViolationKind::HallucinatedKey, true},
                          Row{CallVariant::LogicError, ViolationKind::LogicError, true},
                          Row{CallVariant::MissingRequired, ViolationKind::MissingRequired, true},
                          Row{CallVariant::Malformed, ViolationKind::Malformed, false}}) {
        const auto bad = realise_variant(call, schema, row.variant, 2);
        const auto tr = scripted(t, reg, {bad}, 1);
        REQUIRE_FALSE(tr.success);
        const auto c = teacher_critique(tr, t, reg);
        CHECK(c.kind == CritiqueKind::Violation);
        REQUIRE(c.violation_class);
        CHECK(*c.violation_class == row.kind);
        const auto v = validate_text(bad, reg);
        if (row.names_param) {
            CHECK_FALSE(c.param.empty());
            CHECK(c.param == v.front().param);
            CHECK(c.text.find("'" + c.param + "'") != std::string::npos);
        }
        CHECK(c.text.find('{') == (row.kind == ViolationKind::Malformed ? c.text.find("{") : std::string::npos));
        CHECK(teacher_critique(tr, t, reg) == c);  // deterministic
        if (row.kind == ViolationKind::TypeError) CHECK(c.text.find(to_string(schema.find(c.param)->type)) != std::string::npos);
    }

    const auto to = scripted(t, reg, {serialize_call(call), kDoneAction}, 3, FaultKind::Timeout);
    REQUIRE_FALSE(to.success);
    const auto c = teacher_critique(to, t, reg);
    CHECK(c.kind == CritiqueKind::Fault);
    CHECK(c.text.find("retry with backoff") != std::string::npos);
    CHECK(c.text == critique_template(FaultKind::Timeout));

    const auto mm = scripted(t, reg, {serialize_call(call), kDoneAction}, 3, FaultKind::ParameterMismatch);
    const auto cm = teacher_critique(mm, t, reg);
    CHECK(call.arguments.contains(cm.param));

    const auto drop = scripted(task_by_id(tasks, "drop-prod"), reg,
                               {serialize_call(task_by_id(tasks, "drop-prod").oracle_calls[0])}, 2);
    CHECK(teacher_critique(drop, task_by_id(tasks, "drop-prod"), reg).kind == CritiqueKind::Unsafe);

    const auto quit = scripted(t, reg, {kDoneAction}, 2);
    CHECK(teacher_critique(quit, t, reg).kind == CritiqueKind::TaskIncomplete);
    CHECK(teacher_critique(quit, t, reg).text.find("book_flight") != std::string::npos);

    const auto ok = scripted(t, reg, {serialize_call(call)}, 2);
    REQUIRE(ok.success);
    CHECK_THROWS_AS(teacher_critique(ok, t, reg), std::invalid_argument);
}

TEST_CASE("teacher corrections re-execute to success") {
    const auto reg = default_registry();
    const auto tasks = default_tasks();
    const auto& t = task_by_id(tasks, "who-42");
    const auto str = scripted(t, reg, {R"({"tool_call":{"name":"lookup_user","arguments":{"user_id":"42"}}})"}, 1);
    const auto fixed = teacher_correct(str, teacher_critique(str, t, reg), t, reg);
    CHECK(fixed.success);
    CHECK(fixed.steps.front().action == R"({"tool_call":{"name":"lookup_user","arguments":{"user_id":42}}})");

    const auto extra =
        scripted(t, reg, {R"({"tool_call":{"name":"lookup_user","arguments":{"user_id":42,"verbose":true}}})"}, 1);
    CHECK(teacher_correct(extra, teacher_critique(extra, t, reg), t, reg).success);

    // Validator sweep over corrections of random failures on every task.
    TabularAgentPolicy sloppy(reg, {{0.0, 0.5, 0.5, 0.5, 0.5, 0.5}});
    std::size_t corrected = 0;
    for (const auto& tr : rollout(sloppy, tasks, reg, {60, 3, 17, 0.3})) {
        if (tr.success) continue;
        const auto& task = task_by_id(tasks, tr.task_id);
        const auto fix = teacher_correct(tr, teacher_critique(tr, task, reg), task, reg);
        CHECK(fix.success);
        for (const auto& s : fix.steps)
            if (s.action != kDoneAction) CHECK(validate_text(s.action, reg).empty());
        ++corrected;
    }
    CHECK(corrected > 20);

    Critique wrong;
    wrong.text = "something else";
    CHECK_THROWS_AS(teacher_correct(str, wrong, t, reg), std::invalid_argument);
    Task orphan = t;
    orphan.oracle_calls.clear();
    const auto q = scripted(orphan, reg, {kDoneAction}, 1);
    CHECK_THROWS_AS(teacher_correct(q, teacher_critique(q, orphan, reg), orphan, reg), CorrectionUnavailable);
}

TEST_CASE("buffer construction") {
    const auto reg = default_registry();
    const auto tasks = default_tasks();
    CHECK(build_buffer(std::vector<Trajectory>{}, tasks, reg).records.empty());

    TabularAgentPolicy perfect(reg, {{40, 0, 0, 0, 0, 0}, {0, 0.5, 0}, {-40, 0}});
    const auto good = rollout(perfect, tasks, reg, {12, 6, 1, 0.0});
    auto b = build_buffer(good, tasks, reg);
    CHECK(b.positives() == 12);
    CHECK(b.pairs.empty());

    TabularAgentPolicy broken(reg, {{-40, 0, 0, 0, 0, 40}, {0, 0.5, 0}, {40, 0}});
    const auto bad = rollout(broken, tasks, reg, {12, 3, 1, 0.0});
    b = build_buffer(bad, tasks, reg);
    CHECK(b.positives() == 12);
    CHECK(b.negatives() == 12);
    CHECK(b.pairs.size() == 12);
    for (const auto& p : b.pairs) {
        CHECK(p.chosen.tokens() != p.rejected_tokens());
        CHECK(p.rejected_tokens()[p.rejected.tokens().size()] == kCritiqueSep);
        CHECK(p.chosen.success);
    }
    const auto rec = b.records[1].to_json();
    CHECK(rec["label"] == 0);
    CHECK(rec["tokens"].back() == b.records[1].critique->text);

    // Sizes over random mixed batches.
    TabularAgentPolicy mixed(reg, {{1.0, 0, 0, 0, 0, 0}});
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto batch = rollout(mixed, tasks, reg, {1 + s % 9, 4, s, 0.3});
        const auto buf = build_buffer(batch, tasks, reg);
        const auto failures = static_cast<std::size_t>(std::count_if(batch.begin(), batch.end(), [](const auto& t) { return !t.success; }));
        CHECK(buf.positives() == batch.size());
        CHECK(buf.pairs.size() == failures);
        CHECK(buf.negatives() == failures);
    }
}

TEST_CASE("dpo loss values") {
    const auto reg = default_registry();
    const auto tasks = default_tasks();
    TabularAgentPolicy sloppy(reg, {{0.0, 0.5, 0.5, 0.5, 0.5, 0.5}});
    const auto pairs = build_buffer(rollout(sloppy, tasks, reg, {40, 3, 5, 0.3}), tasks, reg).pairs;
    REQUIRE(pairs.size() > 10);

    TableScorer s;
    CHECK(std::abs(dpo_loss(s, s, pairs, 0.1) - std::log(2.0)) < 1e-12);
    CHECK(std::abs(dpo_loss(s, s, pairs, 3.0) - std::log(2.0)) < 1e-12);
    TabularScorer ts(sloppy, tasks);
    CHECK(std::abs(dpo_loss(ts, ts, pairs, 0.1) - std::log(2.0)) < 1e-12);
    TabularAgentPolicy other(reg, {});
    CHECK(std::abs(dpo_loss(TabularScorer(other, tasks), ts, pairs, 0.0) - std::log(2.0)) < 1e-12);

    CHECK(std::abs(dpo_pair_loss(1.0, 0.0, 0.0, 0.0, 0.1) - oracle_neg_log_sigmoid(0.1)) < 1e-12);
    CHECK(dpo_pair_loss(1.0, 0.0, 0.0, 0.0, 0.1) == doctest::Approx(0.6443966600).epsilon(1e-9));
    CHECK(std::abs(dpo_pair_loss(-3.0, -1.5, 2.0, 2.5, 0.1) - oracle_neg_log_sigmoid(0.1 * (-1.5 + 0.5))) < 1e-12);
    CHECK(std::isfinite(dpo_pair_loss(1e4, 0, 0, 0, 1.0)));
    CHECK(std::isfinite(dpo_pair_loss(-1e4, 0, 0, 0, 1.0)));

    CHECK_THROWS_AS(dpo_loss(s, s, std::vector<PreferencePair>{}, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(dpo_loss(s, s, pairs, -0.1), std::invalid_argument);

    // The autodiff update starts from the same value the scorer reports.
    TabularAgentPolicy pol(reg, {{1.0, 0.2, -0.3, 0.4, 0.1, 0.0}});
    const double expect = dpo_loss(TabularScorer(pol, tasks), TabularScorer(other, tasks), pairs, 0.1);
    CHECK(dpo_update(pol, other, pairs, tasks, 0.1, 0.01, 1) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("one distillation epoch lowers held-out dpo loss") {
    const auto reg = default_registry();
    const auto tasks = default_tasks();
    TabularAgentPolicy ref(reg, {}), pol(reg, {});
    const auto held = build_buffer(rollout(ref, tasks, reg, {60, 6, 999, 0.3}), tasks, reg);
    REQUIRE_FALSE(held.pairs.empty());
    DistillConfig dc;
    dc.epochs = 1;
    dc.rollout = {40, 6, 3, 0.3};
    const auto rep = reflective_distillation(pol, ref, tasks, reg, dc, held.pairs);
    REQUIRE(rep.size() == 1);
    CHECK(rep[0].heldout_dpo_loss < std::log(2.0));
    CHECK(rep[0].p_correct > ref.p_correct());

    // All-success and all-failure batches.
    TabularAgentPolicy perfect(reg, {{40, 0, 0, 0, 0, 0}, {0, 0.5, 0}, {-40, 0}});
    dc.rollout.fault_rate = 0.0;
    CHECK_NOTHROW(reflective_distillation(perfect, perfect, tasks, reg, dc, held.pairs));
    TabularAgentPolicy broken(reg, {{-40, 0, 0, 0, 0, 40}, {0, 0.5, 0}, {40, 0}});
    const TabularAgentPolicy broken_ref = broken;
    dc.rollout.max_turns = 3;
    const auto br = reflective_distillation(broken, broken_ref, tasks, reg, dc, held.pairs);
    CHECK(br[0].successes == 0);
    CHECK(broken.p_correct() > broken_ref.p_correct());
}

TEST_CASE("rl refinement") {
    const auto reg = default_registry();
    const auto tasks = default_tasks();
    TabularAgentPolicy pol(reg, {});
    const auto before = pol.params();
    RlConfig zero;
    zero.episodes = 40;
    zero.reward = [](const EpisodeResult&) { return 0.0; };
    rl_refine(pol, tasks, reg, zero);
    CHECK(pol.params().call_logits == before.call_logits);
    CHECK(pol.params().safety_logits == before.safety_logits);

    EpisodeResult win;
    win.success = true;
    CHECK(tool_reward(win) == 1.0);
    EpisodeResult hk;
    hk.violations = {{ViolationKind::HallucinatedKey, "x", ""}, {ViolationKind::HallucinatedKey, "y", ""}};
    CHECK(tool_reward(hk) == -2.0);

    // One-call bandit: a single turn, so the episode is one variant draw.
    // Oracle: the exact policy gradient by enumerating the six variants.
    std::vector<Task> bandit{task_by_id(tasks, "who-42")};
    TabularAgentPolicy b(reg, {{0.0, 0.0, 0.0, 0.0, 0.0, 0.0}});
    const auto p0 = b.variant_probs();
    std::vector<double> rew(kNumVariants, -1.0);
    rew[0] = 1.0;
    rew[static_cast<std::size_t>(CallVariant::HallucinatedKey)] = -1.5;
    double expected = 0.0;
    for (std::size_t v = 0; v < kNumVariants; ++v) expected += p0[v] * rew[v];
    const double exact_grad_correct = p0[0] * (rew[0] - expected);
    CHECK(exact_grad_correct > 0.0);

    RlConfig rc;
    rc.episodes = 200 * 8;
    rc.batch = 8;
    rc.lr = 0.1;
    rc.rollout = {8, 1, 21, 0.0};
    const auto rep = rl_refine(b, bandit, reg, rc);
    REQUIRE(rep.p_correct.size() == 200);
    CHECK(rep.p_correct.back() > p0[0]);
    // Smoothed improvement across the run.
    double first = 0, last = 0;
    for (std::size_t i = 0; i < 20; ++i) {
        first += rep.p_correct[i];
        last += rep.p_correct[180 + i];
    }
    CHECK(last > first);
}

TEST_CASE("hallucination rate ordering through the pipeline") {
    const auto reg = default_registry();
    const auto tasks = default_tasks();
    const auto r = distill_pipeline(reg, tasks, {});
    MESSAGE("hallucination rate " << r.base_rate << " -> " << r.distill_rate << " -> " << r.rl_rate);
    CHECK(r.base_rate > r.distill_rate);
    CHECK(r.distill_rate > r.rl_rate);
    REQUIRE(r.epochs.size() == 3);
    CHECK(r.buffer.pairs.size() == r.epochs.back().buffer_pairs);

    // Base rate matches a fresh default policy on the same evaluation suite.
    TabularAgentPolicy fresh(reg, {});
    CHECK(evaluate_hallucination_rate(fresh, tasks, reg, 2000, 77) == r.base_rate);
}

TEST_CASE("safety preference pairs") {
    const auto reg = default_registry();
    const auto tasks = default_tasks();
    const auto pairs = safety_pairs(tasks, reg);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].chosen.success);
    CHECK(pairs[0].rejected.destructive_called);
    TabularAgentPolicy ref(reg, {}), pol(reg, {});
    dpo_update(pol, ref, pairs, tasks, 0.1, 0.05, 20);
    CHECK(pol.p_comply() < ref.p_comply());
}
