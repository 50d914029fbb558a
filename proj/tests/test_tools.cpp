#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "sage/tools/agent.hpp"
#include "sage/tools/negatives.hpp"
#include "sage/tools/plan.hpp"
#include "sage/tools/recovery.hpp"

using namespace sage;
using namespace sage::tools;

namespace {

ToolSchema flight_schema() {
    ToolSchema s;
    s.name = "book_flight";
    Domain date, seats, cls;
    date.date_after = "2026-06-30";
    seats.min = 1;
    seats.max = 9;
    cls.values = {"economy", "business"};
    s.params = {{"origin", ParamType::String, true, {}},
                {"date", ParamType::String, true, date},
                {"seats", ParamType::Int, true, seats},
                {"class", ParamType::Enum, false, cls}};
    return s;
}

ToolCall flight_call() {
    ToolCall c;
    c.name = "book_flight";
    c.arguments = {{"origin", "BER"}, {"date", "2026-09-14"}, {"seats", 7}};
    return c;
}

std::set<ViolationKind> kinds(const std::vector<Violation>& v) {
    std::set<ViolationKind> out;
    for (const auto& x : v) out.insert(x.kind);
    return out;
}

const Task& task_by_id(const std::vector<Task>& tasks, const std::string& id) {
    return *std::find_if(tasks.begin(), tasks.end(), [&](const Task& t) { return t.id == id; });
}

}  // namespace

TEST_CASE("validate_call examples") {
    const auto s = flight_schema();
    auto c = flight_call();
    CHECK(validate_call(c, s).empty());

    auto extra = c;
    extra.arguments["verbose"] = true;
    auto v = validate_call(extra, s);
    REQUIRE(v.size() == 1);
    CHECK(v[0].kind == ViolationKind::HallucinatedKey);
    CHECK(v[0].param == "verbose");

    auto str = c;
    str.arguments["seats"] = "5";
    v = validate_call(str, s);
    REQUIRE(v.size() == 1);
    CHECK(v[0].kind == ViolationKind::TypeError);

    auto past = c;
    past.arguments["date"] = "2025-01-01";
    CHECK(kinds(validate_call(past, s)) == std::set{ViolationKind::LogicError});
    auto edge = c;
    edge.arguments["date"] = "2026-06-30";  // strictly after
    CHECK(kinds(validate_call(edge, s)) == std::set{ViolationKind::LogicError});
    auto big = c;
    big.arguments["seats"] = 10;
    CHECK(kinds(validate_call(big, s)) == std::set{ViolationKind::LogicError});
    auto cls = c;
    cls.arguments["class"] = "first";
    CHECK(kinds(validate_call(cls, s)) == std::set{ViolationKind::LogicError});

    auto missing = c;
    missing.arguments.erase("origin");
    CHECK(kinds(validate_call(missing, s)) == std::set{ViolationKind::MissingRequired});

    // Every violation is reported.
    auto many = c;
    many.arguments["seats"] = "5";
    many.arguments["debug"] = 1;
    many.arguments.erase("origin");
    CHECK(kinds(validate_call(many, s)) ==
          std::set{ViolationKind::TypeError, ViolationKind::HallucinatedKey, ViolationKind::MissingRequired});

    auto wrong = c;
    wrong.name = "book_hotel";
    CHECK(kinds(validate_call(wrong, s)) == std::set{ViolationKind::UnknownTool});

    SchemaRegistry reg({s});
    CHECK(kinds(validate_text("{\"tool_call\":", reg)) == std::set{ViolationKind::Malformed});
    CHECK(kinds(validate_text(R"({"call":{"name":"book_flight"}})", reg)) == std::set{ViolationKind::Malformed});
    CHECK(kinds(validate_text(R"({"tool_call":{"name":"nope","arguments":{}}})", reg)) ==
          std::set{ViolationKind::UnknownTool});
    CHECK(validate_text(serialize_call(c), reg).empty());
}

TEST_CASE("wire format and round trip") {
    ToolCall c{"lookup_user", {{"user_id", 42}}};
    CHECK(serialize_call(c) == R"({"tool_call":{"name":"lookup_user","arguments":{"user_id":42}}})");
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto s = random_schema(seed);
        const auto call = random_valid_call(s, seed + 7);
        const auto parsed = parse_call(serialize_call(call));
        REQUIRE(parsed);
        CHECK(*parsed == call);
        CHECK(serialize_call(*parsed) == serialize_call(call));
    }
}

TEST_CASE("schema files") {
    const auto reg = default_registry();
    CHECK(reg.schemas().size() == 9);
    REQUIRE(reg.find("delete_database"));
    CHECK(reg.find("delete_database")->destructive);
    const auto again = SchemaRegistry(std::vector<ToolSchema>{schema_from_json(to_json(*reg.find("book_flight")))});
    CHECK(to_json(*again.find("book_flight")) == to_json(*reg.find("book_flight")));

    CHECK_THROWS_AS(SchemaRegistry({flight_schema(), flight_schema()}), std::invalid_argument);
    json bad = R"({"name":"t","params":[{"name":"e","type":"enum","domain":{"enum":[]}}]})"_json;
    CHECK_THROWS_AS(schema_from_json(bad), std::invalid_argument);
    bad = R"({"name":"t","params":[{"name":"e","type":"complex"}]})"_json;
    CHECK_THROWS_AS(schema_from_json(bad), std::invalid_argument);

    // Every benign oracle call validates and admits all three hard negatives
    // without substitution.
    for (const auto& t : default_tasks()) {
        for (const auto& c : t.oracle_calls) {
            const auto* s = reg.find(c.name);
            REQUIRE(s);
            CHECK(validate_call(c, *s).empty());
            if (t.malicious) continue;
            for (const auto& n : negative_constraint_samples(c, *s, 3)) CHECK_FALSE(n.substituted);
        }
    }
}

TEST_CASE("hard negative examples") {
    const auto s = flight_schema();
    ToolCall c{"book_flight", {{"seats", 7}, {"origin", "BER"}, {"date", "2026-09-14"}}};
    // Find a seed whose TypeError mutant hits the int slot.
    bool saw_int = false;
    for (std::uint64_t seed = 0; seed < 50 && !saw_int; ++seed) {
        const auto n = negative_constraint_samples(c, s, seed);
        if (n[0].call.arguments["seats"].is_string()) {
            CHECK(n[0].call.arguments["seats"] == "7");
            saw_int = true;
        }
        const auto& decoys = decoy_keys();
        std::vector<std::string> added;
        for (const auto& [k, v] : n[1].call.arguments.items())
            if (!c.arguments.contains(k)) added.push_back(k);
        REQUIRE(added.size() == 1);
        CHECK(std::find(decoys.begin(), decoys.end(), added[0]) != decoys.end());
        if (n[2].call.arguments["date"] != c.arguments["date"]) CHECK(n[2].call.arguments["date"].get<std::string>() < "2026-06-30");
    }
    CHECK(saw_int);

    // No domain anywhere: LogicError is impossible, so a MissingRequired
    // substitute is produced and flagged.
    ToolSchema plain{"ping", "", {{"host", ParamType::String, true, {}}}, false};
    const auto n = negative_constraint_samples({"ping", {{"host", "a"}}}, plain, 1);
    CHECK(n[2].substituted);
    CHECK(n[2].intended == ViolationKind::MissingRequired);
    CHECK(kinds(validate_call(n[2].call, plain)) == std::set{ViolationKind::MissingRequired});

    ToolSchema optional_only{"ping", "", {{"host", ParamType::String, false, {}}}, false};
    CHECK_THROWS_AS(negative_constraint_samples({"ping", json::object()}, optional_only, 1), std::invalid_argument);
    CHECK_THROWS_AS(negative_constraint_samples({"ping", {{"host", 3}}}, plain, 1), std::invalid_argument);
}

TEST_CASE("hard negatives fail with exactly their class over random schemas") {
    std::size_t total = 0, exact = 0, substituted = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto s = random_schema(seed * 31 + 1);
        const auto call = random_valid_call(s, seed);
        REQUIRE(validate_call(call, s).empty());
        std::array<HardNegative, 3> negs;
        try {
            negs = negative_constraint_samples(call, s, seed);
        } catch (const std::invalid_argument&) {
            continue;  // nothing mutable at all; checked separately above
        }
        for (std::size_t i = 0; i < 3; ++i) {
            ++total;
            const auto v = validate_call(negs[i].call, s);
            exact += !v.empty() && kinds(v) == std::set{negs[i].intended};
            substituted += negs[i].substituted;
            const ViolationKind asked[3] = {ViolationKind::TypeError, ViolationKind::HallucinatedKey,
                                            ViolationKind::LogicError};
            CHECK(negs[i].intended == (negs[i].substituted ? ViolationKind::MissingRequired : asked[i]));
        }
    }
    CHECK(total >= 2700);
    CHECK(exact == total);
    MESSAGE("negatives " << total << ", substituted " << substituted);
}

TEST_CASE("plan DAG validation") {
    PlanDAG empty;
    auto r = validate_plan_dag(empty);
    CHECK(r.status == PlanStatus::Valid);
    CHECK(r.order.empty());

    PlanDAG two{{{"A", {}}, {"B", {}}}, {{"A", "B"}, {"B", "A"}}};
    r = validate_plan_dag(two);
    CHECK(r.status == PlanStatus::CycleError);
    CHECK(r.cycle.size() == 3);
    CHECK(r.cycle.front() == r.cycle.back());

    PlanDAG dangling{{{"A", {}}}, {{"A", "Z"}}};
    CHECK(validate_plan_dag(dangling).status == PlanStatus::UnknownDep);
    PlanDAG dup{{{"A", {}}, {"A", {}}}, {}};
    CHECK(validate_plan_dag(dup).status == PlanStatus::UnknownDep);

    // Random DAGs over 5 nodes: edges go from lower to higher rank of a random
    // permutation. Oracle: every edge checked against the returned order.
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<std::string> ids{"a", "b", "c", "d", "e"};
        std::shuffle(ids.begin(), ids.end(), rng);
        PlanDAG p;
        for (const auto& id : ids) p.steps.push_back({id, {}});
        std::shuffle(p.steps.begin(), p.steps.end(), rng);
        std::bernoulli_distribution edge(0.4);
        for (int i = 0; i < 5; ++i)
            for (int j = i + 1; j < 5; ++j)
                if (edge(rng)) p.deps.emplace_back(ids[i], ids[j]);
        const auto v = validate_plan_dag(p);
        REQUIRE(v.status == PlanStatus::Valid);
        REQUIRE(v.order.size() == 5);
        std::map<std::string, std::size_t> pos;
        for (std::size_t i = 0; i < v.order.size(); ++i) pos[v.order[i]] = i;
        CHECK(pos.size() == 5);
        for (const auto& [a, b] : p.deps) CHECK(pos[a] < pos[b]);

        // Add one back edge: the reported cycle must consist of real edges.
        if (p.deps.empty()) continue;
        const auto [a, b] = p.deps[trial % p.deps.size()];
        p.deps.emplace_back(b, a);
        const auto c = validate_plan_dag(p);
        REQUIRE(c.status == PlanStatus::CycleError);
        std::set<std::pair<std::string, std::string>> edges(p.deps.begin(), p.deps.end());
        for (std::size_t i = 0; i + 1 < c.cycle.size(); ++i) CHECK(edges.count({c.cycle[i], c.cycle[i + 1]}) == 1);
    }

    const auto j = to_json(two);
    CHECK(validate_plan_dag(plan_from_json(j)).status == PlanStatus::CycleError);
}

TEST_CASE("fault injection") {
    const auto reg = default_registry();
    const auto tasks = default_tasks();
    const auto& task = task_by_id(tasks, "fly-lis");
    const auto call = serialize_call(task.oracle_calls[0]);

    ToolEnv env(reg, task, 5);
    env.inject_error(FaultKind::Timeout, 1);
    auto r = env.step(call);
    CHECK_FALSE(r.ok);
    REQUIRE(r.fault);
    CHECK(*r.fault == FaultKind::Timeout);
    CHECK(env.step(call).ok);  // transient

    auto env2 = inject_error(ToolEnv(reg, task, 5), FaultKind::ParameterMismatch, 1);
    r = env2.step(call);
    REQUIRE(r.fault);
    CHECK(*r.fault == FaultKind::ParameterMismatch);
    CHECK(task.oracle_calls[0].arguments.contains(r.result.get<std::string>()));
    CHECK(r.message.find("'" + r.result.get<std::string>() + "'") != std::string::npos);

    CHECK_THROWS_AS(env.inject_error(FaultKind::Timeout, 0), std::invalid_argument);
    CHECK_THROWS_AS(fault_kind_from("disk_full"), std::invalid_argument);

    // No injection: identical to a clean run.
    TabularAgentPolicy pol(reg, {});
    ToolEnv a(reg, task, 9), b(reg, task, 9);
    CHECK(run_episode(pol, a, 6, 3).to_json() == run_episode(pol, b, 6, 3).to_json());
}

TEST_CASE("episodes with scripted policies") {
    const auto reg = default_registry();
    const auto tasks = default_tasks();
    const auto& task = task_by_id(tasks, "who-42");

    auto oracle = oracle_policy(task);
    ToolEnv env(reg, task, 1);
    auto r = run_episode(oracle, env, 5, 1);
    CHECK(r.success);
    CHECK(r.turns == 1);
    CHECK_FALSE(r.fault_turn);

    const auto bad = realise_variant(task.oracle_calls[0], *reg.find("lookup_user"), CallVariant::Malformed, 0);
    ScriptedPolicy never(std::vector<std::string>(10, bad));
    ToolEnv env2(reg, task, 1);
    r = run_episode(never, env2, 4, 1);
    CHECK_FALSE(r.success);
    CHECK(r.turns == 4);

    // Hand-written repair script: TypeError on turn 1, fixed on turn 2.
    ScriptedPolicy repair({R"({"tool_call":{"name":"lookup_user","arguments":{"user_id":"42"}}})",
                           R"({"tool_call":{"name":"lookup_user","arguments":{"user_id":42}}})"});
    ToolEnv env3(reg, task, 1);
    r = run_episode(repair, env3, 5, 1);
    CHECK(r.success);
    CHECK(r.turns == 2);
    REQUIRE(r.fault_turn);
    CHECK(*r.fault_turn == 1);
    REQUIRE(r.recovered_within);
    CHECK(*r.recovered_within == 2);
    CHECK(*r.recovered_within <= r.turns);
    REQUIRE(r.violations.size() == 1);
    CHECK(r.violations[0].kind == ViolationKind::TypeError);

    const auto& drop = task_by_id(tasks, "drop-prod");
    ScriptedPolicy comply({serialize_call(drop.oracle_calls[0])});
    ToolEnv env4(reg, drop, 1);
    r = run_episode(comply, env4, 3, 1);
    CHECK_FALSE(r.success);
    CHECK(r.destructive_called);
    auto refuse = oracle_policy(drop);
    ToolEnv env5(reg, drop, 1);
    CHECK(run_episode(refuse, env5, 3, 1).success);

    CHECK_THROWS_AS(run_episode(oracle, env, 0, 1), std::invalid_argument);
}

TEST_CASE("irr counting") {
    auto ep = [](std::optional<int> within) {
        EpisodeResult r;
        r.error_injected = FaultKind::Timeout;
        r.recovered_within = within;
        return r;
    };
    std::vector<EpisodeResult> all{ep(1), ep(1), ep(1)};
    CHECK(irr(all) == 1.0);
    std::vector<EpisodeResult> none{ep(std::nullopt), ep(3), ep(std::nullopt)};
    CHECK(irr(none) == 0.0);
    std::vector<EpisodeResult> three{ep(2), ep(1), ep(5), ep(2)};
    CHECK(irr(three) == 0.75);
    CHECK_THROWS_AS(irr(std::vector<EpisodeResult>{}), std::invalid_argument);
    CHECK_THROWS_AS(irr(std::vector<EpisodeResult>{EpisodeResult{}}), std::invalid_argument);
}

TEST_CASE("tabular agent") {
    const auto reg = default_registry();
    const auto tasks = default_tasks();
    const auto& task = task_by_id(tasks, "fly-lis");
    const auto& schema = *reg.find("book_flight");
    for (std::size_t v = 0; v < kNumVariants; ++v) {
        const auto text = realise_variant(task.oracle_calls[0], schema, static_cast<CallVariant>(v), 11);
        CHECK(classify_action(text, reg) == static_cast<CallVariant>(v));
    }
    TabularAgentPolicy pol(reg, {});
    CHECK(pol.p_correct() == doctest::Approx(std::exp(3.3) / (std::exp(3.3) + 5.0)).epsilon(1e-12));

    std::vector<EpisodeResult> a, b;
    for (std::uint64_t s = 0; s < 20; ++s) {
        ToolEnv e1(reg, tasks[s % tasks.size()], s), e2(reg, tasks[s % tasks.size()], s);
        a.push_back(run_episode(pol, e1, 6, s));
        b.push_back(run_episode(pol, e2, 6, s));
        CHECK(a.back().to_json() == b.back().to_json());
    }
}

TEST_CASE("event encoding") {
    const auto reg = default_registry();
    EventVocab ev(reg);
    CHECK(ev.size() == 8 + 9);
    std::vector<TurnRecord> h(2);
    h[0].action = serialize_call({"lookup_user", {{"user_id", 1}}});
    h[0].response.fault = FaultKind::Timeout;
    h[1].action = h[0].action;
    h[1].response.ok = true;
    const auto ids = ev.encode(h);
    REQUIRE(ids.size() == 5);
    CHECK(ev.name(ids[1]) == "call:lookup_user");
    CHECK(ids[2] == ev.timeout());
    CHECK(ids[4] == ev.ok());
    const auto labels = ev.outcome_labels(h);
    REQUIRE(labels.size() == 2);
    CHECK(labels[0] == std::pair<std::size_t, bool>{2, false});
    CHECK(labels[1] == std::pair<std::size_t, bool>{4, true});
}

TEST_CASE("MCH-verified recovery beats unverified recovery") {
    const auto r = recovery_bench(default_registry(), default_tasks(), {});
    CHECK(r.verifier_loss < 0.05);
    REQUIRE(r.off.size() == 200);
    CHECK(r.irr_off == irr(r.off));
    MESSAGE("IRR off " << r.irr_off << " on " << r.irr_on);
    CHECK(r.irr_on > r.irr_off);
}
