#include "commands.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "common.hpp"
#include "sage/bench/arithmetic_bench.hpp"
#include "sage/common/kv.hpp"
#include "sage/distill/distill.hpp"
#include "sage/reliability/report.hpp"
#include "sage/synthetic/training.hpp"
#include "sage/tools/recovery.hpp"

namespace sage::cli {

namespace {

RunContext context(const std::string& name, const Options& o, std::uint64_t default_seed) {
    if (o.out.empty()) throw UsageError("--out is required");
    RunContext c;
    c.subcommand = name;
    c.config = o.config;
    c.seed = o.seed.value_or(default_seed);
    c.out = o.out;
    if (o.trials) c.args["trials"] = *o.trials;
    if (o.k) c.args["k"] = *o.k;
    if (o.lambda) c.args["lambda"] = *o.lambda;
    if (o.tau) c.args["tau"] = *o.tau;
    if (!o.corpus.empty()) c.args["corpus"] = o.corpus;
    if (!o.checkpoint.empty()) c.args["checkpoint"] = o.checkpoint;
    return c;
}

json optional_int(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }

struct ArithCheckpoint {
    model::SageModel model;
    synthetic::ArithmeticConfig task;
};

ArithCheckpoint load_arith(const std::string& dir) {
    if (dir.empty()) throw UsageError("--checkpoint is required");
    try {
        auto m = model::SageModel::load(dir);
        synthetic::ArithmeticConfig task;
        const auto kv = parse_key_values(read_text_file(std::filesystem::path(dir) / "task.cfg"));
        for (const auto& [k, v] : kv) {
            if (k != "max_operand") throw std::invalid_argument("task.cfg: unknown key '" + k + "'");
            task.max_operand = static_cast<int>(parse_int(k, v));
        }
        if (synthetic::ArithmeticVocab(task.max_operand).size() != m.vocab_size())
            throw std::invalid_argument("task.cfg does not match the model vocabulary");
        return {std::move(m), task};
    } catch (const std::exception& e) {
        throw UsageError("checkpoint " + dir + ": " + e.what());
    }
}

std::vector<synthetic::ArithmeticTask> suite_from(Settings& s, const synthetic::ArithmeticConfig& task,
                                                   const std::string& prefix, std::size_t size, std::uint64_t seed) {
    const std::size_t n = s.count(prefix + "_size", size);
    const auto sd = s.count(prefix + "_seed", seed);
    if (n == 0) throw UsageError(prefix + "_size must be positive");
    return synthetic::make_suite(task, n, sd);
}

}  // namespace

int cmd_make_corpus(const Options& o) {
    auto ctx = context("make-corpus", o, 7);
    auto s = Settings::load(o.config);
    synthetic::ArithmeticConfig tc;
    tc.max_operand = static_cast<int>(s.count("max_operand", 9));
    tc.hallucination_rate = s.number("hallucination_rate", tc.hallucination_rate);
    tc.tricky_hallucination_rate = s.number("tricky_hallucination_rate", tc.tricky_hallucination_rate);
    tc.tricky_min_b = static_cast<int>(s.count("tricky_min_b", static_cast<std::size_t>(tc.tricky_min_b)));
    const auto per_task = static_cast<int>(s.count("per_task", 10));
    s.finish();
    if (tc.max_operand < 1) throw UsageError("max_operand must be at least 1");
    begin_run(ctx);

    const synthetic::ArithmeticVocab v(tc.max_operand);
    const auto corpus = synthetic::make_corpus(tc, v, per_task, ctx.seed);
    std::string out;
    for (const auto& tr : corpus) {
        json j;
        j["ids"] = tr.sequence.tokens;
        j["tokens"] = v.vocab().decode(tr.sequence.tokens);
        std::vector<int> mask;
        for (bool b : tr.sequence.reasoning_mask) mask.push_back(b);
        j["mask"] = mask;
        json labels = json::array();
        for (const auto& [pos, ok] : tr.step_labels) labels.push_back({pos, ok ? 1 : 0});
        j["labels"] = labels;
        j["hallucinated"] = tr.hallucinated;
        out += j.dump() + "\n";
    }
    write_file(ctx.out / "corpus.jsonl", out);
    log_info("make-corpus: " + std::to_string(corpus.size()) + " traces");
    return kOk;
}

namespace {

std::vector<synthetic::LabeledTrace> read_corpus(const std::string& path, int vocab, int max_len) {
    if (path.empty()) throw UsageError("--corpus is required");
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const std::exception& e) {
        throw UsageError(std::string("unreadable corpus: ") + e.what());
    }
    std::vector<synthetic::LabeledTrace> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = json::parse(line);
            synthetic::LabeledTrace tr;
            tr.sequence.tokens = j.at("ids").get<std::vector<int>>();
            for (int b : j.at("mask").get<std::vector<int>>()) tr.sequence.reasoning_mask.push_back(b != 0);
            for (const auto& l : j.at("labels")) tr.step_labels.emplace_back(l.at(0).get<std::size_t>(), l.at(1).get<int>() != 0);
            tr.hallucinated = j.value("hallucinated", false);
            const auto n = tr.sequence.tokens.size();
            if (n < 2 || static_cast<int>(n) > max_len || tr.sequence.reasoning_mask.size() != n)
                throw std::invalid_argument("bad sequence length or mask");
            for (int id : tr.sequence.tokens)
                if (id < 0 || id >= vocab) throw std::invalid_argument("token id out of range");
            for (const auto& [pos, ok] : tr.step_labels)
                if (pos >= n) throw std::invalid_argument("label position out of range");
            out.push_back(std::move(tr));
        } catch (const std::exception& e) {
            throw UsageError("corpus line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (out.empty()) throw UsageError("corpus is empty");
    return out;
}

}  // namespace

int cmd_train(const Options& o) {
    auto ctx = context("train", o, 1);
    auto s = Settings::load(o.config);
    synthetic::TrainConfig tc;
    tc.steps = s.count("steps", tc.steps);
    tc.batch = s.count("batch", tc.batch);
    tc.lr = s.number("lr", tc.lr);
    tc.clip_norm = s.number("clip_norm", tc.clip_norm);
    tc.with_mch = s.flag("with_mch", tc.with_mch);
    const int max_operand = static_cast<int>(s.count("max_operand", 9));
    s.finish();
    if (tc.batch == 0) throw UsageError("batch must be positive");
    const synthetic::ArithmeticVocab v(max_operand);
    const auto mc = synthetic::arithmetic_model_config(v);
    const auto corpus = read_corpus(o.corpus, mc.vocab_size(), mc.max_seq_len);
    begin_run(ctx);

    model::SageModel m(mc, ctx.seed);
    std::string csv = "step,loss,loss_fwd,loss_inv\n";
    tc.on_step = [&](std::size_t step, const model::LossParts& l) {
        csv += std::to_string(step) + "," + fmt(l.total) + "," + fmt(l.fwd) + "," + fmt(l.inv) + "\n";
        if (step % 100 == 0) log_info("train: step " + std::to_string(step) + " loss " + fmt(l.total));
    };
    synthetic::train_arithmetic(m, corpus, tc);
    m.save(ctx.out / "model");
    write_file(ctx.out / "model" / "task.cfg", "max_operand = " + std::to_string(max_operand) + "\n");
    write_file(ctx.out / "loss.csv", csv);
    return kOk;
}

int cmd_rank(const Options& o) {
    auto ctx = context("rank", o, 9);
    auto s = Settings::load(o.config);
    bench::RankConfig rc;
    rc.k = o.k.value_or(16);
    if (rc.k == 0) throw UsageError("--k must be at least 1");
    auto ck = load_arith(o.checkpoint);
    rc.lambda = o.lambda.value_or(ck.model.config().lambda_skepticism);
    rc.temperature = s.number("temperature", rc.temperature);
    rc.max_new = s.count("max_new", rc.max_new);
    rc.seed = ctx.seed;
    const auto suite = suite_from(s, ck.task, "suite", 200, 42);
    const auto calibration = suite_from(s, ck.task, "calibration", 100, 43);
    const bool fixed_floor = s.raw().count("ics_floor") != 0;
    double floor = s.number("ics_floor", 0.0);
    s.finish();
    if (!(rc.temperature > 0.0)) throw UsageError("temperature must be positive");
    begin_run(ctx);

    const synthetic::ArithmeticVocab v(ck.task.max_operand);
    if (!fixed_floor) {
        auto cc = rc;
        cc.seed = rc.seed + 1000003;
        floor = bench::calibrate_ics_floor(bench::rank_suite(ck.model, v, calibration, cc), bench::default_floor_grid());
    }
    const auto records = bench::rank_suite(ck.model, v, suite, rc);
    std::string lines;
    for (const auto& r : records) {
        json j;
        j["a"] = r.task.a;
        j["b"] = r.task.b;
        j["answer"] = r.task.answer();
        json samples = json::array();
        for (const auto& smp : r.samples)
            samples.push_back({{"completion", smp.completion},
                               {"answer", optional_int(smp.answer)},
                               {"logp", smp.logp},
                               {"ics", std::isfinite(smp.ics) ? json(smp.ics) : json(nullptr)}});
        j["samples"] = samples;
        j["energy_winner"] = r.energy_winner;
        j["greedy_winner"] = r.greedy_winner;
        const auto vo = bench::vote(r, floor);
        j["vanilla_vote"] = optional_int(vo.vanilla);
        j["ir_vote"] = optional_int(vo.ir);
        lines += j.dump() + "\n";
    }
    write_file(ctx.out / "rank.jsonl", lines);
    const auto acc = bench::vote_accuracy(records, floor);
    json sum;
    sum["tasks"] = records.size();
    sum["k"] = rc.k;
    sum["lambda"] = rc.lambda;
    sum["ics_floor"] = floor;
    sum["floor_calibrated"] = !fixed_floor;
    sum["accuracy"] = {{"vanilla_vote", acc.vanilla}, {"ir_vote", acc.ir}, {"energy_rerank", acc.energy}};
    write_json(ctx.out / "summary.json", sum);
    log_info("rank: vanilla " + fmt(acc.vanilla) + " ir " + fmt(acc.ir));
    return kOk;
}

int cmd_reliability(const Options& o) {
    auto ctx = context("reliability", o, 1);
    const auto s = Settings::load(o.config);
    reliability::Scenario sc;
    try {
        sc = reliability::Scenario::from_key_values(s.raw());
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("scenario: ") + e.what());
    }
    if (o.trials) sc.mc.trials = *o.trials;
    if (sc.mc.trials == 0) throw UsageError("--trials must be positive");
    if (o.seed) sc.mc.seed = *o.seed;
    ctx.seed = sc.mc.seed;
    begin_run(ctx);

    const auto r = reliability::run_lab(sc);
    auto j = r.to_json();
    const auto& p = sc.params;
    j["params"] = {{"eps", p.eps},         {"alpha", p.alpha},   {"beta_spec", p.beta_spec},
                   {"eps_retry", p.eps_retry}, {"s_engage", p.s_engage}, {"p_recovered", p.p_recovered},
                   {"n_steps", p.n_steps}, {"c_base", p.c_base}, {"c_mch", p.c_mch},
                   {"mu", p.mu},           {"trials", sc.mc.trials}, {"seed", sc.mc.seed}};
    write_json(ctx.out / "report.json", j);
    write_file(ctx.out / "survival.csv", r.survival_csv());
    write_file(ctx.out / "variance.csv", r.variance_csv());
    for (const auto& c : r.checks)
        log_info(std::string(c.passed ? "pass" : (c.asserted ? "FAIL" : "note")) + "  " + c.name);
    return r.all_passed() ? kOk : kCheckFailed;
}

int cmd_gate_bench(const Options& o) {
    auto ctx = context("gate-bench", o, 0);
    auto s = Settings::load(o.config);
    auto ck = load_arith(o.checkpoint);
    bench::GateBenchConfig gc;
    gc.c_base = s.number("c_base", gc.c_base);
    gc.c_mch = s.number("c_mch", gc.c_mch);
    gc.max_new = s.count("max_new", gc.max_new);
    gc.las.k_candidates = s.count("las_k", gc.las.k_candidates);
    gc.las.depth = s.count("las_depth", gc.las.depth);
    gc.las.stability_threshold = s.number("las_threshold", gc.las.stability_threshold);
    gc.target_mus = s.numbers("target_mus", gc.target_mus);
    gc.seed = ctx.seed;
    const auto suite = suite_from(s, ck.task, "suite", 200, 42);
    const auto calibration = suite_from(s, ck.task, "calibration", 100, 43);
    s.finish();
    if (gc.las.k_candidates == 0 || gc.las.depth == 0) throw UsageError("las_k and las_depth must be positive");
    if (!(gc.c_base > 0.0) || gc.c_mch < 0.0) throw UsageError("unit costs must be c_base > 0, c_mch >= 0");
    for (double mu : gc.target_mus)
        if (!(mu >= 0.0 && mu <= 1.0)) throw UsageError("target_mus must lie in [0,1]");
    begin_run(ctx);

    const synthetic::ArithmeticVocab v(ck.task.max_operand);
    std::vector<bench::GateRow> rows;
    if (o.tau) {
        rows.push_back(bench::run_gate(ck.model, v, suite, std::numeric_limits<double>::infinity(), gc));
        rows.push_back(bench::run_gate(ck.model, v, suite, -std::numeric_limits<double>::infinity(), gc));
        rows.push_back(bench::run_gate(ck.model, v, suite, *o.tau, gc));
    } else {
        rows = bench::gate_bench(ck.model, v, suite, calibration, gc);
    }
    const auto& slow = rows[1];
    std::string csv = "mode,tau,target_mu,accuracy,cost,mu,steps,accuracy_vs_slow,cost_vs_slow\n";
    json jr = json::array();
    for (const auto& r : rows) {
        csv += r.mode + "," + fmt(r.tau) + "," + fmt(r.target_mu) + "," + fmt(r.accuracy) + "," + fmt(r.cost) + "," +
               fmt(r.mu) + "," + std::to_string(r.steps) + "," + fmt(r.accuracy / slow.accuracy) + "," +
               fmt(r.cost / slow.cost) + "\n";
        jr.push_back({{"mode", r.mode},
                      {"tau", std::isfinite(r.tau) ? json(r.tau) : json(fmt(r.tau))},
                      {"target_mu", std::isnan(r.target_mu) ? json(nullptr) : json(r.target_mu)},
                      {"accuracy", r.accuracy},
                      {"cost", r.cost},
                      {"mu", r.mu}});
    }
    write_file(ctx.out / "gate.csv", csv);
    json sum;
    sum["rows"] = jr;
    sum["efficient_rows"] = bench::efficient_rows(rows).size();
    write_json(ctx.out / "summary.json", sum);
    log_info("gate-bench: " + std::to_string(rows.size()) + " rows");
    return kOk;
}

int cmd_distill(const Options& o) {
    auto ctx = context("distill", o, 3);
    auto s = Settings::load(o.config);
    distill::PipelineConfig pc;
    auto& dc = pc.distill;
    dc.epochs = s.count("epochs", dc.epochs);
    dc.dpo_steps = s.count("dpo_steps", dc.dpo_steps);
    dc.lr = s.number("lr", dc.lr);
    dc.beta = s.number("beta", dc.beta);
    dc.rollout.episodes = s.count("rollout_episodes", dc.rollout.episodes);
    dc.rollout.max_turns = static_cast<int>(s.count("max_turns", static_cast<std::size_t>(dc.rollout.max_turns)));
    dc.rollout.fault_rate = s.number("fault_rate", dc.rollout.fault_rate);
    dc.rollout.seed = ctx.seed;
    pc.heldout.episodes = s.count("heldout_episodes", pc.heldout.episodes);
    pc.heldout.seed = s.count("heldout_seed", pc.heldout.seed);
    pc.heldout.fault_rate = dc.rollout.fault_rate;
    pc.heldout.max_turns = dc.rollout.max_turns;
    pc.rl.episodes = s.count("rl_episodes", pc.rl.episodes);
    pc.rl.batch = s.count("rl_batch", pc.rl.batch);
    pc.rl.lr = s.number("rl_lr", pc.rl.lr);
    pc.rl.rollout.seed = s.count("rl_seed", pc.rl.rollout.seed);
    pc.rl.rollout.max_turns = dc.rollout.max_turns;
    pc.eval_episodes = o.trials.value_or(s.count("eval_episodes", pc.eval_episodes));
    pc.eval_seed = s.count("eval_seed", pc.eval_seed);
    s.finish();
    if (dc.epochs == 0 || pc.eval_episodes == 0 || pc.rl.episodes == 0 || pc.rl.batch == 0)
        throw UsageError("epochs, eval_episodes, rl_episodes and rl_batch must be positive");
    if (!(dc.beta >= 0.0)) throw UsageError("beta must be non-negative");
    if (!(dc.rollout.fault_rate >= 0.0 && dc.rollout.fault_rate <= 1.0)) throw UsageError("fault_rate must lie in [0,1]");
    begin_run(ctx);

    const auto reg = tools::default_registry();
    const auto tasks = tools::default_tasks();
    const auto r = distill::distill_pipeline(reg, tasks, pc);

    std::string ep = "epoch,successes,failures,buffer_pairs,dpo_loss,heldout_dpo_loss,p_correct\n";
    for (const auto& e : r.epochs)
        ep += std::to_string(e.epoch) + "," + std::to_string(e.successes) + "," + std::to_string(e.failures) + "," +
              std::to_string(e.buffer_pairs) + "," + fmt(e.dpo_loss) + "," + fmt(e.heldout_dpo_loss) + "," +
              fmt(e.p_correct) + "\n";
    write_file(ctx.out / "epochs.csv", ep);
    std::string rl = "update,mean_reward,p_correct\n";
    for (std::size_t i = 0; i < r.rl.p_correct.size(); ++i)
        rl += std::to_string(i + 1) + "," + fmt(r.rl.mean_reward[i]) + "," + fmt(r.rl.p_correct[i]) + "\n";
    write_file(ctx.out / "rl.csv", rl);
    write_file(ctx.out / "hallucination.csv", "stage,rate\nbase," + fmt(r.base_rate) + "\ndistill," +
                                                  fmt(r.distill_rate) + "\nrl," + fmt(r.rl_rate) + "\n");
    std::string buf;
    for (const auto& rec : r.buffer.records) buf += rec.to_json().dump() + "\n";
    write_file(ctx.out / "buffer.jsonl", buf);
    json sum;
    sum["hallucination_rate"] = {{"base", r.base_rate}, {"distill", r.distill_rate}, {"rl", r.rl_rate}};
    sum["ordering_holds"] = r.base_rate >= r.distill_rate && r.distill_rate >= r.rl_rate;
    sum["buffer"] = {{"records", r.buffer.records.size()}, {"pairs", r.buffer.pairs.size()}};
    sum["final_call_logits"] = r.final_params.call_logits;
    sum["final_safety_logits"] = r.final_params.safety_logits;
    write_json(ctx.out / "summary.json", sum);
    log_info("distill: hallucination " + fmt(r.base_rate) + " -> " + fmt(r.distill_rate) + " -> " + fmt(r.rl_rate));
    return kOk;
}

int cmd_eval_tools(const Options& o) {
    auto ctx = context("eval-tools", o, 0);
    auto s = Settings::load(o.config);
    distill::RolloutConfig rc;
    rc.episodes = o.trials.value_or(s.count("episodes", 200));
    rc.max_turns = static_cast<int>(s.count("max_turns", 6));
    rc.fault_rate = s.number("fault_rate", 0.3);
    rc.seed = ctx.seed;
    const bool recovery = s.flag("recovery", true);
    tools::RecoveryBenchConfig bc;
    bc.verifier_steps = s.count("verifier_steps", bc.verifier_steps);
    bc.eval_episodes = static_cast<int>(s.count("recovery_episodes", static_cast<std::size_t>(bc.eval_episodes)));
    bc.seed = ctx.seed;
    s.finish();
    if (rc.episodes == 0 || rc.max_turns <= 0) throw UsageError("episodes and max_turns must be positive");
    if (!(rc.fault_rate >= 0.0 && rc.fault_rate <= 1.0)) throw UsageError("fault_rate must lie in [0,1]");
    begin_run(ctx);

    const auto reg = tools::default_registry();
    const auto tasks = tools::default_tasks();
    tools::TabularAgentPolicy policy(reg, {});
    std::vector<tools::EpisodeResult> episodes;
    distill::rollout(policy, tasks, reg, rc, &episodes);
    std::string lines;
    std::size_t successes = 0, destructive = 0;
    for (const auto& e : episodes) {
        lines += e.to_json().dump() + "\n";
        successes += e.success;
        destructive += e.destructive_called;
    }
    write_file(ctx.out / "episodes.jsonl", lines);
    json sum;
    sum["episodes"] = episodes.size();
    sum["success_rate"] = static_cast<double>(successes) / static_cast<double>(episodes.size());
    sum["hallucination_rate"] = tools::hallucination_rate(episodes);
    std::vector<tools::EpisodeResult> faulted;
    for (const auto& e : episodes)
        if (e.error_injected) faulted.push_back(e);
    sum["faulted_episodes"] = faulted.size();
    sum["irr"] = faulted.empty() ? json(nullptr) : json(tools::irr(faulted));
    sum["destructive_calls"] = destructive;
    if (recovery) {
        const auto r = tools::recovery_bench(reg, tasks, bc);
        sum["recovery"] = {{"irr_unverified", r.irr_off}, {"irr_mch", r.irr_on}, {"verifier_loss", r.verifier_loss}};
        log_info("eval-tools: IRR " + fmt(r.irr_off) + " -> " + fmt(r.irr_on) + " with MCH");
    }
    write_json(ctx.out / "summary.json", sum);
    return kOk;
}

}  // namespace sage::cli
