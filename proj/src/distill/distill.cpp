#include "sage/distill/distill.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "sage/ad/graph.hpp"
#include "sage/ad/ops.hpp"
#include "sage/inverse/gradient.hpp"
#include "sage/model/model.hpp"

namespace sage::distill {

using tools::json;

Tokens Trajectory::tokens() const {
    Tokens out = context;
    for (const auto& s : steps) out.push_back(s.action);
    return out;
}

json Trajectory::to_json() const {
    json j;
    j["task_id"] = task_id;
    j["context"] = context;
    j["reasoning"] = reasoning;
    j["conclusion"] = conclusion;
    j["success"] = success;
    j["steps"] = json::array();
    for (const auto& s : steps) j["steps"].push_back({{"action", s.action}, {"observation", s.observation}, {"reward", s.reward}});
    return j;
}

Trajectory from_episode(const tools::Task& task, const tools::EpisodeResult& episode) {
    Trajectory t;
    t.task_id = task.id;
    t.context = {task.id, task.instruction};
    for (const auto& c : task.oracle_calls) t.reasoning.push_back(c.name);
    t.success = episode.success;
    t.destructive_called = episode.destructive_called;
    for (std::size_t i = 0; i < episode.transcript.size(); ++i) {
        const auto& rec = episode.transcript[i];
        Step s;
        s.action = rec.action;
        s.observation = rec.response.to_json().dump();
        s.violations = rec.response.violations;
        s.fault = rec.response.fault;
        if (!s.violations.empty()) s.reward = -1.0;
        if (episode.success && i + 1 == episode.transcript.size()) s.reward = 1.0;
        t.steps.push_back(std::move(s));
    }
    if (!episode.transcript.empty()) {
        const auto& last = episode.transcript.back();
        t.conclusion = {last.done ? "done" : last.response.result.dump()};
    }
    return t;
}

Tokens Critique::tokens() const { return {text}; }

const std::string& critique_template(tools::ViolationKind kind) {
    static const std::map<tools::ViolationKind, std::string> table{
        {tools::ViolationKind::TypeError, "Parameter '{param}' of {tool} must be {type}."},
        {tools::ViolationKind::HallucinatedKey, "Remove '{param}': {tool} has no such parameter."},
        {tools::ViolationKind::MissingRequired, "Add the required parameter '{param}' to {tool}."},
        {tools::ViolationKind::LogicError, "Value of '{param}' is outside the domain {tool} declares."},
        {tools::ViolationKind::Malformed, "Emit one JSON object with a single \"tool_call\" key."},
        {tools::ViolationKind::UnknownTool, "Use only tools from the schema list."},
    };
    return table.at(kind);
}

const std::string& critique_template(tools::FaultKind kind) {
    static const std::string timeout = "The tool timed out: retry with backoff.";
    static const std::string mismatch = "The service rejected '{param}': re-send the call exactly as declared.";
    return kind == tools::FaultKind::Timeout ? timeout : mismatch;
}

namespace {

const std::string kUnsafe = "Refuse destructive requests such as {tool}.";
const std::string kIncomplete = "The task is incomplete: call {tool} next.";

std::string fill(std::string text, const std::string& slot, const std::string& value) {
    for (auto pos = text.find(slot); pos != std::string::npos; pos = text.find(slot, pos + value.size())) {
        text.replace(pos, slot.size(), value);
    }
    return text;
}

std::string render(const std::string& tmpl, const std::string& param, const std::string& tool, const std::string& type) {
    return fill(fill(fill(tmpl, "{param}", param), "{tool}", tool), "{type}", type);
}

const tools::Task& find_task(const std::vector<tools::Task>& tasks, const std::string& id) {
    for (const auto& t : tasks)
        if (t.id == id) return t;
    throw std::invalid_argument("unknown task '" + id + "'");
}

}  // namespace

Critique teacher_critique(const Trajectory& failed, const tools::Task& task, const tools::SchemaRegistry& registry) {
    if (failed.success) throw std::invalid_argument("teacher_critique: trajectory succeeded");
    Critique c;
    for (const auto& s : failed.steps) {
        const auto call = tools::parse_call(s.action);
        const std::string tool = call ? call->name : "the tool";
        if (!s.violations.empty()) {
            const auto& v = s.violations.front();
            c.kind = CritiqueKind::Violation;
            c.violation_class = v.kind;
            c.param = v.param;
            std::string type;
            if (const auto* schema = call ? registry.find(call->name) : nullptr) {
                if (const auto* p = schema->find(v.param)) type = tools::to_string(p->type);
            }
            c.text = render(critique_template(v.kind), v.param, tool, type);
            return c;
        }
        if (s.fault) {
            c.kind = CritiqueKind::Fault;
            c.fault = s.fault;
            if (*s.fault == tools::FaultKind::ParameterMismatch) {
                const auto obs = json::parse(s.observation, nullptr, false);
                if (obs.is_object() && obs.contains("result")) c.param = obs["result"].get<std::string>();
            }
            c.text = render(critique_template(*s.fault), c.param, tool, "");
            return c;
        }
    }
    if (failed.destructive_called) {
        c.kind = CritiqueKind::Unsafe;
        c.text = render(kUnsafe, "", task.oracle_calls.empty() ? "destructive tools" : task.oracle_calls.front().name, "");
        return c;
    }
    std::size_t done = 0;
    for (const auto& s : failed.steps) {
        const auto obs = json::parse(s.observation, nullptr, false);
        done += obs.is_object() && obs.value("ok", false) && tools::parse_call(s.action).has_value();
    }
    const std::string next = task.oracle_calls.empty()
                                 ? "the right tool"
                                 : task.oracle_calls[std::min(done, task.oracle_calls.size() - 1)].name;
    c.kind = CritiqueKind::TaskIncomplete;
    c.text = render(kIncomplete, "", next, "");
    return c;
}

Trajectory teacher_correct(const Trajectory& failed, const Critique& critique, const tools::Task& task,
                           const tools::SchemaRegistry& registry, std::uint64_t seed) {
    if (!(teacher_critique(failed, task, registry) == critique)) {
        throw std::invalid_argument("teacher_correct: critique does not match the trajectory");
    }
    if (task.oracle_calls.empty()) throw CorrectionUnavailable("task '" + task.id + "' has no oracle actions");
    auto policy = tools::oracle_policy(task);
    tools::ToolEnv env(registry, task, seed);
    const auto ep = tools::run_episode(policy, env, static_cast<int>(task.oracle_calls.size()) + 1, seed);
    if (!ep.success) throw CorrectionUnavailable("oracle replay failed for task '" + task.id + "'");
    return from_episode(task, ep);
}

Tokens PreferencePair::rejected_tokens() const {
    auto out = rejected.tokens();
    out.push_back(kCritiqueSep);
    for (const auto& t : critique.tokens()) out.push_back(t);
    return out;
}

json BufferRecord::to_json() const {
    json j;
    j["task_id"] = trajectory.task_id;
    j["label"] = label;
    j["tokens"] = trajectory.tokens();
    if (critique) {
        j["tokens"].push_back(kCritiqueSep);
        j["tokens"].push_back(critique->text);
        j["critique"] = critique->text;
    }
    return j;
}

std::size_t Buffer::positives() const {
    return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const auto& r) { return r.label == 1; }));
}

std::size_t Buffer::negatives() const { return records.size() - positives(); }

void Buffer::append(const Buffer& other) {
    records.insert(records.end(), other.records.begin(), other.records.end());
    pairs.insert(pairs.end(), other.pairs.begin(), other.pairs.end());
}

Buffer build_buffer(std::span<const Trajectory> batch, const std::vector<tools::Task>& tasks,
                    const tools::SchemaRegistry& registry) {
    Buffer b;
    for (const auto& t : batch) {
        if (t.success) {
            b.records.push_back({t, 1, std::nullopt});
            continue;
        }
        const auto& task = find_task(tasks, t.task_id);
        auto c = teacher_critique(t, task, registry);
        auto fixed = teacher_correct(t, c, task, registry);
        b.records.push_back({fixed, 1, std::nullopt});
        b.records.push_back({t, 0, c});
        b.pairs.push_back({t.context, fixed, t, c});
    }
    return b;
}

double dpo_pair_loss(double policy_chosen, double ref_chosen, double policy_rejected, double ref_rejected,
                     double beta) {
    const double z = beta * ((policy_chosen - ref_chosen) - (policy_rejected - ref_rejected));
    // -log sigmoid(z), stable for large |z|
    return z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

double dpo_loss(const TrajectoryScorer& policy, const TrajectoryScorer& reference,
                std::span<const PreferencePair> pairs, double beta) {
    if (pairs.empty()) throw std::invalid_argument("dpo_loss: no pairs");
    if (!(beta >= 0.0)) throw std::invalid_argument("dpo_loss: beta must be >= 0");
    double s = 0.0;
    for (const auto& p : pairs) {
        s += dpo_pair_loss(policy.log_prob(p.chosen), reference.log_prob(p.chosen), policy.log_prob(p.rejected),
                           reference.log_prob(p.rejected), beta);
    }
    return s / static_cast<double>(pairs.size());
}

ChoiceCounts choice_counts(const Trajectory& t, const tools::Task& task, const tools::SchemaRegistry& registry) {
    ChoiceCounts c;
    if (task.malicious) {
        const bool comply = std::any_of(t.steps.begin(), t.steps.end(), [](const Step& s) { return s.action != tools::kDoneAction; });
        c.safety[comply ? 0 : 1] = 1.0;
        return c;
    }
    for (const auto& s : t.steps) {
        if (s.action == tools::kDoneAction) continue;
        c.variants[static_cast<std::size_t>(tools::classify_action(s.action, registry))] += 1.0;
    }
    return c;
}

namespace {

std::vector<double> log_softmax(std::span<const double> z) {
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    std::vector<double> out;
    for (double v : z) out.push_back(v - m - std::log(s));
    return out;
}

double tabular_log_prob(const tools::TabularAgentPolicy& p, const ChoiceCounts& c) {
    const auto lv = log_softmax(p.call_logits().data());
    const auto ls = log_softmax(p.safety_logits().data());
    double s = 0.0;
    for (std::size_t i = 0; i < lv.size(); ++i)
        if (c.variants[i] != 0.0) s += c.variants[i] * lv[i];
    for (std::size_t i = 0; i < ls.size(); ++i)
        if (c.safety[i] != 0.0) s += c.safety[i] * ls[i];
    return s;
}

}  // namespace

TabularScorer::TabularScorer(const tools::TabularAgentPolicy& policy, const std::vector<tools::Task>& tasks)
    : policy_(policy), tasks_(tasks) {}

double TabularScorer::log_prob(const Trajectory& t) const {
    return tabular_log_prob(policy_, choice_counts(t, find_task(tasks_, t.task_id), policy_.registry()));
}

double dpo_update(tools::TabularAgentPolicy& policy, const tools::TabularAgentPolicy& reference,
                  std::span<const PreferencePair> pairs, const std::vector<tools::Task>& tasks, double beta,
                  double lr, std::size_t steps) {
    if (pairs.empty()) throw std::invalid_argument("dpo_update: no pairs");
    const auto& reg = policy.registry();
    struct Prepared {
        ad::Tensor dv, ds;
        double ref_margin;
    };
    std::vector<Prepared> prep;
    for (const auto& p : pairs) {
        const auto cc = choice_counts(p.chosen, find_task(tasks, p.chosen.task_id), reg);
        const auto cr = choice_counts(p.rejected, find_task(tasks, p.rejected.task_id), reg);
        std::vector<double> dv, ds;
        for (std::size_t i = 0; i < cc.variants.size(); ++i) dv.push_back(cc.variants[i] - cr.variants[i]);
        for (std::size_t i = 0; i < cc.safety.size(); ++i) ds.push_back(cc.safety[i] - cr.safety[i]);
        prep.push_back({ad::Tensor::matrix(1, dv.size(), dv), ad::Tensor::matrix(1, ds.size(), ds),
                        tabular_log_prob(reference, cc) - tabular_log_prob(reference, cr)});
    }
    model::Adam opt({&policy.call_logits(), &policy.safety_logits()}, {.lr = lr});
    double first = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t s = 0; s < steps; ++s) {
        opt.zero_grad();
        ad::Graph g;
        auto lv = ad::log_softmax_rows(g.parameter(policy.call_logits()));
        auto ls = ad::log_softmax_rows(g.parameter(policy.safety_logits()));
        ad::Var acc;
        for (const auto& p : prep) {
            auto logratio = ad::add(ad::sum(ad::mul(lv, g.constant(p.dv))), ad::sum(ad::mul(ls, g.constant(p.ds))));
            auto l = ad::scale(ad::log_sigmoid(ad::affine(logratio, beta, -beta * p.ref_margin)), -1.0);
            acc = acc.valid() ? ad::add(acc, l) : l;
        }
        auto loss = ad::scale(acc, 1.0 / static_cast<double>(prep.size()));
        if (s == 0) first = loss.item();
        g.backward(loss);
        opt.step();
    }
    return first;
}

std::vector<Trajectory> rollout(tools::TabularAgentPolicy& policy, const std::vector<tools::Task>& tasks,
                                const tools::SchemaRegistry& registry, const RolloutConfig& config,
                                std::vector<tools::EpisodeResult>* episodes) {
    if (tasks.empty()) throw std::invalid_argument("rollout: no tasks");
    std::mt19937_64 rng(config.seed);
    std::bernoulli_distribution fault(config.fault_rate);
    std::vector<Trajectory> out;
    for (std::size_t i = 0; i < config.episodes; ++i) {
        const auto& task = tasks[i % tasks.size()];
        tools::ToolEnv env(registry, task, rng());
        if (fault(rng)) env.inject_error(i % 2 ? tools::FaultKind::Timeout : tools::FaultKind::ParameterMismatch, 1);
        const auto ep = tools::run_episode(policy, env, config.max_turns, rng());
        out.push_back(from_episode(task, ep));
        if (episodes) episodes->push_back(ep);
    }
    return out;
}

std::vector<EpochReport> reflective_distillation(tools::TabularAgentPolicy& policy,
                                                 const tools::TabularAgentPolicy& reference,
                                                 const std::vector<tools::Task>& tasks,
                                                 const tools::SchemaRegistry& registry, const DistillConfig& config,
                                                 std::span<const PreferencePair> heldout, Buffer* buffer_out) {
    Buffer buffer;
    std::vector<EpochReport> reports;
    for (std::size_t e = 1; e <= config.epochs; ++e) {
        auto rc = config.rollout;
        rc.seed = config.rollout.seed * 7919 + e;
        const auto batch = rollout(policy, tasks, registry, rc);
        buffer.append(build_buffer(batch, tasks, registry));
        EpochReport r;
        r.epoch = e;
        for (const auto& t : batch) (t.success ? r.successes : r.failures) += 1;
        r.buffer_pairs = buffer.pairs.size();
        if (!buffer.pairs.empty()) {
            r.dpo_loss = dpo_update(policy, reference, buffer.pairs, tasks, config.beta, config.lr, config.dpo_steps);
        }
        r.heldout_dpo_loss = heldout.empty() ? std::numeric_limits<double>::quiet_NaN()
                                             : dpo_loss(TabularScorer(policy, tasks), TabularScorer(reference, tasks),
                                                        heldout, config.beta);
        r.p_correct = policy.p_correct();
        reports.push_back(r);
    }
    if (buffer_out) *buffer_out = std::move(buffer);
    return reports;
}

double tool_reward(const tools::EpisodeResult& episode) {
    double r = episode.success ? 1.0 : 0.0;
    if (!episode.violations.empty()) r -= 1.0;
    for (const auto& v : episode.violations) r -= v.kind == tools::ViolationKind::HallucinatedKey ? 0.5 : 0.0;
    return r;
}

RlReport rl_refine(tools::TabularAgentPolicy& policy, const std::vector<tools::Task>& tasks,
                   const tools::SchemaRegistry& registry, const RlConfig& config) {
    if (config.episodes == 0 || config.batch == 0) throw std::invalid_argument("rl_refine: episodes and batch must be >= 1");
    RlReport rep;
    double baseline = 0.0;
    const std::size_t updates = (config.episodes + config.batch - 1) / config.batch;
    auto& cl = policy.call_logits();
    auto& sl = policy.safety_logits();
    for (std::size_t u = 0; u < updates; ++u) {
        auto rc = config.rollout;
        rc.episodes = config.batch;
        rc.seed = config.rollout.seed * 104729 + u;
        std::vector<tools::EpisodeResult> eps;
        const auto trajs = rollout(policy, tasks, registry, rc, &eps);
        const auto pv = policy.variant_probs();
        const double pc = policy.p_comply();
        std::vector<std::vector<double>> grads;
        std::vector<double> rewards;
        for (std::size_t i = 0; i < trajs.size(); ++i) {
            const auto c = choice_counts(trajs[i], tasks[i % tasks.size()], registry);
            double n = 0.0, ns = 0.0;
            for (double v : c.variants) n += v;
            for (double v : c.safety) ns += v;
            std::vector<double> g;
            for (std::size_t k = 0; k < pv.size(); ++k) g.push_back(c.variants[k] - n * pv[k]);
            g.push_back(c.safety[0] - ns * pc);
            g.push_back(c.safety[1] - ns * (1.0 - pc));
            grads.push_back(std::move(g));
            rewards.push_back(config.reward(eps[i]));
        }
        const auto g = inverse::score_function_estimate(grads, rewards, baseline);
        for (std::size_t k = 0; k < cl.size(); ++k) cl[k] += config.lr * g[k];
        for (std::size_t k = 0; k < sl.size(); ++k) sl[k] += config.lr * g[cl.size() + k];
        double mean = 0.0;
        for (double r : rewards) mean += r / static_cast<double>(rewards.size());
        baseline = config.baseline_decay * baseline + (1.0 - config.baseline_decay) * mean;
        rep.mean_reward.push_back(mean);
        rep.p_correct.push_back(policy.p_correct());
    }
    return rep;
}

std::vector<PreferencePair> safety_pairs(const std::vector<tools::Task>& tasks, const tools::SchemaRegistry& registry) {
    std::vector<PreferencePair> out;
    for (const auto& task : tasks) {
        if (!task.malicious || task.oracle_calls.empty()) continue;
        tools::ScriptedPolicy comply({tools::serialize_call(task.oracle_calls.front())});
        tools::ToolEnv env(registry, task, 0);
        const auto bad = from_episode(task, tools::run_episode(comply, env, 2, 0));
        const auto c = teacher_critique(bad, task, registry);
        out.push_back({bad.context, teacher_correct(bad, c, task, registry), bad, c});
    }
    return out;
}

double evaluate_hallucination_rate(tools::TabularAgentPolicy& policy, const std::vector<tools::Task>& tasks,
                                   const tools::SchemaRegistry& registry, std::size_t episodes, std::uint64_t seed) {
    std::vector<tools::Task> benign;
    for (const auto& t : tasks)
        if (!t.malicious) benign.push_back(t);
    std::vector<tools::EpisodeResult> eps;
    rollout(policy, benign, registry, {episodes, 6, seed, 0.0}, &eps);
    return tools::hallucination_rate(eps);
}

PipelineReport distill_pipeline(const tools::SchemaRegistry& registry, const std::vector<tools::Task>& tasks,
                                const PipelineConfig& config) {
    tools::TabularAgentPolicy reference(registry, {}), policy(registry, {});
    PipelineReport r;
    r.base_rate = evaluate_hallucination_rate(policy, tasks, registry, config.eval_episodes, config.eval_seed);
    const auto held = build_buffer(rollout(reference, tasks, registry, config.heldout), tasks, registry);
    r.epochs = reflective_distillation(policy, reference, tasks, registry, config.distill, held.pairs, &r.buffer);
    r.distill_rate = evaluate_hallucination_rate(policy, tasks, registry, config.eval_episodes, config.eval_seed);
    r.rl = rl_refine(policy, tasks, registry, config.rl);
    r.rl_rate = evaluate_hallucination_rate(policy, tasks, registry, config.eval_episodes, config.eval_seed);
    r.final_params = policy.params();
    return r;
}

}  // namespace sage::distill
