#include "sage/tools/recovery.hpp"

#include <memory>
#include <stdexcept>

namespace sage::tools {

std::vector<EpisodeResult> run_benign(const SchemaRegistry& registry, const std::vector<Task>& tasks,
                                      const StepVerifier* verifier, std::uint64_t seed, int episodes, bool inject,
                                      int max_turns) {
    std::vector<Task> benign;
    for (const auto& t : tasks)
        if (!t.malicious) benign.push_back(t);
    if (benign.empty()) throw std::invalid_argument("run_benign: no benign tasks");
    TabularAgentPolicy pol(registry, {}, verifier);
    std::vector<EpisodeResult> out;
    for (int i = 0; i < episodes; ++i) {
        const auto u = static_cast<std::uint64_t>(i);
        ToolEnv env(registry, benign[u % benign.size()], seed + u);
        if (inject) env.inject_error(i % 2 ? FaultKind::Timeout : FaultKind::ParameterMismatch, 1);
        out.push_back(run_episode(pol, env, max_turns, seed * 7919 + u));
    }
    return out;
}

RecoveryBenchResult recovery_bench(const SchemaRegistry& registry, const std::vector<Task>& tasks,
                                   const RecoveryBenchConfig& c) {
    auto train = run_benign(registry, tasks, nullptr, c.seed + 100, c.train_episodes, true, c.max_turns);
    const auto clean = run_benign(registry, tasks, nullptr, c.seed + 500, c.clean_episodes, false, c.max_turns);
    train.insert(train.end(), clean.begin(), clean.end());
    EventVocab ev(registry);
    auto m = std::make_shared<model::SageModel>(verifier_model_config(ev), c.seed + 3);
    RecoveryBenchResult r;
    r.verifier_loss = train_mch_verifier(*m, ev, train, c.verifier_steps, c.verifier_lr);
    MchVerifier ver(m, ev);
    r.off = run_benign(registry, tasks, nullptr, c.seed + 9000, c.eval_episodes, true, c.max_turns);
    r.on = run_benign(registry, tasks, &ver, c.seed + 9000, c.eval_episodes, true, c.max_turns);
    r.irr_off = irr(r.off);
    r.irr_on = irr(r.on);
    return r;
}

}  // namespace sage::tools
