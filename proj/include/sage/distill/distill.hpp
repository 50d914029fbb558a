#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sage/tools/agent.hpp"
#include "sage/tools/env.hpp"

namespace sage::distill {

using Tokens = std::vector<std::string>;

// Separator placed between a failed trajectory and its critique.
inline const std::string kCritiqueSep = "<critique>";

struct Step {
    std::string action;       // a_t
    std::string observation;  // o_t, the environment response to a_t
    double reward = 0.0;      // r_t
    std::vector<tools::Violation> violations;
    std::optional<tools::FaultKind> fault;
};

struct Trajectory {
    std::string task_id;
    Tokens context;     // x
    Tokens reasoning;   // z: the intended tool sequence
    Tokens conclusion;  // y
    std::vector<Step> steps;
    bool success = false;
    bool destructive_called = false;

    Tokens tokens() const;  // context, then actions
    nlohmann::ordered_json to_json() const;
};

// Rewards: +1 on the final turn of a successful episode, -1 on any turn with
// a validation failure, 0 otherwise.
Trajectory from_episode(const tools::Task& task, const tools::EpisodeResult& episode);

enum class CritiqueKind { Violation, Fault, Unsafe, TaskIncomplete };

struct Critique {
    CritiqueKind kind = CritiqueKind::TaskIncomplete;
    std::optional<tools::ViolationKind> violation_class;
    std::optional<tools::FaultKind> fault;
    std::string param;
    std::string text;

    Tokens tokens() const;
    bool operator==(const Critique&) const = default;
};

// Template text per violation class, with {param}, {type}, {tool} slots.
const std::string& critique_template(tools::ViolationKind kind);
const std::string& critique_template(tools::FaultKind kind);

// Scripted teacher: templated critique of the first violation, else the first
// fault, else an unsafe call, else the checker failure. Throws on success.
Critique teacher_critique(const Trajectory& failed, const tools::Task& task, const tools::SchemaRegistry& registry);

struct CorrectionUnavailable : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Replays the task's oracle actions in a clean environment. Throws
// std::invalid_argument when the critique does not match the trajectory and
// CorrectionUnavailable when the task has no oracle actions or the replay
// fails.
Trajectory teacher_correct(const Trajectory& failed, const Critique& critique, const tools::Task& task,
                           const tools::SchemaRegistry& registry, std::uint64_t seed = 0);

struct PreferencePair {
    Tokens prompt;
    Trajectory chosen;    // label 1
    Trajectory rejected;  // label 0, scored with the critique appended
    Critique critique;

    Tokens rejected_tokens() const;  // rejected ++ separator ++ critique
};

struct BufferRecord {
    Trajectory trajectory;
    int label = 1;
    std::optional<Critique> critique;

    nlohmann::ordered_json to_json() const;
};

struct Buffer {
    std::vector<BufferRecord> records;
    std::vector<PreferencePair> pairs;

    std::size_t positives() const;
    std::size_t negatives() const;
    void append(const Buffer& other);
};

// One record per success; per failure a corrected positive, a critiqued
// negative and the pair joining them.
Buffer build_buffer(std::span<const Trajectory> batch, const std::vector<tools::Task>& tasks,
                    const tools::SchemaRegistry& registry);

// Sum of log-probabilities of the policy's own choices in a trajectory.
class TrajectoryScorer {
public:
    virtual ~TrajectoryScorer() = default;
    virtual double log_prob(const Trajectory& t) const = 0;
};

// -log sigmoid(beta * margin) for one pair.
double dpo_pair_loss(double policy_chosen, double ref_chosen, double policy_rejected, double ref_rejected,
                     double beta);
// Mean over pairs; throws on empty pairs or negative beta. The critique tokens
// are not modelled by the scorers, so they cancel between policy and reference.
double dpo_loss(const TrajectoryScorer& policy, const TrajectoryScorer& reference,
                std::span<const PreferencePair> pairs, double beta);

// Counts of call variants and safety choices in a trajectory: the sufficient
// statistic of its log-probability under a tabular policy.
struct ChoiceCounts {
    std::array<double, tools::kNumVariants> variants{};
    std::array<double, 2> safety{};  // comply, refuse
};
ChoiceCounts choice_counts(const Trajectory& t, const tools::Task& task, const tools::SchemaRegistry& registry);

class TabularScorer final : public TrajectoryScorer {
public:
    TabularScorer(const tools::TabularAgentPolicy& policy, const std::vector<tools::Task>& tasks);
    double log_prob(const Trajectory& t) const override;

private:
    const tools::TabularAgentPolicy& policy_;
    const std::vector<tools::Task>& tasks_;
};

// Gradient steps of dpo_loss on the tabular policy's logits; returns the loss
// before the first step.
double dpo_update(tools::TabularAgentPolicy& policy, const tools::TabularAgentPolicy& reference,
                  std::span<const PreferencePair> pairs, const std::vector<tools::Task>& tasks, double beta,
                  double lr, std::size_t steps);

struct RolloutConfig {
    std::size_t episodes = 40;
    int max_turns = 6;
    std::uint64_t seed = 1;
    double fault_rate = 0.0;  // probability of a fault at turn 1
};

std::vector<Trajectory> rollout(tools::TabularAgentPolicy& policy, const std::vector<tools::Task>& tasks,
                                const tools::SchemaRegistry& registry, const RolloutConfig& config,
                                std::vector<tools::EpisodeResult>* episodes = nullptr);

struct DistillConfig {
    std::size_t epochs = 3;
    RolloutConfig rollout;
    double beta = 0.1;
    double lr = 0.01;  // Adam on the tabular logits
    std::size_t dpo_steps = 10;
};

struct EpochReport {
    std::size_t epoch = 0;
    std::size_t successes = 0;
    std::size_t failures = 0;
    std::size_t buffer_pairs = 0;
    double dpo_loss = 0.0;  // on the buffer, before this epoch's update
    double heldout_dpo_loss = 0.0;  // after the update
    double p_correct = 0.0;
};

// Reflective distillation: per epoch roll out, critique and correct failures,
// grow the buffer, then a DPO update against the frozen reference.
std::vector<EpochReport> reflective_distillation(tools::TabularAgentPolicy& policy,
                                                 const tools::TabularAgentPolicy& reference,
                                                 const std::vector<tools::Task>& tasks,
                                                 const tools::SchemaRegistry& registry, const DistillConfig& config,
                                                 std::span<const PreferencePair> heldout, Buffer* buffer_out = nullptr);

// +1 success, -1 if any call failed serialization or validation, -0.5 per
// hallucinated argument.
double tool_reward(const tools::EpisodeResult& episode);

struct RlConfig {
    std::size_t episodes = 400;
    std::size_t batch = 8;
    double lr = 0.5;
    double baseline_decay = 0.9;  // moving-average baseline
    RolloutConfig rollout;
    std::function<double(const tools::EpisodeResult&)> reward = tool_reward;
};

struct RlReport {
    std::vector<double> mean_reward;  // per update
    std::vector<double> p_correct;    // after each update
};

// Score-function policy gradient on the call and safety logits.
RlReport rl_refine(tools::TabularAgentPolicy& policy, const std::vector<tools::Task>& tasks,
                   const tools::SchemaRegistry& registry, const RlConfig& config);

// Destructive-call fixtures: refusal chosen over compliance.
std::vector<PreferencePair> safety_pairs(const std::vector<tools::Task>& tasks, const tools::SchemaRegistry& registry);

// Hallucination rate of the policy over a fixed fault-free evaluation suite.
double evaluate_hallucination_rate(tools::TabularAgentPolicy& policy, const std::vector<tools::Task>& tasks,
                                   const tools::SchemaRegistry& registry, std::size_t episodes, std::uint64_t seed);

struct PipelineConfig {
    DistillConfig distill{.rollout = {40, 6, 3, 0.3}};
    RolloutConfig heldout{60, 6, 999, 0.3};  // reference-policy failures for held-out pairs
    RlConfig rl{.rollout = {8, 6, 5, 0.0}};
    std::size_t eval_episodes = 2000;
    std::uint64_t eval_seed = 77;
};

struct PipelineReport {
    double base_rate = 0.0;
    double distill_rate = 0.0;
    double rl_rate = 0.0;
    std::vector<EpochReport> epochs;
    RlReport rl;
    Buffer buffer;
    tools::TabularParams final_params;
};

// Base policy, then reflective distillation against the frozen base, then RL
// refinement, with the hallucination rate measured after each stage.
PipelineReport distill_pipeline(const tools::SchemaRegistry& registry, const std::vector<tools::Task>& tasks,
                                const PipelineConfig& config);

}  // namespace sage::distill
