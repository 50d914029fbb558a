#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sage/ad/tensor.hpp"
#include "sage/model/model.hpp"
#include "sage/tools/env.hpp"

namespace sage::tools {

// Ways the tabular agent can realise an intended call.
enum class CallVariant { Correct, TypeError, HallucinatedKey, LogicError, MissingRequired, Malformed };
inline constexpr std::size_t kNumVariants = 6;
std::string to_string(CallVariant v);

// Which variant an emitted action text is, judged by validation against the
// intended call.
CallVariant classify_action(const std::string& action, const SchemaRegistry& registry);

// Deterministic realisation of a variant of `call`.
std::string realise_variant(const ToolCall& call, const ToolSchema& schema, CallVariant v, std::uint64_t seed);

enum class Recovery { Retry, Skip, Conclude };
inline constexpr std::size_t kNumRecovery = 3;

// Estimates whether the episode so far is on track, in (0, 1).
class StepVerifier {
public:
    virtual ~StepVerifier() = default;
    virtual double confidence(const std::vector<TurnRecord>& history) const = 0;
};

// Event tokens for transcripts: <bos>, one call token per tool, call:?, and
// response outcomes.
class EventVocab {
public:
    explicit EventVocab(const SchemaRegistry& registry);
    int size() const noexcept { return static_cast<int>(names_.size()); }
    const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
    model::TokenSeq encode(const std::vector<TurnRecord>& history) const;
    // Position of each response token in encode(history), with whether it was ok.
    std::vector<std::pair<std::size_t, bool>> outcome_labels(const std::vector<TurnRecord>& history) const;

    int bos() const { return 0; }
    int unknown_call() const { return 1; }
    int done() const { return 2; }
    int ok() const { return 3; }
    int tool_error() const { return 4; }
    int timeout() const { return 5; }
    int mismatch() const { return 6; }
    int violation() const { return 7; }

private:
    int outcome(const TurnRecord& t) const;
    std::vector<std::string> names_;
    std::map<std::string, int> call_ids_;
};

// Confidence from a SageModel's meta-cognitive head over event tokens.
class MchVerifier final : public StepVerifier {
public:
    MchVerifier(std::shared_ptr<const model::SageModel> model, EventVocab vocab);
    double confidence(const std::vector<TurnRecord>& history) const override;

private:
    std::shared_ptr<const model::SageModel> model_;
    EventVocab vocab_;
};

model::ModelConfig verifier_model_config(const EventVocab& vocab);
// Trains only the confidence head objective on outcome labels; returns the
// final mean loss.
double train_mch_verifier(model::SageModel& m, const EventVocab& vocab, const std::vector<EpisodeResult>& episodes,
                          std::size_t steps, double lr);

struct TabularParams {
    // Correct is favoured: p(correct) ~ 0.84 at the defaults.
    std::array<double, kNumVariants> call_logits{3.3, 0.0, 0.0, 0.0, 0.0, 0.0};
    std::array<double, kNumRecovery> recovery_logits{0.0, 0.5, 0.0};
    std::array<double, 2> safety_logits{0.5, 0.0};  // comply, refuse
};

// Follows the task's oracle call sequence, realising each call as a sampled
// variant. After its own invalid call it tries again; after an environment
// fault it samples retry / skip / conclude unless the verifier's confidence is
// below 0.5, which forces a retry.
class TabularAgentPolicy final : public AgentPolicy {
public:
    TabularAgentPolicy(SchemaRegistry registry, TabularParams params, const StepVerifier* verifier = nullptr);

    void reset(const Task& task) override;
    std::string act(const Task& task, const std::vector<TurnRecord>& history, std::mt19937_64& rng) override;

    // 1 x kNumVariants and 1 x 2 trainable logits.
    ad::Tensor& call_logits() noexcept { return call_logits_; }
    const ad::Tensor& call_logits() const noexcept { return call_logits_; }
    ad::Tensor& safety_logits() noexcept { return safety_logits_; }
    const ad::Tensor& safety_logits() const noexcept { return safety_logits_; }
    TabularParams params() const;
    const SchemaRegistry& registry() const noexcept { return registry_; }

    std::vector<double> variant_probs() const;
    double p_correct() const { return variant_probs()[0]; }
    double p_comply() const;

    void set_verifier(const StepVerifier* v) { verifier_ = v; }

private:
    std::string emit(const Task& task, std::mt19937_64& rng);

    SchemaRegistry registry_;
    ad::Tensor call_logits_, safety_logits_;
    std::array<double, kNumRecovery> recovery_logits_;
    const StepVerifier* verifier_;
    std::size_t next_ = 0;
    bool concluded_ = false;
};

}  // namespace sage::tools
