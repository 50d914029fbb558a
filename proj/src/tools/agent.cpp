#include "sage/tools/agent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sage/tools/negatives.hpp"

namespace sage::tools {

std::string to_string(CallVariant v) {
    switch (v) {
        case CallVariant::Correct: return "correct";
        case CallVariant::TypeError: return "type_error";
        case CallVariant::HallucinatedKey: return "hallucinated_key";
        case CallVariant::LogicError: return "logic_error";
        case CallVariant::MissingRequired: return "missing_required";
        case CallVariant::Malformed: return "malformed";
    }
    return "?";
}

CallVariant classify_action(const std::string& action, const SchemaRegistry& registry) {
    if (action == kDoneAction) throw std::invalid_argument("classify_action: the done action is not a call");
    const auto v = validate_text(action, registry);
    if (v.empty()) return CallVariant::Correct;
    switch (v.front().kind) {
        case ViolationKind::TypeError: return CallVariant::TypeError;
        case ViolationKind::HallucinatedKey: return CallVariant::HallucinatedKey;
        case ViolationKind::LogicError: return CallVariant::LogicError;
        case ViolationKind::MissingRequired: return CallVariant::MissingRequired;
        case ViolationKind::Malformed:
        case ViolationKind::UnknownTool: return CallVariant::Malformed;
    }
    return CallVariant::Malformed;
}

std::string realise_variant(const ToolCall& call, const ToolSchema& schema, CallVariant v, std::uint64_t seed) {
    switch (v) {
        case CallVariant::Correct: return serialize_call(call);
        case CallVariant::TypeError: return serialize_call(negative_constraint_samples(call, schema, seed)[0].call);
        case CallVariant::HallucinatedKey:
            return serialize_call(negative_constraint_samples(call, schema, seed)[1].call);
        case CallVariant::LogicError: return serialize_call(negative_constraint_samples(call, schema, seed)[2].call);
        case CallVariant::MissingRequired: {
            std::vector<std::string> req;
            for (const auto& p : schema.params)
                if (p.required && call.arguments.contains(p.name)) req.push_back(p.name);
            if (req.empty()) throw std::invalid_argument("realise_variant: no required argument to drop");
            ToolCall m = call;
            m.arguments.erase(req[seed % req.size()]);
            return serialize_call(m);
        }
        case CallVariant::Malformed: {
            auto s = serialize_call(call);
            s.pop_back();
            return s;
        }
    }
    throw std::invalid_argument("realise_variant: unknown variant");
}

EventVocab::EventVocab(const SchemaRegistry& registry)
    : names_{"<bos>", "call:?", "done", "ok", "tool_error", "timeout", "mismatch", "violation"} {
    for (const auto& s : registry.schemas()) {
        call_ids_[s.name] = static_cast<int>(names_.size());
        names_.push_back("call:" + s.name);
    }
}

int EventVocab::outcome(const TurnRecord& t) const {
    if (t.response.fault) return *t.response.fault == FaultKind::Timeout ? timeout() : mismatch();
    if (!t.response.violations.empty()) return violation();
    return t.response.ok ? ok() : tool_error();
}

model::TokenSeq EventVocab::encode(const std::vector<TurnRecord>& history) const {
    model::TokenSeq out{bos()};
    for (const auto& t : history) {
        if (t.done) {
            out.push_back(done());
            continue;
        }
        const auto c = parse_call(t.action);
        auto it = c ? call_ids_.find(c->name) : call_ids_.end();
        out.push_back(it == call_ids_.end() ? unknown_call() : it->second);
        out.push_back(outcome(t));
    }
    return out;
}

std::vector<std::pair<std::size_t, bool>> EventVocab::outcome_labels(const std::vector<TurnRecord>& history) const {
    std::vector<std::pair<std::size_t, bool>> out;
    std::size_t pos = 1;
    for (const auto& t : history) {
        if (t.done) {
            ++pos;
            continue;
        }
        out.emplace_back(pos + 1, outcome(t) == ok());
        pos += 2;
    }
    return out;
}

MchVerifier::MchVerifier(std::shared_ptr<const model::SageModel> model, EventVocab vocab)
    : model_(std::move(model)), vocab_(std::move(vocab)) {
    if (!model_) throw std::invalid_argument("MchVerifier: null model");
}

double MchVerifier::confidence(const std::vector<TurnRecord>& history) const {
    auto ids = vocab_.encode(history);
    const auto cap = static_cast<std::size_t>(model_->config().max_seq_len);
    if (ids.size() > cap) ids.erase(ids.begin(), ids.end() - static_cast<std::ptrdiff_t>(cap));
    return model_->step_confidence(ids);
}

model::ModelConfig verifier_model_config(const EventVocab& vocab) {
    model::ModelConfig c;
    c.n_layers = 1;
    c.d_model = 16;
    c.n_heads = 2;
    c.d_ff = 32;
    c.vocab_nl = c.vocab_code = vocab.size();
    c.max_seq_len = 32;
    c.k_landmark = 4;
    c.local_window = 8;
    return c;
}

double train_mch_verifier(model::SageModel& m, const EventVocab& vocab, const std::vector<EpisodeResult>& episodes,
                          std::size_t steps, double lr) {
    std::vector<std::pair<model::TokenSeq, std::vector<std::pair<std::size_t, bool>>>> data;
    for (const auto& e : episodes) {
        auto ids = vocab.encode(e.transcript);
        auto labels = vocab.outcome_labels(e.transcript);
        if (labels.empty() || ids.size() > static_cast<std::size_t>(m.config().max_seq_len)) continue;
        data.emplace_back(std::move(ids), std::move(labels));
    }
    if (data.empty()) throw std::invalid_argument("train_mch_verifier: no usable transcripts");
    model::Adam opt(model::tensors_of(m.parameters()), {.lr = lr, .clip_norm = 1.0});
    constexpr std::size_t kBatch = 8;
    std::size_t cursor = 0;
    double last = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
        opt.zero_grad();
        last = 0.0;
        for (std::size_t b = 0; b < kBatch; ++b) {
            const auto& [ids, labels] = data[cursor++ % data.size()];
            last += m.mch_loss(ids, labels, true) / kBatch;
        }
        opt.step();
    }
    return last;
}

TabularAgentPolicy::TabularAgentPolicy(SchemaRegistry registry, TabularParams params, const StepVerifier* verifier)
    : registry_(std::move(registry)),
      call_logits_(ad::Tensor::matrix(1, kNumVariants, {params.call_logits.begin(), params.call_logits.end()})),
      safety_logits_(ad::Tensor::matrix(1, 2, {params.safety_logits.begin(), params.safety_logits.end()})),
      recovery_logits_(params.recovery_logits),
      verifier_(verifier) {
    call_logits_.set_requires_grad(true);
    safety_logits_.set_requires_grad(true);
}

TabularParams TabularAgentPolicy::params() const {
    TabularParams p;
    std::copy(call_logits_.data().begin(), call_logits_.data().end(), p.call_logits.begin());
    std::copy(safety_logits_.data().begin(), safety_logits_.data().end(), p.safety_logits.begin());
    p.recovery_logits = recovery_logits_;
    return p;
}

namespace {

std::vector<double> softmax(std::span<const double> z) {
    const double m = *std::max_element(z.begin(), z.end());
    std::vector<double> p;
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    for (double v : z) p.push_back(std::exp(v - m) / s);
    return p;
}

std::size_t draw(std::span<const double> logits, std::mt19937_64& rng) {
    const auto p = softmax(logits);
    std::discrete_distribution<std::size_t> d(p.begin(), p.end());
    return d(rng);
}

}  // namespace

std::vector<double> TabularAgentPolicy::variant_probs() const { return softmax(call_logits_.data()); }
double TabularAgentPolicy::p_comply() const { return softmax(safety_logits_.data())[0]; }

void TabularAgentPolicy::reset(const Task&) {
    next_ = 0;
    concluded_ = false;
}

std::string TabularAgentPolicy::emit(const Task& task, std::mt19937_64& rng) {
    if (next_ >= task.oracle_calls.size()) {
        concluded_ = true;
        return kDoneAction;
    }
    const auto& call = task.oracle_calls[next_];
    const auto* schema = registry_.find(call.name);
    if (!schema) throw std::invalid_argument("TabularAgentPolicy: task uses unknown tool '" + call.name + "'");
    const auto v = static_cast<CallVariant>(draw(call_logits_.data(), rng));
    return realise_variant(call, *schema, v, rng());
}

std::string TabularAgentPolicy::act(const Task& task, const std::vector<TurnRecord>& history, std::mt19937_64& rng) {
    if (concluded_) return kDoneAction;
    if (task.malicious) {
        if (!history.empty() || task.oracle_calls.empty() || draw(safety_logits_.data(), rng) == 1) {
            concluded_ = true;
            return kDoneAction;
        }
        return serialize_call(task.oracle_calls.front());
    }
    if (!history.empty()) {
        const auto& last = history.back();
        if (last.response.fault) {
            Recovery choice = Recovery::Retry;
            if (!verifier_ || verifier_->confidence(history) >= 0.5) {
                choice = static_cast<Recovery>(draw(recovery_logits_, rng));
            }
            if (choice == Recovery::Conclude) {
                concluded_ = true;
                return kDoneAction;
            }
            if (choice == Recovery::Skip) ++next_;
        } else if (last.response.ok) {
            ++next_;
        }
    }
    return emit(task, rng);
}

}  // namespace sage::tools
