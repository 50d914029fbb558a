#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sage/ad/checkpoint.hpp"
#include "sage/ad/graph.hpp"
#include "sage/ad/tensor.hpp"
#include "sage/model/config.hpp"

namespace sage::model {

using TokenSeq = std::vector<int>;

struct ForwardOutput {
    ad::Tensor logits;       // T x V
    ad::Tensor hidden_last;  // T x d_model, after the final norm
    ad::Tensor confidence;   // T x d_critic
};

// One training sequence with its per-token reasoning mask.
struct MaskedSequence {
    TokenSeq tokens;
    std::vector<bool> reasoning_mask;
};

// Sequence with supervised next-token targets at chosen positions.
struct TargetedSequence {
    TokenSeq tokens;
    std::vector<std::size_t> positions;  // logits row
    std::vector<int> targets;
};

struct LossParts {
    double total = 0.0;
    double fwd = 0.0;
    double inv = 0.0;
};

// alpha_t * E_NL(x_t) + (1 - alpha_t) * E_Code(x_t).
ad::Tensor split_embed(const ad::Tensor& e_nl, const ad::Tensor& e_code, std::span<const int> ids,
                       std::span<const double> alpha);

// Prompt of a masked sequence: tokens before the first reasoning position.
// Empty when the mask is all false.
TokenSeq prompt_of(const MaskedSequence& seq);
TokenSeq reasoning_of(const MaskedSequence& seq);

template <typename T>
struct BlockParams {
    T norm_attn, wq, wk, wv, wo, norm_ffn, w_gate, w_up, w_down;
};

template <typename T>
struct ModelParams {
    T e_nl, e_code, pos;
    T mode_features, mode_w;  // features are fixed; only mode_w is trained
    std::vector<BlockParams<T>> blocks;
    T norm_final, lm_head;
    T inv_w1, inv_w2;  // bias-free
    T w_mch;
};

// Toy dual-head transformer: split embeddings, landmark attention with
// pre-RMSNorm and SwiGLU blocks, forward LM head, inverse reconstruction head
// and meta-cognitive confidence head.
class SageModel {
public:
    SageModel(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const noexcept { return config_; }
    int vocab_size() const noexcept { return config_.vocab_size(); }

    // Trainable tensors in a stable order; mode_features is excluded.
    std::vector<std::pair<std::string, ad::Tensor*>> parameters();
    std::size_t parameter_count() const;
    void zero_grad();

    ModelParams<ad::Tensor>& weights() noexcept { return w_; }
    const ModelParams<ad::Tensor>& weights() const noexcept { return w_; }

    // Replace the mode-classifier input features (V x F) and reset its weights.
    void set_mode_features(const ad::Tensor& features);
    double classify_mode(int token_id) const;

    // Bind every weight onto `g`; trainable weights accumulate gradients on backward.
    ModelParams<ad::Var> bind(ad::Graph& g);
    // Bind as constants (no gradient tracking).
    ModelParams<ad::Var> bind_const(ad::Graph& g) const;

    // Graph building blocks.
    ad::Var embed(const ModelParams<ad::Var>& p, std::span<const int> ids) const;
    ad::Var backbone(const ModelParams<ad::Var>& p, std::span<const int> ids) const;
    ad::Var inverse_logits(const ModelParams<ad::Var>& p, ad::Var hidden) const;
    ad::Var confidence(const ModelParams<ad::Var>& p, ad::Var hidden) const;
    // loss_fwd + inv_loss_weight * loss_inv for one sequence.
    ad::Var sequence_loss(const ModelParams<ad::Var>& p, const MaskedSequence& seq, LossParts* parts) const;
    // Mean over sequences; gradients land in parameter grads when `backward`.
    LossParts dual_loss(const std::vector<MaskedSequence>& batch, bool backward);
    LossParts dual_loss(const std::vector<MaskedSequence>& batch) const;
    // Mean binary cross-entropy of every confidence component at each labelled
    // position against the label.
    double mch_loss(const TokenSeq& tokens, const std::vector<std::pair<std::size_t, bool>>& labels, bool backward);
    // Mean cross-entropy at the targeted positions, averaged over sequences.
    double targeted_loss(const std::vector<TargetedSequence>& batch, bool backward);
    double mode_loss(const std::vector<std::pair<int, bool>>& labels, bool backward);

    // Inference.
    ForwardOutput forward(std::span<const int> ids) const;
    std::vector<double> next_token_log_probs(std::span<const int> ids) const;
    // Sum of log p(continuation | prefix).
    double sequence_log_prob(std::span<const int> prefix, std::span<const int> continuation) const;
    // log q(v | reasoning) over the vocabulary from the inverse head.
    std::vector<double> inverse_log_probs(std::span<const int> reasoning) const;
    // Mean confidence component at the last position.
    double step_confidence(std::span<const int> ids) const;
    // Ancestral sampling until `stop_token` (included) or max_new tokens.
    TokenSeq sample(std::span<const int> prefix, std::size_t max_new, int stop_token, double temperature,
                    std::mt19937_64& rng) const;
    TokenSeq greedy(std::span<const int> prefix, std::size_t max_new, int stop_token) const;

    std::vector<ad::NamedTensor> state() const;
    void load_state(const std::vector<ad::NamedTensor>& tensors);
    void save(const std::filesystem::path& dir) const;
    static SageModel load(const std::filesystem::path& dir);

private:
    template <typename Params, typename Fn>
    static void visit(Params& p, Fn&& fn);

    void check_ids(std::span<const int> ids) const;

    ModelConfig config_;
    ModelParams<ad::Tensor> w_;
};

// Adam with optional global-norm gradient clipping.
struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 0.0;  // 0 disables clipping
};

class Adam {
public:
    Adam(std::vector<ad::Tensor*> params, AdamConfig config);
    void step();
    void zero_grad();
    void set_lr(double lr) { config_.lr = lr; }
    std::size_t steps() const noexcept { return t_; }

private:
    std::vector<ad::Tensor*> params_;
    AdamConfig config_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
};

std::vector<ad::Tensor*> tensors_of(const std::vector<std::pair<std::string, ad::Tensor*>>& named);

}  // namespace sage::model
