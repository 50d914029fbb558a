#include "sage/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "sage/ad/ops.hpp"
#include "sage/model/layers.hpp"

namespace sage::model {

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::vector<double> log_softmax(std::span<const double> z) {
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    const double lse = m + std::log(s);
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
    return out;
}

}  // namespace

ad::Tensor split_embed(const ad::Tensor& e_nl, const ad::Tensor& e_code, std::span<const int> ids,
                       std::span<const double> alpha) {
    if (e_nl.shape() != e_code.shape() || e_nl.rank() != 2) {
        throw std::invalid_argument("split_embed: embedding tables must be equal-shaped matrices");
    }
    if (ids.size() != alpha.size()) throw std::invalid_argument("split_embed: one alpha per token required");
    const std::size_t d = e_nl.cols();
    ad::Tensor out({ids.size(), d});
    for (std::size_t t = 0; t < ids.size(); ++t) {
        if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= e_nl.rows()) {
            throw std::invalid_argument("split_embed: token id " + std::to_string(ids[t]) + " out of range");
        }
        if (!(alpha[t] >= 0.0 && alpha[t] <= 1.0)) throw std::invalid_argument("split_embed: alpha outside [0,1]");
        const auto r = static_cast<std::size_t>(ids[t]);
        for (std::size_t j = 0; j < d; ++j) {
            out.at(t, j) = alpha[t] * e_nl.at(r, j) + (1.0 - alpha[t]) * e_code.at(r, j);
        }
    }
    return out;
}

TokenSeq prompt_of(const MaskedSequence& seq) {
    auto first = std::find(seq.reasoning_mask.begin(), seq.reasoning_mask.end(), true);
    if (first == seq.reasoning_mask.end()) return {};
    return TokenSeq(seq.tokens.begin(), seq.tokens.begin() + (first - seq.reasoning_mask.begin()));
}

TokenSeq reasoning_of(const MaskedSequence& seq) {
    TokenSeq out;
    for (std::size_t i = 0; i < seq.tokens.size() && i < seq.reasoning_mask.size(); ++i)
        if (seq.reasoning_mask[i]) out.push_back(seq.tokens[i]);
    return out;
}

template <typename Params, typename Fn>
void SageModel::visit(Params& p, Fn&& fn) {
    fn("e_nl", p.e_nl);
    fn("e_code", p.e_code);
    fn("pos", p.pos);
    fn("mode_features", p.mode_features);
    fn("mode_w", p.mode_w);
    for (std::size_t l = 0; l < p.blocks.size(); ++l) {
        auto& b = p.blocks[l];
        const std::string pre = "block" + std::to_string(l) + ".";
        fn(pre + "norm_attn", b.norm_attn);
        fn(pre + "wq", b.wq);
        fn(pre + "wk", b.wk);
        fn(pre + "wv", b.wv);
        fn(pre + "wo", b.wo);
        fn(pre + "norm_ffn", b.norm_ffn);
        fn(pre + "w_gate", b.w_gate);
        fn(pre + "w_up", b.w_up);
        fn(pre + "w_down", b.w_down);
    }
    fn("norm_final", p.norm_final);
    fn("lm_head", p.lm_head);
    fn("inv_w1", p.inv_w1);
    fn("inv_w2", p.inv_w2);
    fn("w_mch", p.w_mch);
}

SageModel::SageModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    const auto L = static_cast<std::size_t>(config_.n_layers);
    const auto d = static_cast<std::size_t>(config_.d_model);
    const auto ff = static_cast<std::size_t>(config_.d_ff);
    const auto V = static_cast<std::size_t>(config_.vocab_size());
    const auto T = static_cast<std::size_t>(config_.max_seq_len);
    const auto dc = static_cast<std::size_t>(config_.d_critic);
    std::uint64_t counter = 0;
    auto rnd = [&](std::size_t r, std::size_t c) { return ad::init_weights(r, c, L, derive_seed(seed, counter++)); };
    auto ones = [](std::size_t n) { return ad::Tensor({1, n}, 1.0); };

    w_.e_nl = rnd(V, d);
    w_.e_code = rnd(V, d);
    w_.pos = rnd(T, d);
    w_.mode_features = ad::Tensor({V, V});
    for (std::size_t i = 0; i < V; ++i) w_.mode_features.at(i, i) = 1.0;
    w_.mode_w = ad::Tensor({V, 1});
    w_.blocks.resize(L);
    for (auto& b : w_.blocks) {
        b.norm_attn = ones(d);
        b.wq = rnd(d, d);
        b.wk = rnd(d, d);
        b.wv = rnd(d, d);
        b.wo = rnd(d, d);
        b.norm_ffn = ones(d);
        b.w_gate = rnd(d, ff);
        b.w_up = rnd(d, ff);
        b.w_down = rnd(ff, d);
    }
    w_.norm_final = ones(d);
    w_.lm_head = rnd(d, V);
    w_.inv_w1 = rnd(d, d / 2);
    w_.inv_w2 = rnd(d / 2, V);
    w_.w_mch = rnd(d, dc);
    for (auto& [name, t] : parameters()) t->set_requires_grad(true);
}

std::vector<std::pair<std::string, ad::Tensor*>> SageModel::parameters() {
    std::vector<std::pair<std::string, ad::Tensor*>> out;
    visit(w_, [&](const std::string& name, ad::Tensor& t) {
        if (name != "mode_features") out.emplace_back(name, &t);
    });
    return out;
}

std::size_t SageModel::parameter_count() const {
    std::size_t n = 0;
    visit(w_, [&](const std::string& name, const ad::Tensor& t) {
        if (name != "mode_features") n += t.size();
    });
    return n;
}

void SageModel::zero_grad() {
    for (auto& [name, t] : parameters()) t->zero_grad();
}

void SageModel::set_mode_features(const ad::Tensor& features) {
    if (features.rank() != 2 || features.rows() != static_cast<std::size_t>(vocab_size()) || features.cols() == 0) {
        throw std::invalid_argument("set_mode_features: expected " + std::to_string(vocab_size()) +
                                    " x F features, got " + ad::shape_string(features.shape()));
    }
    w_.mode_features = features.detached();
    w_.mode_w = ad::Tensor({features.cols(), 1});
    w_.mode_w.set_requires_grad(true);
}

double SageModel::classify_mode(int token_id) const {
    check_ids(std::span<const int>(&token_id, 1));
    double z = 0.0;
    const auto r = static_cast<std::size_t>(token_id);
    for (std::size_t j = 0; j < w_.mode_features.cols(); ++j) z += w_.mode_features.at(r, j) * w_.mode_w[j];
    return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

ModelParams<ad::Var> SageModel::bind(ad::Graph& g) {
    ModelParams<ad::Var> p;
    p.blocks.resize(w_.blocks.size());
    std::vector<ad::Var> vars;
    visit(w_, [&](const std::string& name, ad::Tensor& t) {
        vars.push_back(name == "mode_features" ? g.constant(t.detached()) : g.parameter(t));
    });
    std::size_t i = 0;
    visit(p, [&](const std::string&, ad::Var& v) { v = vars[i++]; });
    return p;
}

ModelParams<ad::Var> SageModel::bind_const(ad::Graph& g) const {
    ModelParams<ad::Var> p;
    p.blocks.resize(w_.blocks.size());
    std::vector<ad::Var> vars;
    visit(w_, [&](const std::string&, const ad::Tensor& t) { vars.push_back(g.constant(t.detached())); });
    std::size_t i = 0;
    visit(p, [&](const std::string&, ad::Var& v) { v = vars[i++]; });
    return p;
}

void SageModel::check_ids(std::span<const int> ids) const {
    for (int id : ids) {
        if (id < 0 || id >= vocab_size()) {
            throw std::invalid_argument("token id " + std::to_string(id) + " out of range for vocabulary of " +
                                        std::to_string(vocab_size()));
        }
    }
}

ad::Var SageModel::embed(const ModelParams<ad::Var>& p, std::span<const int> ids) const {
    if (ids.empty()) throw std::invalid_argument("embed: empty sequence");
    if (ids.size() > static_cast<std::size_t>(config_.max_seq_len)) {
        throw std::invalid_argument("embed: sequence of " + std::to_string(ids.size()) + " exceeds max_seq_len " +
                                    std::to_string(config_.max_seq_len));
    }
    check_ids(ids);
    auto alpha = ad::sigmoid(ad::matmul(ad::gather_rows(p.mode_features, ids), p.mode_w));
    auto nl = ad::mul_col(ad::gather_rows(p.e_nl, ids), alpha);
    auto code = ad::mul_col(ad::gather_rows(p.e_code, ids), ad::affine(alpha, -1.0, 1.0));
    return ad::add(ad::add(nl, code), ad::slice_rows(p.pos, 0, ids.size()));
}

ad::Var SageModel::backbone(const ModelParams<ad::Var>& p, std::span<const int> ids) const {
    auto h = embed(p, ids);
    auto pattern = std::make_shared<const ad::AttentionPattern>(landmark_pattern(
        ids.size(), static_cast<std::size_t>(config_.k_landmark), static_cast<std::size_t>(config_.local_window)));
    const auto heads = static_cast<std::size_t>(config_.n_heads);
    for (const auto& b : p.blocks) {
        auto a = ad::rmsnorm(h, b.norm_attn, config_.eps_rms);
        auto att = ad::masked_attention(ad::matmul(a, b.wq), ad::matmul(a, b.wk), ad::matmul(a, b.wv), heads, pattern);
        h = ad::add(h, ad::matmul(att, b.wo));
        auto f = ad::rmsnorm(h, b.norm_ffn, config_.eps_rms);
        h = ad::add(h, swiglu_ffn(f, b.w_gate, b.w_up, b.w_down, config_.beta_swish));
    }
    return ad::rmsnorm(h, p.norm_final, config_.eps_rms);
}

ad::Var SageModel::inverse_logits(const ModelParams<ad::Var>& p, ad::Var hidden) const {
    auto z = ad::mean_rows(hidden);
    return ad::matmul(ad::gelu(ad::matmul(z, p.inv_w1)), p.inv_w2);
}

ad::Var SageModel::confidence(const ModelParams<ad::Var>& p, ad::Var hidden) const {
    return ad::sigmoid(ad::matmul(hidden, p.w_mch));
}

ad::Var SageModel::sequence_loss(const ModelParams<ad::Var>& p, const MaskedSequence& seq, LossParts* parts) const {
    const auto& ids = seq.tokens;
    if (seq.reasoning_mask.size() != ids.size()) {
        throw std::invalid_argument("dual_loss: mask length " + std::to_string(seq.reasoning_mask.size()) +
                                    " differs from sequence length " + std::to_string(ids.size()));
    }
    if (ids.size() < 2) throw std::invalid_argument("dual_loss: sequences need at least two tokens");
    ad::Graph& g = p.lm_head.graph();
    auto hidden = backbone(p, ids);
    auto logits = ad::matmul(ad::slice_rows(hidden, 0, ids.size() - 1), p.lm_head);
    auto fwd = ad::cross_entropy(logits, std::span<const int>(ids).subspan(1));

    const TokenSeq prompt = prompt_of(seq);
    const TokenSeq reasoning = reasoning_of(seq);
    ad::Var total = fwd;
    double inv_value = 0.0;
    if (!prompt.empty() && !reasoning.empty()) {
        const auto V = static_cast<std::size_t>(vocab_size());
        ad::Tensor target({1, V});
        for (int t : prompt) target[static_cast<std::size_t>(t)] += 1.0 / static_cast<double>(prompt.size());
        double neg_entropy = 0.0;
        for (double v : target.data())
            if (v > 0.0) neg_entropy += v * std::log(v);
        auto log_q = ad::log_softmax_rows(inverse_logits(p, backbone(p, reasoning)));
        // KL(p || q) = sum p log p - sum p log q
        auto cross = ad::sum(ad::mul(g.constant(std::move(target)), log_q));
        auto inv = ad::affine(cross, -1.0, neg_entropy);
        inv_value = inv.item();
        total = ad::add(fwd, ad::scale(inv, config_.inv_loss_weight));
    }
    if (parts) {
        parts->fwd = fwd.item();
        parts->inv = inv_value;
        parts->total = total.item();
    }
    return total;
}

LossParts SageModel::dual_loss(const std::vector<MaskedSequence>& batch, bool backward) {
    if (batch.empty()) throw std::invalid_argument("dual_loss: empty batch");
    ad::Graph g;
    auto p = backward ? bind(g) : bind_const(g);
    LossParts sum;
    ad::Var acc;
    for (const auto& seq : batch) {
        LossParts parts;
        auto l = sequence_loss(p, seq, &parts);
        acc = acc.valid() ? ad::add(acc, l) : l;
        sum.fwd += parts.fwd;
        sum.inv += parts.inv;
    }
    const double n = static_cast<double>(batch.size());
    auto mean = ad::scale(acc, 1.0 / n);
    if (backward) g.backward(mean);
    return {mean.item(), sum.fwd / n, sum.inv / n};
}

LossParts SageModel::dual_loss(const std::vector<MaskedSequence>& batch) const {
    return const_cast<SageModel*>(this)->dual_loss(batch, false);
}

double SageModel::mch_loss(const TokenSeq& tokens, const std::vector<std::pair<std::size_t, bool>>& labels,
                           bool backward) {
    if (labels.empty()) throw std::invalid_argument("mch_loss: no labels");
    ad::Graph g;
    auto p = backward ? bind(g) : bind_const(g);
    auto hidden = backbone(p, tokens);
    auto z = ad::matmul(hidden, p.w_mch);
    const std::size_t dc = z.cols();
    // BCE(sigmoid(z), y) = -log_sigmoid(z) if y else -log_sigmoid(-z)
    ad::Tensor sign({tokens.size(), dc});
    ad::Tensor weight({tokens.size(), dc});
    const double w = 1.0 / static_cast<double>(labels.size() * dc);
    for (auto [pos, y] : labels) {
        if (pos >= tokens.size()) throw std::invalid_argument("mch_loss: label position out of range");
        for (std::size_t j = 0; j < dc; ++j) {
            sign.at(pos, j) = y ? 1.0 : -1.0;
            weight.at(pos, j) += w;
        }
    }
    auto ll = ad::log_sigmoid(ad::mul(z, g.constant(std::move(sign))));
    auto loss = ad::scale(ad::sum(ad::mul(ll, g.constant(std::move(weight)))), -1.0);
    if (backward) g.backward(loss);
    return loss.item();
}

double SageModel::targeted_loss(const std::vector<TargetedSequence>& batch, bool backward) {
    if (batch.empty()) throw std::invalid_argument("targeted_loss: empty batch");
    ad::Graph g;
    auto p = backward ? bind(g) : bind_const(g);
    ad::Var acc;
    for (const auto& seq : batch) {
        if (seq.positions.empty() || seq.positions.size() != seq.targets.size()) {
            throw std::invalid_argument("targeted_loss: positions and targets must be non-empty and paired");
        }
        std::vector<int> rows;
        for (std::size_t pos : seq.positions) {
            if (pos >= seq.tokens.size()) throw std::invalid_argument("targeted_loss: position out of range");
            rows.push_back(static_cast<int>(pos));
        }
        check_ids(seq.targets);
        auto hidden = backbone(p, seq.tokens);
        auto l = ad::cross_entropy(ad::matmul(ad::gather_rows(hidden, rows), p.lm_head), seq.targets);
        acc = acc.valid() ? ad::add(acc, l) : l;
    }
    auto mean = ad::scale(acc, 1.0 / static_cast<double>(batch.size()));
    if (backward) g.backward(mean);
    return mean.item();
}

double SageModel::mode_loss(const std::vector<std::pair<int, bool>>& labels, bool backward) {
    if (labels.empty()) throw std::invalid_argument("mode_loss: no labels");
    ad::Graph g;
    auto feats = g.constant(w_.mode_features.detached());
    auto mw = backward ? g.parameter(w_.mode_w) : g.constant(w_.mode_w.detached());
    std::vector<int> ids;
    ad::Tensor sign({labels.size(), 1});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        ids.push_back(labels[i].first);
        // alpha is the NL gate, so code tokens push the score down.
        sign[i] = labels[i].second ? -1.0 : 1.0;
    }
    check_ids(ids);
    auto z = ad::matmul(ad::gather_rows(feats, ids), mw);
    auto loss = ad::scale(ad::mean(ad::log_sigmoid(ad::mul(z, g.constant(std::move(sign))))), -1.0);
    if (backward) g.backward(loss);
    return loss.item();
}

ForwardOutput SageModel::forward(std::span<const int> ids) const {
    ad::Graph g;
    auto p = bind_const(g);
    auto hidden = backbone(p, ids);
    ForwardOutput out;
    out.logits = ad::matmul(hidden, p.lm_head).value();
    out.confidence = confidence(p, hidden).value();
    out.hidden_last = hidden.value();
    return out;
}

std::vector<double> SageModel::next_token_log_probs(std::span<const int> ids) const {
    ad::Graph g;
    auto p = bind_const(g);
    auto hidden = backbone(p, ids);
    auto logits = ad::matmul(ad::slice_rows(hidden, ids.size() - 1, ids.size()), p.lm_head).value();
    return log_softmax(logits.data());
}

double SageModel::sequence_log_prob(std::span<const int> prefix, std::span<const int> continuation) const {
    if (prefix.empty()) throw std::invalid_argument("sequence_log_prob: empty prefix");
    if (continuation.empty()) return 0.0;
    TokenSeq ids(prefix.begin(), prefix.end());
    ids.insert(ids.end(), continuation.begin(), continuation.end());
    ad::Graph g;
    auto p = bind_const(g);
    auto hidden = backbone(p, ids);
    auto logits = ad::matmul(hidden, p.lm_head).value();
    double total = 0.0;
    const std::size_t V = logits.cols();
    for (std::size_t i = 0; i < continuation.size(); ++i) {
        const std::size_t row = prefix.size() - 1 + i;
        auto lp = log_softmax(logits.data().subspan(row * V, V));
        total += lp[static_cast<std::size_t>(continuation[i])];
    }
    return total;
}

std::vector<double> SageModel::inverse_log_probs(std::span<const int> reasoning) const {
    ad::Graph g;
    auto p = bind_const(g);
    auto logits = inverse_logits(p, backbone(p, reasoning)).value();
    return log_softmax(logits.data());
}

double SageModel::step_confidence(std::span<const int> ids) const {
    ad::Graph g;
    auto p = bind_const(g);
    auto hidden = backbone(p, ids);
    auto c = confidence(p, ad::slice_rows(hidden, ids.size() - 1, ids.size())).value();
    double s = 0.0;
    for (double v : c.data()) s += v;
    return s / static_cast<double>(c.size());
}

TokenSeq SageModel::sample(std::span<const int> prefix, std::size_t max_new, int stop_token, double temperature,
                           std::mt19937_64& rng) const {
    if (!(temperature > 0.0)) throw std::invalid_argument("sample: temperature must be > 0");
    TokenSeq ids(prefix.begin(), prefix.end());
    TokenSeq out;
    for (std::size_t s = 0; s < max_new && ids.size() < static_cast<std::size_t>(config_.max_seq_len); ++s) {
        auto lp = next_token_log_probs(ids);
        std::vector<double> w(lp.size());
        const double m = *std::max_element(lp.begin(), lp.end());
        for (std::size_t i = 0; i < lp.size(); ++i) w[i] = std::exp((lp[i] - m) / temperature);
        std::discrete_distribution<int> dist(w.begin(), w.end());
        const int tok = dist(rng);
        ids.push_back(tok);
        out.push_back(tok);
        if (tok == stop_token) break;
    }
    return out;
}

TokenSeq SageModel::greedy(std::span<const int> prefix, std::size_t max_new, int stop_token) const {
    TokenSeq ids(prefix.begin(), prefix.end());
    TokenSeq out;
    for (std::size_t s = 0; s < max_new && ids.size() < static_cast<std::size_t>(config_.max_seq_len); ++s) {
        auto lp = next_token_log_probs(ids);
        const int tok = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
        ids.push_back(tok);
        out.push_back(tok);
        if (tok == stop_token) break;
    }
    return out;
}

std::vector<ad::NamedTensor> SageModel::state() const {
    std::vector<ad::NamedTensor> out;
    visit(w_, [&](const std::string& name, const ad::Tensor& t) { out.push_back({name, t.detached()}); });
    return out;
}

void SageModel::load_state(const std::vector<ad::NamedTensor>& tensors) {
    std::size_t i = 0;
    visit(w_, [&](const std::string& name, ad::Tensor& t) {
        if (i >= tensors.size()) throw std::invalid_argument("load_state: missing tensor '" + name + "'");
        const auto& src = tensors[i++];
        if (src.name != name) {
            throw std::invalid_argument("load_state: expected '" + name + "', found '" + src.name + "'");
        }
        if (src.tensor.shape() != t.shape() && name != "mode_features" && name != "mode_w") {
            throw std::invalid_argument("load_state: shape mismatch for '" + name + "'");
        }
        const bool trainable = name != "mode_features";
        t = src.tensor.detached();
        t.set_requires_grad(trainable);
    });
    if (i != tensors.size()) throw std::invalid_argument("load_state: unexpected extra tensors");
    if (w_.mode_features.cols() != w_.mode_w.rows()) throw std::invalid_argument("load_state: mode classifier mismatch");
}

void SageModel::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    save_config(dir / "model.cfg", config_);
    ad::save_checkpoint(dir / "weights.ckpt", state());
}

SageModel SageModel::load(const std::filesystem::path& dir) {
    SageModel m(load_config(dir / "model.cfg"), 0);
    m.load_state(ad::load_checkpoint(dir / "weights.ckpt"));
    return m;
}

Adam::Adam(std::vector<ad::Tensor*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
    for (auto* p : params_) {
        if (!p->requires_grad()) throw std::invalid_argument("Adam: parameter does not require grad");
        m_.emplace_back(p->size(), 0.0);
        v_.emplace_back(p->size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    double scale = 1.0;
    if (config_.clip_norm > 0.0) {
        double sq = 0.0;
        for (auto* p : params_)
            if (p->has_grad())
                for (double gv : p->grad()) sq += gv * gv;
        const double norm = std::sqrt(sq);
        if (norm > config_.clip_norm) scale = config_.clip_norm / norm;
    }
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto* p = params_[k];
        if (!p->has_grad()) continue;
        auto grad = p->grad();
        auto data = p->data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double gv = grad[i] * scale;
            m_[k][i] = config_.beta1 * m_[k][i] + (1.0 - config_.beta1) * gv;
            v_[k][i] = config_.beta2 * v_[k][i] + (1.0 - config_.beta2) * gv * gv;
            data[i] -= config_.lr * (m_[k][i] / bc1) / (std::sqrt(v_[k][i] / bc2) + config_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (auto* p : params_) p->zero_grad();
}

std::vector<ad::Tensor*> tensors_of(const std::vector<std::pair<std::string, ad::Tensor*>>& named) {
    std::vector<ad::Tensor*> out;
    for (const auto& [name, t] : named) out.push_back(t);
    return out;
}

}  // namespace sage::model
