#include "sage/model/layers.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sage::model {

std::vector<double> rmsnorm(std::span<const double> x, std::span<const double> gamma, double eps) {
    if (x.size() != gamma.size()) {
        throw std::invalid_argument("rmsnorm: x has " + std::to_string(x.size()) + " entries, gamma " +
                                    std::to_string(gamma.size()));
    }
    if (x.empty()) throw std::invalid_argument("rmsnorm: empty input");
    if (!(eps >= 0.0)) throw std::invalid_argument("rmsnorm: eps must be non-negative");
    double ss = 0.0;
    for (double v : x) ss += v * v;
    const double ms = ss / static_cast<double>(x.size()) + eps;
    const double inv = ms > 0.0 ? 1.0 / std::sqrt(ms) : 0.0;
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv * gamma[i];
    return out;
}

ad::Var swiglu_ffn(ad::Var x, ad::Var w_gate, ad::Var w_up, ad::Var w_down, double beta) {
    const std::size_t d = x.cols();
    if (w_gate.rows() != d || w_up.rows() != d || w_gate.cols() != w_up.cols() || w_down.rows() != w_up.cols()) {
        throw std::invalid_argument("swiglu_ffn: weight shapes do not conform");
    }
    auto gate = ad::swish(ad::matmul(x, w_gate), beta);
    auto up = ad::matmul(x, w_up);
    return ad::matmul(ad::mul(gate, up), w_down);
}

ad::Tensor swiglu_ffn(const ad::Tensor& x, const ad::Tensor& w_gate, const ad::Tensor& w_up,
                      const ad::Tensor& w_down, double beta) {
    ad::Graph g;
    return swiglu_ffn(g.constant(x), g.constant(w_gate), g.constant(w_up), g.constant(w_down), beta).value();
}

std::vector<double> mch_confidence(std::span<const double> h_last, const ad::Tensor& w_mch) {
    if (w_mch.rank() != 2 || w_mch.rows() != h_last.size()) {
        throw std::invalid_argument("mch_confidence: W_MCH shape " + ad::shape_string(w_mch.shape()) +
                                    " does not match hidden size " + std::to_string(h_last.size()));
    }
    const std::size_t dc = w_mch.cols();
    std::vector<double> z(dc, 0.0);
    for (std::size_t i = 0; i < h_last.size(); ++i)
        for (std::size_t j = 0; j < dc; ++j) z[j] += h_last[i] * w_mch.at(i, j);
    for (double& v : z) v = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    return z;
}

ad::AttentionPattern landmark_pattern(std::size_t length, std::size_t k, std::size_t window) {
    if (length == 0) throw std::invalid_argument("landmark_pattern: empty sequence");
    if (k == 0 || window == 0) throw std::invalid_argument("landmark_pattern: k and window must be >= 1");
    ad::AttentionPattern p;
    p.length = length;
    p.allowed.resize(length);
    for (std::size_t i = 0; i < length; ++i) {
        const std::size_t local_begin = i + 1 >= window ? i + 1 - window : 0;
        auto& row = p.allowed[i];
        for (std::size_t j = 0; j < local_begin; j += k) row.push_back(static_cast<std::uint32_t>(j));
        for (std::size_t j = local_begin; j <= i; ++j) row.push_back(static_cast<std::uint32_t>(j));
    }
    return p;
}

ad::AttentionPattern causal_pattern(std::size_t length) {
    if (length == 0) throw std::invalid_argument("causal_pattern: empty sequence");
    ad::AttentionPattern p;
    p.length = length;
    p.allowed.resize(length);
    for (std::size_t i = 0; i < length; ++i)
        for (std::size_t j = 0; j <= i; ++j) p.allowed[i].push_back(static_cast<std::uint32_t>(j));
    return p;
}

}  // namespace sage::model
