#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sage/ad/graph.hpp"
#include "sage/ad/ops.hpp"
#include "sage/ad/tensor.hpp"

namespace sage::model {

// x / sqrt(mean(x^2) + eps) * gamma. eps >= 0; a zero vector maps to zero.
std::vector<double> rmsnorm(std::span<const double> x, std::span<const double> gamma, double eps);

// Row-wise SwiGLU feed-forward: (Swish_beta(x W_G) * (x W_1)) W_2,
// Swish_beta(z) = z * sigmoid(beta z).
ad::Tensor swiglu_ffn(const ad::Tensor& x, const ad::Tensor& w_gate, const ad::Tensor& w_up,
                      const ad::Tensor& w_down, double beta);
ad::Var swiglu_ffn(ad::Var x, ad::Var w_gate, ad::Var w_up, ad::Var w_down, double beta);

// Meta-cognitive confidence sigmoid(h_last W_MCH), W_MCH of shape d_model x d_critic.
std::vector<double> mch_confidence(std::span<const double> h_last, const ad::Tensor& w_mch);

// Position i attends to every j in (i - window, i] and to every landmark
// j <= i with j % k == 0.
ad::AttentionPattern landmark_pattern(std::size_t length, std::size_t k, std::size_t window);
ad::AttentionPattern causal_pattern(std::size_t length);

}  // namespace sage::model
