#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "sage/ad/graph.hpp"

// Differentiable primitives. Every op records one node on the graph of its
// first operand; mixing graphs throws std::invalid_argument.
namespace sage::ad {

// Sparse causal attention pattern: allowed[i] lists the key positions that
// query position i may attend to, in increasing order.
struct AttentionPattern {
    std::size_t length = 0;
    std::vector<std::vector<std::uint32_t>> allowed;

    std::size_t pair_count() const;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// a (T x d) plus a row vector b (1 x d or d) broadcast over rows.
Var add_row(Var a, Var b);
// a (T x d) scaled row-wise by column c (T x 1).
Var mul_col(Var a, Var c);
// s * a + b elementwise.
Var affine(Var a, double s, double b = 0.0);
Var scale(Var a, double s);

Var exp(Var a);
Var log(Var a);
Var sigmoid(Var a);
Var log_sigmoid(Var a);
// z * sigmoid(beta * z)
Var swish(Var a, double beta);
// Exact (erf) GELU.
Var gelu(Var a);

Var sum(Var a);
Var mean(Var a);
// Column-wise mean over rows: (T x d) -> (1 x d).
Var mean_rows(Var a);

// x / sqrt(mean(x^2) + eps) * gamma, row-wise.
Var rmsnorm(Var x, Var gamma, double eps);

Var gather_rows(Var table, std::span<const int> ids);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
// out[i] = a(i, index[i]) as a (T x 1) column.
Var pick(Var a, std::span<const int> index);

Var log_softmax_rows(Var a);
// Mean over rows of -log softmax(logits)[target].
Var cross_entropy(Var logits, std::span<const int> targets);

// Multi-head scaled dot-product attention restricted to `pattern`.
Var masked_attention(Var q, Var k, Var v, std::size_t num_heads,
                     std::shared_ptr<const AttentionPattern> pattern);

}  // namespace sage::ad
