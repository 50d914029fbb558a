#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace sage::reliability {

// Joint distribution over a few finite axes, stored row-major with the last
// axis fastest. All information quantities are in bits.
class DiscreteJoint {
public:
    DiscreteJoint(std::vector<std::size_t> shape, std::vector<double> probs);

    // Random table with positive Dirichlet(1) entries; `zero_fraction` of the
    // cells are zeroed before normalising to exercise 0 log 0.
    static DiscreteJoint random(std::vector<std::size_t> shape, std::mt19937_64& rng, double zero_fraction = 0.0);

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    const std::vector<double>& probs() const noexcept { return p_; }
    double at(std::span<const std::size_t> index) const;

    // Joint entropy of the listed axes (empty list -> 0).
    double entropy(const std::vector<std::size_t>& axes) const;
    // H(A | B) = H(A, B) - H(B)
    double conditional_entropy(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) const;
    // I(A; B | C)
    double mutual_information(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                              const std::vector<std::size_t>& c = {}) const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> p_;
};

// Axes (X, Y, Z_k, W) with Z_{k+1} = (Z_k, W).
struct EntropySuite {
    double h_k = 0.0;         // H(X | Y, Z_k)
    double h_k1 = 0.0;        // H(X | Y, Z_{k+1})
    double info_gain = 0.0;   // I(X; Z_{k+1} | Y, Z_k)
    double identity_residual() const { return h_k1 - (h_k - info_gain); }
};
EntropySuite entropy_suite(const DiscreteJoint& joint);

// Axes (X, Y, Z). lhs is the error of the Bayes-optimal predictor of Y from
// (X, Z); rhs = 1 - 2^-(H(Y|X) - I(X;Z)). Nothing is asserted.
struct InfoBound {
    double lhs = 0.0;
    double rhs = 0.0;
    bool satisfied = false;  // lhs >= rhs
};
InfoBound info_bound_check(const DiscreteJoint& joint);

}  // namespace sage::reliability
