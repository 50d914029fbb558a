#include "sage/reliability/information.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sage::reliability {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
}

}  // namespace

DiscreteJoint::DiscreteJoint(std::vector<std::size_t> shape, std::vector<double> probs)
    : shape_(std::move(shape)), p_(std::move(probs)) {
    if (shape_.empty()) throw std::invalid_argument("DiscreteJoint: no axes");
    for (auto s : shape_)
        if (s == 0) throw std::invalid_argument("DiscreteJoint: empty support");
    if (p_.size() != product(shape_)) throw std::invalid_argument("DiscreteJoint: table size does not match shape");
    double total = 0.0;
    for (double v : p_) {
        if (!(v >= 0.0)) throw std::invalid_argument("DiscreteJoint: negative or NaN probability");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("DiscreteJoint: probabilities do not sum to 1");
}

DiscreteJoint DiscreteJoint::random(std::vector<std::size_t> shape, std::mt19937_64& rng, double zero_fraction) {
    const std::size_t n = product(shape);
    std::exponential_distribution<double> expo(1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p(n);
    for (auto& v : p) v = expo(rng);
    for (auto& v : p)
        if (u(rng) < zero_fraction) v = 0.0;
    double total = 0.0;
    for (double v : p) total += v;
    if (total == 0.0) {
        p[0] = 1.0;
        total = 1.0;
    }
    for (auto& v : p) v /= total;
    return DiscreteJoint(std::move(shape), std::move(p));
}

double DiscreteJoint::at(std::span<const std::size_t> index) const {
    if (index.size() != shape_.size()) throw std::invalid_argument("DiscreteJoint::at: wrong rank");
    std::size_t flat = 0;
    for (std::size_t a = 0; a < shape_.size(); ++a) {
        if (index[a] >= shape_[a]) throw std::out_of_range("DiscreteJoint::at: index out of range");
        flat = flat * shape_[a] + index[a];
    }
    return p_[flat];
}

double DiscreteJoint::entropy(const std::vector<std::size_t>& axes) const {
    std::vector<bool> keep(shape_.size(), false);
    for (auto a : axes) {
        if (a >= shape_.size()) throw std::invalid_argument("DiscreteJoint: axis out of range");
        keep[a] = true;
    }
    std::vector<std::size_t> sub;
    for (std::size_t a = 0; a < shape_.size(); ++a)
        if (keep[a]) sub.push_back(shape_[a]);
    std::vector<double> marginal(product(sub), 0.0);
    std::vector<std::size_t> idx(shape_.size(), 0);
    for (double v : p_) {
        std::size_t m = 0;
        for (std::size_t a = 0; a < shape_.size(); ++a)
            if (keep[a]) m = m * shape_[a] + idx[a];
        marginal[m] += v;
        for (std::size_t a = shape_.size(); a-- > 0;) {
            if (++idx[a] < shape_[a]) break;
            idx[a] = 0;
        }
    }
    double h = 0.0;
    for (double m : marginal)
        if (m > 0.0) h -= m * std::log2(m);
    return h;
}

double DiscreteJoint::conditional_entropy(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) const {
    std::vector<std::size_t> ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    return entropy(ab) - entropy(b);
}

double DiscreteJoint::mutual_information(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                                         const std::vector<std::size_t>& c) const {
    auto cat = [](std::vector<std::size_t> x, const std::vector<std::size_t>& y) {
        x.insert(x.end(), y.begin(), y.end());
        return x;
    };
    return entropy(cat(a, c)) + entropy(cat(b, c)) - entropy(cat(cat(a, b), c)) - entropy(c);
}

EntropySuite entropy_suite(const DiscreteJoint& joint) {
    if (joint.shape().size() != 4) throw std::invalid_argument("entropy_suite: expected axes (X, Y, Z_k, W)");
    EntropySuite s;
    s.h_k = joint.conditional_entropy({0}, {1, 2});
    s.h_k1 = joint.conditional_entropy({0}, {1, 2, 3});
    s.info_gain = joint.mutual_information({0}, {3}, {1, 2});
    return s;
}

InfoBound info_bound_check(const DiscreteJoint& joint) {
    const auto& sh = joint.shape();
    if (sh.size() != 3) throw std::invalid_argument("info_bound_check: expected axes (X, Y, Z)");
    double correct = 0.0;
    std::size_t idx[3];
    for (idx[0] = 0; idx[0] < sh[0]; ++idx[0])
        for (idx[2] = 0; idx[2] < sh[2]; ++idx[2]) {
            double best = 0.0;
            for (idx[1] = 0; idx[1] < sh[1]; ++idx[1]) best = std::max(best, joint.at(idx));
            correct += best;
        }
    InfoBound b;
    b.lhs = 1.0 - correct;
    const double exponent = joint.conditional_entropy({1}, {0}) - joint.mutual_information({0}, {2});
    b.rhs = 1.0 - std::exp2(-exponent);
    b.satisfied = b.lhs >= b.rhs;
    return b;
}

}  // namespace sage::reliability
