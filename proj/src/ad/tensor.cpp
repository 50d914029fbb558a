#include "sage/ad/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace sage::ad {

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (numel(shape_) != data_.size()) {
        throw std::invalid_argument("tensor: shape " + shape_string(shape_) + " does not match " +
                                    std::to_string(data_.size()) + " values");
    }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor(Shape{rows, cols}, std::move(data));
}

Tensor Tensor::vector(std::vector<double> data) {
    const std::size_t n = data.size();
    return Tensor(Shape{n}, std::move(data));
}

std::size_t Tensor::rows() const noexcept {
    if (shape_.size() < 2) return 1;
    return shape_[0];
}

std::size_t Tensor::cols() const noexcept {
    if (shape_.empty()) return 1;
    if (shape_.size() == 1) return shape_[0];
    return data_.size() / shape_[0];
}

double Tensor::item() const {
    if (data_.size() != 1) {
        throw std::invalid_argument("tensor: item() on tensor of shape " + shape_string(shape_));
    }
    return data_[0];
}

void Tensor::set_requires_grad(bool value) noexcept {
    requires_grad_ = value;
    if (!value) {
        grad_.clear();
        grad_.shrink_to_fit();
        grad_allocated_ = false;
    }
}

std::span<double> Tensor::grad() {
    if (!has_grad()) throw std::logic_error("tensor: gradient not allocated");
    return grad_;
}

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw std::logic_error("tensor: gradient not allocated");
    return grad_;
}

std::span<double> Tensor::ensure_grad() {
    if (!requires_grad_) throw std::logic_error("tensor: gradient requested for constant tensor");
    if (!has_grad()) {
        grad_.assign(data_.size(), 0.0);
        grad_allocated_ = true;
    }
    return grad_;
}

void Tensor::zero_grad() {
    if (has_grad()) std::fill(grad_.begin(), grad_.end(), 0.0);
}

double init_stddev(std::size_t num_layers) {
    if (num_layers == 0) throw std::invalid_argument("init_stddev: num_layers must be >= 1");
    return 0.02 / std::sqrt(2.0 * static_cast<double>(num_layers));
}

Tensor init_weights(std::size_t rows, std::size_t cols, std::size_t num_layers, std::uint64_t seed) {
    if (rows == 0 || cols == 0) throw std::invalid_argument("init_weights: dimensions must be positive");
    const double sigma = init_stddev(num_layers);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, sigma);
    std::vector<double> values(rows * cols);
    for (auto& v : values) {
        do {
            v = normal(rng);
        } while (std::abs(v) > 2.0 * sigma);
    }
    return Tensor::matrix(rows, cols, std::move(values));
}

}  // namespace sage::ad
