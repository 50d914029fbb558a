#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sage::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major double tensor. The gradient buffer is allocated lazily and
// only ever for tensors that require a gradient.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double value);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    static Tensor vector(std::vector<double> data);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t rank() const noexcept { return shape_.size(); }

    // Matrix view: rank-0 is 1x1, rank-1 of length n is 1xn.
    std::size_t rows() const noexcept;
    std::size_t cols() const noexcept;

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double item() const;

    bool requires_grad() const noexcept { return requires_grad_; }
    void set_requires_grad(bool value) noexcept;

    bool has_grad() const noexcept { return grad_allocated_; }
    std::span<double> grad();
    std::span<const double> grad() const;
    // Allocates a zero gradient if absent; throws if requires_grad is false.
    std::span<double> ensure_grad();
    void zero_grad();

    // Copy of shape and values only.
    Tensor detached() const { return Tensor(shape_, data_); }

private:
    Shape shape_;
    std::vector<double> data_;
    std::vector<double> grad_;
    bool requires_grad_ = false;
    bool grad_allocated_ = false;
};

/// Standard deviation used for weight initialisation: 0.02 / sqrt(2L).
double init_stddev(std::size_t num_layers);

/// Truncated-normal initialisation with sigma = init_stddev(num_layers).
/// Draws are resampled until |v| <= 2 sigma. Deterministic per seed.
Tensor init_weights(std::size_t rows, std::size_t cols, std::size_t num_layers, std::uint64_t seed);

}  // namespace sage::ad
