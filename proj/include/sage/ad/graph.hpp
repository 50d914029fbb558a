#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "sage/ad/tensor.hpp"

namespace sage::ad {

class Graph;

// Handle to a node recorded on a Graph.
class Var {
public:
    Var() = default;
    Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

    Graph& graph() const { return *graph_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return graph_ != nullptr; }

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    double item() const { return value().item(); }
    bool requires_grad() const;

private:
    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

// Tape of operation records. Nodes are appended in evaluation order, so the
// tape order is a topological order and backward walks it in reverse.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, std::size_t self)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // Leaf bound to an external tensor; on backward its gradient is added
    // into `param.grad()`. Tracks gradients iff param.requires_grad().
    Var parameter(Tensor& param);
    // Leaf owned by the graph.
    Var input(Tensor value, bool requires_grad);
    Var constant(Tensor value) { return input(std::move(value), false); }
    Var scalar(double value) { return constant(Tensor::scalar(value)); }

    // Reverse-mode sweep from a scalar output.
    void backward(Var output);

    std::size_t size() const noexcept { return nodes_.size(); }
    const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
    bool grad_allocated(std::size_t id) const { return !nodes_.at(id).grad.empty(); }
    std::span<const double> grad(std::size_t id) const { return nodes_.at(id).grad; }

    // Op-author interface.
    Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward);
    // Gradient buffer of a node that requires grad (allocated on first use).
    std::span<double> grad_buffer(std::size_t id);
    std::span<const double> upstream(std::size_t id) const { return nodes_[id].grad; }

private:
    struct Node {
        Tensor value;
        std::vector<double> grad;
        bool requires_grad = false;
        Tensor* param = nullptr;
        std::vector<std::size_t> parents;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
};

}  // namespace sage::ad
