#include "sage/ad/graph.hpp"

#include <stdexcept>

namespace sage::ad {

const Tensor& Var::value() const { return graph_->value(id_); }

bool Var::requires_grad() const { return graph_->requires_grad(id_); }

Var Graph::parameter(Tensor& param) {
    Node node;
    node.value = param.detached();
    node.requires_grad = param.requires_grad();
    node.param = node.requires_grad ? &param : nullptr;
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Graph::input(Tensor value, bool requires_grad) {
    Node node;
    node.value = value.detached();
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Graph::record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward) {
    bool needs = false;
    for (auto p : parents) needs = needs || nodes_.at(p).requires_grad;
    Node node;
    node.value = std::move(value);
    node.requires_grad = needs;
    node.parents = std::move(parents);
    if (needs) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

std::span<double> Graph::grad_buffer(std::size_t id) {
    Node& node = nodes_.at(id);
    if (!node.requires_grad) throw std::logic_error("graph: gradient buffer requested for constant node");
    if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
    return node.grad;
}

void Graph::backward(Var output) {
    if (&output.graph() != this) throw std::invalid_argument("backward: variable belongs to another graph");
    const std::size_t out = output.id();
    if (nodes_.at(out).value.size() != 1) {
        throw std::invalid_argument("backward: output must be scalar, got shape " +
                                    shape_string(nodes_[out].value.shape()));
    }
    if (!nodes_[out].requires_grad) return;
    grad_buffer(out)[0] += 1.0;

    for (std::size_t i = out + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.requires_grad || node.grad.empty() || !node.backward) continue;
        node.backward(*this, i);
    }

    for (auto& node : nodes_) {
        if (!node.param) continue;
        auto dst = node.param->ensure_grad();
        if (node.grad.empty()) continue;
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += node.grad[k];
    }
    for (auto& node : nodes_) {
        if (node.requires_grad && !node.param && node.parents.empty() && node.grad.empty()) {
            node.grad.assign(node.value.size(), 0.0);
        }
    }
}

}  // namespace sage::ad
