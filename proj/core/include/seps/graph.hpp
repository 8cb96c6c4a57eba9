#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string_view>
#include <vector>

#include "seps/tensor.hpp"

namespace seps {

class Graph;
class Gradients;

/// Handle to a node of a Graph. Cheap to copy; valid as long as the graph lives.
struct Var {
    Graph* graph = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const std::vector<std::size_t>& shape() const { return value().shape(); }
};

Gradients gradient(const Graph& graph, Var output);

/// Append-only tape of operation records. Node ids are a topological order.
///
/// A graph is single-owner: build it on one thread, run gradient() on the same
/// thread, then drop it. Values are checked for finiteness as they are recorded.
class Graph {
public:
    /// Backward callback: receives the node's upstream adjoint and the adjoint
    /// table for the whole graph, and accumulates into its parents' slots through
    /// Graph::accumulate.
    using Backward = std::function<void(const Tensor& upstream, std::vector<Tensor>& adjoints)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = delete;
    Graph& operator=(Graph&&) = delete;

    /// Differentiable input (a parameter or anything we want d/d of).
    Var leaf(Tensor value);
    /// Non-differentiable input.
    Var constant(Tensor value);
    /// Records an operation result. `op` names the operation in error messages.
    /// The backward callback is dropped when none of `parents` depends on a leaf.
    Var record(std::string_view op, Tensor value, std::initializer_list<Var> parents,
               Backward backward);
    Var record(std::string_view op, Tensor value, const std::vector<Var>& parents,
               Backward backward);

    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    bool is_leaf(std::size_t id) const { return nodes_.at(id).kind == Kind::leaf; }
    /// True when the node is a leaf or depends on one.
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Returns the adjoint slot for `id`, allocating zeros of the node's shape on first use.
    Tensor& accumulate(std::vector<Tensor>& adjoints, std::size_t id) const;

    /// Discrete choices made by non-smooth operations (argmax index, hinge,
    /// clip region, hard decision), in recording order. Two evaluations with
    /// equal logs lie on the same smooth piece of the function.
    void log_branch(std::size_t choice) { branches_.push_back(choice); }
    const std::vector<std::size_t>& branches() const noexcept { return branches_; }

private:
    enum class Kind { leaf, constant, op };
    struct Node {
        Tensor value;
        Backward backward;
        Kind kind;
        bool requires_grad;
    };

    Var push(std::string_view op, Tensor value, bool requires_grad, Backward backward);

    friend Gradients gradient(const Graph&, Var);

    std::vector<Node> nodes_;
    std::vector<std::size_t> branches_;
};

/// Adjoints of a scalar output with respect to every leaf of a graph.
class Gradients {
public:
    /// Gradient for a leaf. Leaves the output does not depend on get zeros.
    const Tensor& operator[](Var leaf) const;
    std::size_t leaf_count() const noexcept { return leaf_ids_.size(); }

private:
    friend Gradients gradient(const Graph&, Var);
    std::vector<Tensor> adjoints_;
    std::vector<std::size_t> leaf_ids_;
    const Graph* graph_ = nullptr;
};

/// Reverse-mode sweep from a scalar output. Nodes are visited in reverse
/// recording order, so accumulation order is fixed for a given graph.
Gradients gradient(const Graph& graph, Var output);

}  // namespace seps
