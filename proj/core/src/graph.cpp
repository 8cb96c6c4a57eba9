#include "seps/graph.hpp"

#include <string>

namespace seps {

const Tensor& Var::value() const {
    if (graph == nullptr) throw shape_error("value() on unbound Var");
    return graph->value(*this);
}

Var Graph::leaf(Tensor value) {
    if (!value.all_finite()) throw numeric_error("non-finite leaf value");
    nodes_.push_back(Node{std::move(value), nullptr, Kind::leaf, true});
    return Var{this, nodes_.size() - 1};
}

Var Graph::constant(Tensor value) {
    if (!value.all_finite()) throw numeric_error("non-finite constant value");
    nodes_.push_back(Node{std::move(value), nullptr, Kind::constant, false});
    return Var{this, nodes_.size() - 1};
}

Var Graph::push(std::string_view op, Tensor value, bool requires_grad, Backward backward) {
    if (!value.all_finite()) {
        throw numeric_error("non-finite value produced by " + std::string(op));
    }
    if (!requires_grad) backward = nullptr;
    nodes_.push_back(Node{std::move(value), std::move(backward), Kind::op, requires_grad});
    return Var{this, nodes_.size() - 1};
}

Var Graph::record(std::string_view op, Tensor value, std::initializer_list<Var> parents,
                  Backward backward) {
    bool any = false;
    for (const Var& p : parents) {
        if (p.graph != this) throw shape_error(std::string(op) + ": operand from another graph");
        any = any || nodes_[p.id].requires_grad;
    }
    return push(op, std::move(value), any, std::move(backward));
}

Var Graph::record(std::string_view op, Tensor value, const std::vector<Var>& parents,
                  Backward backward) {
    bool any = false;
    for (const Var& p : parents) {
        if (p.graph != this) throw shape_error(std::string(op) + ": operand from another graph");
        any = any || nodes_[p.id].requires_grad;
    }
    return push(op, std::move(value), any, std::move(backward));
}

Tensor& Graph::accumulate(std::vector<Tensor>& adjoints, std::size_t id) const {
    Tensor& slot = adjoints[id];
    if (slot.size() == 0 && nodes_[id].value.size() != 0) {
        slot = Tensor(nodes_[id].value.shape(), 0.0);
    }
    return slot;
}

const Tensor& Gradients::operator[](Var leaf) const {
    if (graph_ == nullptr || leaf.graph != graph_) {
        throw shape_error("gradient requested for a Var of a different graph");
    }
    if (!graph_->is_leaf(leaf.id)) throw shape_error("gradient requested for a non-leaf node");
    return adjoints_[leaf.id];
}

Gradients gradient(const Graph& graph, Var output) {
    if (output.graph != &graph) throw shape_error("output belongs to a different graph");
    if (graph.value(output).size() != 1) {
        throw shape_error("gradient requires a scalar output, got shape " +
                          shape_string(graph.value(output).shape()));
    }

    Gradients result;
    result.graph_ = &graph;
    result.adjoints_.resize(graph.size());
    graph.accumulate(result.adjoints_, output.id)[0] = 1.0;

    for (std::size_t i = output.id + 1; i-- > 0;) {
        const auto& node = graph.nodes_[i];
        if (!node.backward || result.adjoints_[i].size() == 0) continue;
        // The callback writes into the same table, so hand it a copy.
        const Tensor upstream = result.adjoints_[i];
        node.backward(upstream, result.adjoints_);
    }

    for (std::size_t i = 0; i < graph.size(); ++i) {
        if (graph.is_leaf(i)) {
            result.leaf_ids_.push_back(i);
            graph.accumulate(result.adjoints_, i);
        } else {
            result.adjoints_[i] = Tensor();
        }
    }
    return result;
}

}  // namespace seps
