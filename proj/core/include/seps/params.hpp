#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "seps/graph.hpp"

namespace seps {

template <class T>
struct LayerT {
    T weight;  // in x out
    T bias;    // out
};

/// Perceptron stack; tanh between layers, no activation after the last.
template <class T>
using MlpT = std::vector<LayerT<T>>;

/// Every trainable tensor of the pipeline. Instantiated over Tensor (storage)
/// and Var (bound into a graph).
template <class T>
struct ModelT {
    MlpT<T> predictor;   // d -> h -> 1, sigmoid applied by the caller
    MlpT<T> agg_sparse;  // d -> N_c
    MlpT<T> agg_dense;   // d -> N_c
    MlpT<T> head_p2w;    // K -> 1 (optionally K -> h -> 1)
    MlpT<T> head_w2p;    // K -> 1 (optionally K -> h -> 1)
};

using ModelParams = ModelT<Tensor>;
using ModelVars = ModelT<Var>;

/// Visits every tensor with a stable dotted name, e.g. "predictor.0.weight".
/// Works for const and mutable models alike.
template <class Model, class Fn>
void for_each_param(Model& model, Fn&& fn) {
    auto visit = [&fn](const char* group, auto& mlp) {
        for (std::size_t i = 0; i < mlp.size(); ++i) {
            const std::string prefix = std::string(group) + "." + std::to_string(i);
            fn(prefix + ".weight", mlp[i].weight);
            fn(prefix + ".bias", mlp[i].bias);
        }
    };
    visit("predictor", model.predictor);
    visit("agg_sparse", model.agg_sparse);
    visit("agg_dense", model.agg_dense);
    visit("head_p2w", model.head_p2w);
    visit("head_w2p", model.head_w2p);
}

/// Structural sizes implied by a parameter set.
struct ModelShape {
    std::size_t dim = 0;
    std::size_t predictor_hidden = 0;
    std::size_t n_keep = 0;
    std::size_t k_top = 0;
    std::size_t head_hidden = 0;  // 0: linear heads

    friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

/// Reads the shape back from tensor sizes; throws shape_error when inconsistent.
ModelShape shape_of(const ModelParams& params);

std::vector<Tensor> flatten(const ModelParams& params);
std::vector<std::string> param_names(const ModelParams& params);
std::size_t param_count(const ModelParams& params);

/// Binds every tensor as a leaf (trainable) or constant of `graph`.
ModelVars bind(Graph& graph, const ModelParams& params, bool trainable = true);
/// Rebuilds the Var structure from leaves given in for_each_param order.
ModelVars bind_leaves(std::span<const Var> leaves, const ModelParams& layout);

/// Applies an MLP row-wise to an n x in matrix.
Var mlp_forward(const MlpT<Var>& mlp, Var x);

}  // namespace seps
