#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "seps/featurebank.hpp"
#include "seps/params.hpp"
#include "seps/rng.hpp"
#include "seps/tensor.hpp"

namespace seps::testing {

inline Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape), 0.0);
    std::uniform_real_distribution<double> u(lo, hi);
    for (double& v : t.data()) v = u(rng);
    return t;
}

inline Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
    return random_tensor(rng, {rows, cols}, lo, hi);
}

/// Parameters with every tensor random, heads included, so that all gradients are
/// generically non-zero.
inline ModelParams random_model(Rng& rng, std::size_t d, std::size_t hidden, std::size_t n_keep, std::size_t k,
                                double scale = 0.5) {
    auto layer = [&](std::size_t in, std::size_t out) {
        return LayerT<Tensor>{random_matrix(rng, in, out, -scale, scale), random_tensor(rng, {out}, -scale, scale)};
    };
    ModelParams p;
    p.predictor = {layer(d, hidden), layer(hidden, 1)};
    p.agg_sparse = {layer(d, n_keep)};
    p.agg_dense = {layer(d, n_keep)};
    p.head_p2w = {layer(k, 1)};
    p.head_w2p = {layer(k, 1)};
    return p;
}

inline Sample random_sample(Rng& rng, const std::string& id, std::size_t n, std::size_t m, std::size_t md,
                            std::size_t d) {
    Sample s;
    s.id = id;
    s.patches = random_matrix(rng, n, d);
    s.sparse_tokens = random_matrix(rng, m, d);
    s.dense_tokens = random_matrix(rng, md, d);
    return s;
}

}  // namespace seps::testing
