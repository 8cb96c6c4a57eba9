#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "seps/graph.hpp"

namespace seps {

// Elementwise arithmetic on equal shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);

/// (n x k) . (k x m)
Var matmul(Var a, Var b);
/// Adds a length-m bias to every row of an n x m matrix.
Var add_row(Var a, Var bias);
Var transpose(Var a);
Var reshape(Var a, std::vector<std::size_t> shape);

Var sigmoid(Var x);
Var tanh(Var x);
/// Natural log; every input must be strictly positive.
Var log(Var x);
Var exp(Var x);
Var square(Var x);
/// max(x, 0)
Var relu(Var x);
/// Values outside [lo, hi] are clamped and get zero gradient.
Var clip(Var x, double lo, double hi);

Var sum(Var x);
Var mean(Var x);

/// Column-wise softmax of an n x m matrix. Rows with row_mask[i] == false are
/// excluded from every column's support and come out exactly 0. An empty mask
/// means all rows participate.
Var softmax_columns(Var x, std::span<const bool> row_mask = {});

/// Column-wise softmax weighted by a per-row multiplier `row_weight` (length n):
///   w_ij = m_i exp(x_ij) / sum_k m_k exp(x_kj)
/// With 0/1 weights this is the masked softmax; with a straight-through mask it
/// also carries gradient to the mask itself.
Var weighted_softmax_columns(Var x, Var row_weight);

struct RowMax {
    Var values;                        // length-n vector
    std::vector<std::size_t> argmax;   // first-occurrence column per row
};
/// Per-row maximum. The gradient goes to the winning entry only.
RowMax row_max_with_arg(Var x);

/// k largest entries of a vector in descending order (stable: earlier index wins
/// ties). When k exceeds the length, the tail is padded with the minimum value.
Var topk(Var x, std::size_t k);

/// A_ij = <a_i, b_j> / (|a_i| |b_j|) for a (n x d) and b (m x d).
Var cosine_matrix(Var a, Var b);

/// Packs scalar nodes into a rows x cols matrix, row-major.
Var stack(const std::vector<Var>& scalars, std::size_t rows, std::size_t cols);

/// Straight-through estimator: forward value is hard + (soft - soft_ref), which
/// equals `hard` exactly when soft_ref holds soft's current value. The gradient
/// flows to `soft` unchanged.
Var straight_through(const Tensor& hard, Var soft, const Tensor& soft_ref);

}  // namespace seps
