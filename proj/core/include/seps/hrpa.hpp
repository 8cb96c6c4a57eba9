#pragma once

#include <cstddef>

#include "seps/graph.hpp"
#include "seps/params.hpp"

namespace seps {

/// Plain-value view of an alignment score and its four summands.
struct AlignmentScore {
    double total = 0.0;
    double mean_p2w = 0.0;
    double head_p2w = 0.0;
    double mean_w2p = 0.0;
    double head_w2p = 0.0;
};

struct AlignmentVars {
    Var total;
    Var mean_p2w;
    Var head_p2w;
    Var mean_w2p;
    Var head_w2p;

    AlignmentScore values() const;
};

enum class Direction { patch_to_word, word_to_patch };

struct PooledTerms {
    Var mean;  // average of the per-row (or per-column) maxima
    Var head;  // relevance head applied to the top-K maxima
};

/// Cosine similarity between every aggregated patch (rows of `patches`) and
/// every word (rows of `words`). Zero-norm rows are rejected.
Var similarity_matrix(Var patches, Var words);

/// Max-pools A along one direction, then returns the mean of the maxima and
/// the head's scalar on their top-K (K = head input width, padded with the
/// minimum when there are fewer maxima than K).
PooledTerms relevance_pool(Var similarity, Direction direction, const MlpT<Var>& head);

/// S(I, T) = mean_p2w + head_p2w + mean_w2p + head_w2p, summed in that order.
AlignmentVars align_score(Var patches, Var words, const MlpT<Var>& head_p2w, const MlpT<Var>& head_w2p);

}  // namespace seps
