#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "seps/featurebank.hpp"
#include "seps/graph.hpp"
#include "seps/params.hpp"
#include "seps/sdtps.hpp"

namespace seps {

struct ObjectiveConfig {
    double margin = 0.2;
    double rho = 0.5;
    double lambda1 = 1.0;
    double lambda2 = 1.0;

    void validate() const;
};

/// Keep statistics of one image under its paired caption: straight-through
/// masks plus their hard means.
struct KeepStats {
    Var mask_sparse;
    Var mask_dense;
    double hard_sparse = 0.0;  // mean(D_s)
    double hard_dense = 0.0;   // mean(D_d)
    double soft_sparse = 0.0;  // mean keep probability
    double soft_dense = 0.0;
};

struct BatchScores {
    Var scores;  // B x B, scores[i][j] = S(image i, caption j)
    std::vector<KeepStats> keep;
    std::vector<FrozenDecisions> decisions;  // per pair, row-major (i * B + j), for replay
};

/// Noise source for train-mode forwards: sample i draws from
/// make_rng(seed, sample.id, step).
struct NoiseSchedule {
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
};

/// S(image i, caption j) for every pair of the batch. Selection for a pair is
/// guided by caption j, so an image's own caption never leaks into the scores
/// of other captions. `replay`, when given, must hold one entry per pair.
BatchScores batch_similarity(Graph& graph, std::span<const Sample* const> batch, const ModelVars& model,
                             const SdtpsConfig& cfg, Mode mode, NoiseSchedule noise = {},
                             std::span<const FrozenDecisions> replay = {});

/// Bidirectional hinge with the hardest in-batch negative per positive pair,
/// summed over the batch. Needs B >= 2.
Var triplet_loss(Var scores, double margin);
/// Value-only form, same arithmetic.
double triplet_loss(const Tensor& scores, double margin);

/// mean over images of (rho - lambda1 mean(D_s) - lambda2 mean(D_d))^2.
Var ratio_loss(std::span<const KeepStats> keep, const ObjectiveConfig& cfg);

/// L = L_align + L_ratio.
Var total_loss(const BatchScores& batch, const ObjectiveConfig& cfg);

}  // namespace seps
