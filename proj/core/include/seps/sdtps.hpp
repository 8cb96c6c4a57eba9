#pragma once

#include <cstddef>
#include <optional>
#include <utility>

#include "seps/featurebank.hpp"
#include "seps/graph.hpp"
#include "seps/params.hpp"
#include "seps/rng.hpp"

namespace seps {

enum class Mode { train, eval };

/// Score mixing and decision settings for patch selection.
struct SdtpsConfig {
    double beta = 0.2;   // weight of the attention terms against the predictor
    double tau = 1.0;    // Gumbel-Softmax temperature
    /// Zero the dense-text attention term (sparse-text-only ablation).
    bool ablate_dense_text = false;

    void validate() const;
};

/// Upper clip applied to branch scores before they enter the log domain.
inline constexpr double kScoreCeiling = 1.0 - 1e-6;

/// Per-patch significance components, all length N.
struct ScoreBundle {
    Tensor s_p;      // predictor
    Tensor s_st;     // sparse-text attention
    Tensor s_dt;     // dense-text attention
    Tensor s_im;     // image self-attention
    Tensor s_total;  // combined score, diagnostics only (may exceed 1)
};

struct DecisionMask {
    Tensor hard;  // 0/1, used in the forward pass
    Tensor soft;  // keep probability, carries the gradient
};

struct GumbelNoise {
    Tensor keep;  // one Gumbel draw per patch for the keep logit
    Tensor drop;  // and one for the drop logit
};

/// Everything needed to replay a decision exactly: used by gradient audits,
/// which evaluate the straight-through surrogate with decisions held fixed.
struct FrozenBranch {
    Tensor hard;
    Tensor soft_ref;
    GumbelNoise noise;
};

struct FrozenDecisions {
    FrozenBranch sparse;
    FrozenBranch dense;
};

// Value-level building blocks.

/// Maps raw attention values to [0, 1] by per-image min-max; a range below
/// eps_norm yields 0.5 everywhere.
Tensor normalize_min_max(const Tensor& raw);

/// Norm((v_i . E) / d) for every patch row of V. Division is by d, not sqrt(d).
Tensor attention_scores(const Tensor& patches, const Tensor& embedding, std::size_t d);

/// s = (1 - 2 beta) s_p + beta (s_st + s_dt + 2 s_im)
Tensor combine_scores(const Tensor& s_p, const Tensor& s_st, const Tensor& s_dt, const Tensor& s_im,
                      double beta);

/// Per-branch constant part beta * (2 s_x + 2 s_im), x = st for sparse, dt for dense.
std::pair<Tensor, Tensor> branch_offsets(const ScoreBundle& bundle, double beta);

/// Unclipped sparse/dense branch scores: the combined score with the other
/// text term replaced by this branch's own.
std::pair<Tensor, Tensor> branch_scores(const ScoreBundle& bundle, double beta);

/// sigmoid(MLP(v_i)) for every patch; graph form and plain form.
Var predict_scores(Var patches, const MlpT<Var>& predictor);
Tensor predict_scores(const Tensor& patches, const MlpT<Tensor>& predictor);

/// Draws Gumbel noise for n patches, or zeros when `rng` is null.
GumbelNoise draw_gumbel(std::size_t n, Rng* rng);

/// Two-logit Gumbel-Softmax keep decision on scores in [0, 1).
/// keep = log(s + eps), drop = log(1 - s + eps); soft = softmax at tau, keep
/// entry; hard = soft > 0.5.
DecisionMask gumbel_decision(const Tensor& scores, double tau, const GumbelNoise& noise);
DecisionMask gumbel_decision(const Tensor& scores, double tau, bool noise_enabled, Rng* rng);

struct DecisionVars {
    Var mask;  // straight-through: hard forward, soft backward
    DecisionMask values;
    FrozenBranch frozen;
};

/// Graph form of gumbel_decision. Scores are clipped to [0, kScoreCeiling].
/// With `replay` the recorded hard decision and soft reference are reused.
DecisionVars gumbel_decision(Var scores, double tau, const GumbelNoise& noise,
                             const FrozenBranch* replay = nullptr);

struct AggregatedPatches {
    Var vectors;       // N_c x d
    Tensor w_sparse;   // N x N_c, zero rows for dropped patches
    Tensor w_dense;
    bool sparse_empty = false;
    bool dense_empty = false;
};

/// v_hat_j = sum_i (W_s)_ij v_i + sum_i (W_d)_ij v_i with W = column softmax of
/// the aggregation logits restricted to kept rows. A branch without survivors
/// contributes nothing; both empty throws "no patches selected".
AggregatedPatches aggregate(Var patches, const DecisionVars& sparse, const DecisionVars& dense,
                            const MlpT<Var>& agg_sparse, const MlpT<Var>& agg_dense);

struct SdtpsOutput {
    AggregatedPatches aggregated;
    ScoreBundle scores;
    Tensor branch_sparse;  // unclipped
    Tensor branch_dense;
    DecisionVars sparse;
    DecisionVars dense;
};

/// Full selection stage for one image, guided by the sparse caption `caption`
/// (M x d) and the image's own dense text. Noise is drawn from `rng` in train
/// mode and disabled in eval mode. `replay` pins decisions and noise.
SdtpsOutput sdtps_forward(Graph& graph, const Sample& image, const Tensor& caption, const ModelVars& model,
                          const SdtpsConfig& cfg, Mode mode, Rng* rng, const FrozenDecisions* replay = nullptr);
/// Same, guided by the image's paired caption.
SdtpsOutput sdtps_forward(Graph& graph, const Sample& sample, const ModelVars& model,
                          const SdtpsConfig& cfg, Mode mode, Rng* rng,
                          const FrozenDecisions* replay = nullptr);

/// Attention components of the bundle (no predictor), shared by forward and
/// diagnostics.
ScoreBundle attention_bundle(const Sample& image, const Tensor& caption, bool ablate_dense_text);
ScoreBundle attention_bundle(const Sample& sample, bool ablate_dense_text);

}  // namespace seps
