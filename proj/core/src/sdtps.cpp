#include "seps/sdtps.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "seps/ops.hpp"

namespace seps {

namespace {

void require_same_length(const char* op, std::initializer_list<const Tensor*> ts) {
    const std::size_t n = (*ts.begin())->size();
    for (const Tensor* t : ts) {
        if (t->size() != n) throw shape_error(std::string(op) + ": length mismatch");
    }
}

bool all_zero(const Tensor& t) {
    return std::all_of(t.data().begin(), t.data().end(), [](double v) { return v == 0.0; });
}

MlpT<Var> constants(Graph& g, const MlpT<Tensor>& mlp) {
    MlpT<Var> out;
    for (const auto& layer : mlp) out.push_back({g.constant(layer.weight), g.constant(layer.bias)});
    return out;
}

}  // namespace

void SdtpsConfig::validate() const {
    if (!(beta >= 0.0 && beta <= 0.5)) throw shape_error("beta must lie in [0, 0.5]");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw shape_error("tau must be positive");
}

Tensor normalize_min_max(const Tensor& raw) {
    if (raw.size() == 0) throw shape_error("normalize_min_max: empty input");
    const auto [lo_it, hi_it] = std::minmax_element(raw.data().begin(), raw.data().end());
    const double lo = *lo_it, hi = *hi_it;
    Tensor out({raw.size()});
    if (hi - lo < NumericConstants::eps_norm) {
        for (double& v : out.data()) v = 0.5;
        return out;
    }
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out[i] = (raw[i] - lo) / (hi - lo + NumericConstants::eps_norm);
    }
    return out;
}

Tensor attention_scores(const Tensor& patches, const Tensor& embedding, std::size_t d) {
    if (patches.rank() != 2 || patches.rows() == 0) throw shape_error("attention_scores: need N >= 1 patches");
    if (embedding.size() != patches.cols()) throw shape_error("attention_scores: embedding dimension mismatch");
    if (d == 0) throw shape_error("attention_scores: d must be positive");
    Tensor raw({patches.rows()});
    for (std::size_t i = 0; i < patches.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < patches.cols(); ++j) dot += patches.at(i, j) * embedding[j];
        raw[i] = dot / static_cast<double>(d);
    }
    return normalize_min_max(raw);
}

Tensor combine_scores(const Tensor& s_p, const Tensor& s_st, const Tensor& s_dt, const Tensor& s_im,
                      double beta) {
    require_same_length("combine_scores", {&s_p, &s_st, &s_dt, &s_im});
    Tensor out({s_p.size()});
    for (std::size_t i = 0; i < s_p.size(); ++i) {
        out[i] = (1.0 - 2.0 * beta) * s_p[i] + beta * (s_st[i] + s_dt[i] + 2.0 * s_im[i]);
    }
    return out;
}

std::pair<Tensor, Tensor> branch_offsets(const ScoreBundle& b, double beta) {
    require_same_length("branch_offsets", {&b.s_st, &b.s_dt, &b.s_im});
    Tensor sparse({b.s_st.size()}), dense({b.s_st.size()});
    for (std::size_t i = 0; i < b.s_st.size(); ++i) {
        sparse[i] = beta * (b.s_st[i] + 2.0 * b.s_im[i]) + beta * b.s_st[i];
        dense[i] = beta * (b.s_dt[i] + 2.0 * b.s_im[i]) + beta * b.s_dt[i];
    }
    return {std::move(sparse), std::move(dense)};
}

std::pair<Tensor, Tensor> branch_scores(const ScoreBundle& b, double beta) {
    require_same_length("branch_scores", {&b.s_p, &b.s_st, &b.s_dt, &b.s_im});
    auto [sparse, dense] = branch_offsets(b, beta);
    // Same operation order as the graph path: scale, then add the offset.
    for (std::size_t i = 0; i < sparse.size(); ++i) {
        sparse[i] = b.s_p[i] * (1.0 - 2.0 * beta) + sparse[i];
        dense[i] = b.s_p[i] * (1.0 - 2.0 * beta) + dense[i];
    }
    return {std::move(sparse), std::move(dense)};
}

Var predict_scores(Var patches, const MlpT<Var>& predictor) {
    const std::size_t n = patches.value().rows();
    if (predictor.empty() || predictor.front().weight.value().rows() != patches.value().cols()) {
        throw shape_error("predict_scores: patch dimension does not match the predictor");
    }
    return reshape(sigmoid(mlp_forward(predictor, patches)), {n});
}

Tensor predict_scores(const Tensor& patches, const MlpT<Tensor>& predictor) {
    if (patches.rank() != 2 || patches.rows() == 0) throw shape_error("predict_scores: need N >= 1 patches");
    Graph g;
    return predict_scores(g.constant(patches), constants(g, predictor)).value();
}

GumbelNoise draw_gumbel(std::size_t n, Rng* rng) {
    GumbelNoise noise{Tensor({n}, 0.0), Tensor({n}, 0.0)};
    if (rng == nullptr) return noise;
    for (std::size_t i = 0; i < n; ++i) {
        noise.keep[i] = gumbel(*rng);
        noise.drop[i] = gumbel(*rng);
    }
    return noise;
}

DecisionVars gumbel_decision(Var scores, double tau, const GumbelNoise& noise, const FrozenBranch* replay) {
    if (!(tau > 0.0)) throw shape_error("tau must be positive");
    Graph& g = *scores.graph;
    const std::size_t n = scores.value().size();
    if (noise.keep.size() != n || noise.drop.size() != n) throw shape_error("gumbel_decision: noise length mismatch");

    const Var clipped = clip(scores, 0.0, kScoreCeiling);
    const Var keep_logit = log(add_scalar(clipped, NumericConstants::eps_log));
    const Var drop_logit = log(add_scalar(add_scalar(scale(clipped, -1.0), 1.0), NumericConstants::eps_log));
    Tensor noise_gap({n});
    for (std::size_t i = 0; i < n; ++i) noise_gap[i] = noise.keep[i] - noise.drop[i];
    const Var z = scale(add(sub(keep_logit, drop_logit), g.constant(std::move(noise_gap))), 1.0 / tau);
    const Var soft = sigmoid(z);

    DecisionVars out;
    out.values.soft = soft.value();
    if (replay != nullptr) {
        if (replay->hard.size() != n || replay->soft_ref.size() != n) {
            throw shape_error("gumbel_decision: replay length mismatch");
        }
        out.values.hard = replay->hard;
        out.frozen = *replay;
    } else {
        out.values.hard = Tensor({n}, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            out.values.hard[i] = out.values.soft[i] > 0.5 ? 1.0 : 0.0;
            g.log_branch(out.values.hard[i] != 0.0);
        }
        out.frozen = FrozenBranch{out.values.hard, out.values.soft, noise};
    }
    out.mask = straight_through(out.frozen.hard, soft, out.frozen.soft_ref);
    return out;
}

DecisionMask gumbel_decision(const Tensor& scores, double tau, const GumbelNoise& noise) {
    Graph g;
    return gumbel_decision(g.constant(scores), tau, noise).values;
}

DecisionMask gumbel_decision(const Tensor& scores, double tau, bool noise_enabled, Rng* rng) {
    if (noise_enabled && rng == nullptr) throw shape_error("gumbel_decision: noise requested without an rng");
    return gumbel_decision(scores, tau, draw_gumbel(scores.size(), noise_enabled ? rng : nullptr));
}

AggregatedPatches aggregate(Var patches, const DecisionVars& sparse, const DecisionVars& dense,
                            const MlpT<Var>& agg_sparse, const MlpT<Var>& agg_dense) {
    const std::size_t n = patches.value().rows();
    if (sparse.values.hard.size() != n || dense.values.hard.size() != n) {
        throw shape_error("aggregate: mask length does not match patch count");
    }
    AggregatedPatches out;
    out.sparse_empty = all_zero(sparse.values.hard);
    out.dense_empty = all_zero(dense.values.hard);
    if (out.sparse_empty && out.dense_empty) throw shape_error("no patches selected");

    const std::size_t n_keep = agg_sparse.back().weight.value().cols();
    auto branch = [&](const DecisionVars& dec, const MlpT<Var>& agg, bool empty, Tensor& weights)
        -> std::optional<Var> {
        if (empty) {
            weights = Tensor({n, n_keep}, 0.0);
            return std::nullopt;
        }
        const Var w = weighted_softmax_columns(mlp_forward(agg, patches), dec.mask);
        weights = w.value();
        return matmul(transpose(w), patches);
    };
    const auto part_s = branch(sparse, agg_sparse, out.sparse_empty, out.w_sparse);
    const auto part_d = branch(dense, agg_dense, out.dense_empty, out.w_dense);
    if (part_s && part_d) {
        out.vectors = add(*part_s, *part_d);
    } else {
        out.vectors = part_s ? *part_s : *part_d;
    }
    return out;
}

ScoreBundle attention_bundle(const Sample& sample, const Tensor& caption, bool ablate_dense_text) {
    const std::size_t d = sample.patches.cols();
    if (caption.rank() != 2 || caption.cols() != d) throw shape_error("caption dimension does not match the image");
    ScoreBundle b;
    b.s_st = attention_scores(sample.patches, global_embedding(caption).vector, d);
    b.s_dt = ablate_dense_text ? Tensor({sample.patches.rows()}, 0.0)
                               : attention_scores(sample.patches, global_embedding(sample.dense_tokens).vector, d);
    b.s_im = attention_scores(sample.patches, global_embedding(sample.patches).vector, d);
    return b;
}

ScoreBundle attention_bundle(const Sample& sample, bool ablate_dense_text) {
    return attention_bundle(sample, sample.sparse_tokens, ablate_dense_text);
}

SdtpsOutput sdtps_forward(Graph& graph, const Sample& sample, const ModelVars& model, const SdtpsConfig& cfg,
                          Mode mode, Rng* rng, const FrozenDecisions* replay) {
    return sdtps_forward(graph, sample, sample.sparse_tokens, model, cfg, mode, rng, replay);
}

SdtpsOutput sdtps_forward(Graph& graph, const Sample& sample, const Tensor& caption, const ModelVars& model,
                          const SdtpsConfig& cfg, Mode mode, Rng* rng, const FrozenDecisions* replay) {
    cfg.validate();
    if (mode == Mode::train && rng == nullptr && replay == nullptr) {
        throw shape_error("sdtps_forward: train mode needs an rng");
    }
    const std::size_t n = sample.patches.rows();
    if (n == 0) throw shape_error("sdtps_forward: sample has no patches");

    SdtpsOutput out;
    out.scores = attention_bundle(sample, caption, cfg.ablate_dense_text);

    const Var patches = graph.constant(sample.patches);
    const Var s_p = predict_scores(patches, model.predictor);
    out.scores.s_p = s_p.value();
    out.scores.s_total =
        combine_scores(out.scores.s_p, out.scores.s_st, out.scores.s_dt, out.scores.s_im, cfg.beta);

    auto [offset_s, offset_d] = branch_offsets(out.scores, cfg.beta);
    const Var scaled = scale(s_p, 1.0 - 2.0 * cfg.beta);
    const Var score_s = add(scaled, graph.constant(std::move(offset_s)));
    const Var score_d = add(scaled, graph.constant(std::move(offset_d)));
    out.branch_sparse = score_s.value();
    out.branch_dense = score_d.value();

    GumbelNoise noise_s, noise_d;
    if (replay != nullptr) {
        noise_s = replay->sparse.noise;
        noise_d = replay->dense.noise;
    } else {
        Rng* source = mode == Mode::train ? rng : nullptr;
        noise_s = draw_gumbel(n, source);
        noise_d = draw_gumbel(n, source);
    }
    out.sparse = gumbel_decision(score_s, cfg.tau, noise_s, replay ? &replay->sparse : nullptr);
    out.dense = gumbel_decision(score_d, cfg.tau, noise_d, replay ? &replay->dense : nullptr);
    out.aggregated = aggregate(patches, out.sparse, out.dense, model.agg_sparse, model.agg_dense);
    return out;
}

}  // namespace seps
