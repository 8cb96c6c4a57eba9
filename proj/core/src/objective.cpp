#include "seps/objective.hpp"

#include <cmath>

#include "seps/hrpa.hpp"
#include "seps/ops.hpp"
#include "seps/rng.hpp"

namespace seps {

namespace {

double mean_of(const Tensor& t) {
    double acc = 0.0;
    for (double v : t.data()) acc += v;
    return acc / static_cast<double>(t.size());
}

struct HardestNegatives {
    std::vector<std::size_t> caption;  // argmax_{j != i} S[i][j]
    std::vector<std::size_t> image;    // argmax_{k != i} S[k][i]
};

HardestNegatives hardest_negatives(const Tensor& s) {
    const std::size_t b = s.rows();
    HardestNegatives h{std::vector<std::size_t>(b), std::vector<std::size_t>(b)};
    for (std::size_t i = 0; i < b; ++i) {
        std::size_t best_t = i == 0 ? 1 : 0;
        std::size_t best_i = best_t;
        for (std::size_t j = 0; j < b; ++j) {
            if (j == i) continue;
            if (s.at(i, j) > s.at(i, best_t)) best_t = j;
            if (s.at(j, i) > s.at(best_i, i)) best_i = j;
        }
        h.caption[i] = best_t;
        h.image[i] = best_i;
    }
    return h;
}

void check_square(const Tensor& s) {
    if (s.rank() != 2 || s.rows() != s.cols()) throw shape_error("triplet_loss: scores must be square");
    if (s.rows() < 2) throw shape_error("no negatives available");
}

}  // namespace

void ObjectiveConfig::validate() const {
    if (!(margin > 0.0)) throw shape_error("margin must be positive");
    if (!(rho > 0.0 && rho <= 1.0)) throw shape_error("rho must lie in (0, 1]");
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw shape_error("lambda1 and lambda2 must be non-negative");
}

BatchScores batch_similarity(Graph& graph, std::span<const Sample* const> batch, const ModelVars& model,
                             const SdtpsConfig& cfg, Mode mode, NoiseSchedule noise,
                             std::span<const FrozenDecisions> replay) {
    const std::size_t b = batch.size();
    if (b == 0) throw shape_error("batch_similarity: empty batch");
    if (!replay.empty() && replay.size() != b * b) throw shape_error("batch_similarity: replay size mismatch");

    std::vector<Var> captions;
    captions.reserve(b);
    for (const Sample* s : batch) captions.push_back(graph.constant(s->sparse_tokens));

    BatchScores out;
    std::vector<Var> entries;
    entries.reserve(b * b);
    out.decisions.reserve(b * b);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            // Same draws for every caption: the noise belongs to the image.
            Rng rng = make_rng(noise.seed, batch[i]->id, noise.step);
            const SdtpsOutput sel = sdtps_forward(graph, *batch[i], batch[j]->sparse_tokens, model, cfg, mode, &rng,
                                                  replay.empty() ? nullptr : &replay[i * b + j]);
            entries.push_back(align_score(sel.aggregated.vectors, captions[j], model.head_p2w, model.head_w2p).total);
            if (i == j) {
                out.keep.push_back(KeepStats{sel.sparse.mask, sel.dense.mask, mean_of(sel.sparse.values.hard),
                                             mean_of(sel.dense.values.hard), mean_of(sel.sparse.values.soft),
                                             mean_of(sel.dense.values.soft)});
            }
            out.decisions.push_back(FrozenDecisions{sel.sparse.frozen, sel.dense.frozen});
        }
    }
    out.scores = stack(entries, b, b);
    return out;
}

double triplet_loss(const Tensor& s, double margin) {
    check_square(s);
    const HardestNegatives h = hardest_negatives(s);
    double loss = 0.0;
    for (std::size_t i = 0; i < s.rows(); ++i) {
        loss += std::max(margin - s.at(i, i) + s.at(i, h.caption[i]), 0.0);
        loss += std::max(margin - s.at(i, i) + s.at(h.image[i], i), 0.0);
    }
    return loss;
}

Var triplet_loss(Var scores, double margin) {
    const Tensor& s = scores.value();
    check_square(s);
    const HardestNegatives h = hardest_negatives(s);
    const std::size_t b = s.rows();
    // Active hinges: +1 on the negative entry, -1 on the diagonal.
    Tensor routing({b, b}, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
        if (margin - s.at(i, i) + s.at(i, h.caption[i]) > 0.0) {
            routing.at(i, h.caption[i]) += 1.0;
            routing.at(i, i) -= 1.0;
        }
        if (margin - s.at(i, i) + s.at(h.image[i], i) > 0.0) {
            routing.at(h.image[i], i) += 1.0;
            routing.at(i, i) -= 1.0;
        }
    }
    Graph& g = *scores.graph;
    for (std::size_t i = 0; i < b; ++i) {
        g.log_branch(h.caption[i]);
        g.log_branch(h.image[i]);
        g.log_branch(routing.at(i, i) == 0.0 ? 0 : 1);
    }
    const std::size_t is = scores.id;
    return g.record("triplet_loss", Tensor::scalar(triplet_loss(s, margin)), {scores},
                    [&g, is, routing = std::move(routing)](const Tensor& up, std::vector<Tensor>& adj) {
                        Tensor& gs = g.accumulate(adj, is);
                        for (std::size_t i = 0; i < routing.size(); ++i) gs[i] += up[0] * routing[i];
                    });
}

Var ratio_loss(std::span<const KeepStats> keep, const ObjectiveConfig& cfg) {
    if (keep.empty()) throw shape_error("ratio_loss: no images");
    std::vector<Var> per_image;
    per_image.reserve(keep.size());
    for (const KeepStats& k : keep) {
        const Var kept = add(scale(mean(k.mask_sparse), -cfg.lambda1), scale(mean(k.mask_dense), -cfg.lambda2));
        per_image.push_back(square(add_scalar(kept, cfg.rho)));
    }
    return mean(stack(per_image, 1, per_image.size()));
}

Var total_loss(const BatchScores& batch, const ObjectiveConfig& cfg) {
    return add(triplet_loss(batch.scores, cfg.margin), ratio_loss(batch.keep, cfg));
}

}  // namespace seps
