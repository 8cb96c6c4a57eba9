#include "seps/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>

#include "seps/hrpa.hpp"

namespace seps {

GroundTruth diagonal_truth(std::size_t n) {
    GroundTruth gt(n);
    for (std::size_t i = 0; i < n; ++i) gt[i] = {i};
    return gt;
}

double recall_at_k(const Tensor& scores, const GroundTruth& truth, std::size_t k) {
    if (scores.rank() != 2) throw shape_error("recall_at_k: scores must be a matrix");
    const std::size_t q = scores.rows(), g = scores.cols();
    if (truth.size() != q) throw shape_error("recall_at_k: ground truth size mismatch");
    if (q == 0) throw shape_error("recall_at_k: no queries");
    if (k == 0 || k > g) throw shape_error("recall_at_k: k must lie in [1, G]");

    std::size_t hits = 0;
    for (std::size_t i = 0; i < q; ++i) {
        if (truth[i].empty()) throw shape_error("recall_at_k: query without ground truth");
        bool hit = false;
        for (std::size_t t : truth[i]) {
            if (t >= g) throw shape_error("recall_at_k: ground truth index out of range");
            const double st = scores.at(i, t);
            std::size_t ahead = 0;
            for (std::size_t j = 0; j < g && ahead < k; ++j) {
                const double sj = scores.at(i, j);
                if (sj > st || (sj == st && j < t)) ++ahead;
            }
            if (ahead < k) {
                hit = true;
                break;
            }
        }
        if (hit) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(q);
}

double rsum(std::span<const double> recalls) {
    if (recalls.size() != 6) throw shape_error("rsum: expected six recalls");
    double total = 0.0;
    for (double r : recalls) total += r;
    return total;
}

std::string RetrievalReport::table() const {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "direction   R@1     R@5     R@10\n"
                  "i2t      %6.2f  %6.2f  %6.2f\n"
                  "t2i      %6.2f  %6.2f  %6.2f\n"
                  "rsum     %.2f  (queries %zu)\n",
                  i2t_r1, i2t_r5, i2t_r10, t2i_r1, t2i_r5, t2i_r10, rsum, n_queries);
    return buf;
}

std::string RetrievalReport::csv() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f", i2t_r1, i2t_r5, i2t_r10, t2i_r1, t2i_r5,
                  t2i_r10, rsum);
    return buf;
}

std::size_t threads_from_env() {
    const char* raw = std::getenv("SEPS_THREADS");
    if (raw == nullptr || *raw == '\0') return 0;
    char* end = nullptr;
    const unsigned long v = std::strtoul(raw, &end, 10);
    if (*end != '\0') return 0;
    return static_cast<std::size_t>(v);
}

namespace {

void score_row(const FeatureBank& bank, const ModelParams& params, const SdtpsConfig& cfg, std::size_t i,
               Tensor& out) {
    Graph g;
    const ModelVars model = bind(g, params, false);
    for (std::size_t j = 0; j < bank.samples.size(); ++j) {
        const Tensor& caption = bank.samples[j].sparse_tokens;
        const SdtpsOutput sel = sdtps_forward(g, bank.samples[i], caption, model, cfg, Mode::eval, nullptr);
        const Var words = g.constant(caption);
        out.at(i, j) = align_score(sel.aggregated.vectors, words, model.head_p2w, model.head_w2p).total.value().item();
    }
}

}  // namespace

Tensor score_matrix(const FeatureBank& bank, const ModelParams& params, const SdtpsConfig& cfg,
                    std::size_t threads) {
    cfg.validate();
    const std::size_t n = bank.samples.size();
    if (n == 0) throw bank_error("score_matrix: empty bank");
    if (shape_of(params).dim != bank.dim) throw shape_error("bank dimension does not match the model");

    Tensor out({n, n}, 0.0);
    const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), n);
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) score_row(bank, params, cfg, i, out);
        return out;
    }
    // Rows are independent and written to disjoint slots, so the result does not
    // depend on the worker count.
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) score_row(bank, params, cfg, i, out);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

RetrievalReport report_from_scores(const Tensor& scores) {
    if (scores.rank() != 2 || scores.rows() != scores.cols()) {
        throw shape_error("report_from_scores: expected a square score matrix");
    }
    const std::size_t n = scores.rows();
    const GroundTruth gt = diagonal_truth(n);
    Tensor transposed({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) transposed.at(j, i) = scores.at(i, j);

    auto at_k = [n](const Tensor& s, const GroundTruth& t, std::size_t k) {
        return recall_at_k(s, t, std::min(k, n));
    };
    RetrievalReport r;
    r.i2t_r1 = at_k(scores, gt, 1);
    r.i2t_r5 = at_k(scores, gt, 5);
    r.i2t_r10 = at_k(scores, gt, 10);
    r.t2i_r1 = at_k(transposed, gt, 1);
    r.t2i_r5 = at_k(transposed, gt, 5);
    r.t2i_r10 = at_k(transposed, gt, 10);
    const auto all = r.recalls();
    r.rsum = rsum(all);
    r.n_queries = n;
    return r;
}

RetrievalReport retrieval_eval(const FeatureBank& bank, const ModelParams& params, const SdtpsConfig& cfg,
                               const EvalOptions& options) {
    const std::size_t n = bank.samples.size();
    if (n < 2) throw bank_error("retrieval_eval: need at least 2 samples");
    if (options.folds == 0 || n / options.folds < 2) throw shape_error("retrieval_eval: too many folds");

    const Tensor scores = score_matrix(bank, params, cfg, options.threads);
    if (options.folds == 1) return report_from_scores(scores);

    const std::size_t size = n / options.folds;
    std::array<double, 6> acc{};
    for (std::size_t f = 0; f < options.folds; ++f) {
        Tensor block({size, size});
        for (std::size_t i = 0; i < size; ++i)
            for (std::size_t j = 0; j < size; ++j) block.at(i, j) = scores.at(f * size + i, f * size + j);
        const auto r = report_from_scores(block).recalls();
        for (std::size_t m = 0; m < 6; ++m) acc[m] += r[m];
    }
    for (double& v : acc) v /= static_cast<double>(options.folds);
    RetrievalReport out{acc[0], acc[1], acc[2], acc[3], acc[4], acc[5], rsum(acc), size * options.folds};
    return out;
}

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw shape_error("roc_auc: length mismatch");
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] ? pos : neg).push_back(scores[i]);
    if (pos.empty() || neg.empty()) throw shape_error("roc_auc: both classes are required");
    std::sort(neg.begin(), neg.end());
    double wins = 0.0;
    for (double p : pos) {
        const auto lo = std::lower_bound(neg.begin(), neg.end(), p);
        const auto hi = std::upper_bound(lo, neg.end(), p);
        wins += static_cast<double>(lo - neg.begin()) + 0.5 * static_cast<double>(hi - lo);
    }
    return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

double selection_quality(const FeatureBank& bank, const ModelParams& params, const SdtpsConfig& cfg) {
    cfg.validate();
    double total = 0.0;
    std::size_t used = 0;
    bool any_mask = false;
    for (const Sample& s : bank.samples) {
        if (!s.relevance_mask) continue;
        any_mask = true;
        const auto& mask = *s.relevance_mask;
        const bool one_class = std::all_of(mask.begin(), mask.end(), [&](std::uint8_t m) { return m == mask[0]; });
        if (one_class) continue;
        ScoreBundle b = attention_bundle(s, cfg.ablate_dense_text);
        b.s_p = predict_scores(s.patches, params.predictor);
        const Tensor sparse = branch_scores(b, cfg.beta).first;
        total += roc_auc(sparse.data(), mask);
        ++used;
    }
    if (!any_mask) throw bank_error("selection_quality: bank has no relevance masks");
    if (used == 0) throw bank_error("selection_quality: every relevance mask has a single class");
    return total / static_cast<double>(used);
}

}  // namespace seps
