#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "seps/featurebank.hpp"
#include "seps/params.hpp"
#include "seps/sdtps.hpp"

namespace seps {

/// Correct gallery indices for every query.
using GroundTruth = std::vector<std::vector<std::size_t>>;

/// Query i matches gallery item i only.
GroundTruth diagonal_truth(std::size_t n);

struct RetrievalReport {
    double i2t_r1 = 0.0, i2t_r5 = 0.0, i2t_r10 = 0.0;
    double t2i_r1 = 0.0, t2i_r5 = 0.0, t2i_r10 = 0.0;
    double rsum = 0.0;
    std::size_t n_queries = 0;

    std::array<double, 6> recalls() const { return {i2t_r1, i2t_r5, i2t_r10, t2i_r1, t2i_r5, t2i_r10}; }
    /// Human-readable two-direction table.
    std::string table() const;
    /// i2t_r1,i2t_r5,i2t_r10,t2i_r1,t2i_r5,t2i_r10,rsum
    std::string csv() const;
};

/// Percentage of queries (rows of a Q x G score matrix) with a correct item in
/// their k best. Ranking is by descending score, ties to the lower index.
double recall_at_k(const Tensor& scores, const GroundTruth& truth, std::size_t k);

double rsum(std::span<const double> recalls);

struct EvalOptions {
    /// Worker threads for the score matrix; 0 or 1 runs on the calling thread.
    std::size_t threads = 0;
    /// Split the bank into this many contiguous folds and average the per-fold
    /// recalls; 1 evaluates the whole bank at once.
    std::size_t folds = 1;
};

/// Reads SEPS_THREADS (unset or invalid means 0).
std::size_t threads_from_env();

/// Eval-mode S(image i, caption j) over every pair of the bank.
Tensor score_matrix(const FeatureBank& bank, const ModelParams& params, const SdtpsConfig& cfg,
                    std::size_t threads = 0);

/// Image-to-text uses rows of the score matrix as queries, text-to-image its columns.
RetrievalReport report_from_scores(const Tensor& scores);

RetrievalReport retrieval_eval(const FeatureBank& bank, const ModelParams& params, const SdtpsConfig& cfg,
                               const EvalOptions& options = {});

/// Area under the ROC curve of `scores` against 0/1 `labels` (Mann-Whitney,
/// tied pairs count one half). Throws when either class is empty.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Mean per-sample AUC of the unclipped sparse-branch score against the
/// relevance mask. Samples whose mask has a single class are skipped; a bank
/// without any usable mask throws bank_error.
double selection_quality(const FeatureBank& bank, const ModelParams& params, const SdtpsConfig& cfg);

}  // namespace seps
