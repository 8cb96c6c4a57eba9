#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "seps/featurebank.hpp"
#include "seps/graph.hpp"
#include "seps/objective.hpp"
#include "seps/params.hpp"
#include "seps/rng.hpp"
#include "seps/sdtps.hpp"

namespace seps {

/// Raised when a gradient or parameter stops being finite during training.
class divergence_error : public numeric_error {
public:
    divergence_error() : numeric_error("divergence detected") {}
};

struct TrainConfig {
    double lr = 1e-4;
    double weight_decay = 1e-2;
    std::size_t batch_size = 8;
    std::size_t epochs = 20;
    double margin = 0.2;
    double rho = 0.5;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double beta = 0.2;
    double tau = 1.0;
    std::size_t k_top = 8;
    /// Aggregated patches per image; 0 means ceil(rho * N).
    std::size_t n_keep = 0;
    /// Predictor hidden width; 0 means d.
    std::size_t predictor_hidden = 0;
    /// Relevance head hidden width; 0 means a linear head.
    std::size_t head_hidden = 0;
    std::uint64_t seed = 0;
    /// Steps between sampled finite-difference audits; 0 disables them.
    std::size_t grad_check_every = 0;
    /// Train on the keep-ratio term alone (alignment hinges dropped).
    bool ratio_only = false;
    /// Select without the dense-text attention term.
    bool ablate_dense_text = false;

    void validate() const;
    ObjectiveConfig objective() const { return {margin, rho, lambda1, lambda2}; }
    SdtpsConfig selection() const { return {beta, tau, ablate_dense_text}; }
    ModelShape model_shape(std::size_t dim, std::size_t n_patches) const;
};

/// Uniform(+-1/sqrt(fan_in)) weights and zero biases for the predictor and the
/// aggregation networks; relevance heads start at exactly zero.
ModelParams init_params(const ModelShape& shape, Rng& rng);
ModelParams init_params(const TrainConfig& cfg, std::size_t dim, std::size_t n_patches);

struct OptimizerState {
    std::vector<Tensor> m;  // first moments, flatten() order
    std::vector<Tensor> v;  // second moments
    std::uint64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static OptimizerState for_params(const ModelParams& params);
};

/// One AdamW update with decoupled weight decay. Gradients are given in
/// flatten() order. Any non-finite gradient throws divergence_error before a
/// single parameter is touched.
void optimizer_step(ModelParams& params, std::span<const Tensor> grads, OptimizerState& state, double lr,
                    double weight_decay);

struct AuditResult {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t excluded = 0;  // coordinates sitting on a tie
};

struct StepResult {
    double loss = 0.0;
    double keep_sparse = 0.0;  // batch mean of hard keeps
    double keep_dense = 0.0;
    std::optional<AuditResult> audit;
};

/// Loss of one batch as a function of every parameter, with selection decisions
/// and noise pinned to `replay`. This is the surrogate whose exact derivative is
/// the straight-through gradient.
Var replayed_loss(Graph& graph, std::span<const Var> leaves, const ModelParams& layout,
                  std::span<const Sample* const> batch, std::span<const FrozenDecisions> replay,
                  const TrainConfig& cfg);

/// Central-difference audit of `count` random parameter coordinates of the
/// replayed loss. Coordinates drawn from `rng`.
AuditResult audit_gradients(const ModelParams& params, std::span<const Sample* const> batch,
                            std::span<const FrozenDecisions> replay, const TrainConfig& cfg, Rng& rng,
                            std::size_t count = 10);

/// Forward, backward and one optimizer update on a batch. `step` selects the
/// Gumbel noise stream.
StepResult train_step(ModelParams& params, OptimizerState& state, std::span<const Sample* const> batch,
                      const TrainConfig& cfg, std::uint64_t step);

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0.0;  // mean batch loss
    double keep_rate_sparse = 0.0;
    double keep_rate_dense = 0.0;
    std::optional<double> val_r1;  // mean of both directions' R@1
    double audit_max_error = 0.0;  // worst audited error this epoch, 0 if none
};

struct FitResult {
    ModelParams params;
    std::vector<EpochRecord> history;
};

struct FitOptions {
    const FeatureBank* validation = nullptr;
    /// Called after every epoch with the parameters at that point.
    std::function<void(const EpochRecord&, const ModelParams&)> on_epoch;
    /// Start from these instead of init_params.
    std::optional<ModelParams> initial;
};

/// Seeded shuffle per epoch, full batches only (a trailing remainder is dropped).
FitResult fit(const FeatureBank& bank, const TrainConfig& cfg, const FitOptions& options = {});

// "SEPC" v1 checkpoint: named float32 tensors, little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const ModelParams& params, std::ostream& out);
void write_checkpoint(const ModelParams& params, const std::filesystem::path& path);
/// Throws bank_error on malformed input or tensors that do not form a model.
ModelParams read_checkpoint(std::istream& in);
ModelParams read_checkpoint(const std::filesystem::path& path);

}  // namespace seps
