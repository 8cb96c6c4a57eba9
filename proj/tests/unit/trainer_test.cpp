#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "seps/evaluator.hpp"
#include "seps/trainer.hpp"
#include "support.hpp"

namespace seps {
namespace {

FeatureBank small_bank(std::uint64_t seed, std::size_t n = 8) {
    SynthConfig cfg;
    cfg.n_samples = n;
    cfg.dim = 8;
    cfg.n_patches = 6;
    cfg.n_relevant_patches = 2;
    cfg.n_sparse_words = 2;
    cfg.n_dense_words = 4;
    cfg.concept_count = 64;
    cfg.seed = seed;
    return generate_synthetic(cfg);
}

TrainConfig small_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.epochs = 2;
    cfg.k_top = 3;
    cfg.seed = seed;
    return cfg;
}

std::string checkpoint_bytes(const ModelParams& p) {
    std::ostringstream out;
    write_checkpoint(p, out);
    return out.str();
}

std::vector<const Sample*> all_of(const FeatureBank& bank) {
    std::vector<const Sample*> out;
    for (const Sample& s : bank.samples) out.push_back(&s);
    return out;
}

TEST(TrainConfig, Validation) {
    EXPECT_NO_THROW(TrainConfig{}.validate());
    TrainConfig c;
    c.lr = 0.0;
    EXPECT_NO_THROW(c.validate());
    c.lr = -1e-4;
    EXPECT_THROW(c.validate(), shape_error);
    c = {};
    c.batch_size = 1;
    EXPECT_THROW(c.validate(), shape_error);
    c = {};
    c.epochs = 0;
    EXPECT_THROW(c.validate(), shape_error);
    c = {};
    c.beta = 0.7;
    EXPECT_THROW(c.validate(), shape_error);
}

TEST(TrainConfig, DerivedShape) {
    TrainConfig c;
    const ModelShape s = c.model_shape(32, 16);
    EXPECT_EQ(s.dim, 32u);
    EXPECT_EQ(s.predictor_hidden, 32u);
    EXPECT_EQ(s.n_keep, 8u);
    EXPECT_EQ(s.k_top, 8u);
    EXPECT_EQ(s.head_hidden, 0u);
    c.rho = 0.3;
    EXPECT_EQ(c.model_shape(32, 16).n_keep, 5u);  // ceil(4.8)
}

TEST(InitParams, DeterministicUnderSeed) {
    const TrainConfig c = small_config(3);
    EXPECT_EQ(flatten(init_params(c, 8, 6)), flatten(init_params(c, 8, 6)));
    EXPECT_NE(flatten(init_params(c, 8, 6)), flatten(init_params(small_config(4), 8, 6)));
}

TEST(InitParams, HeadsStartAtZeroAndWeightsAreBounded) {
    TrainConfig c = small_config(5);
    c.head_hidden = 3;
    const ModelParams p = init_params(c, 8, 6);
    for_each_param(p, [](const std::string& name, const Tensor& t) {
        if (name.starts_with("head_") || name.ends_with(".bias")) {
            for (double v : t.data()) EXPECT_EQ(v, 0.0) << name;
            return;
        }
        const double bound = 1.0 / std::sqrt(static_cast<double>(t.rows()));
        for (double v : t.data()) EXPECT_LE(std::abs(v), bound) << name;
    });
    EXPECT_EQ(shape_of(p), c.model_shape(8, 6));
}

// Reference AdamW, written out scalar by scalar.
struct ReferenceAdam {
    double m = 0.0, v = 0.0;
    int t = 0;
    double step(double theta, double g, double lr, double wd) {
        ++t;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1.0 - std::pow(0.9, t));
        const double vh = v / (1.0 - std::pow(0.999, t));
        return theta - lr * (mh / (std::sqrt(vh) + 1e-8) + wd * theta);
    }
};

ModelParams single_value_model(double theta) {
    ModelParams p;
    auto layer = [](double w) { return LayerT<Tensor>{Tensor({1, 1}, w), Tensor({1}, 0.0)}; };
    p.predictor = {layer(theta), layer(0.0)};
    p.agg_sparse = {layer(0.0)};
    p.agg_dense = {layer(0.0)};
    p.head_p2w = {layer(0.0)};
    p.head_w2p = {layer(0.0)};
    return p;
}

std::vector<Tensor> grads_like(const ModelParams& p, double first) {
    std::vector<Tensor> g;
    for (const Tensor& t : flatten(p)) g.emplace_back(t.shape(), 0.0);
    g[0][0] = first;
    return g;
}

TEST(OptimizerStep, FirstStepFromUnitGradient) {
    ModelParams p = single_value_model(1.0);
    OptimizerState s = OptimizerState::for_params(p);
    optimizer_step(p, grads_like(p, 1.0), s, 0.1, 0.0);
    EXPECT_NEAR(p.predictor[0].weight[0], 0.9, 1e-6);
    EXPECT_EQ(s.step, 1u);
}

TEST(OptimizerStep, MatchesReferenceOverManySteps) {
    Rng rng = make_rng(6, "adam-ref");
    std::normal_distribution<double> g(0.0, 1.0);
    ModelParams p = single_value_model(0.7);
    OptimizerState s = OptimizerState::for_params(p);
    ReferenceAdam ref;
    double theta = 0.7;
    for (int t = 0; t < 50; ++t) {
        const double grad = g(rng);
        optimizer_step(p, grads_like(p, grad), s, 3e-3, 0.05);
        theta = ref.step(theta, grad, 3e-3, 0.05);
        EXPECT_NEAR(p.predictor[0].weight[0], theta, 1e-12);
    }
}

TEST(OptimizerStep, ZeroGradientWithoutDecayIsAFixedPoint) {
    Rng rng = make_rng(7, "adam-fixed");
    ModelParams p = testing::random_model(rng, 4, 3, 2, 3);
    const std::vector<Tensor> before = flatten(p);
    OptimizerState s = OptimizerState::for_params(p);
    std::vector<Tensor> zeros;
    for (const Tensor& t : before) zeros.emplace_back(t.shape(), 0.0);
    for (int i = 0; i < 5; ++i) optimizer_step(p, zeros, s, 0.1, 0.0);
    EXPECT_EQ(flatten(p), before);
}

TEST(OptimizerStep, ZeroGradientWithDecayShrinksMultiplicatively) {
    ModelParams p = single_value_model(2.0);
    OptimizerState s = OptimizerState::for_params(p);
    optimizer_step(p, grads_like(p, 0.0), s, 0.1, 0.5);
    EXPECT_NEAR(p.predictor[0].weight[0], 2.0 * (1.0 - 0.1 * 0.5), 1e-15);
}

TEST(OptimizerStep, NonFiniteGradientLeavesParametersUntouched) {
    ModelParams p = single_value_model(1.0);
    OptimizerState s = OptimizerState::for_params(p);
    std::vector<Tensor> g = grads_like(p, 1.0);
    g.back()[0] = std::nan("");
    const std::vector<Tensor> before = flatten(p);
    try {
        optimizer_step(p, g, s, 0.1, 0.0);
        FAIL() << "expected an error";
    } catch (const divergence_error& e) {
        EXPECT_EQ(std::string(e.what()), "divergence detected");
    }
    EXPECT_EQ(flatten(p), before);
    EXPECT_EQ(s.step, 0u);
}

TEST(OptimizerStep, ShapeMismatchIsRejected) {
    ModelParams p = single_value_model(1.0);
    OptimizerState s = OptimizerState::for_params(p);
    std::vector<Tensor> g = grads_like(p, 1.0);
    g.pop_back();
    EXPECT_THROW(optimizer_step(p, g, s, 0.1, 0.0), shape_error);
}

TEST(Fit, ZeroLearningRateLeavesParametersUnchanged) {
    const FeatureBank bank = small_bank(1);
    TrainConfig c = small_config(1);
    c.lr = 0.0;
    c.epochs = 3;
    const FitResult r = fit(bank, c);
    EXPECT_EQ(flatten(r.params), flatten(init_params(c, bank.dim, 6)));
    EXPECT_EQ(r.history.size(), 3u);
}

TEST(Fit, SameSeedGivesIdenticalHistoryAndCheckpoint) {
    const FeatureBank bank = small_bank(2);
    const FeatureBank val = small_bank(2, 4);
    TrainConfig c = small_config(2);
    c.lr = 1e-3;
    FitOptions o;
    o.validation = &val;
    const FitResult a = fit(bank, c, o);
    const FitResult b = fit(bank, c, o);
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t e = 0; e < a.history.size(); ++e) {
        EXPECT_EQ(a.history[e].loss, b.history[e].loss);
        EXPECT_EQ(a.history[e].keep_rate_sparse, b.history[e].keep_rate_sparse);
        EXPECT_EQ(a.history[e].val_r1, b.history[e].val_r1);
        EXPECT_TRUE(a.history[e].val_r1.has_value());
    }
    EXPECT_EQ(checkpoint_bytes(a.params), checkpoint_bytes(b.params));
    c.seed = 3;
    EXPECT_NE(checkpoint_bytes(fit(bank, c, o).params), checkpoint_bytes(a.params));
}

TEST(Fit, EpochCallbackSeesEveryEpoch) {
    const FeatureBank bank = small_bank(3);
    TrainConfig c = small_config(3);
    c.epochs = 3;
    std::vector<std::size_t> seen;
    FitOptions o;
    o.on_epoch = [&](const EpochRecord& r, const ModelParams&) { seen.push_back(r.epoch); };
    fit(bank, c, o);
    EXPECT_EQ(seen, (std::vector<std::size_t>{1, 2, 3}));
}

TEST(Fit, BankSmallerThanBatchIsRejected) {
    TrainConfig c = small_config(4);
    c.batch_size = 16;
    EXPECT_THROW(fit(small_bank(4), c), bank_error);
}

TEST(Fit, ExplodingLearningRateIsReportedAsDivergence) {
    TrainConfig c = small_config(5);
    c.lr = 1e300;
    c.weight_decay = 1e10;
    EXPECT_THROW(fit(small_bank(5), c), divergence_error);
}

TEST(Fit, SampledGradientAuditsStayBelowTolerance) {
    const FeatureBank bank = small_bank(6);
    TrainConfig c = small_config(6);
    c.lr = 1e-3;
    c.grad_check_every = 1;
    c.epochs = 3;
    const FitResult r = fit(bank, c);  // throws if any audit fails
    for (const EpochRecord& e : r.history) {
        EXPECT_LT(e.audit_max_error, 1e-3);
    }
}

TEST(AuditGradients, ChecksTheRequestedNumberOfCoordinates) {
    const FeatureBank bank = small_bank(7, 4);
    TrainConfig c = small_config(7);
    const ModelParams p = init_params(c, bank.dim, 6);
    const auto batch = all_of(bank);
    Graph g;
    std::vector<FrozenDecisions> replay;
    for (std::uint64_t step = 0;; ++step) {
        try {
            replay = batch_similarity(g, batch, bind(g, p), c.selection(), Mode::train, {c.seed, step}).decisions;
            break;
        } catch (const shape_error&) {
        }
    }
    Rng rng = make_rng(7, "audit");
    const AuditResult a = audit_gradients(p, batch, replay, c, rng, 25);
    EXPECT_EQ(a.checked + a.excluded, 25u);
    EXPECT_LT(a.max_relative_error, 1e-3);
}

double eval_loss(const ModelParams& p, std::span<const Sample* const> batch, const TrainConfig& c) {
    Graph g;
    const BatchScores b = batch_similarity(g, batch, bind(g, p, false), c.selection(), Mode::eval);
    return total_loss(b, c.objective()).value().item();
}

TEST(TrainStep, FixedBatchLossDoesNotIncreaseOverFiftySteps) {
    int held = 0, trials = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const FeatureBank bank = small_bank(100 + seed);
        TrainConfig c = small_config(seed);
        c.lr = 1e-3;
        ModelParams p = init_params(c, bank.dim, 6);
        OptimizerState s = OptimizerState::for_params(p);
        const auto batch = all_of(bank);
        const double before = eval_loss(p, batch, c);
        for (std::uint64_t step = 0; step < 50; ++step) train_step(p, s, batch, c, step);
        const double after = eval_loss(p, batch, c);
        ++trials;
        held += after <= before;
    }
    EXPECT_GE(held * 100, trials * 95) << held << " of " << trials;
}

TEST(TrainStep, RatioOnlyTrainingReachesTargetWhenPredictorControlsSelection) {
    // beta = 0: keep probabilities come from the predictor alone, so the ratio
    // term can reach any target in (0, 2).
    SynthConfig sc;
    sc.n_samples = 8;
    sc.seed = 11;
    const FeatureBank bank = generate_synthetic(sc);
    TrainConfig c;
    c.seed = 11;
    c.beta = 0.0;
    c.lr = 1e-3;
    c.ratio_only = true;
    ModelParams p = init_params(c, bank.dim, sc.n_patches);
    OptimizerState s = OptimizerState::for_params(p);
    const auto batch = all_of(bank);
    double trailing = 0.0;
    for (std::uint64_t step = 0; step < 200; ++step) {
        const StepResult r = train_step(p, s, batch, c, step);
        if (step >= 150) trailing += (r.keep_sparse + r.keep_dense) / 50.0;
    }
    EXPECT_NEAR(trailing, c.rho, 0.05);
}

TEST(Checkpoint, RoundtripIsBitExact) {
    Rng rng = make_rng(8, "ckpt");
    for (int trial = 0; trial < 50; ++trial) {
        TrainConfig c = small_config(static_cast<std::uint64_t>(trial));
        c.head_hidden = trial % 2 ? 3 : 0;
        const ModelParams p = init_params(c, 2 + trial % 5, 3 + trial % 4);
        const std::string bytes = checkpoint_bytes(p);
        std::istringstream in(bytes);
        const ModelParams q = read_checkpoint(in);
        EXPECT_EQ(checkpoint_bytes(q), bytes);
        EXPECT_EQ(shape_of(q), shape_of(p));
        EXPECT_EQ(param_names(q), param_names(p));
    }
}

std::string checkpoint_error(const std::string& bytes) {
    std::istringstream in(bytes);
    try {
        read_checkpoint(in);
    } catch (const bank_error& e) {
        return e.what();
    }
    return "";
}

TEST(Checkpoint, MalformedInputIsRejected) {
    const std::string bytes = checkpoint_bytes(init_params(small_config(9), 4, 5));
    EXPECT_EQ(bytes.substr(0, 4), "SEPC");
    std::string bad = bytes;
    bad[1] = 'X';
    EXPECT_EQ(checkpoint_error(bad), "not a checkpoint");
    bad = bytes;
    bad[4] = 7;
    EXPECT_EQ(checkpoint_error(bad), "unsupported version 7");
    for (std::size_t len = 8; len < bytes.size(); len += 7) {
        EXPECT_TRUE(checkpoint_error(bytes.substr(0, len)).starts_with("corrupt checkpoint")) << len;
    }
    EXPECT_EQ(checkpoint_error(bytes + "z"), "corrupt checkpoint: trailing bytes");
}

TEST(Checkpoint, NonFiniteParametersAreNotWritten) {
    ModelParams p = init_params(small_config(10), 4, 5);
    p.agg_dense[0].weight[0] = std::numeric_limits<double>::infinity();
    std::ostringstream out;
    EXPECT_THROW(write_checkpoint(p, out), bank_error);
}

}  // namespace
}  // namespace seps
