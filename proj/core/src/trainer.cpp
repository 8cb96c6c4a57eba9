#include "seps/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "binary_io.hpp"
#include "seps/evaluator.hpp"
#include "seps/gradcheck.hpp"

namespace seps {

namespace {

constexpr std::uint8_t kCheckpointMagic[4] = {0x53, 0x45, 0x50, 0x43};  // "SEPC"
constexpr double kAuditTolerance = 1e-3;

Tensor uniform_tensor(std::vector<std::size_t> shape, double bound, Rng& rng) {
    Tensor t(std::move(shape), 0.0);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

LayerT<Tensor> uniform_layer(std::size_t in, std::size_t out, Rng& rng) {
    return {uniform_tensor({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng), Tensor({out}, 0.0)};
}

MlpT<Tensor> zero_head(std::size_t k, std::size_t hidden) {
    if (hidden == 0) return {{Tensor({k, 1}, 0.0), Tensor({1}, 0.0)}};
    return {{Tensor({k, hidden}, 0.0), Tensor({hidden}, 0.0)}, {Tensor({hidden, 1}, 0.0), Tensor({1}, 0.0)}};
}

Var batch_loss(const BatchScores& bs, const TrainConfig& cfg) {
    const ObjectiveConfig obj = cfg.objective();
    return cfg.ratio_only ? ratio_loss(bs.keep, obj) : total_loss(bs, obj);
}

}  // namespace

void TrainConfig::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw shape_error("lr must be non-negative");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw shape_error("weight_decay must be non-negative");
    if (batch_size < 2) throw shape_error("batch_size must be at least 2");
    if (epochs < 1) throw shape_error("epochs must be at least 1");
    if (k_top < 1) throw shape_error("k_top must be at least 1");
    objective().validate();
    selection().validate();
}

ModelShape TrainConfig::model_shape(std::size_t dim, std::size_t n_patches) const {
    if (dim == 0 || n_patches == 0) throw shape_error("model_shape: dim and patch count must be positive");
    ModelShape s;
    s.dim = dim;
    s.predictor_hidden = predictor_hidden != 0 ? predictor_hidden : dim;
    s.n_keep = n_keep != 0 ? n_keep : static_cast<std::size_t>(std::ceil(rho * static_cast<double>(n_patches)));
    s.k_top = k_top;
    s.head_hidden = head_hidden;
    return s;
}

ModelParams init_params(const ModelShape& shape, Rng& rng) {
    if (shape.dim == 0 || shape.predictor_hidden == 0 || shape.n_keep == 0 || shape.k_top == 0) {
        throw shape_error("init_params: every width must be positive");
    }
    ModelParams p;
    p.predictor.push_back(uniform_layer(shape.dim, shape.predictor_hidden, rng));
    p.predictor.push_back(uniform_layer(shape.predictor_hidden, 1, rng));
    p.agg_sparse.push_back(uniform_layer(shape.dim, shape.n_keep, rng));
    p.agg_dense.push_back(uniform_layer(shape.dim, shape.n_keep, rng));
    p.head_p2w = zero_head(shape.k_top, shape.head_hidden);
    p.head_w2p = zero_head(shape.k_top, shape.head_hidden);
    return p;
}

ModelParams init_params(const TrainConfig& cfg, std::size_t dim, std::size_t n_patches) {
    Rng rng = make_rng(cfg.seed, "init", 0);
    return init_params(cfg.model_shape(dim, n_patches), rng);
}

OptimizerState OptimizerState::for_params(const ModelParams& params) {
    OptimizerState s;
    for_each_param(params, [&s](const std::string&, const Tensor& t) {
        s.m.emplace_back(t.shape(), 0.0);
        s.v.emplace_back(t.shape(), 0.0);
    });
    return s;
}

void optimizer_step(ModelParams& params, std::span<const Tensor> grads, OptimizerState& state, double lr,
                    double weight_decay) {
    const std::size_t n = param_names(params).size();
    if (grads.size() != n || state.m.size() != n || state.v.size() != n) {
        throw shape_error("optimizer_step: parameter count mismatch");
    }
    for (const Tensor& g : grads) {
        if (!g.all_finite()) throw divergence_error();
    }
    std::size_t k = 0;
    for_each_param(params, [&](const std::string&, const Tensor& t) {
        if (grads[k].shape() != t.shape() || state.m[k].shape() != t.shape() || state.v[k].shape() != t.shape()) {
            throw shape_error("optimizer_step: shape mismatch");
        }
        ++k;
    });

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    k = 0;
    for_each_param(params, [&](const std::string&, Tensor& theta) {
        const Tensor& g = grads[k];
        Tensor& m = state.m[k];
        Tensor& v = state.v[k];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            theta[i] -= lr * (m_hat / (std::sqrt(v_hat) + state.eps) + weight_decay * theta[i]);
        }
        if (!theta.all_finite()) throw divergence_error();
        ++k;
    });
}

Var replayed_loss(Graph& graph, std::span<const Var> leaves, const ModelParams& layout,
                  std::span<const Sample* const> batch, std::span<const FrozenDecisions> replay,
                  const TrainConfig& cfg) {
    const ModelVars model = bind_leaves(leaves, layout);
    const BatchScores bs = batch_similarity(graph, batch, model, cfg.selection(), Mode::train, {}, replay);
    return batch_loss(bs, cfg);
}

AuditResult audit_gradients(const ModelParams& params, std::span<const Sample* const> batch,
                            std::span<const FrozenDecisions> replay, const TrainConfig& cfg, Rng& rng,
                            std::size_t count) {
    const std::vector<Tensor> points = flatten(params);
    std::vector<std::size_t> offsets;
    std::size_t total = 0;
    for (const Tensor& t : points) {
        offsets.push_back(total);
        total += t.size();
    }
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    std::vector<Coordinate> coords;
    for (std::size_t c = 0; c < count; ++c) {
        const std::size_t flat = pick(rng);
        const std::size_t leaf =
            static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin()) - 1;
        coords.push_back({leaf, flat - offsets[leaf]});
    }
    const ScalarBuilder f = [&](Graph& g, std::span<const Var> leaves) {
        return replayed_loss(g, leaves, params, batch, replay, cfg);
    };
    const FdReport r = finite_difference_check(f, points, coords, NumericConstants::fd_step, kAuditTolerance);
    return {r.max_relative_error, r.checked, r.excluded};
}

StepResult train_step(ModelParams& params, OptimizerState& state, std::span<const Sample* const> batch,
                      const TrainConfig& cfg, std::uint64_t step) {
    Graph g;
    std::vector<Var> leaves;
    for_each_param(params, [&](const std::string&, const Tensor& t) { leaves.push_back(g.leaf(t)); });
    const ModelVars model = bind_leaves(leaves, params);
    const BatchScores bs = batch_similarity(g, batch, model, cfg.selection(), Mode::train, {cfg.seed, step});
    const Var loss = batch_loss(bs, cfg);
    const Gradients grads = gradient(g, loss);

    StepResult out;
    out.loss = loss.value().item();
    for (const KeepStats& k : bs.keep) {
        out.keep_sparse += k.hard_sparse;
        out.keep_dense += k.hard_dense;
    }
    out.keep_sparse /= static_cast<double>(bs.keep.size());
    out.keep_dense /= static_cast<double>(bs.keep.size());

    if (cfg.grad_check_every > 0 && step % cfg.grad_check_every == 0) {
        Rng rng = make_rng(cfg.seed, "audit", step);
        out.audit = audit_gradients(params, batch, bs.decisions, cfg, rng);
    }

    std::vector<Tensor> flat;
    flat.reserve(leaves.size());
    for (const Var& leaf : leaves) flat.push_back(grads[leaf]);
    optimizer_step(params, flat, state, cfg.lr, cfg.weight_decay);
    return out;
}

FitResult fit(const FeatureBank& bank, const TrainConfig& cfg, const FitOptions& options) {
    cfg.validate();
    bank.validate();
    const std::size_t n = bank.samples.size();
    if (n < cfg.batch_size) throw bank_error("bank has fewer samples than batch_size");

    FitResult result;
    result.params = options.initial ? *options.initial : init_params(cfg, bank.dim, bank.samples[0].patch_count());
    if (shape_of(result.params).dim != bank.dim) throw shape_error("bank dimension does not match the model");
    OptimizerState state = OptimizerState::for_params(result.params);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::uint64_t step = 0;
    const std::size_t n_batches = n / cfg.batch_size;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle_rng = make_rng(cfg.seed, "shuffle", epoch);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        EpochRecord rec;
        rec.epoch = epoch;
        for (std::size_t b = 0; b < n_batches; ++b) {
            std::vector<const Sample*> batch;
            for (std::size_t k = 0; k < cfg.batch_size; ++k) batch.push_back(&bank.samples[order[b * cfg.batch_size + k]]);
            const StepResult r = train_step(result.params, state, batch, cfg, step++);
            rec.loss += r.loss;
            rec.keep_rate_sparse += r.keep_sparse;
            rec.keep_rate_dense += r.keep_dense;
            if (r.audit) {
                rec.audit_max_error = std::max(rec.audit_max_error, r.audit->max_relative_error);
                if (r.audit->max_relative_error >= kAuditTolerance) {
                    throw numeric_error("gradient audit failed at step " + std::to_string(step - 1) +
                                        ": relative error " + std::to_string(r.audit->max_relative_error));
                }
            }
        }
        rec.loss /= static_cast<double>(n_batches);
        rec.keep_rate_sparse /= static_cast<double>(n_batches);
        rec.keep_rate_dense /= static_cast<double>(n_batches);
        if (options.validation != nullptr) {
            const RetrievalReport r =
                retrieval_eval(*options.validation, result.params, cfg.selection(), {threads_from_env(), 1});
            rec.val_r1 = 0.5 * (r.i2t_r1 + r.t2i_r1);
        }
        result.history.push_back(rec);
        if (options.on_epoch) options.on_epoch(rec, result.params);
    }
    return result;
}

void write_checkpoint(const ModelParams& params, std::ostream& out) {
    shape_of(params);
    detail::Encoder enc(out);
    for (std::uint8_t b : kCheckpointMagic) enc.u8(b);
    enc.u32(kCheckpointVersion);
    enc.u32(static_cast<std::uint32_t>(param_names(params).size()));
    for_each_param(params, [&](const std::string& name, const Tensor& t) {
        for (double v : t.data()) {
            if (!std::isfinite(v) || std::abs(v) > std::numeric_limits<float>::max()) {
                throw bank_error("parameter " + name + " is not representable as float32");
            }
        }
        enc.u32(static_cast<std::uint32_t>(name.size()));
        enc.bytes(name);
        enc.u32(static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) enc.u32(static_cast<std::uint32_t>(d));
        for (double v : t.data()) enc.f32(v);
    });
    if (!out) throw bank_error("failed to write checkpoint");
}

void write_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
    std::ostringstream buf(std::ios::binary);
    write_checkpoint(params, buf);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw bank_error("cannot open " + path.string() + " for writing");
    const std::string bytes = buf.str();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw bank_error("failed to write " + path.string());
}

ModelParams read_checkpoint(std::istream& in) {
    std::vector<std::uint8_t> buf = detail::slurp(in);
    if (buf.size() < 4 || !std::equal(std::begin(kCheckpointMagic), std::end(kCheckpointMagic), buf.begin())) {
        throw bank_error("not a checkpoint");
    }
    detail::Decoder dec(std::move(buf), "checkpoint");
    for (int i = 0; i < 4; ++i) dec.u8();
    const std::uint32_t version = dec.u32();
    if (version != kCheckpointVersion) throw bank_error("unsupported version " + std::to_string(version));

    const std::uint32_t count = dec.u32();
    std::map<std::string, Tensor> tensors;
    for (std::uint32_t k = 0; k < count; ++k) {
        std::string name = dec.str(dec.u32());
        const std::uint32_t rank = dec.u32();
        if (rank > 2) throw bank_error("corrupt checkpoint: rank " + std::to_string(rank));
        std::vector<std::size_t> shape;
        std::size_t size = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            shape.push_back(dec.u32());
            size *= shape.back();
        }
        dec.need(4 * size);
        std::vector<double> data(size);
        for (double& v : data) v = dec.f32();
        if (!tensors.emplace(std::move(name), Tensor(std::move(shape), std::move(data))).second) {
            throw bank_error("corrupt checkpoint: duplicate tensor name");
        }
    }
    if (dec.remaining() != 0) throw bank_error("corrupt checkpoint: trailing bytes");

    // Rebuild the layer lists from "<group>.<index>.<weight|bias>" names.
    ModelParams p;
    std::map<std::string, MlpT<Tensor>*> groups{{"predictor", &p.predictor},
                                                {"agg_sparse", &p.agg_sparse},
                                                {"agg_dense", &p.agg_dense},
                                                {"head_p2w", &p.head_p2w},
                                                {"head_w2p", &p.head_w2p}};
    for (auto& [group, mlp] : groups) {
        for (std::size_t i = 0;; ++i) {
            const std::string prefix = group + "." + std::to_string(i);
            auto w = tensors.find(prefix + ".weight");
            auto b = tensors.find(prefix + ".bias");
            if (w == tensors.end() && b == tensors.end()) break;
            if (w == tensors.end() || b == tensors.end()) throw bank_error("corrupt checkpoint: incomplete layer " + prefix);
            mlp->push_back({std::move(w->second), std::move(b->second)});
            tensors.erase(w);
            tensors.erase(prefix + ".bias");
        }
    }
    if (!tensors.empty()) throw bank_error("corrupt checkpoint: unexpected tensor " + tensors.begin()->first);
    try {
        shape_of(p);
    } catch (const shape_error& e) {
        throw bank_error(std::string("corrupt checkpoint: ") + e.what());
    }
    for_each_param(p, [](const std::string& name, const Tensor& t) {
        if (!t.all_finite()) throw bank_error("corrupt checkpoint: non-finite parameter " + name);
    });
    return p;
}

ModelParams read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw bank_error("cannot open " + path.string());
    return read_checkpoint(in);
}

}  // namespace seps
