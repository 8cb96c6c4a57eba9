// Acceptance run: one PASS/FAIL line per criterion, indented lines carry the
// measurements behind each verdict. Exit status is non-zero if any criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "seps/evaluator.hpp"
#include "seps/gradcheck.hpp"
#include "seps/hrpa.hpp"
#include "seps/objective.hpp"
#include "seps/ops.hpp"
#include "seps/trainer.hpp"
#include "support.hpp"

namespace seps {
namespace {

using testing::random_matrix;
using testing::random_tensor;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <class... Args>
void note(const char* fmt, Args... args) {
    std::printf("    ");
    std::printf(fmt, args...);
    std::printf("\n");
}

std::size_t uniform_size(Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double uniform_real(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

std::vector<const Sample*> pointers(const std::vector<Sample>& v) {
    std::vector<const Sample*> out;
    for (const Sample& s : v) out.push_back(&s);
    return out;
}

std::vector<const Sample*> pointers(const FeatureBank& bank) { return pointers(bank.samples); }

// ---------------------------------------------------------------------------

bool gradient_correctness() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::size_t checked = 0, excluded = 0, configs = 0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        Rng rng = make_rng(2024, "acceptance-gradients", trial);
        const std::size_t d = uniform_size(rng, 2, 8), n = uniform_size(rng, 2, 6);
        const std::size_t b = uniform_size(rng, 2, 3);
        std::vector<Sample> batch;
        for (std::size_t i = 0; i < b; ++i) {
            Sample s;
            s.id = "g" + std::to_string(i);
            s.patches = random_matrix(rng, n, d);
            s.sparse_tokens = random_matrix(rng, uniform_size(rng, 1, 4), d);
            s.dense_tokens = random_matrix(rng, uniform_size(rng, 1, 4), d);
            batch.push_back(std::move(s));
        }
        TrainConfig c;
        c.batch_size = b;
        c.beta = uniform_real(rng, 0.0, 0.3);
        c.tau = uniform_real(rng, 0.5, 2.0);
        c.margin = uniform_real(rng, 0.1, 0.5);
        c.rho = uniform_real(rng, 0.2, 0.9);
        c.lambda1 = uniform_real(rng, 0.0, 1.5);
        c.lambda2 = uniform_real(rng, 0.0, 1.5);
        c.seed = trial;
        c.k_top = uniform_size(rng, 1, 4);
        c.n_keep = uniform_size(rng, 1, n);
        c.predictor_hidden = uniform_size(rng, 1, d);
        c.head_hidden = trial % 3 == 0 ? 2 : 0;

        // Every tensor random (heads too) so that no gradient is trivially zero;
        // the predictor leans towards keeping so that selections are non-empty.
        ModelParams p = init_params(c, d, n);
        for_each_param(p, [&](const std::string&, Tensor& t) { t = random_tensor(rng, t.shape(), -0.5, 0.5); });
        p.predictor.back().bias[0] += 1.0;

        const auto ptrs = pointers(batch);
        std::vector<FrozenDecisions> replay;
        for (std::uint64_t step = 0; step < 100 && replay.empty(); ++step) {
            try {
                Graph g;
                replay = batch_similarity(g, ptrs, bind(g, p), c.selection(), Mode::train, {c.seed, step}).decisions;
            } catch (const shape_error&) {
            }
        }
        if (replay.empty()) continue;
        ++configs;
        const ScalarBuilder f = [&](Graph& g, std::span<const Var> leaves) {
            return replayed_loss(g, leaves, p, ptrs, replay, c);
        };
        const FdReport r = finite_difference_check(f, flatten(p), {}, NumericConstants::fd_step, 1e-4);
        if (std::getenv("SEPS_ACCEPTANCE_VERBOSE") && r.max_relative_error > 1e-5) {
            note("trial %llu: error %.2e at leaf %zu index %zu (%s), excluded %zu", static_cast<unsigned long long>(trial),
                 r.max_relative_error, r.worst.leaf, r.worst.index, param_names(p)[r.worst.leaf].c_str(), r.excluded);
        }
        worst = std::max(worst, r.max_relative_error);
        checked += r.checked;
        excluded += r.excluded;
    }
    const double elapsed = seconds_since(t0);
    const double excluded_share = static_cast<double>(excluded) / static_cast<double>(checked + excluded);
    // Exclusions are coordinates whose probes flip a discrete choice (argmax,
    // hinge, clip, top-k). Degenerate selections create exact ties, so a few
    // percent is expected; the cap guards against a vacuous pass.
    const bool pass = configs == 100 && worst < 1e-4 && elapsed < 60.0 && excluded_share <= 0.10;
    std::printf("%s 1 gradient correctness: %zu configurations, max relative error %.2e over %zu coordinates "
                "(%zu tie coordinates excluded, %.3f%%), %.1f s\n",
                pass ? "PASS" : "FAIL", configs, worst, checked, excluded, 100.0 * excluded_share, elapsed);
    return pass;
}

// ---------------------------------------------------------------------------

double brute_triplet(const Tensor& s, double margin) {
    const std::size_t b = s.rows();
    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        double worst_caption = -1e300, worst_image = -1e300;
        for (std::size_t j = 0; j < b; ++j) {
            if (j == i) continue;
            worst_caption = std::max(worst_caption, s.at(i, j));
            worst_image = std::max(worst_image, s.at(j, i));
        }
        loss += std::max(0.0, margin - s.at(i, i) + worst_caption);
        loss += std::max(0.0, margin - s.at(i, i) + worst_image);
    }
    return loss;
}

bool triplet_oracle() {
    Rng rng = make_rng(2024, "acceptance-triplet");
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t b = uniform_size(rng, 2, 16);
        const Tensor s = random_matrix(rng, b, b, -1.0, 2.0);
        const double margin = uniform_real(rng, 0.05, 0.5);
        Graph g;
        mismatches += triplet_loss(s, margin) != brute_triplet(s, margin);
        mismatches += triplet_loss(g.constant(s), margin).value().item() != brute_triplet(s, margin);
    }
    const double zero = triplet_loss(Tensor::matrix({{0.9, 0.1}, {0.2, 0.8}}), 0.2);
    const double half = triplet_loss(Tensor::matrix({{0.5, 0.6}, {0.4, 0.7}}), 0.2);
    const bool pass = mismatches == 0 && zero == 0.0 && std::abs(half - 0.5) < 1e-15;
    std::printf("%s 2 triplet oracle: %zu mismatches against the double loop over 500 matrices, "
                "worked examples %.17g and %.17g\n",
                pass ? "PASS" : "FAIL", mismatches, zero, half);
    return pass;
}

// ---------------------------------------------------------------------------

struct RatioRun {
    double trailing = 0.0;  // train-mode keep sum averaged over the last 50 steps
    double floor = 0.0;     // expected keep sum with the predictor pinned at zero
    double seconds = 0.0;
};

RatioRun ratio_run(const FeatureBank& bank, TrainConfig c) {
    const auto t0 = Clock::now();
    c.ratio_only = true;
    ModelParams p = init_params(c, bank.dim, bank.samples[0].patch_count());
    OptimizerState state = OptimizerState::for_params(p);
    const auto batch = pointers(bank);
    RatioRun out;
    for (std::uint64_t step = 0; step < 200; ++step) {
        const StepResult r = train_step(p, state, batch, c, step);
        if (step >= 150) out.trailing += (c.lambda1 * r.keep_sparse + c.lambda2 * r.keep_dense) / 50.0;
    }
    out.seconds = seconds_since(t0);
    // Keep probability equals the clipped branch score, which never falls below
    // its attention offset however the predictor is trained.
    for (const Sample& s : bank.samples) {
        const auto [offset_s, offset_d] = branch_offsets(attention_bundle(s, false), c.beta);
        double kept = 0.0;
        for (std::size_t i = 0; i < offset_s.size(); ++i) {
            kept += c.lambda1 * std::min(offset_s[i], kScoreCeiling) + c.lambda2 * std::min(offset_d[i], kScoreCeiling);
        }
        out.floor += kept / static_cast<double>(offset_s.size() * bank.samples.size());
    }
    return out;
}

bool ratio_control() {
    SynthConfig sc;
    sc.n_samples = 8;
    const FeatureBank bank = generate_synthetic(sc);
    TrainConfig c;
    const RatioRun r = ratio_run(bank, c);
    const bool pass = std::abs(r.trailing - c.rho) <= 0.05 && r.seconds < 30.0;
    std::printf("%s 3 ratio control: keep sum %.4f after 200 steps (target %.2f +- 0.05) at beta %.2f, lr %g, %.1f s\n",
                pass ? "PASS" : "FAIL", r.trailing, c.rho, c.beta, c.lr, r.seconds);
    note("lowest reachable expected keep sum at beta %.2f (predictor output 0): %.4f", c.beta, r.floor);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        TrainConfig free = c;
        free.beta = 0.0;
        free.lr = 1e-3;
        free.seed = seed;
        try {
            const RatioRun s = ratio_run(bank, free);
            note("beta 0, lr 1e-3, seed %llu: keep sum %.4f", static_cast<unsigned long long>(seed), s.trailing);
        } catch (const shape_error& e) {
            // Pushing the ratio down can empty a sample's selection, which is an error by design.
            note("beta 0, lr 1e-3, seed %llu: stopped (%s)", static_cast<unsigned long long>(seed), e.what());
        }
    }
    return pass;
}

// ---------------------------------------------------------------------------

struct DeskBanks {
    FeatureBank train, test;
};

DeskBanks desk_banks(std::uint64_t seed) {
    SynthConfig sc;
    sc.n_samples = 64;
    sc.dim = 32;
    sc.n_patches = 16;
    sc.n_relevant_patches = 4;
    sc.noise_sigma = 0.1;
    sc.seed = seed;
    DeskBanks out;
    out.train = generate_synthetic(sc);
    sc.first_index = sc.n_samples;
    out.test = generate_synthetic(sc);
    return out;
}

TrainConfig desk_config(std::uint64_t seed) {
    TrainConfig c;  // beta 0.2, rho 0.5, margin 0.2, lr 1e-4, 20 epochs
    c.seed = seed;
    return c;
}

double max_displacement(const ModelParams& a, const ModelParams& b) {
    const auto fa = flatten(a), fb = flatten(b);
    double out = 0.0;
    for (std::size_t t = 0; t < fa.size(); ++t) {
        for (std::size_t i = 0; i < fa[t].size(); ++i) out = std::max(out, std::abs(fa[t][i] - fb[t][i]));
    }
    return out;
}

void print_report(const char* label, const RetrievalReport& r) {
    note("%s: i2t R@1/5/10 %.2f/%.2f/%.2f, t2i R@1/5/10 %.2f/%.2f/%.2f, rsum %.2f", label, r.i2t_r1, r.i2t_r5,
         r.i2t_r10, r.t2i_r1, r.t2i_r5, r.t2i_r10, r.rsum);
}

bool desk_retrieval(ModelParams& trained) {
    const DeskBanks banks = desk_banks(0);
    const TrainConfig c = desk_config(0);
    const auto t0 = Clock::now();
    trained = fit(banks.train, c).params;
    const RetrievalReport r = retrieval_eval(banks.test, trained, c.selection());
    const double elapsed = seconds_since(t0);
    const bool pass = r.i2t_r1 >= 80.0 && r.t2i_r1 >= 80.0 && r.rsum >= 520.0 && elapsed < 300.0;
    std::printf("%s 4 desk-scale retrieval: test R@1 i2t %.2f%%, t2i %.2f%% (need >= 80), rsum %.2f (need >= 520), "
                "chance %.2f%%, %.1f s\n",
                pass ? "PASS" : "FAIL", r.i2t_r1, r.t2i_r1, r.rsum, 100.0 / 64.0, elapsed);
    const ModelParams initial = init_params(c, banks.train.dim, 16);
    note("largest parameter change over %zu Adam steps at lr %g: %.4f", c.epochs * (64 / c.batch_size), c.lr,
         max_displacement(initial, trained));
    print_report("untrained model", retrieval_eval(banks.test, initial, c.selection()));
    print_report("trained, lr 1e-4", r);
    for (double lr : {1e-3, 3e-3}) {
        TrainConfig faster = c;
        faster.lr = lr;
        const std::string label = "trained, lr " + std::string(lr == 1e-3 ? "1e-3" : "3e-3");
        print_report(label.c_str(), retrieval_eval(banks.test, fit(banks.train, faster).params, faster.selection()));
    }
    return pass;
}

// ---------------------------------------------------------------------------

bool selection_and_ablation(const ModelParams& trained) {
    const auto t0 = Clock::now();
    const DeskBanks first = desk_banks(0);
    const double auc = selection_quality(first.test, trained, desk_config(0).selection());

    std::vector<double> deltas;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const DeskBanks banks = desk_banks(seed);
        TrainConfig full = desk_config(seed);
        TrainConfig sparse_only = full;
        sparse_only.ablate_dense_text = true;
        const ModelParams pf = seed == 0 ? trained : fit(banks.train, full).params;
        const ModelParams ps = fit(banks.train, sparse_only).params;
        const double with_dense = retrieval_eval(banks.test, pf, full.selection()).t2i_r1;
        const double without = retrieval_eval(banks.test, ps, sparse_only.selection()).t2i_r1;
        deltas.push_back(with_dense - without);
        note("seed %llu: t2i R@1 %.2f with dense text, %.2f sparse only, delta %+.2f",
             static_cast<unsigned long long>(seed), with_dense, without, with_dense - without);
    }
    const double mean_delta = std::accumulate(deltas.begin(), deltas.end(), 0.0) / static_cast<double>(deltas.size());
    const auto positive = std::count_if(deltas.begin(), deltas.end(), [](double x) { return x > 0.0; });
    const bool pass = auc >= 0.8 && mean_delta > 0.0;
    std::printf("%s 5 selection quality: AUC %.4f (need >= 0.8), removing dense text costs %+.2f t2i R@1 points "
                "averaged over 5 seeds (need > 0; %td of 5 seeds individually positive), %.1f s\n",
                pass ? "PASS" : "FAIL", auc, mean_delta, positive, seconds_since(t0));
    return pass;
}

// ---------------------------------------------------------------------------

bool published_rsum() {
    struct Row {
        std::array<double, 6> recalls;
        double printed;
    };
    const std::vector<Row> rows{
        {{86.1, 93.7, 96.9, 86.9, 98.1, 99.2}, 560.9},
        {{90.7, 94.4, 98.4, 89.3, 99.3, 99.5}, 571.5},
        {{89.8, 96.9, 98.7, 88.0, 98.9, 99.6}, 572.0},
        {{93.6, 98.3, 99.2, 91.6, 99.4, 99.8}, 581.9},
    };
    std::size_t matched = 0;
    std::vector<std::string> details;
    for (const Row& r : rows) {
        const double total = rsum(r.recalls);
        const bool ok = std::abs(total - r.printed) <= 1e-9;
        matched += ok;
        char buf[96];
        std::snprintf(buf, sizeof buf, "printed %.1f, recomputed %.10g%s", r.printed, total, ok ? "" : " (mismatch)");
        details.emplace_back(buf);
    }
    const bool pass = matched == rows.size();
    std::printf("%s 6 published rsum rows: %zu of %zu rows reproduce their printed total within 1e-9\n",
                pass ? "PASS" : "FAIL", matched, rows.size());
    for (const std::string& d : details) note("%s", d.c_str());
    return pass;
}

// ---------------------------------------------------------------------------

std::size_t hrpa_invariance_failures() {
    Rng rng = make_rng(2024, "acceptance-hrpa");
    std::size_t failures = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = uniform_size(rng, 1, 8), m = uniform_size(rng, 1, 6), d = uniform_size(rng, 2, 8);
        const std::size_t k = uniform_size(rng, 1, 5);
        const Tensor v = random_matrix(rng, n, d), t = random_matrix(rng, m, d);
        const MlpT<Tensor> h1{{random_matrix(rng, k, 1), random_tensor(rng, {1})}};
        const MlpT<Tensor> h2{{random_matrix(rng, k, 1), random_tensor(rng, {1})}};
        auto score = [&](const Tensor& a, const Tensor& b) {
            Graph g;
            const MlpT<Var> g1{{g.constant(h1[0].weight), g.constant(h1[0].bias)}};
            const MlpT<Var> g2{{g.constant(h2[0].weight), g.constant(h2[0].bias)}};
            return align_score(g.constant(a), g.constant(b), g1, g2).total.value().item();
        };
        std::vector<std::size_t> pv(n), pt(m);
        std::iota(pv.begin(), pv.end(), std::size_t{0});
        std::iota(pt.begin(), pt.end(), std::size_t{0});
        std::shuffle(pv.begin(), pv.end(), rng);
        std::shuffle(pt.begin(), pt.end(), rng);
        Tensor vp({n, d}), tp({m, d}), vs = v, ts = t;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) vp.at(i, j) = v.at(pv[i], j);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < d; ++j) tp.at(i, j) = t.at(pt[i], j);
        const double cv = uniform_real(rng, 0.1, 10.0), ct = uniform_real(rng, 0.1, 10.0);
        for (double& x : vs.data()) x *= cv;
        for (double& x : ts.data()) x *= ct;
        const double base = score(v, t);
        failures += std::abs(score(vp, tp) - base) > 1e-9;
        failures += std::abs(score(vs, ts) - base) > 1e-9;
    }
    return failures;
}

std::size_t softmax_sum_failures() {
    Rng rng = make_rng(2024, "acceptance-softmax");
    std::size_t failures = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = uniform_size(rng, 1, 12), m = uniform_size(rng, 1, 8);
        const Tensor x = random_matrix(rng, n, m, -20.0, 20.0);
        std::unique_ptr<bool[]> mask(new bool[n]);
        Tensor weight({n}, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            mask[i] = std::bernoulli_distribution(0.6)(rng);
            weight[i] = mask[i] ? 1.0 : 0.0;
        }
        mask[uniform_size(rng, 0, n - 1)] = true;
        for (std::size_t i = 0; i < n; ++i) weight[i] = mask[i] ? 1.0 : 0.0;
        Graph g;
        for (const Tensor& w : {softmax_columns(g.constant(x), {mask.get(), n}).value(),
                                weighted_softmax_columns(g.constant(x), g.constant(weight)).value()}) {
            for (std::size_t j = 0; j < m; ++j) {
                double sum = 0.0;
                for (std::size_t i = 0; i < n; ++i) sum += w.at(i, j);
                failures += std::abs(sum - 1.0) > 1e-12;
            }
        }
    }
    return failures;
}

std::string bank_bytes(const FeatureBank& bank) {
    std::ostringstream out;
    write_bank(bank, out);
    return out.str();
}

std::size_t roundtrip_failures() {
    Rng rng = make_rng(2024, "acceptance-roundtrip");
    std::size_t failures = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        FeatureBank bank;
        bank.dim = uniform_size(rng, 1, 6);
        const std::size_t samples = uniform_size(rng, 1, 4);
        for (std::size_t i = 0; i < samples; ++i) {
            Sample s;
            s.id = "r" + std::to_string(trial) + "_" + std::to_string(i);
            auto f32 = [&](std::size_t rows) {
                Tensor t = random_matrix(rng, rows, bank.dim, -3.0, 3.0);
                for (double& v : t.data()) v = static_cast<float>(v);
                return t;
            };
            s.patches = f32(uniform_size(rng, 1, 5));
            s.sparse_tokens = f32(uniform_size(rng, 1, 3));
            s.dense_tokens = f32(uniform_size(rng, 1, 4));
            if (trial % 2) {
                std::vector<std::uint8_t> mask(s.patches.rows());
                for (auto& b : mask) b = std::bernoulli_distribution(0.5)(rng);
                s.relevance_mask = mask;
            }
            bank.samples.push_back(std::move(s));
        }
        const std::string bytes = bank_bytes(bank);
        std::istringstream in(bytes);
        const FeatureBank back = read_bank(in);
        bool same = back.dim == bank.dim && back.samples.size() == bank.samples.size();
        for (std::size_t i = 0; same && i < bank.samples.size(); ++i) {
            const Sample &a = bank.samples[i], &b = back.samples[i];
            same = a.id == b.id && a.patches == b.patches && a.sparse_tokens == b.sparse_tokens &&
                   a.dense_tokens == b.dense_tokens && a.relevance_mask == b.relevance_mask;
        }
        failures += !same || bank_bytes(back) != bytes;
    }
    return failures;
}

std::string checkpoint_bytes(const ModelParams& p) {
    std::ostringstream out;
    write_checkpoint(p, out);
    return out.str();
}

std::size_t determinism_failures() {
    std::size_t failures = 0;
    SynthConfig sc;
    sc.n_samples = 16;
    sc.dim = 8;
    sc.n_patches = 6;
    sc.n_relevant_patches = 2;
    sc.n_sparse_words = 2;
    sc.n_dense_words = 4;
    sc.seed = 9;
    const FeatureBank bank = generate_synthetic(sc);
    failures += bank_bytes(bank) != bank_bytes(generate_synthetic(sc));

    TrainConfig c;
    c.epochs = 3;
    c.k_top = 3;
    c.lr = 1e-3;
    c.seed = 9;
    FitOptions options;
    options.validation = &bank;
    const FitResult a = fit(bank, c, options), b = fit(bank, c, options);
    failures += checkpoint_bytes(a.params) != checkpoint_bytes(b.params);
    for (std::size_t e = 0; e < a.history.size(); ++e) {
        failures += a.history[e].loss != b.history[e].loss || a.history[e].val_r1 != b.history[e].val_r1 ||
                    a.history[e].keep_rate_sparse != b.history[e].keep_rate_sparse;
    }
    failures += score_matrix(bank, a.params, c.selection(), 0) != score_matrix(bank, a.params, c.selection(), 4);
    return failures;
}

std::size_t recall_monotonicity_failures() {
    Rng rng = make_rng(2024, "acceptance-recall");
    std::size_t failures = 0;
    std::uniform_int_distribution<int> coarse(0, 3);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = uniform_size(rng, 2, 20);
        Tensor s = random_matrix(rng, n, n);
        if (trial % 2) {
            for (double& v : s.data()) v = coarse(rng);
        }
        double previous = 0.0;
        for (std::size_t k = 1; k <= n; ++k) {
            const double r = recall_at_k(s, diagonal_truth(n), k);
            failures += r < previous;
            previous = r;
        }
        failures += previous != 100.0;
    }
    return failures;
}

bool invariant_suites() {
    const auto t0 = Clock::now();
    const std::size_t hrpa = hrpa_invariance_failures();
    const std::size_t softmax = softmax_sum_failures();
    const std::size_t roundtrip = roundtrip_failures();
    const std::size_t determinism = determinism_failures();
    const std::size_t recall = recall_monotonicity_failures();
    const bool pass = hrpa + softmax + roundtrip + determinism + recall == 0;
    std::printf("%s 7 invariant suites: failures hrpa %zu, softmax %zu, bank roundtrip %zu, determinism %zu, "
                "recall monotonicity %zu, %.1f s\n",
                pass ? "PASS" : "FAIL", hrpa, softmax, roundtrip, determinism, recall, seconds_since(t0));
    return pass;
}

}  // namespace
}  // namespace seps

int main() {
    using namespace seps;
    std::setvbuf(stdout, nullptr, _IOLBF, 0);
    std::size_t failed = 0;
    failed += !gradient_correctness();
    failed += !triplet_oracle();
    failed += !ratio_control();
    ModelParams trained;
    failed += !desk_retrieval(trained);
    failed += !selection_and_ablation(trained);
    failed += !published_rsum();
    failed += !invariant_suites();
    std::printf("%zu of 7 criteria failed\n", failed);
    std::fflush(stdout);
    return failed == 0 ? 0 : 1;
}
