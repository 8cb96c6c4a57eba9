#include "cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <vector>

#include "seps/evaluator.hpp"
#include "seps/featurebank.hpp"
#include "seps/hrpa.hpp"
#include "seps/sdtps.hpp"
#include "seps/trainer.hpp"

namespace seps::cli {

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys{
        // banks and files
        "out", "test_out", "bank", "val_bank", "checkpoint", "history",
        // generator
        "samples", "dim", "n_patches", "n_relevant", "n_sparse_words", "n_dense_words", "concept_count",
        "noise_sigma", "first_index",
        // model and training
        "seed", "lr", "weight_decay", "batch_size", "epochs", "margin", "rho", "lambda1", "lambda2", "beta", "tau",
        "k_top", "n_keep", "predictor_hidden", "head_hidden", "grad_check_every", "ratio_only",
        // evaluation and inspection
        "folds", "ablate_dense", "image", "caption", "id"};
    return keys;
}

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

template <class... Args>
std::string format(const char* fmt, Args... args) {
    const int n = std::snprintf(nullptr, 0, fmt, args...);
    std::string s(static_cast<std::size_t>(n), '\0');
    std::snprintf(s.data(), s.size() + 1, fmt, args...);
    return s;
}

class Settings {
public:
    explicit Settings(RunConfig values) : values_(std::move(values)) {}

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string text(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw config_error("missing required setting '" + key + "'");
        return it->second;
    }
    std::optional<std::string> maybe_text(const std::string& key) const {
        auto it = values_.find(key);
        return it == values_.end() ? std::nullopt : std::optional<std::string>(it->second);
    }

    double real(const std::string& key, double fallback) const {
        if (!has(key)) return fallback;
        const std::string v = text(key);
        double out = 0.0;
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc() || ptr != v.data() + v.size()) throw bad_value(key, v);
        return out;
    }

    std::uint64_t integer(const std::string& key, std::uint64_t fallback) const {
        if (!has(key)) return fallback;
        const std::string v = text(key);
        std::uint64_t out = 0;
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc() || ptr != v.data() + v.size()) throw bad_value(key, v);
        return out;
    }

    std::size_t count(const std::string& key, std::size_t fallback) const {
        return static_cast<std::size_t>(integer(key, fallback));
    }

    bool flag(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const std::string v = text(key);
        if (v == "1" || v == "true") return true;
        if (v == "0" || v == "false") return false;
        throw bad_value(key, v);
    }

private:
    static config_error bad_value(const std::string& key, const std::string& v) {
        return config_error("invalid value '" + v + "' for '" + key + "'");
    }

    RunConfig values_;
};

// Validation errors from the library are reported as configuration errors.
template <class Fn>
void validated(Fn&& fn) {
    try {
        fn();
    } catch (const shape_error& e) {
        throw config_error(e.what());
    }
}

SynthConfig synth_config(const Settings& s) {
    SynthConfig c;
    c.n_samples = s.count("samples", c.n_samples);
    c.dim = s.count("dim", c.dim);
    c.n_patches = s.count("n_patches", c.n_patches);
    c.n_relevant_patches = s.count("n_relevant", c.n_relevant_patches);
    c.n_sparse_words = s.count("n_sparse_words", c.n_sparse_words);
    c.n_dense_words = s.count("n_dense_words", c.n_dense_words);
    c.concept_count = s.count("concept_count", c.concept_count);
    c.noise_sigma = s.real("noise_sigma", c.noise_sigma);
    c.first_index = s.count("first_index", c.first_index);
    c.seed = s.integer("seed", c.seed);
    try {
        c.validate();
    } catch (const std::exception& e) {
        throw config_error(e.what());
    }
    return c;
}

TrainConfig train_config(const Settings& s) {
    TrainConfig c;
    c.lr = s.real("lr", c.lr);
    c.weight_decay = s.real("weight_decay", c.weight_decay);
    c.batch_size = s.count("batch_size", c.batch_size);
    c.epochs = s.count("epochs", c.epochs);
    c.margin = s.real("margin", c.margin);
    c.rho = s.real("rho", c.rho);
    c.lambda1 = s.real("lambda1", c.lambda1);
    c.lambda2 = s.real("lambda2", c.lambda2);
    c.beta = s.real("beta", c.beta);
    c.tau = s.real("tau", c.tau);
    c.k_top = s.count("k_top", c.k_top);
    c.n_keep = s.count("n_keep", c.n_keep);
    c.predictor_hidden = s.count("predictor_hidden", c.predictor_hidden);
    c.head_hidden = s.count("head_hidden", c.head_hidden);
    c.seed = s.integer("seed", c.seed);
    c.grad_check_every = s.count("grad_check_every", c.grad_check_every);
    c.ratio_only = s.flag("ratio_only", c.ratio_only);
    c.ablate_dense_text = s.flag("ablate_dense", c.ablate_dense_text);
    validated([&] { c.validate(); });
    return c;
}

SdtpsConfig selection_config(const Settings& s) {
    SdtpsConfig c;
    c.beta = s.real("beta", c.beta);
    c.tau = s.real("tau", c.tau);
    c.ablate_dense_text = s.flag("ablate_dense", false);
    validated([&] { c.validate(); });
    return c;
}

void write_atomically(const std::filesystem::path& path, const std::function<void(const std::filesystem::path&)>& write) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    write(tmp);
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw bank_error("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

struct Inputs {
    FeatureBank bank;
    ModelParams params;
};

Inputs load_inputs(const Settings& s) {
    Inputs in{read_bank(std::filesystem::path(s.text("bank"))), read_checkpoint(std::filesystem::path(s.text("checkpoint")))};
    const std::size_t model_dim = shape_of(in.params).dim;
    if (model_dim != in.bank.dim) {
        throw config_error(format("bank dimension %zu does not match checkpoint dimension %zu", in.bank.dim, model_dim));
    }
    return in;
}

void check_bank_matches(const Settings& s, const FeatureBank& bank) {
    if (s.has("dim") && s.count("dim", 0) != bank.dim) {
        throw config_error(format("configured dim %zu does not match bank dimension %zu", s.count("dim", 0), bank.dim));
    }
    if (s.has("n_patches")) {
        for (const Sample& sample : bank.samples) {
            if (sample.patch_count() != s.count("n_patches", 0)) {
                throw config_error("configured n_patches does not match sample " + sample.id);
            }
        }
    }
}

int cmd_gen(const Settings& s, std::ostream& out) {
    const SynthConfig cfg = synth_config(s);
    const std::string path = s.text("out");
    const auto test_path = s.maybe_text("test_out");

    const FeatureBank bank = generate_synthetic(cfg);
    write_bank(bank, std::filesystem::path(path));
    out << format("wrote %s: %zu samples, dim %zu, %zu patches, %zu relevant per sample\n", path.c_str(),
                  bank.samples.size(), bank.dim, cfg.n_patches, cfg.n_relevant_patches);
    if (test_path) {
        SynthConfig held_out = cfg;
        held_out.first_index = cfg.first_index + cfg.n_samples;
        write_bank(generate_synthetic(held_out), std::filesystem::path(*test_path));
        out << format("wrote %s: %zu held-out samples\n", test_path->c_str(), cfg.n_samples);
    }
    return kExitOk;
}

std::string history_line(const EpochRecord& r) {
    std::string line = format("%zu,%.6f,%.6f,%.6f,", r.epoch, r.loss, r.keep_rate_sparse, r.keep_rate_dense);
    line += r.val_r1 ? format("%.4f", *r.val_r1) : std::string("-");
    return line;
}

int cmd_train(const Settings& s, std::ostream& out) {
    const TrainConfig cfg = train_config(s);
    const std::filesystem::path checkpoint = s.text("checkpoint");
    const auto history_path = s.maybe_text("history");

    const FeatureBank bank = read_bank(std::filesystem::path(s.text("bank")));
    check_bank_matches(s, bank);
    if (bank.samples.size() < cfg.batch_size) throw config_error("bank has fewer samples than batch_size");
    std::optional<FeatureBank> validation;
    if (auto v = s.maybe_text("val_bank")) {
        validation = read_bank(std::filesystem::path(*v));
        if (validation->dim != bank.dim) throw config_error("validation bank dimension differs from training bank");
    }

    std::ofstream history;
    if (history_path) {
        history.open(*history_path, std::ios::trunc);
        if (!history) throw bank_error("cannot open " + *history_path + " for writing");
    }
    const std::string header = "epoch,loss,keep_rate_sparse,keep_rate_dense,val_r1";
    out << header << '\n';
    if (history) history << header << '\n';

    FitOptions options;
    options.validation = validation ? &*validation : nullptr;
    options.on_epoch = [&](const EpochRecord& rec, const ModelParams& params) {
        write_atomically(checkpoint, [&](const std::filesystem::path& p) { write_checkpoint(params, p); });
        const std::string line = history_line(rec);
        out << line << '\n';
        if (history) history << line << '\n' << std::flush;
    };
    fit(bank, cfg, options);
    out << "checkpoint " << checkpoint.string() << '\n';
    return kExitOk;
}

int cmd_eval(const Settings& s, std::ostream& out) {
    const SdtpsConfig cfg = selection_config(s);
    EvalOptions options{threads_from_env(), s.count("folds", 1)};
    if (options.folds == 0) throw config_error("folds must be at least 1");
    const Inputs in = load_inputs(s);
    const RetrievalReport report = retrieval_eval(in.bank, in.params, cfg, options);
    out << report.table() << report.csv() << '\n';
    return kExitOk;
}

int cmd_score(const Settings& s, std::ostream& out) {
    const SdtpsConfig cfg = selection_config(s);
    const std::string image_id = s.text("image");
    const std::string caption_id = s.text("caption");
    const Inputs in = load_inputs(s);
    const Sample* image = in.bank.find(image_id);
    const Sample* caption = in.bank.find(caption_id);
    if (image == nullptr) throw config_error("unknown sample id " + image_id);
    if (caption == nullptr) throw config_error("unknown sample id " + caption_id);

    Graph g;
    const ModelVars model = bind(g, in.params, false);
    const SdtpsOutput sel = sdtps_forward(g, *image, caption->sparse_tokens, model, cfg, Mode::eval, nullptr);
    const AlignmentScore a =
        align_score(sel.aggregated.vectors, g.constant(caption->sparse_tokens), model.head_p2w, model.head_w2p).values();
    out << format("S=%.12g mean_p2w=%.12g head_p2w=%.12g mean_w2p=%.12g head_w2p=%.12g\n", a.total, a.mean_p2w,
                  a.head_p2w, a.mean_w2p, a.head_w2p);
    return kExitOk;
}

int cmd_inspect(const Settings& s, std::ostream& out) {
    const SdtpsConfig cfg = selection_config(s);
    const std::string id = s.text("id");
    const Inputs in = load_inputs(s);
    const Sample* sample = in.bank.find(id);
    if (sample == nullptr) throw config_error("unknown sample id " + id);

    ScoreBundle b = attention_bundle(*sample, cfg.ablate_dense_text);
    b.s_p = predict_scores(sample->patches, in.params.predictor);
    const auto [sparse, dense] = branch_scores(b, cfg.beta);
    const DecisionMask keep_s = gumbel_decision(sparse, cfg.tau, false, nullptr);
    const DecisionMask keep_d = gumbel_decision(dense, cfg.tau, false, nullptr);

    out << "index s_p s_st s_dt s_im s_sparse s_dense keep gt\n";
    for (std::size_t i = 0; i < sample->patch_count(); ++i) {
        const char* gt = !sample->relevance_mask ? "-" : ((*sample->relevance_mask)[i] ? "1" : "0");
        out << format("%zu %.6f %.6f %.6f %.6f %.6f %.6f %d|%d %s\n", i, b.s_p[i], b.s_st[i], b.s_dt[i], b.s_im[i],
                      sparse[i], dense[i], static_cast<int>(keep_s.hard[i]), static_cast<int>(keep_d.hard[i]), gt);
    }
    return kExitOk;
}

struct Command {
    CLI::App* app;
    std::vector<std::string> keys;
    std::function<int(const Settings&, std::ostream&)> run;
};

}  // namespace

bool is_known_key(const std::string& key) { return known_keys().count(key) != 0; }

RunConfig parse_config(std::istream& in) {
    RunConfig cfg;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw config_error(format("config line %zu: expected key=value", number));
        const std::string key = trim(std::string_view(body).substr(0, eq));
        const std::string value = trim(std::string_view(body).substr(eq + 1));
        if (!is_known_key(key)) throw config_error(format("config line %zu: unknown key '%s'", number, key.c_str()));
        if (value.empty()) throw config_error(format("config line %zu: empty value for '%s'", number, key.c_str()));
        cfg[key] = value;
    }
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot read config file " + path);
    return parse_config(in);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Text-aware patch selection and patch-word alignment on feature banks", "seps"};
    app.require_subcommand(1);

    std::string config_path;
    RunConfig flags;
    std::vector<Command> commands;

    auto add = [&](const char* name, const char* help, std::vector<std::string> keys, std::vector<std::string> switches,
                   std::function<int(const Settings&, std::ostream&)> fn) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "key=value file; flags override its values");
        for (const std::string& key : keys) sub->add_option("--" + key, flags[key]);
        for (const std::string& key : switches) {
            sub->add_flag_callback("--" + key, [&flags, key] { flags[key] = "1"; });
        }
        keys.insert(keys.end(), switches.begin(), switches.end());
        commands.push_back({sub, std::move(keys), std::move(fn)});
    };

    add("gen", "write a synthetic feature bank",
        {"out", "test_out", "samples", "dim", "n_patches", "n_relevant", "n_sparse_words", "n_dense_words",
         "concept_count", "noise_sigma", "first_index", "seed"},
        {}, cmd_gen);
    add("train", "train on a bank and write a checkpoint",
        {"bank", "val_bank", "checkpoint", "history", "dim", "n_patches", "lr", "weight_decay", "batch_size", "epochs",
         "margin", "rho", "lambda1", "lambda2", "beta", "tau", "k_top", "n_keep", "predictor_hidden", "head_hidden",
         "seed", "grad_check_every"},
        {"ratio_only", "ablate_dense"}, cmd_train);
    add("eval", "retrieval recall of a checkpoint on a bank", {"bank", "checkpoint", "beta", "tau", "folds"},
        {"ablate_dense"}, cmd_eval);
    add("score", "alignment score of one image against one caption",
        {"bank", "checkpoint", "image", "caption", "beta", "tau"}, {}, cmd_score);
    add("inspect", "per-patch selection dump for one sample", {"bank", "checkpoint", "id", "beta", "tau"},
        {"ablate_dense"}, cmd_inspect);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n' << app.help();
        return kExitInput;
    }

    for (const Command& cmd : commands) {
        if (!cmd.app->parsed()) continue;
        try {
            RunConfig merged = config_path.empty() ? RunConfig{} : load_config(config_path);
            for (const std::string& key : cmd.keys) {
                if (cmd.app->count("--" + key) > 0) merged[key] = flags[key];
            }
            return cmd.run(Settings(std::move(merged)), out);
        } catch (const config_error& e) {
            err << "error: " << e.what() << "\nrun 'seps " << cmd.app->get_name() << " --help' for usage\n";
            return kExitInput;
        } catch (const numeric_error& e) {
            err << "error: " << e.what() << '\n';
            return kExitNumeric;
        } catch (const std::exception& e) {
            err << "error: " << e.what() << '\n';
            return kExitInput;
        }
    }
    return kExitInput;
}

}  // namespace seps::cli
