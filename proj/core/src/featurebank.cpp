#include "seps/featurebank.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "binary_io.hpp"
#include "seps/rng.hpp"

namespace seps {

using detail::Decoder;
using detail::Encoder;

namespace {

constexpr std::uint8_t kMagic[4] = {0x53, 0x45, 0x50, 0x42};  // "SEPB"

void check_matrix(const Tensor& t, std::size_t dim, const char* what, const char* count_rule,
                  const std::string& id) {
    if (t.rank() != 2 || t.rows() < 1) throw bank_error(std::string(count_rule) + " violated in sample " + id);
    if (t.cols() != dim) {
        throw bank_error(std::string(what) + " of sample " + id + " has dimension " +
                         std::to_string(t.cols()) + ", bank dimension is " + std::to_string(dim));
    }
    if (!t.all_finite()) throw bank_error(std::string(what) + " of sample " + id + " is not finite");
}

Tensor float32_round(Tensor t) {
    for (double& v : t.data()) v = static_cast<double>(static_cast<float>(v));
    return t;
}

}  // namespace

void FeatureBank::validate() const {
    if (dim == 0) throw bank_error("bank dimension must be at least 1");
    std::unordered_set<std::string> ids;
    for (const Sample& s : samples) {
        if (!ids.insert(s.id).second) throw bank_error("duplicate sample id " + s.id);
        check_matrix(s.patches, dim, "patches", "N ≥ 1", s.id);
        check_matrix(s.sparse_tokens, dim, "sparse tokens", "M ≥ 1", s.id);
        check_matrix(s.dense_tokens, dim, "dense tokens", "M_d ≥ 1", s.id);
        if (s.relevance_mask) {
            if (s.relevance_mask->size() != s.patches.rows()) {
                throw bank_error("relevance mask length does not match patch count in sample " + s.id);
            }
            for (std::uint8_t m : *s.relevance_mask) {
                if (m > 1) throw bank_error("relevance mask entries must be 0 or 1 in sample " + s.id);
            }
        }
    }
}

const Sample* FeatureBank::find(std::string_view id) const {
    for (const Sample& s : samples)
        if (s.id == id) return &s;
    return nullptr;
}

std::size_t FeatureBank::index_of(std::string_view id) const {
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].id == id) return i;
    throw bank_error("unknown sample id " + std::string(id));
}

void write_bank(const FeatureBank& bank, std::ostream& out) {
    bank.validate();
    for (const Sample& s : bank.samples) {
        for (const Tensor* t : {&s.patches, &s.sparse_tokens, &s.dense_tokens}) {
            for (double v : t->data()) {
                if (std::abs(v) > std::numeric_limits<float>::max()) {
                    throw bank_error("feature out of float32 range in sample " + s.id);
                }
            }
        }
    }

    Encoder enc(out);
    for (std::uint8_t b : kMagic) enc.u8(b);
    enc.u32(kBankVersion);
    enc.u32(static_cast<std::uint32_t>(bank.dim));
    enc.u32(static_cast<std::uint32_t>(bank.samples.size()));
    for (const Sample& s : bank.samples) {
        enc.u32(static_cast<std::uint32_t>(s.id.size()));
        enc.bytes(s.id);
        enc.matrix(s.patches);
        enc.matrix(s.sparse_tokens);
        enc.matrix(s.dense_tokens);
        enc.u8(s.relevance_mask ? 1 : 0);
        if (s.relevance_mask) {
            for (std::uint8_t m : *s.relevance_mask) enc.u8(m);
        }
    }
    if (!out) throw bank_error("failed to write feature bank");
}

void write_bank(const FeatureBank& bank, const std::filesystem::path& path) {
    std::ostringstream buf(std::ios::binary);
    write_bank(bank, buf);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw bank_error("cannot open " + path.string() + " for writing");
    const std::string bytes = buf.str();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw bank_error("failed to write " + path.string());
}

FeatureBank read_bank(std::istream& in) {
    std::vector<std::uint8_t> buf{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (buf.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), buf.begin())) {
        throw bank_error("not a feature bank");
    }
    Decoder dec(std::move(buf));
    for (int i = 0; i < 4; ++i) dec.u8();
    const std::uint32_t version = dec.u32();
    if (version != kBankVersion) {
        throw bank_error("unsupported version " + std::to_string(version));
    }

    FeatureBank bank;
    bank.dim = dec.u32();
    const std::uint32_t n_samples = dec.u32();
    if (bank.dim == 0) throw bank_error("corrupt bank: zero dimension");
    for (std::uint32_t k = 0; k < n_samples; ++k) {
        Sample s;
        s.id = dec.str(dec.u32());
        s.patches = dec.matrix(bank.dim);
        s.sparse_tokens = dec.matrix(bank.dim);
        s.dense_tokens = dec.matrix(bank.dim);
        const std::uint8_t mask_present = dec.u8();
        if (mask_present > 1) throw bank_error("corrupt bank: bad mask flag");
        if (mask_present) {
            const std::size_t n = s.patches.rows();
            dec.need(n);
            std::vector<std::uint8_t> mask(n);
            for (auto& m : mask) m = dec.u8();
            s.relevance_mask = std::move(mask);
        }
        bank.samples.push_back(std::move(s));
    }
    if (dec.remaining() != 0) throw bank_error("corrupt bank: trailing bytes");
    try {
        bank.validate();
    } catch (const bank_error& e) {
        throw bank_error(std::string("corrupt bank: ") + e.what());
    }
    return bank;
}

FeatureBank read_bank(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw bank_error("cannot open " + path.string());
    return read_bank(in);
}

GlobalEmbedding global_embedding(const Tensor& tokens) {
    if (tokens.rank() != 2 || tokens.rows() == 0) throw shape_error("global_embedding needs K >= 1 rows");
    const std::size_t k = tokens.rows(), d = tokens.cols();
    Tensor mean({d}, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += tokens.at(i, j);
    double ss = 0.0;
    for (double& v : mean.data()) {
        v /= static_cast<double>(k);
        ss += v * v;
    }
    const double norm = std::sqrt(ss);
    if (norm < NumericConstants::eps_norm) return {Tensor({d}, 0.0), true};
    for (double& v : mean.data()) v /= norm;
    return {std::move(mean), false};
}

void SynthConfig::validate() const {
    if (n_samples == 0 || dim == 0 || n_patches == 0) {
        throw shape_error("synthetic bank needs samples, dim and patches >= 1");
    }
    if (n_relevant_patches == 0 || n_relevant_patches > n_patches) {
        throw shape_error("n_relevant_patches must lie in [1, n_patches]");
    }
    if (n_sparse_words == 0 || n_dense_words == 0) throw shape_error("word counts must be >= 1");
    if (n_dense_words < n_sparse_words) {
        throw shape_error("dense text must carry at least as many words as sparse text");
    }
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw shape_error("noise_sigma must be >= 0");
    const std::size_t needed = std::max({n_sparse_words, n_dense_words, n_relevant_patches});
    if (concept_count < needed) {
        throw shape_error("concept_count " + std::to_string(concept_count) +
                          " is below the words per sample (" + std::to_string(needed) + ")");
    }
}

FeatureBank generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t d = cfg.dim;

    Rng concept_rng = make_rng(cfg.seed, "concepts");
    std::normal_distribution<double> unit_normal(0.0, 1.0);
    std::vector<std::vector<double>> concepts(cfg.concept_count, std::vector<double>(d));
    for (auto& c : concepts) {
        double ss = 0.0;
        do {
            ss = 0.0;
            for (double& v : c) {
                v = unit_normal(concept_rng);
                ss += v * v;
            }
        } while (ss == 0.0);
        const double inv = 1.0 / std::sqrt(ss);
        for (double& v : c) v *= inv;
    }

    const double distractor_scale = 1.0 / std::sqrt(static_cast<double>(d));
    const std::size_t sparse_concepts = std::min(cfg.n_sparse_words, cfg.n_relevant_patches);

    FeatureBank bank;
    bank.dim = d;
    bank.samples.reserve(cfg.n_samples);
    for (std::size_t k = 0; k < cfg.n_samples; ++k) {
        const std::size_t s = cfg.first_index + k;
        Rng rng = make_rng(cfg.seed, "sample", s);
        std::normal_distribution<double> noise(0.0, 1.0);

        std::vector<std::size_t> pool(cfg.concept_count);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        std::vector<std::size_t> owned(cfg.n_relevant_patches);
        for (std::size_t i = 0; i < owned.size(); ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
            std::swap(pool[i], pool[pick(rng)]);
            owned[i] = pool[i];
        }

        std::vector<std::size_t> slots(cfg.n_patches);
        std::iota(slots.begin(), slots.end(), std::size_t{0});
        for (std::size_t i = 0; i < cfg.n_relevant_patches; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, slots.size() - 1);
            std::swap(slots[i], slots[pick(rng)]);
        }

        auto noisy_concept = [&](std::size_t concept_id, double* out) {
            for (std::size_t j = 0; j < d; ++j) {
                out[j] = concepts[concept_id][j] + cfg.noise_sigma * noise(rng);
            }
        };

        Sample sample;
        sample.id = cfg.id_prefix + std::to_string(s);
        sample.patches = Tensor({cfg.n_patches, d}, 0.0);
        std::vector<std::uint8_t> mask(cfg.n_patches, 0);
        std::vector<bool> filled(cfg.n_patches, false);
        for (std::size_t i = 0; i < cfg.n_relevant_patches; ++i) {
            noisy_concept(owned[i], sample.patches.row(slots[i]).data());
            mask[slots[i]] = 1;
            filled[slots[i]] = true;
        }
        for (std::size_t p = 0; p < cfg.n_patches; ++p) {
            if (filled[p]) continue;
            for (double& v : sample.patches.row(p)) v = distractor_scale * noise(rng);
        }

        sample.sparse_tokens = Tensor({cfg.n_sparse_words, d}, 0.0);
        for (std::size_t w = 0; w < cfg.n_sparse_words; ++w) {
            noisy_concept(owned[w % sparse_concepts], sample.sparse_tokens.row(w).data());
        }
        sample.dense_tokens = Tensor({cfg.n_dense_words, d}, 0.0);
        for (std::size_t w = 0; w < cfg.n_dense_words; ++w) {
            noisy_concept(owned[w % cfg.n_relevant_patches], sample.dense_tokens.row(w).data());
        }

        sample.patches = float32_round(std::move(sample.patches));
        sample.sparse_tokens = float32_round(std::move(sample.sparse_tokens));
        sample.dense_tokens = float32_round(std::move(sample.dense_tokens));
        sample.relevance_mask = std::move(mask);
        bank.samples.push_back(std::move(sample));
    }
    return bank;
}

}  // namespace seps
