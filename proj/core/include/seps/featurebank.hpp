#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "seps/tensor.hpp"

namespace seps {

/// Raised for malformed banks on read and for invariant violations on write.
class bank_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One image with its sparse caption and dense description, all as token features.
struct Sample {
    std::string id;
    Tensor patches;        // N x d
    Tensor sparse_tokens;  // M x d
    Tensor dense_tokens;   // M_d x d
    /// Ground-truth salience per patch (0/1); absent for real data.
    std::optional<std::vector<std::uint8_t>> relevance_mask;

    std::size_t patch_count() const { return patches.rows(); }
};

struct FeatureBank {
    std::size_t dim = 0;
    std::vector<Sample> samples;

    /// Throws bank_error naming the first violated invariant.
    void validate() const;
    const Sample* find(std::string_view id) const;
    std::size_t index_of(std::string_view id) const;
};

// "SEPB" v1, little-endian, features stored as float32.
inline constexpr std::uint32_t kBankVersion = 1;

void write_bank(const FeatureBank& bank, std::ostream& out);
void write_bank(const FeatureBank& bank, const std::filesystem::path& path);
FeatureBank read_bank(std::istream& in);
FeatureBank read_bank(const std::filesystem::path& path);

struct GlobalEmbedding {
    Tensor vector;  // length d
    bool degenerate = false;
};

/// L2-normalised mean of the rows of a K x d token matrix. A vanishing mean is
/// returned as the zero vector with `degenerate` set.
GlobalEmbedding global_embedding(const Tensor& tokens);

struct SynthConfig {
    std::size_t n_samples = 64;
    std::size_t dim = 32;
    std::size_t n_patches = 16;
    std::size_t n_relevant_patches = 4;
    std::size_t n_sparse_words = 3;
    std::size_t n_dense_words = 8;
    std::size_t concept_count = 1024;
    double noise_sigma = 0.1;
    std::uint64_t seed = 0;
    /// Index of the first generated sample. Banks drawn with the same seed share
    /// the concept pool, so disjoint index ranges give train/test splits.
    std::size_t first_index = 0;
    std::string id_prefix = "s";

    void validate() const;
};

/// Latent-concept bank: each sample owns n_relevant_patches concepts placed at
/// random patch slots (concept + N(0, sigma^2) noise); the remaining patches are
/// isotropic noise with unit expected norm. Sparse tokens name a leading subset of
/// the sample's concepts, dense tokens cycle over all of them. Features are
/// rounded to float32 so a written bank reads back identically.
FeatureBank generate_synthetic(const SynthConfig& cfg);

}  // namespace seps
