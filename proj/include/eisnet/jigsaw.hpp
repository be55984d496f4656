#pragma once

// 3x3 patch-shuffle pretext task: a fixed set of 31 orderings (identity at
// index 0), image shuffling, and order labels for the auxiliary head.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "eisnet/layers.hpp"
#include "eisnet/rng.hpp"
#include "eisnet/tensor.hpp"

namespace eisnet {

inline constexpr std::size_t kPatchCount = 9;
inline constexpr std::size_t kOrderClasses = 31;

using Permutation = std::array<std::uint8_t, kPatchCount>;

constexpr Permutation identity_permutation() { return {0, 1, 2, 3, 4, 5, 6, 7, 8}; }
Permutation inverse(const Permutation& p);
int hamming(const Permutation& a, const Permutation& b);
bool is_permutation(const Permutation& p);

struct PermutationSet {
    std::vector<Permutation> orderings; // 31 entries, [0] = identity
    std::uint64_t seed = 0;
    int min_hamming = 0; // over entries 1..30

    const Permutation& operator[](std::size_t i) const { return orderings.at(i); }
    std::size_t size() const noexcept { return orderings.size(); }
    /// Checks count, identity-first, validity and distinctness.
    void validate() const;
    std::uint64_t fingerprint() const;
};

/// Minimum pairwise Hamming distance over entries [first, size).
int min_pairwise_hamming(std::span<const Permutation> perms);

/// Greedy max-min-Hamming construction: a random non-identity start, then
/// 29 rounds that each keep the best of 2000 random candidates.
PermutationSet generate_permutation_set(const Rng& rng, std::size_t candidates_per_step = 2000);

/// The frozen set used for training, generated from seed 0.
const PermutationSet& default_permutation_set();

/// Text format: "# eisnet-permutations seed=<s> min_hamming=<h>" then 31 lines of 9 indices.
void write_permutation_set(std::ostream& os, const PermutationSet& set);
PermutationSet read_permutation_set(std::istream& is);
void save_permutation_set(const std::filesystem::path& path, const PermutationSet& set);
PermutationSet load_permutation_set(const std::filesystem::path& path);

/// Destination cell i (row-major) receives source patch perm[i]. Image is C×S×S with S divisible by 3.
Tensor<float> shuffle_image(const Tensor<float>& img, const Permutation& perm);
inline Tensor<float> unshuffle_image(const Tensor<float>& img, const Permutation& perm) {
    return shuffle_image(img, inverse(perm));
}

/// Shuffles each image in place with probability p_shuffle using a uniformly
/// drawn non-identity ordering; returns the order labels (0 = untouched).
/// Image i draws from rng.child(i).
std::vector<int> make_jigsaw_batch(std::span<Tensor<float>> images, const PermutationSet& perms, double p_shuffle,
                                   const Rng& rng);

/// Mean cross-entropy over the 31 order classes.
template <typename T>
LossGrad<T> aux_loss(const Tensor<T>& logits, std::span<const int> order_labels) {
    require_rank(logits, 2, "aux_loss logits");
    if (logits.dim(1) != kOrderClasses) throw ShapeError("aux_loss: logits must have 31 columns");
    for (int l : order_labels)
        if (l < 0 || l >= static_cast<int>(kOrderClasses))
            throw DomainError("aux_loss: order label " + std::to_string(l) + " outside [0,31)");
    return softmax_cross_entropy(logits, order_labels);
}

} // namespace eisnet
