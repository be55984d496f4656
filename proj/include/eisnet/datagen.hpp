#pragma once

// Synthetic multi-domain benchmark: five glyph categories rendered under
// four domain styles, plus the crop/flip/jitter augmentation.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "eisnet/rng.hpp"
#include "eisnet/tensor.hpp"

namespace eisnet {

enum class Glyph { Disk, Square, Triangle, Cross, Ring };
enum class ForegroundMode { Solid, Outline, Textured, Gradient };
enum class BackgroundMode { Flat, Gradient, Noise, Stripes };

struct Rgb {
    float r, g, b;
};

struct DomainSpec {
    std::string name;
    BackgroundMode background = BackgroundMode::Flat;
    std::vector<Rgb> background_palette;
    ForegroundMode foreground = ForegroundMode::Solid;
    std::vector<Rgb> foreground_palette;
    float palette_jitter = 0.08f; // per-channel uniform perturbation of drawn colors
    float noise = 0.0f;           // stddev of additive pixel noise
};

/// The four shipped styles: photo, art, cartoon, sketch.
std::vector<DomainSpec> default_domain_specs();

struct SampleRecord {
    Tensor<float> image; // 3×S×S in [0,1]
    int label = 0;
    int domain = 0;
};

struct DomainSplit {
    std::vector<SampleRecord> train;
    std::vector<SampleRecord> test;
};

struct Dataset {
    std::size_t image_side = 30;
    std::size_t num_classes = 5;
    std::vector<DomainSpec> domains;
    std::vector<DomainSplit> splits; // one per domain

    std::size_t num_domains() const noexcept { return splits.size(); }
    std::vector<std::string> domain_names() const;
    /// Content hash of sizes, labels, domains and pixel bytes.
    std::uint64_t fingerprint() const;
};

struct SynthOptions {
    std::size_t num_domains = 4;
    std::size_t num_classes = 5;
    std::size_t per_domain_train = 600;
    std::size_t per_domain_test = 200;
    std::size_t image_side = 30;
    std::uint64_t seed = 0;

    friend bool operator==(const SynthOptions&, const SynthOptions&) = default;
};

/// Deterministic in the options; sample i of a split draws from its own child generator.
Dataset synth_dataset(const SynthOptions& opt, const std::vector<DomainSpec>& specs = default_domain_specs());

/// Renders one sample; exposed for tests.
Tensor<float> render_sample(const DomainSpec& spec, Glyph glyph, std::size_t side, Rng& rng);

Tensor<float> hflip(const Tensor<float>& img);

/// Flip with probability 0.5, random crop of scale [0.8, 1] resized back by
/// nearest neighbour, additive brightness jitter in [-0.1, 0.1], clamp to [0,1].
Tensor<float> augment(const Tensor<float>& img, Rng& rng);

/// Binary container; layout documented in docs/formats.md.
void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);

} // namespace eisnet
