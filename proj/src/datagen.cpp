#include "eisnet/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "eisnet/error.hpp"

namespace eisnet {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool inside_glyph(Glyph g, double u, double v) {
    switch (g) {
    case Glyph::Disk: return u * u + v * v <= 1.0;
    case Glyph::Square: return std::max(std::abs(u), std::abs(v)) <= 0.8;
    case Glyph::Triangle: {
        constexpr double angles[3] = {-kPi / 2, kPi / 6, 5 * kPi / 6};
        for (double a : angles)
            if (u * std::cos(a) + v * std::sin(a) > 0.5) return false;
        return true;
    }
    case Glyph::Cross:
        return (std::abs(u) <= 0.3 && std::abs(v) <= 1.0) || (std::abs(v) <= 0.3 && std::abs(u) <= 1.0);
    case Glyph::Ring: {
        const double r2 = u * u + v * v;
        return r2 <= 1.0 && r2 >= 0.55 * 0.55;
    }
    }
    return false;
}

Rgb jittered(const std::vector<Rgb>& palette, float jitter, Rng& rng) {
    const Rgb base = palette[rng.below(palette.size())];
    const auto j = [&](float c) { return std::clamp(c + static_cast<float>(rng.uniform(-jitter, jitter)), 0.0f, 1.0f); };
    return {j(base.r), j(base.g), j(base.b)};
}

Rgb lerp(const Rgb& a, const Rgb& b, float t) {
    return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

void put(Tensor<float>& img, std::size_t S, std::size_t y, std::size_t x, const Rgb& c) {
    float* p = img.data().data();
    p[(0 * S + y) * S + x] = c.r;
    p[(1 * S + y) * S + x] = c.g;
    p[(2 * S + y) * S + x] = c.b;
}

} // namespace

std::vector<DomainSpec> default_domain_specs() {
    std::vector<DomainSpec> d(4);

    d[0].name = "photo";
    d[0].background = BackgroundMode::Noise;
    d[0].background_palette = {{0.45f, 0.40f, 0.32f}, {0.30f, 0.38f, 0.30f}, {0.40f, 0.45f, 0.52f}};
    d[0].foreground = ForegroundMode::Solid;
    d[0].foreground_palette = {{0.85f, 0.20f, 0.15f}, {0.15f, 0.30f, 0.80f}, {0.90f, 0.80f, 0.20f},
                               {0.10f, 0.65f, 0.25f}, {0.95f, 0.95f, 0.95f}};
    d[0].palette_jitter = 0.10f;
    d[0].noise = 0.05f;

    d[1].name = "art";
    d[1].background = BackgroundMode::Gradient;
    d[1].background_palette = {{0.95f, 0.85f, 0.60f}, {0.80f, 0.45f, 0.30f}, {0.55f, 0.25f, 0.45f},
                               {0.25f, 0.45f, 0.60f}};
    d[1].foreground = ForegroundMode::Textured;
    d[1].foreground_palette = {{0.10f, 0.10f, 0.35f}, {0.20f, 0.05f, 0.05f}, {0.05f, 0.30f, 0.20f},
                               {0.95f, 0.95f, 0.80f}};
    d[1].palette_jitter = 0.08f;
    d[1].noise = 0.03f;

    d[2].name = "cartoon";
    d[2].background = BackgroundMode::Flat;
    d[2].background_palette = {{0.80f, 0.92f, 1.00f}, {1.00f, 0.90f, 0.90f}, {0.90f, 1.00f, 0.85f}};
    d[2].foreground = ForegroundMode::Gradient;
    d[2].foreground_palette = {{1.00f, 0.30f, 0.00f}, {0.60f, 0.00f, 0.80f}, {0.00f, 0.55f, 0.90f},
                               {0.95f, 0.10f, 0.45f}};
    d[2].palette_jitter = 0.05f;
    d[2].noise = 0.0f;

    d[3].name = "sketch";
    d[3].background = BackgroundMode::Flat;
    d[3].background_palette = {{0.97f, 0.97f, 0.95f}};
    d[3].foreground = ForegroundMode::Outline;
    d[3].foreground_palette = {{0.10f, 0.10f, 0.10f}, {0.25f, 0.25f, 0.30f}};
    d[3].palette_jitter = 0.05f;
    d[3].noise = 0.02f;
    return d;
}

Tensor<float> render_sample(const DomainSpec& spec, Glyph glyph, std::size_t S, Rng& rng) {
    if (spec.background_palette.empty() || spec.foreground_palette.empty())
        throw DomainError("domain " + spec.name + " needs non-empty palettes");
    Tensor<float> img({3, S, S});
    const double side = static_cast<double>(S);

    // Background.
    const Rgb bg0 = jittered(spec.background_palette, spec.palette_jitter, rng);
    const Rgb bg1 = jittered(spec.background_palette, spec.palette_jitter, rng);
    const double bg_angle = rng.uniform(0.0, 2 * kPi);
    const double stripe_period = rng.uniform(3.0, 7.0);
    double wave[3][4];
    for (auto& w : wave) {
        w[0] = rng.uniform(0.5, 3.0) * 2 * kPi / side;
        w[1] = rng.uniform(0.0, 2 * kPi);
        w[2] = rng.uniform(0.0, 2 * kPi);
        w[3] = rng.uniform(0.04, 0.10);
    }
    for (std::size_t y = 0; y < S; ++y)
        for (std::size_t x = 0; x < S; ++x) {
            const double proj = ((x - side / 2) * std::cos(bg_angle) + (y - side / 2) * std::sin(bg_angle)) / side + 0.5;
            Rgb c = bg0;
            switch (spec.background) {
            case BackgroundMode::Flat: break;
            case BackgroundMode::Gradient: c = lerp(bg0, bg1, static_cast<float>(std::clamp(proj, 0.0, 1.0))); break;
            case BackgroundMode::Stripes:
                c = std::fmod(proj * side / stripe_period, 2.0) < 1.0 ? bg0 : bg1;
                break;
            case BackgroundMode::Noise: {
                double n = 0;
                for (const auto& w : wave)
                    n += w[3] * std::sin(w[0] * (x * std::cos(w[1]) + y * std::sin(w[1])) + w[2]);
                const float f = static_cast<float>(n);
                c = {bg0.r + f, bg0.g + f, bg0.b + f};
                break;
            }
            }
            put(img, S, y, x, c);
        }

    // Glyph geometry.
    const double cx = rng.uniform(0.38, 0.62) * side, cy = rng.uniform(0.38, 0.62) * side;
    const double radius = rng.uniform(0.24, 0.34) * side;
    const double theta = rng.uniform(0.0, 2 * kPi);
    const double ct = std::cos(theta), st = std::sin(theta);
    std::vector<std::uint8_t> mask(S * S);
    for (std::size_t y = 0; y < S; ++y)
        for (std::size_t x = 0; x < S; ++x) {
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            const double u = (dx * ct + dy * st) / radius, v = (-dx * st + dy * ct) / radius;
            mask[y * S + x] = inside_glyph(glyph, u, v);
        }

    const Rgb fg0 = jittered(spec.foreground_palette, spec.palette_jitter, rng);
    const Rgb fg1 = jittered(spec.foreground_palette, spec.palette_jitter, rng);
    const double fg_angle = rng.uniform(0.0, 2 * kPi);
    const double tex_period = rng.uniform(2.5, 4.5);
    for (std::size_t y = 0; y < S; ++y)
        for (std::size_t x = 0; x < S; ++x) {
            if (!mask[y * S + x]) continue;
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            const double along = (dx * std::cos(fg_angle) + dy * std::sin(fg_angle)) / (2 * radius) + 0.5;
            switch (spec.foreground) {
            case ForegroundMode::Solid: put(img, S, y, x, fg0); break;
            case ForegroundMode::Gradient:
                put(img, S, y, x, lerp(fg0, fg1, static_cast<float>(std::clamp(along, 0.0, 1.0))));
                break;
            case ForegroundMode::Textured: {
                const bool dark = std::fmod(std::abs(along * 2 * radius) / tex_period, 2.0) < 1.0;
                put(img, S, y, x, dark ? fg0 : lerp(fg0, bg0, 0.45f));
                break;
            }
            case ForegroundMode::Outline: {
                bool edge = false;
                for (int oy = -1; oy <= 1 && !edge; ++oy)
                    for (int ox = -1; ox <= 1; ++ox) {
                        const long ny = static_cast<long>(y) + oy, nx = static_cast<long>(x) + ox;
                        if (ny < 0 || nx < 0 || ny >= static_cast<long>(S) || nx >= static_cast<long>(S) ||
                            !mask[static_cast<std::size_t>(ny) * S + static_cast<std::size_t>(nx)]) {
                            edge = true;
                            break;
                        }
                    }
                if (edge) put(img, S, y, x, fg0);
                break;
            }
            }
        }

    for (float& p : img.data()) {
        if (spec.noise > 0) p += static_cast<float>(spec.noise * rng.normal());
        p = std::clamp(p, 0.0f, 1.0f);
    }
    return img;
}

std::vector<std::string> Dataset::domain_names() const {
    std::vector<std::string> names;
    for (const auto& d : domains) names.push_back(d.name);
    return names;
}

std::uint64_t Dataset::fingerprint() const {
    std::uint64_t h = fnv1a("dataset");
    const std::uint64_t header[3] = {image_side, num_classes, splits.size()};
    h = fnv1a(header, sizeof header, h);
    for (const auto& d : domains) h = fnv1a(d.name, h);
    for (const auto& s : splits)
        for (const auto* part : {&s.train, &s.test}) {
            const std::uint64_t n = part->size();
            h = fnv1a(&n, sizeof n, h);
            for (const auto& r : *part) {
                const std::int32_t ld[2] = {r.label, r.domain};
                h = fnv1a(ld, sizeof ld, h);
                h = fnv1a(r.image.data().data(), r.image.size() * sizeof(float), h);
            }
        }
    return h;
}

Dataset synth_dataset(const SynthOptions& opt, const std::vector<DomainSpec>& specs) {
    if (opt.per_domain_train == 0 || opt.per_domain_test == 0) throw DomainError("synth_dataset: counts must be positive");
    if (opt.num_classes == 0 || opt.num_classes > 5) throw DomainError("synth_dataset: num_classes must be in [1,5]");
    if (opt.num_domains == 0 || opt.num_domains > specs.size())
        throw DomainError("synth_dataset: num_domains must be in [1," + std::to_string(specs.size()) + "]");
    if (opt.image_side < 9 || opt.image_side % 3 != 0) throw DomainError("synth_dataset: image_side must be a multiple of 3 >= 9");
    Dataset ds;
    ds.image_side = opt.image_side;
    ds.num_classes = opt.num_classes;
    ds.domains.assign(specs.begin(), specs.begin() + static_cast<std::ptrdiff_t>(opt.num_domains));
    const Rng root(opt.seed);
    for (std::size_t d = 0; d < opt.num_domains; ++d) {
        DomainSplit split;
        for (int part = 0; part < 2; ++part) {
            const std::size_t n = part == 0 ? opt.per_domain_train : opt.per_domain_test;
            auto& out = part == 0 ? split.train : split.test;
            out.reserve(n);
            const Rng prng = root.child("domain", d).child(static_cast<std::uint64_t>(part));
            for (std::size_t i = 0; i < n; ++i) {
                Rng r = prng.child(i);
                const int label = static_cast<int>(i % opt.num_classes);
                out.push_back({render_sample(ds.domains[d], static_cast<Glyph>(label), opt.image_side, r), label,
                               static_cast<int>(d)});
            }
        }
        ds.splits.push_back(std::move(split));
    }
    return ds;
}

Tensor<float> hflip(const Tensor<float>& img) {
    require_rank(img, 3, "hflip");
    Tensor<float> out(img.shape());
    const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) out[(c * H + y) * W + x] = img[(c * H + y) * W + (W - 1 - x)];
    return out;
}

Tensor<float> augment(const Tensor<float>& img, Rng& rng) {
    require_rank(img, 3, "augment");
    const std::size_t C = img.dim(0), S = img.dim(1);
    if (img.dim(2) != S) throw ShapeError("augment: image must be square");
    const Tensor<float> src = rng.bernoulli(0.5) ? hflip(img) : img;
    const double scale = rng.uniform(0.8, 1.0);
    const std::size_t crop = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(scale * S)), 1, S);
    const std::size_t oy = rng.below(S - crop + 1), ox = rng.below(S - crop + 1);
    const float jitter = static_cast<float>(rng.uniform(-0.1, 0.1));
    Tensor<float> out(img.shape());
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < S; ++y) {
            const std::size_t sy = oy + y * crop / S;
            for (std::size_t x = 0; x < S; ++x) {
                const std::size_t sx = ox + x * crop / S;
                out[(c * S + y) * S + x] = std::clamp(src[(c * S + sy) * S + sx] + jitter, 0.0f, 1.0f);
            }
        }
    return out;
}

// ---------------------------------------------------------------------------
// Binary container
// ---------------------------------------------------------------------------

namespace {

constexpr char kDatasetMagic[8] = {'E', 'I', 'S', 'N', 'D', 'S', '0', '1'};
constexpr std::uint32_t kDatasetVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("dataset file truncated");
    return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& os, float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    write_u32(os, u);
}

float read_f32(std::istream& is) {
    const std::uint32_t u = read_u32(is);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

} // namespace

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot write " + path.string());
    os.write(kDatasetMagic, 8);
    write_u32(os, kDatasetVersion);
    write_u32(os, static_cast<std::uint32_t>(ds.image_side));
    write_u32(os, static_cast<std::uint32_t>(ds.num_classes));
    write_u32(os, static_cast<std::uint32_t>(ds.splits.size()));
    for (std::size_t d = 0; d < ds.splits.size(); ++d) {
        const std::string& name = ds.domains.at(d).name;
        write_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(os, static_cast<std::uint32_t>(ds.splits[d].train.size()));
        write_u32(os, static_cast<std::uint32_t>(ds.splits[d].test.size()));
    }
    for (const auto& s : ds.splits)
        for (const auto* part : {&s.train, &s.test})
            for (const auto& r : *part) {
                for (float v : r.image.data()) write_f32(os, v);
                const char ld[2] = {static_cast<char>(r.label), static_cast<char>(r.domain)};
                os.write(ld, 2);
            }
    if (!os) throw FormatError("write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot read " + path.string());
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kDatasetMagic, 8) != 0) throw FormatError("not an eisnet dataset file");
    if (read_u32(is) != kDatasetVersion) throw FormatError("unsupported dataset version");
    Dataset ds;
    ds.image_side = read_u32(is);
    ds.num_classes = read_u32(is);
    const std::uint32_t nd = read_u32(is);
    if (ds.image_side == 0 || ds.image_side > 4096 || nd > 256) throw FormatError("implausible dataset header");
    std::vector<std::pair<std::uint32_t, std::uint32_t>> counts;
    for (std::uint32_t d = 0; d < nd; ++d) {
        const std::uint32_t len = read_u32(is);
        if (len > 1024) throw FormatError("implausible domain name length");
        std::string name(len, '\0');
        if (!is.read(name.data(), len)) throw FormatError("dataset file truncated");
        DomainSpec spec;
        spec.name = name;
        ds.domains.push_back(spec);
        const std::uint32_t ntr = read_u32(is), nte = read_u32(is);
        counts.emplace_back(ntr, nte);
    }
    const std::size_t S = ds.image_side, px = 3 * S * S;
    for (std::uint32_t d = 0; d < nd; ++d) {
        DomainSplit split;
        for (int part = 0; part < 2; ++part) {
            auto& out = part == 0 ? split.train : split.test;
            const std::uint32_t n = part == 0 ? counts[d].first : counts[d].second;
            for (std::uint32_t i = 0; i < n; ++i) {
                std::vector<float> pixels(px);
                for (float& v : pixels) v = read_f32(is);
                char ld[2];
                if (!is.read(ld, 2)) throw FormatError("dataset file truncated");
                const int label = static_cast<unsigned char>(ld[0]), domain = static_cast<unsigned char>(ld[1]);
                if (static_cast<std::size_t>(label) >= ds.num_classes || domain != static_cast<int>(d))
                    throw FormatError("dataset record has inconsistent label/domain");
                out.push_back({Tensor<float>({3, S, S}, std::move(pixels)), label, domain});
            }
        }
        ds.splits.push_back(std::move(split));
    }
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in dataset file");
    return ds;
}

} // namespace eisnet
