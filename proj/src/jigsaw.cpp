#include "eisnet/jigsaw.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

namespace eisnet {

Permutation inverse(const Permutation& p) {
    Permutation inv{};
    for (std::size_t i = 0; i < kPatchCount; ++i) inv[p[i]] = static_cast<std::uint8_t>(i);
    return inv;
}

int hamming(const Permutation& a, const Permutation& b) {
    int d = 0;
    for (std::size_t i = 0; i < kPatchCount; ++i) d += (a[i] != b[i]);
    return d;
}

bool is_permutation(const Permutation& p) {
    std::array<bool, kPatchCount> seen{};
    for (auto v : p) {
        if (v >= kPatchCount || seen[v]) return false;
        seen[v] = true;
    }
    return true;
}

int min_pairwise_hamming(std::span<const Permutation> perms) {
    int best = std::numeric_limits<int>::max();
    for (std::size_t i = 0; i < perms.size(); ++i)
        for (std::size_t j = i + 1; j < perms.size(); ++j) best = std::min(best, hamming(perms[i], perms[j]));
    return perms.size() < 2 ? 0 : best;
}

void PermutationSet::validate() const {
    if (orderings.size() != kOrderClasses)
        throw FormatError("permutation set must have 31 entries, got " + std::to_string(orderings.size()));
    if (orderings[0] != identity_permutation()) throw FormatError("permutation set entry 0 must be the identity");
    for (std::size_t i = 0; i < orderings.size(); ++i) {
        if (!is_permutation(orderings[i])) throw FormatError("entry " + std::to_string(i) + " is not a permutation of 0..8");
        for (std::size_t j = 0; j < i; ++j)
            if (orderings[i] == orderings[j])
                throw FormatError("entries " + std::to_string(j) + " and " + std::to_string(i) + " coincide");
    }
}

std::uint64_t PermutationSet::fingerprint() const {
    std::uint64_t h = fnv1a("perms");
    for (const auto& p : orderings) h = fnv1a(p.data(), p.size(), h);
    return h;
}

namespace {

Permutation random_permutation(Rng& rng) {
    Permutation p = identity_permutation();
    for (std::size_t i = kPatchCount - 1; i > 0; --i) std::swap(p[i], p[rng.below(i + 1)]);
    return p;
}

int min_distance_to(const Permutation& p, const std::vector<Permutation>& chosen) {
    int d = std::numeric_limits<int>::max();
    for (const auto& q : chosen) d = std::min(d, hamming(p, q));
    return d;
}

} // namespace

PermutationSet generate_permutation_set(const Rng& seed_rng, std::size_t candidates_per_step) {
    Rng rng = seed_rng.child("permutations");
    const Permutation id = identity_permutation();
    std::vector<Permutation> chosen;
    Permutation first = random_permutation(rng);
    while (first == id) first = random_permutation(rng);
    chosen.push_back(first);
    while (chosen.size() < kOrderClasses - 1) {
        Permutation best{};
        int best_d = -1;
        for (std::size_t c = 0; c < candidates_per_step; ++c) {
            const Permutation cand = random_permutation(rng);
            if (cand == id) continue;
            const int d = min_distance_to(cand, chosen);
            if (d > best_d) {
                best_d = d;
                best = cand;
            }
        }
        if (best_d <= 0) continue; // every candidate was a duplicate; draw again
        chosen.push_back(best);
    }
    PermutationSet set;
    set.seed = seed_rng.seed();
    set.min_hamming = min_pairwise_hamming(chosen);
    set.orderings.push_back(id);
    set.orderings.insert(set.orderings.end(), chosen.begin(), chosen.end());
    return set;
}

const PermutationSet& default_permutation_set() {
    static const PermutationSet set = generate_permutation_set(Rng(0));
    return set;
}

void write_permutation_set(std::ostream& os, const PermutationSet& set) {
    os << "# eisnet-permutations seed=" << set.seed << " min_hamming=" << set.min_hamming << '\n';
    for (const auto& p : set.orderings) {
        for (std::size_t i = 0; i < kPatchCount; ++i) os << (i ? " " : "") << static_cast<int>(p[i]);
        os << '\n';
    }
}

PermutationSet read_permutation_set(std::istream& is) {
    PermutationSet set;
    std::string line;
    if (!std::getline(is, line) || !line.starts_with("# eisnet-permutations"))
        throw FormatError("permutation file: missing '# eisnet-permutations' header");
    {
        std::istringstream hs(line.substr(std::string("# eisnet-permutations").size()));
        std::string tok;
        bool have_seed = false, have_h = false;
        while (hs >> tok) {
            if (tok.starts_with("seed=")) {
                set.seed = std::stoull(tok.substr(5));
                have_seed = true;
            } else if (tok.starts_with("min_hamming=")) {
                set.min_hamming = std::stoi(tok.substr(12));
                have_h = true;
            }
        }
        if (!have_seed || !have_h) throw FormatError("permutation file: header needs seed= and min_hamming=");
    }
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        Permutation p{};
        for (std::size_t i = 0; i < kPatchCount; ++i) {
            int v = -1;
            if (!(ls >> v) || v < 0 || v >= static_cast<int>(kPatchCount))
                throw FormatError("permutation file: bad line '" + line + "'");
            p[i] = static_cast<std::uint8_t>(v);
        }
        std::string extra;
        if (ls >> extra) throw FormatError("permutation file: trailing data on line '" + line + "'");
        set.orderings.push_back(p);
    }
    set.validate();
    const int actual = min_pairwise_hamming(std::span<const Permutation>(set.orderings).subspan(1));
    if (actual != set.min_hamming)
        throw FormatError("permutation file: header min_hamming=" + std::to_string(set.min_hamming) +
                          " but entries achieve " + std::to_string(actual));
    return set;
}

void save_permutation_set(const std::filesystem::path& path, const PermutationSet& set) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    write_permutation_set(os, set);
}

PermutationSet load_permutation_set(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot read " + path.string());
    return read_permutation_set(is);
}

Tensor<float> shuffle_image(const Tensor<float>& img, const Permutation& perm) {
    require_rank(img, 3, "shuffle_image");
    const std::size_t C = img.dim(0), S = img.dim(1);
    if (img.dim(2) != S) throw ShapeError("shuffle_image: image must be square, got " + shape_str(img.shape()));
    if (S % 3 != 0) throw DomainError("shuffle_image: side " + std::to_string(S) + " is not divisible by 3");
    if (!is_permutation(perm)) throw DomainError("shuffle_image: invalid permutation");
    const std::size_t P = S / 3;
    Tensor<float> out(img.shape());
    const float* src = img.data().data();
    float* dst = out.data().data();
    for (std::size_t cell = 0; cell < kPatchCount; ++cell) {
        const std::size_t from = perm[cell];
        const std::size_t dr = (cell / 3) * P, dc = (cell % 3) * P;
        const std::size_t sr = (from / 3) * P, sc = (from % 3) * P;
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t r = 0; r < P; ++r)
                std::copy_n(src + (c * S + sr + r) * S + sc, P, dst + (c * S + dr + r) * S + dc);
    }
    return out;
}

std::vector<int> make_jigsaw_batch(std::span<Tensor<float>> images, const PermutationSet& perms, double p_shuffle,
                                   const Rng& rng) {
    if (!(p_shuffle >= 0.0 && p_shuffle <= 1.0)) throw DomainError("p_shuffle must be in [0,1]");
    if (perms.size() != kOrderClasses) throw DomainError("permutation set must have 31 entries");
    std::vector<int> labels(images.size(), 0);
    for (std::size_t i = 0; i < images.size(); ++i) {
        Rng r = rng.child(i);
        if (!r.bernoulli(p_shuffle)) continue;
        const int label = 1 + static_cast<int>(r.below(kOrderClasses - 1));
        images[i] = shuffle_image(images[i], perms[static_cast<std::size_t>(label)]);
        labels[i] = label;
    }
    return labels;
}

} // namespace eisnet
