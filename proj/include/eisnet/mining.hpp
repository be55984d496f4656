#pragma once

// Triplet construction against a memory-bank snapshot and the K-negative
// hinge loss. Positives and negatives are bank constants; only the anchor
// carries gradient.

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eisnet/layers.hpp"
#include "eisnet/membank.hpp"
#include "eisnet/rng.hpp"

namespace eisnet {

enum class SelectorKind { Random, SemiHard, KHard };

std::string to_string(SelectorKind kind);
SelectorKind parse_selector_kind(std::string_view s);

/// Negative selector. SemiHard is KHard with K fixed to 1.
class Selector {
public:
    Selector(SelectorKind kind, std::size_t k) : kind_(kind), k_(kind == SelectorKind::SemiHard ? 1 : k) {
        if (k_ == 0) throw DomainError("selector K must be >= 1");
    }
    static Selector random(std::size_t k) { return {SelectorKind::Random, k}; }
    static Selector semi_hard() { return {SelectorKind::SemiHard, 1}; }
    static Selector k_hard(std::size_t k) { return {SelectorKind::KHard, k}; }

    SelectorKind kind() const noexcept { return kind_; }
    std::size_t k() const noexcept { return k_; }

private:
    SelectorKind kind_;
    std::size_t k_;
};

/// Uniform draw among snapshot entries sharing `label`; nullopt if there are none.
template <typename T>
std::optional<std::size_t> choose_positive(int label, const std::vector<BankRecord<T>>& bank, Rng& rng) {
    std::size_t count = 0;
    for (const auto& r : bank) count += (r.label == label);
    if (count == 0) return std::nullopt;
    std::size_t pick = rng.below(count);
    for (std::size_t i = 0; i < bank.size(); ++i)
        if (bank[i].label == label && pick-- == 0) return i;
    return std::nullopt; // unreachable
}

struct NegativeSelection {
    std::vector<std::size_t> indices; // into the snapshot; constrained picks first, hardest first
    std::size_t candidates = 0;       // different-label entries
    std::size_t qualifying = 0;       // of those, entries inside d_ap² + margin
};

namespace detail {

/// Moves `count` uniformly drawn elements of `pool` to its front (partial Fisher-Yates).
inline void draw_front(std::vector<std::size_t>& pool, std::size_t count, Rng& rng) {
    for (std::size_t i = 0; i < count; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
}

} // namespace detail

/// Selects up to K different-label negatives.
///
/// KHard takes the qualifying entries (d(a,n)² < d(a,p)² + margin) with the
/// smallest distance, ties to the lower snapshot index, and tops up with
/// unconstrained uniform draws when fewer than K qualify. Random ignores the
/// constraint. If at most K different-label entries exist, all are returned.
template <typename T>
NegativeSelection select_negatives(const Selector& selector, std::span<const T> anchor, int anchor_label, T d_ap_sq,
                                   const std::vector<BankRecord<T>>& bank, T margin, Rng& rng) {
    if (!(margin > T(0))) throw DomainError("select_negatives: margin must be positive");
    if (!(d_ap_sq >= T(0))) throw DomainError("select_negatives: d_ap_sq must be non-negative");
    NegativeSelection sel;
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < bank.size(); ++i)
        if (bank[i].label != anchor_label) pool.push_back(i);
    sel.candidates = pool.size();
    const std::size_t K = selector.k();

    if (selector.kind() == SelectorKind::Random) {
        if (pool.size() > K) {
            detail::draw_front(pool, K, rng);
            pool.resize(K);
        }
        sel.indices = std::move(pool);
        return sel;
    }

    struct Scored {
        T d2;
        std::size_t index;
    };
    std::vector<Scored> qualifying;
    std::vector<std::size_t> rest;
    const T bound = d_ap_sq + margin;
    for (std::size_t i : pool) {
        const T d2 = sq_distance(anchor, std::span<const T>(bank[i].v));
        if (d2 < bound)
            qualifying.push_back({d2, i});
        else
            rest.push_back(i);
    }
    sel.qualifying = qualifying.size();
    if (pool.size() <= K) {
        sel.indices = std::move(pool);
        return sel;
    }
    const auto by_distance = [](const Scored& a, const Scored& b) {
        return a.d2 < b.d2 || (a.d2 == b.d2 && a.index < b.index);
    };
    const std::size_t take = std::min(K, qualifying.size());
    std::partial_sort(qualifying.begin(), qualifying.begin() + static_cast<std::ptrdiff_t>(take), qualifying.end(),
                      by_distance);
    for (std::size_t i = 0; i < take; ++i) sel.indices.push_back(qualifying[i].index);
    if (take < K) {
        const std::size_t fill = K - take;
        detail::draw_front(rest, fill, rng);
        sel.indices.insert(sel.indices.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(fill));
    }
    return sel;
}

template <typename T>
struct TripletLoss {
    T loss = 0;
    std::vector<T> grad_anchor;
    std::size_t active = 0; // hinge terms with positive value
};

/// (1/K') Σ_i [d(a,p)² − d(a,n_i)² + margin]₊ with K' = negatives.size().
/// Subgradient at the kink is 0.
template <typename T>
TripletLoss<T> triplet_loss(std::span<const T> anchor, std::span<const T> positive,
                            const std::vector<std::span<const T>>& negatives, T margin) {
    if (negatives.empty()) throw DomainError("triplet_loss: at least one negative is required");
    const auto ap = sq_euclidean(anchor, positive);
    TripletLoss<T> r;
    r.grad_anchor.assign(anchor.size(), T(0));
    const T inv_k = T(1) / static_cast<T>(negatives.size());
    for (const auto& n : negatives) {
        const T h = ap.value - sq_distance(anchor, n) + margin;
        if (h > T(0)) {
            r.loss += h * inv_k;
            ++r.active;
            // d/da of d(a,p)² − d(a,n)² is 2(a−p) − 2(a−n).
            for (std::size_t i = 0; i < anchor.size(); ++i)
                r.grad_anchor[i] += (ap.grad_u[i] - T(2) * (anchor[i] - n[i])) * inv_k;
        }
    }
    return r;
}

template <typename T>
struct MiningResult {
    T loss = 0;
    Tensor<T> grad; // B×D, w.r.t. the batch embeddings
    std::size_t contributing = 0;
    std::size_t negatives_used = 0;
};

/// Every batch row is an anchor; anchors lacking a positive or any negative are skipped.
/// Each anchor draws from rng.child(anchor index), so results do not depend on evaluation order.
template <typename T>
MiningResult<T> mine_batch(const Tensor<T>& embeddings, std::span<const int> labels,
                           const std::vector<BankRecord<T>>& bank, const Selector& selector, T margin,
                           const Rng& rng) {
    require_rank(embeddings, 2, "mine_batch embeddings");
    if (labels.size() != embeddings.dim(0)) throw ShapeError("mine_batch: label count mismatch");
    MiningResult<T> out{T(0), Tensor<T>(embeddings.shape()), 0, 0};
    if (bank.empty()) return out;
    std::vector<std::size_t> contributors;
    for (std::size_t a = 0; a < labels.size(); ++a) {
        Rng arng = rng.child(a);
        const auto anchor = embeddings.row(a);
        const auto pos = choose_positive(labels[a], bank, arng);
        if (!pos) continue;
        const std::span<const T> p(bank[*pos].v);
        const T d_ap = sq_distance(anchor, p);
        const auto sel = select_negatives(selector, anchor, labels[a], d_ap, bank, margin, arng);
        if (sel.indices.empty()) continue;
        std::vector<std::span<const T>> negs;
        negs.reserve(sel.indices.size());
        for (std::size_t i : sel.indices) negs.emplace_back(bank[i].v);
        const auto tl = triplet_loss(anchor, p, negs, margin);
        out.loss += tl.loss;
        auto g = out.grad.row(a);
        std::copy(tl.grad_anchor.begin(), tl.grad_anchor.end(), g.begin());
        contributors.push_back(a);
        out.negatives_used += negs.size();
    }
    out.contributing = contributors.size();
    if (out.contributing > 0) {
        const T inv = T(1) / static_cast<T>(out.contributing);
        out.loss *= inv;
        for (std::size_t a : contributors)
            for (T& v : out.grad.row(a)) v *= inv;
    }
    return out;
}

} // namespace eisnet
