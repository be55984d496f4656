#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "eisnet/gradcheck.hpp"
#include "eisnet/mining.hpp"
#include "helpers.hpp"

using namespace eisnet;

namespace {

struct Instance {
    std::vector<BankRecord<double>> bank;
    std::vector<double> anchor;
    int label;
    double d_ap;
    double margin;
    std::size_t k;
};

Instance random_instance(Rng& rng) {
    Instance in;
    const std::size_t D = 1 + rng.below(3), n = 1 + rng.below(64);
    const auto grid = [&] { return 0.5 * (static_cast<double>(rng.below(5)) - 2.0); };
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> v(D);
        for (double& x : v) x = grid();
        in.bank.push_back({v, static_cast<int>(rng.below(4))});
    }
    in.anchor.resize(D);
    for (double& x : in.anchor) x = grid();
    in.label = static_cast<int>(rng.below(4));
    // Three regimes so that zero, partial and full qualification are all common.
    switch (rng.below(3)) {
    case 0: in.d_ap = 0; in.margin = 0.1; break;
    case 1: in.d_ap = 0.25 * static_cast<double>(rng.below(4)); in.margin = 0.5; break;
    default: in.d_ap = 0.25 * static_cast<double>(rng.below(12)); in.margin = 2.0 + static_cast<double>(rng.below(4)); break;
    }
    in.k = 1 + rng.below(8);
    return in;
}

/// Exhaustive scan: every qualifying different-label entry, ordered by (distance, index).
std::vector<std::size_t> oracle_qualifying(const Instance& in) {
    std::vector<std::pair<double, std::size_t>> q;
    for (std::size_t i = 0; i < in.bank.size(); ++i) {
        if (in.bank[i].label == in.label) continue;
        double d = 0;
        for (std::size_t j = 0; j < in.anchor.size(); ++j)
            d += (in.anchor[j] - in.bank[i].v[j]) * (in.anchor[j] - in.bank[i].v[j]);
        if (d < in.d_ap + in.margin) q.emplace_back(d, i);
    }
    std::sort(q.begin(), q.end());
    std::vector<std::size_t> out;
    for (auto& [d, i] : q) out.push_back(i);
    return out;
}

} // namespace

TEST_CASE("k-hard selection equals the exhaustive oracle") {
    Rng rng(2024);
    std::size_t partial = 0, zero = 0, full = 0, small_pool = 0;
    for (int inst = 0; inst < 2000; ++inst) {
        const Instance in = random_instance(rng);
        Rng sel_rng(static_cast<std::uint64_t>(inst));
        const auto sel = select_negatives(Selector::k_hard(in.k), std::span<const double>(in.anchor), in.label, in.d_ap,
                                          in.bank, in.margin, sel_rng);
        const auto q = oracle_qualifying(in);
        std::size_t candidates = 0;
        for (const auto& r : in.bank) candidates += (r.label != in.label);
        CHECK(sel.candidates == candidates);
        CHECK(sel.qualifying == q.size());
        if (candidates <= in.k) {
            ++small_pool;
            CHECK(sel.indices.size() == candidates);
            continue;
        }
        REQUIRE(sel.indices.size() == in.k);
        const std::size_t take = std::min(in.k, q.size());
        for (std::size_t i = 0; i < take; ++i) CHECK(sel.indices[i] == q[i]);
        // Fill entries are distinct non-qualifying negatives.
        const std::set<std::size_t> qs(q.begin(), q.end());
        std::set<std::size_t> seen(sel.indices.begin(), sel.indices.end());
        CHECK(seen.size() == sel.indices.size());
        for (std::size_t i = take; i < sel.indices.size(); ++i) {
            CHECK(in.bank[sel.indices[i]].label != in.label);
            CHECK(qs.count(sel.indices[i]) == 0);
        }
        if (q.empty()) ++zero;
        else if (q.size() < in.k) ++partial;
        else ++full;
    }
    CHECK(zero >= 200);
    CHECK(partial >= 200);
    CHECK(full >= 200);
    CHECK(small_pool > 0);
}

TEST_CASE("random selector draws distinct negatives ignoring the constraint") {
    Rng rng(5);
    std::vector<BankRecord<double>> bank;
    for (int i = 0; i < 40; ++i) bank.push_back({testutil::unit(4, rng), i % 4});
    const auto a = testutil::unit(4, rng);
    std::map<std::size_t, int> hits;
    for (int t = 0; t < 400; ++t) {
        Rng r(static_cast<std::uint64_t>(t));
        const auto sel = select_negatives(Selector::random(5), std::span<const double>(a), 0, 0.0, bank, 0.1, r);
        REQUIRE(sel.indices.size() == 5);
        CHECK(std::set<std::size_t>(sel.indices.begin(), sel.indices.end()).size() == 5);
        for (auto i : sel.indices) {
            CHECK(bank[i].label != 0);
            hits[i]++;
        }
    }
    CHECK(hits.size() == 30); // every negative is reachable
}

TEST_CASE("semi-hard is k-hard with K = 1") {
    CHECK(Selector::semi_hard().k() == 1);
    CHECK(Selector(SelectorKind::SemiHard, 64).k() == 1);
    CHECK_THROWS_AS(Selector::k_hard(0), DomainError);
    CHECK(parse_selector_kind("semihard") == SelectorKind::SemiHard);
    CHECK(parse_selector_kind("khard") == SelectorKind::KHard);
    CHECK_THROWS_AS(parse_selector_kind("hardest"), DomainError);
    Rng rng(8);
    std::vector<BankRecord<double>> bank{{{1.0, 0.0}, 1}, {{0.0, 1.0}, 1}, {{0.6, 0.8}, 1}};
    const std::vector<double> a{1.0, 0.0};
    Rng r(1);
    const auto sel = select_negatives(Selector::semi_hard(), std::span<const double>(a), 0, 0.5, bank, 2.0, r);
    REQUIRE(sel.indices.size() == 1);
    CHECK(sel.indices[0] == 0);
}

TEST_CASE("choose_positive is uniform over same-label entries") {
    std::vector<BankRecord<double>> bank{{{1.0}, 0}, {{1.0}, 1}, {{1.0}, 0}, {{1.0}, 2}, {{1.0}, 0}};
    std::map<std::size_t, int> counts;
    Rng rng(3);
    for (int i = 0; i < 3000; ++i) counts[*choose_positive(0, bank, rng)]++;
    CHECK(counts.size() == 3);
    for (auto& [idx, c] : counts) {
        CHECK(bank[idx].label == 0);
        CHECK(c == doctest::Approx(1000).epsilon(0.1));
    }
    CHECK_FALSE(choose_positive(5, bank, rng).has_value());
}

TEST_CASE("triplet loss on a hand example") {
    const std::vector<double> a{1.0, 0.0}, p{0.0, 1.0}, n1{-1.0, 0.0}, n2{1.0, 0.0};
    // d(a,p)² = 2; d(a,n1)² = 4; d(a,n2)² = 0; margin 1 → hinges [2-4+1]₊ = 0 and [2-0+1]₊ = 3.
    const auto r = triplet_loss<double>(a, p, {std::span<const double>(n1), std::span<const double>(n2)}, 1.0);
    CHECK(r.loss == doctest::Approx(1.5));
    CHECK(r.active == 1);
    // Active term gradient: 2(a−p) − 2(a−n2) = 2(n2 − p) = (2, −2); averaged over K' = 2.
    CHECK(r.grad_anchor[0] == doctest::Approx(1.0));
    CHECK(r.grad_anchor[1] == doctest::Approx(-1.0));
    CHECK_THROWS_AS(triplet_loss<double>(a, p, {}, 1.0), DomainError);
}

TEST_CASE("triplet loss gradient, 20 seeds") {
    double worst = 0;
    for (int s = 0; s < 20; ++s) {
        Rng rng(300 + s);
        Tensor<double> a({6});
        for (double& v : a.data()) v = rng.normal();
        const auto p = testutil::unit(6, rng);
        std::vector<std::vector<double>> negs;
        for (int i = 0; i < 5; ++i) negs.push_back(testutil::unit(6, rng));
        std::vector<std::span<const double>> spans(negs.begin(), negs.end());
        const auto loss = [&] { return triplet_loss<double>(a.data(), p, spans, 3.0).loss; };
        const auto r = triplet_loss<double>(a.data(), p, spans, 3.0);
        std::vector<Tensor<double>*> params{&a};
        const std::vector<Tensor<double>> analytic{Tensor<double>({6}, r.grad_anchor)};
        worst = std::max(worst, finite_diff_check<double>(loss, params, analytic).max_rel_error);
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("mine_batch averages over anchors that found triplets") {
    std::vector<BankRecord<double>> bank{{{1.0, 0.0}, 0}, {{0.0, 1.0}, 1}};
    Tensor<double> e({3, 2}, {1.0, 0.0, 0.0, 1.0, -1.0, 0.0});
    const std::vector<int> labels{0, 1, 2}; // label 2 has no positive
    const auto r = mine_batch(e, labels, bank, Selector::k_hard(4), 2.0, Rng(1));
    CHECK(r.contributing == 2);
    CHECK(r.negatives_used == 2);
    // Each contributing anchor: d_ap = 0, d_an = 2, hinge 0 − 2 + 2 = 0 → loss 0.
    CHECK(r.loss == doctest::Approx(0.0));
    for (double g : r.grad.row(2)) CHECK(g == 0.0);

    const auto empty = mine_batch(e, labels, {}, Selector::k_hard(4), 2.0, Rng(1));
    CHECK(empty.contributing == 0);
    CHECK(empty.loss == 0.0);

    // Deterministic under the same generator.
    Rng rng(4);
    std::vector<BankRecord<double>> big;
    for (int i = 0; i < 50; ++i) big.push_back({testutil::unit(2, rng), i % 3});
    Tensor<double> e2({4, 2});
    for (std::size_t b = 0; b < 4; ++b) {
        const auto u = testutil::unit(2, rng);
        std::copy(u.begin(), u.end(), e2.row(b).begin());
    }
    const std::vector<int> l2{0, 1, 2, 0};
    const auto x = mine_batch(e2, l2, big, Selector::random(3), 2.0, Rng(9));
    const auto y = mine_batch(e2, l2, big, Selector::random(3), 2.0, Rng(9));
    CHECK(x.loss == y.loss);
    CHECK(x.grad == y.grad);
}
