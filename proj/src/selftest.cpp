#include "eisnet/selftest.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <functional>
#include <sstream>

#include "eisnet/gradcheck.hpp"
#include "eisnet/jigsaw.hpp"
#include "eisnet/layers.hpp"
#include "eisnet/membank.hpp"
#include "eisnet/mining.hpp"
#include "eisnet/optim.hpp"
#include "eisnet/trainer.hpp"

namespace eisnet {

namespace {

constexpr double kGradTolerance = 1e-4;

Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    for (double& v : t.data()) v = scale * rng.normal();
    return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

struct Check {
    bool ok;
    std::string detail;
    double err = 0;
};

/// Linear probe L = <w, f(params)>; the layer backward receives w as grad_y.
Check probe(const std::function<Tensor<double>()>& forward, std::vector<Tensor<double>*> params,
            const std::function<std::vector<Tensor<double>>(const Tensor<double>&)>& backward, Rng& rng) {
    const Tensor<double> w = random_tensor(forward().shape(), rng);
    const auto analytic = backward(w);
    const auto r = finite_diff_check<double>([&] { return dot(w, forward()); }, params, analytic,
                                             GradCheckOptions{1e-6, 64, rng.next_u64()});
    std::ostringstream os;
    os << "max rel err " << r.max_rel_error << " over " << r.coords_checked << " coords";
    return {r.max_rel_error <= kGradTolerance, os.str(), r.max_rel_error};
}

Check grad_layers(std::uint64_t seed) {
    Rng rng = Rng(seed).child("selftest-grad");
    double worst = 0;
    std::string worst_name;
    const auto note = [&](const Check& c, const std::string& name) {
        if (c.err >= worst) {
            worst = c.err;
            worst_name = name;
        }
        return c.ok;
    };
    bool ok = true;
    for (int trial = 0; trial < 3; ++trial) {
        Tensor<double> x = random_tensor({4, 7}, rng), W = random_tensor({7, 5}, rng), b = random_tensor({5}, rng);
        ok &= note(probe([&] { return affine_forward(x, W, b); }, {&x, &W, &b},
                         [&](const Tensor<double>& g) {
                             auto r = affine_backward(x, W, g);
                             return std::vector<Tensor<double>>{r.x, r.W, r.b};
                         },
                         rng),
                   "affine");

        Tensor<double> xi = random_tensor({2, 3, 6, 6}, rng), k = random_tensor({4, 3, 3, 3}, rng);
        ok &= note(probe([&] { return conv2d_forward(xi, k); }, {&xi, &k},
                         [&](const Tensor<double>& g) {
                             auto r = conv2d_backward(xi, k, g);
                             return std::vector<Tensor<double>>{r.x, r.k};
                         },
                         rng),
                   "conv2d");

        Tensor<double> xr = random_tensor({3, 8}, rng);
        ok &= note(probe([&] { return relu(xr); }, {&xr},
                         [&](const Tensor<double>& g) { return std::vector<Tensor<double>>{relu_backward(xr, g)}; }, rng),
                   "relu");

        Tensor<double> xp = random_tensor({2, 2, 4, 6}, rng);
        ok &= note(probe([&] { return maxpool2_forward(xp).y; }, {&xp},
                         [&](const Tensor<double>& g) {
                             return std::vector<Tensor<double>>{maxpool2_backward(maxpool2_forward(xp), g)};
                         },
                         rng),
                   "maxpool2");

        Tensor<double> xn = random_tensor({3, 6}, rng);
        ok &= note(probe([&] { return l2_normalize_rows(xn).u; }, {&xn},
                         [&](const Tensor<double>& g) {
                             return std::vector<Tensor<double>>{l2_normalize_rows_backward(l2_normalize_rows(xn), g)};
                         },
                         rng),
                   "l2_normalize");

        Tensor<double> z = random_tensor({5, 4}, rng);
        const std::vector<int> t{0, 3, 1, 2, 3};
        const auto ce = softmax_cross_entropy(z, t);
        std::vector<Tensor<double>*> zp{&z};
        const std::vector<Tensor<double>> zg{ce.grad};
        const auto r = finite_diff_check<double>([&] { return softmax_cross_entropy(z, t).loss; }, zp, zg,
                                                 GradCheckOptions{1e-6, 64, rng.next_u64()});
        ok &= r.max_rel_error <= kGradTolerance;
        if (r.max_rel_error >= worst) {
            worst = r.max_rel_error;
            worst_name = "softmax_cross_entropy";
        }
    }
    std::ostringstream os;
    os << "worst " << worst << " (" << worst_name << ")";
    return {ok, os.str()};
}

Check grad_objective(std::uint64_t seed) {
    Rng rng = Rng(seed).child("selftest-objective");
    ModelConfig mc;
    mc.image_side = 18;
    mc.num_classes = 3;
    mc.feature_dim = 12;
    mc.embed_dim = 6;
    mc.conv1_filters = 3;
    mc.conv2_filters = 4;
    Rng init = rng.child("init");
    ModelParams<double> m = init_model<double>(mc, init);
    const std::size_t B = 6;
    std::vector<Tensor<float>> imgs;
    for (std::size_t i = 0; i < B; ++i) {
        Tensor<float> img({3, 18, 18});
        for (float& v : img.data()) v = static_cast<float>(rng.uniform());
        imgs.push_back(std::move(img));
    }
    const Tensor<double> x = stack_images<double>(imgs);
    const std::vector<int> cls{0, 1, 2, 0, 1, 2}, order{0, 4, 0, 17, 0, 30};
    std::vector<BankRecord<double>> bank;
    for (int i = 0; i < 12; ++i) {
        std::vector<double> v(mc.embed_dim);
        for (double& e : v) e = rng.normal();
        const double n = l2_norm(std::span<const double>(v));
        for (double& e : v) e /= n;
        bank.push_back({v, i % 3});
    }
    TrainConfig cfg;
    cfg.k = 3;
    const Rng mining = rng.child("mining");
    const auto obj = compute_objective(m, x, cls, order, bank, cfg, mining);
    std::vector<Tensor<double>*> params;
    std::vector<Tensor<double>> analytic;
    for (std::size_t i = 0; i < m.tensors.size(); ++i) {
        params.push_back(&m.tensors[i].value);
        analytic.push_back(obj.grads[i].value);
    }
    const auto r = finite_diff_check<double>([&] { return objective_value(m, x, cls, order, bank, cfg, mining); },
                                             params, analytic, GradCheckOptions{1e-6, 64, rng.next_u64()});
    std::ostringstream os;
    os << "max rel err " << r.max_rel_error << " over " << r.coords_checked << " coords";
    return {r.max_rel_error <= kGradTolerance, os.str()};
}

Check mining_oracle(std::uint64_t seed) {
    Rng rng = Rng(seed).child("selftest-mining");
    std::size_t partial = 0, zero = 0;
    for (int inst = 0; inst < 1000; ++inst) {
        const std::size_t D = 1 + rng.below(4), n = 1 + rng.below(64), K = 1 + rng.below(8);
        std::vector<BankRecord<float>> bank;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<float> v(D);
            // Coarse grid values make exact distance ties common.
            for (float& e : v) e = static_cast<float>(static_cast<int>(rng.below(5)) - 2) * 0.5f;
            bank.push_back({v, static_cast<int>(rng.below(3))});
        }
        std::vector<float> a(D);
        for (float& e : a) e = static_cast<float>(static_cast<int>(rng.below(5)) - 2) * 0.5f;
        const int label = static_cast<int>(rng.below(3));
        // Three regimes: nothing qualifies, some qualify, plenty qualify.
        const int regime = inst % 3;
        const float d_ap = regime == 0 ? 0.0f : static_cast<float>(rng.below(4)) * 0.5f;
        const float margin = regime == 0 ? 0.1f : regime == 1 ? 0.5f : 2.0f + static_cast<float>(rng.below(3));
        Rng sel_rng = rng.child(static_cast<std::uint64_t>(inst));
        const auto sel = select_negatives(Selector::k_hard(K), std::span<const float>(a), label, d_ap, bank, margin, sel_rng);

        std::vector<std::pair<float, std::size_t>> q;
        std::size_t candidates = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (bank[i].label == label) continue;
            ++candidates;
            float d = 0;
            for (std::size_t j = 0; j < D; ++j) d += (a[j] - bank[i].v[j]) * (a[j] - bank[i].v[j]);
            if (d < d_ap + margin) q.emplace_back(d, i);
        }
        std::sort(q.begin(), q.end());
        if (candidates > K) {
            const std::size_t take = std::min(K, q.size());
            for (std::size_t i = 0; i < take; ++i)
                if (sel.indices.at(i) != q[i].second) return {false, "mismatch in instance " + std::to_string(inst)};
            if (sel.indices.size() != K) return {false, "wrong fill size in instance " + std::to_string(inst)};
            if (q.empty()) ++zero;
            else if (q.size() < K) ++partial;
        }
    }
    const bool coverage = partial >= 100 && zero >= 100; // each fallback in >= 10% of instances
    return {coverage, "fallbacks: partial " + std::to_string(partial) + ", zero " + std::to_string(zero)};
}

Check fifo_oracle(std::uint64_t seed) {
    Rng rng = Rng(seed).child("selftest-fifo");
    for (int seq = 0; seq < 1000; ++seq) {
        const std::size_t cap = 1 + rng.below(16);
        MemoryBank<float> bank(cap);
        std::vector<BankRecord<float>> all;
        const std::size_t pushes = rng.below(10);
        for (std::size_t p = 0; p < pushes; ++p) {
            std::vector<BankRecord<float>> batch;
            for (std::size_t i = rng.below(6); i > 0; --i) {
                const float angle = static_cast<float>(rng.uniform(0.0, 6.283));
                batch.push_back({{std::cos(angle), std::sin(angle)}, static_cast<int>(all.size() + batch.size())});
            }
            bank.push_batch(std::span<const BankRecord<float>>(batch));
            all.insert(all.end(), batch.begin(), batch.end());
        }
        const std::size_t keep = std::min(cap, all.size());
        const auto snap = bank.snapshot();
        if (!std::equal(snap->begin(), snap->end(), all.end() - static_cast<std::ptrdiff_t>(keep), all.end()) ||
            snap->size() != keep)
            return {false, "sequence " + std::to_string(seq) + " diverged"};
    }
    return {true, "1000 sequences"};
}

Check ema_closed_form() {
    for (double delta : {0.0, 0.5, 0.999}) {
        Tensor<double> g({3}, {1.0, -2.0, 0.5}), f({3}, {0.25, 3.0, -1.0});
        const Tensor<double> g0 = g;
        const int n = 50;
        for (int i = 0; i < n; ++i) ema_step(g, f, delta);
        const double dn = std::pow(delta, n);
        for (std::size_t i = 0; i < 3; ++i)
            if (std::abs(g[i] - (dn * g0[i] + (1 - dn) * f[i])) > 1e-9)
                return {false, "delta " + std::to_string(delta) + " off at coordinate " + std::to_string(i)};
    }
    return {true, "delta in {0, 0.5, 0.999}, 50 steps"};
}

Check jigsaw_integrity(std::uint64_t seed) {
    const PermutationSet& perms = default_permutation_set();
    perms.validate();
    if (perms.orderings.size() != kOrderClasses || perms.orderings[0] != identity_permutation())
        return {false, "bad permutation set"};
    Rng rng = Rng(seed).child("selftest-jigsaw");
    for (int i = 0; i < 1000; ++i) {
        Tensor<float> img({3, 9, 9});
        for (float& v : img.data()) v = static_cast<float>(rng.uniform());
        const auto& p = perms.orderings[rng.below(kOrderClasses)];
        if (!(unshuffle_image(shuffle_image(img, p), p) == img))
            return {false, "round trip failed on image " + std::to_string(i)};
        std::vector<Tensor<float>> batch{img};
        const auto labels = make_jigsaw_batch(std::span<Tensor<float>>(batch), perms, 0.6, rng.child(i));
        int found = -1;
        for (std::size_t c = 0; c < kOrderClasses && found < 0; ++c)
            if (shuffle_image(img, perms.orderings[c]) == batch[0]) found = static_cast<int>(c);
        if (found != labels[0]) return {false, "label re-derivation failed on image " + std::to_string(i)};
    }
    return {true, "31 orderings, min hamming " + std::to_string(perms.min_hamming) + ", 1000 images"};
}

} // namespace

std::vector<SelftestResult> run_selftest(std::uint64_t seed) {
    std::vector<SelftestResult> out;
    const auto run = [&](const std::string& name, const std::function<Check()>& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        SelftestResult r{name, false, "", 0};
        try {
            const Check c = fn();
            r.passed = c.ok;
            r.detail = c.detail;
        } catch (const std::exception& e) {
            r.detail = std::string("threw: ") + e.what();
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.push_back(std::move(r));
    };
    run("gradients: layers", [&] { return grad_layers(seed); });
    run("gradients: full objective", [&] { return grad_objective(seed); });
    run("mining: k-hard oracle", [&] { return mining_oracle(seed); });
    run("memory bank: fifo oracle", [&] { return fifo_oracle(seed); });
    run("momentum: closed form", [] { return ema_closed_form(); });
    run("jigsaw: integrity", [&] { return jigsaw_integrity(seed); });
    return out;
}

std::string format_selftest_table(const std::vector<SelftestResult>& results) {
    std::size_t width = 4;
    for (const auto& r : results) width = std::max(width, r.name.size());
    std::ostringstream os;
    for (const auto& r : results) {
        os << (r.passed ? "PASS  " : "FAIL  ") << r.name << std::string(width - r.name.size() + 2, ' ');
        char secs[32];
        std::snprintf(secs, sizeof secs, "%7.2fs  ", r.seconds);
        os << secs << r.detail << '\n';
    }
    return os.str();
}

} // namespace eisnet
