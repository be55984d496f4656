#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "eisnet/gradcheck.hpp"
#include "eisnet/layers.hpp"
#include "helpers.hpp"

using namespace eisnet;
using testutil::randn;

namespace {

constexpr double kTol = 1e-4;
constexpr int kSeeds = 20;

// Direct six-loop convolution, no im2col.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& k) {
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), F = k.dim(0);
    Tensor<double> y({B, F, H - 2, W - 2});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t f = 0; f < F; ++f)
            for (std::size_t i = 0; i + 2 < H; ++i)
                for (std::size_t j = 0; j + 2 < W; ++j) {
                    double s = 0;
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t di = 0; di < 3; ++di)
                            for (std::size_t dj = 0; dj < 3; ++dj)
                                s += x[((b * C + c) * H + i + di) * W + j + dj] * k[((f * C + c) * 3 + di) * 3 + dj];
                    y[((b * F + f) * (H - 2) + i) * (W - 2) + j] = s;
                }
    return y;
}

/// L = <w, f(params)>, checked against the layer's own backward fed with w.
double probe_error(const std::function<Tensor<double>()>& forward, std::vector<Tensor<double>*> params,
                   const std::function<std::vector<Tensor<double>>(const Tensor<double>&)>& backward, Rng& rng) {
    const Tensor<double> w = randn(forward().shape(), rng);
    const auto analytic = backward(w);
    return finite_diff_check<double>([&] { return testutil::dot(w, forward()); }, params, analytic,
                                     GradCheckOptions{1e-6, 64, rng.next_u64()})
        .max_rel_error;
}

} // namespace

TEST_CASE("affine forward on a hand example") {
    const Tensor<double> x({1, 2}, {1.0, 2.0});
    const Tensor<double> W({2, 2}, {1.0, 0.5, -1.0, 2.0});
    const Tensor<double> b({2}, {0.25, -0.25});
    const auto y = affine_forward(x, W, b);
    CHECK(y[0] == doctest::Approx(1.0 - 2.0 + 0.25));
    CHECK(y[1] == doctest::Approx(0.5 + 4.0 - 0.25));
    CHECK_THROWS_AS(affine_forward(Tensor<double>({1, 3}), W, b), ShapeError);
    CHECK_THROWS_AS(affine_forward(x, W, Tensor<double>({3})), ShapeError);
}

TEST_CASE("conv2d matches the direct loop") {
    Rng rng(11);
    for (int s = 0; s < 5; ++s) {
        const auto x = randn({2, 3, 7, 6}, rng), k = randn({4, 3, 3, 3}, rng);
        const auto y = conv2d_forward(x, k), ref = naive_conv(x, k);
        REQUIRE(y.shape() == ref.shape());
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
    CHECK_THROWS_AS(conv2d_forward(Tensor<double>({1, 2, 5, 5}), Tensor<double>({1, 3, 3, 3})), ShapeError);
    CHECK_THROWS_AS(conv2d_forward(Tensor<double>({1, 3, 2, 5}), Tensor<double>({1, 3, 3, 3})), ShapeError);
}

TEST_CASE("maxpool keeps the first maximum on ties") {
    const Tensor<double> x({1, 1, 2, 2}, {5.0, 5.0, 5.0, 5.0});
    const auto r = maxpool2_forward(x);
    CHECK(r.y[0] == 5.0);
    CHECK(r.argmax[0] == 0);
    const auto g = maxpool2_backward(r, Tensor<double>({1, 1, 1, 1}, {1.0}));
    CHECK(g.vec() == std::vector<double>{1.0, 0.0, 0.0, 0.0});
    CHECK_THROWS_AS(maxpool2_forward(Tensor<double>({1, 1, 3, 2})), ShapeError);
}

TEST_CASE("l2 normalization") {
    const Tensor<double> v({2}, {3.0, 4.0});
    const auto u = l2_normalize(v);
    CHECK(u[0] == doctest::Approx(0.6));
    CHECK(u[1] == doctest::Approx(0.8));
    CHECK_THROWS_AS(l2_normalize(Tensor<double>({3})), DomainError);
    Rng rng(5);
    const auto rows = l2_normalize_rows(randn({6, 9}, rng));
    for (std::size_t b = 0; b < 6; ++b) CHECK(l2_norm(rows.u.row(b)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("softmax cross-entropy on a hand example") {
    // Uniform logits: loss = log C, gradient (1/C - onehot)/B.
    const Tensor<double> z({2, 4});
    const std::vector<int> t{1, 3};
    const auto r = softmax_cross_entropy(z, t);
    CHECK(r.loss == doctest::Approx(std::log(4.0)));
    CHECK(r.grad.at(0, 1) == doctest::Approx((0.25 - 1.0) / 2));
    CHECK(r.grad.at(0, 0) == doctest::Approx(0.25 / 2));
    const std::vector<int> bad{0, 4};
    CHECK_THROWS_AS(softmax_cross_entropy(z, bad), DomainError);
    // Large logits stay finite.
    const Tensor<double> big({1, 2}, {1000.0, 0.0});
    const std::vector<int> t0{0};
    CHECK(std::isfinite(softmax_cross_entropy(big, t0).loss));
}

TEST_CASE("squared euclidean distance") {
    const std::vector<double> u{1.0, 2.0}, v{4.0, 6.0};
    const auto d = sq_euclidean(std::span<const double>(u), std::span<const double>(v));
    CHECK(d.value == doctest::Approx(25.0));
    CHECK(d.grad_u[0] == doctest::Approx(-6.0));
    CHECK(sq_distance(std::span<const double>(u), std::span<const double>(v)) == doctest::Approx(25.0));
}

TEST_CASE("layer gradients over 20 seeds") {
    double worst_affine = 0, worst_conv = 0, worst_relu = 0, worst_pool = 0, worst_norm = 0, worst_ce = 0;
    for (int s = 0; s < kSeeds; ++s) {
        Rng rng = Rng(1000 + s);
        Tensor<double> x = randn({3, 6}, rng), W = randn({6, 4}, rng), b = randn({4}, rng);
        worst_affine = std::max(worst_affine, probe_error([&] { return affine_forward(x, W, b); }, {&x, &W, &b},
                                                          [&](const Tensor<double>& g) {
                                                              auto r = affine_backward(x, W, g);
                                                              return std::vector<Tensor<double>>{r.x, r.W, r.b};
                                                          },
                                                          rng));

        Tensor<double> xc = randn({2, 2, 6, 5}, rng), k = randn({3, 2, 3, 3}, rng);
        worst_conv = std::max(worst_conv, probe_error([&] { return conv2d_forward(xc, k); }, {&xc, &k},
                                                      [&](const Tensor<double>& g) {
                                                          auto r = conv2d_backward(xc, k, g);
                                                          return std::vector<Tensor<double>>{r.x, r.k};
                                                      },
                                                      rng));

        Tensor<double> xr = randn({4, 5}, rng);
        worst_relu = std::max(worst_relu, probe_error([&] { return relu(xr); }, {&xr},
                                                      [&](const Tensor<double>& g) {
                                                          return std::vector<Tensor<double>>{relu_backward(xr, g)};
                                                      },
                                                      rng));

        Tensor<double> xp = randn({2, 3, 4, 4}, rng);
        worst_pool = std::max(worst_pool, probe_error([&] { return maxpool2_forward(xp).y; }, {&xp},
                                                      [&](const Tensor<double>& g) {
                                                          return std::vector<Tensor<double>>{
                                                              maxpool2_backward(maxpool2_forward(xp), g)};
                                                      },
                                                      rng));

        Tensor<double> xn = randn({3, 7}, rng);
        worst_norm = std::max(worst_norm, probe_error([&] { return l2_normalize_rows(xn).u; }, {&xn},
                                                      [&](const Tensor<double>& g) {
                                                          return std::vector<Tensor<double>>{
                                                              l2_normalize_rows_backward(l2_normalize_rows(xn), g)};
                                                      },
                                                      rng));

        Tensor<double> z = randn({4, 5}, rng);
        std::vector<int> t(4);
        for (int& v : t) v = static_cast<int>(rng.below(5));
        std::vector<Tensor<double>*> zp{&z};
        const std::vector<Tensor<double>> zg{softmax_cross_entropy(z, t).grad};
        worst_ce = std::max(worst_ce, finite_diff_check<double>([&] { return softmax_cross_entropy(z, t).loss; }, zp,
                                                                zg, GradCheckOptions{1e-6, 64, rng.next_u64()})
                                          .max_rel_error);
    }
    CHECK(worst_affine <= kTol);
    CHECK(worst_conv <= kTol);
    CHECK(worst_relu <= kTol);
    CHECK(worst_pool <= kTol);
    CHECK(worst_norm <= kTol);
    CHECK(worst_ce <= kTol);
}

TEST_CASE("finite_diff_check flags a wrong gradient and validates eps") {
    Tensor<double> x({3}, {1.0, 2.0, 3.0});
    std::vector<Tensor<double>*> p{&x};
    const std::vector<Tensor<double>> wrong{Tensor<double>({3}, {2.0, 4.0, 7.0})}; // d/dx of sum x² is 2x
    const auto r = finite_diff_check<double>(
        [&] { return x[0] * x[0] + x[1] * x[1] + x[2] * x[2]; }, p, wrong);
    CHECK(r.max_rel_error == doctest::Approx(1.0 / 6.0).epsilon(1e-4));
    CHECK(r.worst_index == 2);
    CHECK_THROWS_AS(finite_diff_check<double>([&] { return x[0]; }, p, wrong, GradCheckOptions{1e-8}), DomainError);
}
