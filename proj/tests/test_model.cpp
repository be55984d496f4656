#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eisnet/gradcheck.hpp"
#include "eisnet/model.hpp"
#include "helpers.hpp"

using namespace eisnet;
using testutil::randn;

namespace {

ModelConfig small_config(EncoderKind kind) {
    ModelConfig c;
    c.image_side = 18;
    c.num_classes = 3;
    c.feature_dim = 10;
    c.embed_dim = 5;
    c.conv1_filters = 3;
    c.conv2_filters = 4;
    c.mlp_hidden = 12;
    c.encoder = kind;
    return c;
}

} // namespace

TEST_CASE("sgd step") {
    Tensor<double> p({1}, {1.0});
    sgd_step(p, Tensor<double>({1}, {2.0}), 0.1);
    CHECK(p[0] == doctest::Approx(0.8));
    CHECK_THROWS_AS(sgd_step(p, Tensor<double>({1}, {2.0}), 0.0), DomainError);
    CHECK_THROWS_AS(sgd_step(p, Tensor<double>({2}), 0.1), ShapeError);

    // Two steps equal one step with the summed gradient.
    Tensor<double> a({3}, {0.5, -1.0, 2.0}), b = a;
    const Tensor<double> g1({3}, {1.0, 2.0, 3.0}), g2({3}, {-0.5, 0.25, 4.0});
    sgd_step(a, g1, 0.1);
    sgd_step(a, g2, 0.1);
    Tensor<double> gs({3});
    for (std::size_t i = 0; i < 3; ++i) gs[i] = g1[i] + g2[i];
    sgd_step(b, gs, 0.1);
    for (std::size_t i = 0; i < 3; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));
}

TEST_CASE("ema step closed form") {
    for (double delta : {0.0, 0.5, 0.9, 0.999}) {
        Tensor<double> g({2}, {3.0, -1.0});
        const Tensor<double> f({2}, {1.0, 1.0});
        for (int n = 1; n <= 40; ++n) {
            ema_step(g, f, delta);
            const double dn = std::pow(delta, n);
            CHECK(g[0] == doctest::Approx(dn * 3.0 + (1 - dn) * 1.0).epsilon(1e-12));
            CHECK(g[1] == doctest::Approx(dn * -1.0 + (1 - dn) * 1.0).epsilon(1e-12));
        }
    }
    Tensor<double> g({1});
    CHECK_THROWS_WITH_AS(ema_step(g, g, 1.0), doctest::Contains("delta must be in [0,1)"), DomainError);
    CHECK_THROWS_AS(ema_step(g, g, -0.1), DomainError);
}

TEST_CASE("model config validation") {
    ModelConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.conv_output_side() == 6);
    CHECK(c.flat_dim() == 32 * 36);
    c.image_side = 36; // 34 -> 17 cannot be pooled again
    CHECK_THROWS_AS(c.validate(), DomainError);
    c.image_side = 31;
    CHECK_THROWS_AS(c.validate(), DomainError);
    c.image_side = 36;
    c.encoder = EncoderKind::Mlp;
    CHECK_NOTHROW(c.validate());
    c.aux_classes = 30;
    CHECK_THROWS_AS(c.validate(), DomainError);
    CHECK(parse_encoder_kind("mlp") == EncoderKind::Mlp);
    CHECK_THROWS_AS(parse_encoder_kind("resnet"), DomainError);
}

TEST_CASE("init: schema, zero biases, glorot bounds, determinism") {
    const ModelConfig c;
    Rng r1(3), r2(3);
    const auto m = init_model<float>(c, r1);
    const auto m2 = init_model<float>(c, r2);
    CHECK(m.tensors == m2.tensors);
    const std::vector<std::string> names{"enc.conv1.k", "enc.conv2.k", "enc.fc.W", "enc.fc.b", "embed.W",
                                         "embed.b",     "cls.W",       "cls.b",    "aux.W",    "aux.b"};
    REQUIRE(m.tensors.size() == names.size());
    for (std::size_t i = 0; i < names.size(); ++i) CHECK(m.tensors[i].name == names[i]);
    CHECK(m.tensors.get("aux.W").shape() == Shape{128, 31});
    CHECK(m.tensors.get("embed.W").shape() == Shape{128, 128});
    for (const auto& e : m.tensors)
        if (e.name.ends_with(".b"))
            for (float v : e.value.data()) CHECK(v == 0.0f);
    const double bound = std::sqrt(6.0 / (128 + 5));
    for (float v : m.tensors.get("cls.W").data()) CHECK(std::abs(v) <= bound);
}

TEST_CASE("forward shapes and unit embeddings for both encoders") {
    for (auto kind : {EncoderKind::Conv, EncoderKind::Mlp}) {
        const auto c = small_config(kind);
        Rng rng(4);
        const auto m = init_model<double>(c, rng);
        const auto x = randn({5, 3, 18, 18}, rng);
        const auto f = forward_features(m.tensors, c, x);
        CHECK(f.shape() == Shape{5, 10});
        CHECK(classify(m, f).shape() == Shape{5, 3});
        CHECK(aux_classify(m, f).shape() == Shape{5, 31});
        const auto e = embed(m, x);
        for (std::size_t b = 0; b < 5; ++b) CHECK(l2_norm(e.row(b)) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK_THROWS_AS(forward_features(m.tensors, c, randn({5, 3, 12, 12}, rng)), ShapeError);
    }
}

TEST_CASE("encoder + heads gradient, both encoders, 20 seeds") {
    for (auto kind : {EncoderKind::Conv, EncoderKind::Mlp}) {
        double worst = 0;
        for (int s = 0; s < 20; ++s) {
            const auto c = small_config(kind);
            Rng rng(200 + s);
            auto m = init_model<double>(c, rng);
            // Nonzero biases keep the embedding away from the origin.
            for (auto& e : m.tensors)
                if (e.name.ends_with(".b"))
                    for (double& v : e.value.data()) v = 0.1 * rng.normal();
            const auto x = randn({3, 3, 18, 18}, rng);
            const auto wc = randn({3, 3}, rng), wa = randn({3, 31}, rng), we = randn({3, 5}, rng);
            const auto loss = [&] {
                const auto f = forward_features(m.tensors, c, x);
                return testutil::dot(wc, classify(m, f)) + testutil::dot(wa, aux_classify(m, f)) +
                       testutil::dot(we, embed_head(m.tensors, f).normalized.u);
            };
            EncoderCache<double> cache;
            const auto f = forward_features(m.tensors, c, x, &cache);
            auto grads = m.tensors.zeros_like();
            Tensor<double> gf = head_backward(m.tensors, "cls", f, wc, grads);
            const auto ga = head_backward(m.tensors, "aux", f, wa, grads);
            const auto ef = embed_head(m.tensors, f);
            const auto ge = embed_head_backward(m.tensors, f, ef, we, grads);
            for (std::size_t i = 0; i < gf.size(); ++i) gf[i] += ga[i] + ge[i];
            backward_features(m.tensors, c, cache, gf, grads);
            std::vector<Tensor<double>*> params;
            std::vector<Tensor<double>> analytic;
            for (std::size_t i = 0; i < m.tensors.size(); ++i) {
                params.push_back(&m.tensors[i].value);
                analytic.push_back(grads[i].value);
            }
            worst = std::max(worst, finite_diff_check<double>(loss, params, analytic,
                                                              GradCheckOptions{1e-6, 64, static_cast<std::uint64_t>(s)})
                                        .max_rel_error);
        }
        CHECK(worst <= 1e-4);
    }
}

TEST_CASE("momentum encoder tracks encoder and embedding head only") {
    const auto c = small_config(EncoderKind::Conv);
    Rng rng(9);
    auto m = init_model<double>(c, rng);
    auto mom = momentum_init(m, 0.5);
    CHECK(mom.tracked.size() == 6);
    CHECK(mom.tracked.find("cls.W") == nullptr);
    CHECK(mom.tracked.find("aux.b") == nullptr);
    const double g0 = mom.tracked.get("embed.W")[0];
    m.tensors.get("embed.W")[0] += 1.0;
    momentum_update(mom, m);
    CHECK(mom.tracked.get("embed.W")[0] == doctest::Approx(g0 + 0.5));
    // With δ = 0 the momentum copy equals the encoder, so embeddings agree.
    auto mom0 = momentum_init(m, 0.0);
    m.tensors.get("enc.fc.b")[0] += 0.3;
    momentum_update(mom0, m);
    const auto x = randn({2, 3, 18, 18}, rng);
    CHECK(momentum_embed(mom0, c, x) == embed(m, x));

    auto other = init_model<double>(small_config(EncoderKind::Mlp), rng);
    const auto before = mom.tracked;
    CHECK_THROWS_AS(momentum_update(mom, other), ShapeError);
    CHECK(mom.tracked == before);
    CHECK_THROWS_AS(momentum_init(m, 1.0), DomainError);
}
