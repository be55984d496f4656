#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <sstream>

#include "eisnet/jigsaw.hpp"
#include "helpers.hpp"

using namespace eisnet;

namespace {

Tensor<float> random_image(std::size_t S, Rng& rng) {
    Tensor<float> img({3, S, S});
    for (float& v : img.data()) v = static_cast<float>(rng.uniform());
    return img;
}

// Patch (r, c) of cell `cell` in an S×S image, channel ch.
float patch_pixel(const Tensor<float>& img, std::size_t ch, std::size_t cell, std::size_t r, std::size_t c) {
    const std::size_t S = img.dim(1), P = S / 3;
    return img[(ch * S + (cell / 3) * P + r) * S + (cell % 3) * P + c];
}

} // namespace

TEST_CASE("default permutation set") {
    const auto& set = default_permutation_set();
    CHECK_NOTHROW(set.validate());
    REQUIRE(set.size() == 31);
    CHECK(set[0] == identity_permutation());
    std::set<Permutation> unique(set.orderings.begin(), set.orderings.end());
    CHECK(unique.size() == 31);
    const int h = min_pairwise_hamming(std::span<const Permutation>(set.orderings).subspan(1));
    CHECK(h == set.min_hamming);
    CHECK(h >= 5);
    for (const auto& p : set.orderings) CHECK(inverse(inverse(p)) == p);
}

TEST_CASE("shipped permutation file equals the regenerated default set") {
    const auto loaded = load_permutation_set(EISNET_PERMUTATION_FILE);
    CHECK(loaded.orderings == default_permutation_set().orderings);
    CHECK(loaded.fingerprint() == default_permutation_set().fingerprint());
    CHECK(loaded.min_hamming >= 5);
}

TEST_CASE("generation is deterministic in the seed") {
    const auto a = generate_permutation_set(Rng(5), 200);
    const auto b = generate_permutation_set(Rng(5), 200);
    const auto c = generate_permutation_set(Rng(6), 200);
    CHECK(a.orderings == b.orderings);
    CHECK(a.orderings != c.orderings);
}

TEST_CASE("text format round trip and rejection of bad files") {
    const auto& set = default_permutation_set();
    std::stringstream ss;
    write_permutation_set(ss, set);
    const auto back = read_permutation_set(ss);
    CHECK(back.orderings == set.orderings);
    CHECK(back.seed == set.seed);

    std::stringstream out;
    write_permutation_set(out, set);
    std::string text = out.str();
    {
        std::stringstream bad(text.substr(0, text.rfind('\n', text.size() - 2) + 1)); // drop a line
        CHECK_THROWS_AS(read_permutation_set(bad), FormatError);
    }
    {
        std::string t = text;
        t.replace(t.find("min_hamming="), 13, "min_hamming=1");
        std::stringstream bad(t);
        CHECK_THROWS_AS(read_permutation_set(bad), FormatError);
    }
    {
        std::stringstream bad("# eisnet-permutations seed=0 min_hamming=0\n0 1 2 3 4 5 6 7 7\n");
        CHECK_THROWS_AS(read_permutation_set(bad), FormatError);
    }
    {
        std::stringstream bad("no header\n");
        CHECK_THROWS_AS(read_permutation_set(bad), FormatError);
    }
}

TEST_CASE("shuffle moves source patch perm[i] into cell i") {
    Rng rng(1);
    const auto img = random_image(6, rng);
    const Permutation p{8, 7, 6, 5, 4, 3, 2, 1, 0};
    const auto out = shuffle_image(img, p);
    for (std::size_t cell = 0; cell < 9; ++cell)
        for (std::size_t ch = 0; ch < 3; ++ch)
            for (std::size_t r = 0; r < 2; ++r)
                for (std::size_t c = 0; c < 2; ++c)
                    CHECK(patch_pixel(out, ch, cell, r, c) == patch_pixel(img, ch, p[cell], r, c));
    CHECK_THROWS_AS(shuffle_image(random_image(7, rng), p), DomainError);
    const Permutation dup{0, 0, 2, 3, 4, 5, 6, 7, 8};
    CHECK_THROWS_AS(shuffle_image(img, dup), DomainError);
}

TEST_CASE("round trips are bit-exact for all 31 orderings") {
    Rng rng(2);
    const auto& set = default_permutation_set();
    for (int i = 0; i < 40; ++i) {
        const auto img = random_image(30, rng);
        for (const auto& p : set.orderings) REQUIRE(unshuffle_image(shuffle_image(img, p), p) == img);
    }
}

TEST_CASE("labels re-derive by exhaustive matching") {
    Rng rng(3);
    const auto& set = default_permutation_set();
    std::vector<Tensor<float>> originals, batch;
    for (int i = 0; i < 1000; ++i) originals.push_back(random_image(9, rng));
    batch = originals;
    const auto labels = make_jigsaw_batch(std::span<Tensor<float>>(batch), set, 0.6, Rng(4));
    std::size_t shuffled = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        int match = -1;
        for (std::size_t c = 0; c < 31; ++c)
            if (shuffle_image(originals[i], set[c]) == batch[i]) {
                match = static_cast<int>(c);
                break;
            }
        REQUIRE(match == labels[i]);
        shuffled += labels[i] != 0;
    }
    CHECK(shuffled == doctest::Approx(600).epsilon(0.1));
}

TEST_CASE("shuffle probability boundaries") {
    Rng rng(5);
    const auto& set = default_permutation_set();
    std::vector<Tensor<float>> imgs;
    for (int i = 0; i < 50; ++i) imgs.push_back(random_image(9, rng));
    auto a = imgs;
    const auto none = make_jigsaw_batch(std::span<Tensor<float>>(a), set, 0.0, Rng(1));
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(none[i] == 0);
        CHECK(a[i] == imgs[i]);
    }
    auto b = imgs;
    const auto all = make_jigsaw_batch(std::span<Tensor<float>>(b), set, 1.0, Rng(1));
    for (int l : all) {
        CHECK(l >= 1);
        CHECK(l <= 30);
    }
    CHECK_THROWS_AS(make_jigsaw_batch(std::span<Tensor<float>>(b), set, 1.5, Rng(1)), DomainError);
}

TEST_CASE("aux loss checks shape and label range") {
    const Tensor<double> logits({2, 31});
    const std::vector<int> ok{0, 30}, bad{0, 31};
    CHECK(aux_loss(logits, ok).loss == doctest::Approx(std::log(31.0)));
    CHECK_THROWS_AS(aux_loss(logits, bad), DomainError);
    CHECK_THROWS_AS(aux_loss(Tensor<double>({2, 30}), ok), ShapeError);
}
