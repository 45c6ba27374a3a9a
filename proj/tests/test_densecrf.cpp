#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>

#include "guideseg/densecrf.hpp"
#include "guideseg/fixtures.hpp"

using namespace guideseg;

namespace {

RgbImage uniform_image(int h, int w, std::uint8_t v = 128) {
    RgbImage img(h, w);
    std::fill(img.data.begin(), img.data.end(), v);
    return img;
}

UnaryField from_probs(int h, int w, const std::vector<std::vector<float>>& probs_per_pixel) {
    const int L = static_cast<int>(probs_per_pixel.front().size());
    UnaryField u(L, h, w);
    for (size_t i = 0; i < probs_per_pixel.size(); ++i)
        for (int l = 0; l < L; ++l)
            u.data[i * L + l] = -std::log(probs_per_pixel[i][static_cast<size_t>(l)]);
    return u;
}

UnaryField random_unary(Lcg& rng, int L, int h, int w) {
    UnaryField u(L, h, w);
    for (auto& v : u.data) v = 4.f * rng.next_unit() - 2.f;
    return u;
}

RgbImage random_image(Lcg& rng, int h, int w) {
    RgbImage img(h, w);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.next_below(256));
    return img;
}

} // namespace

TEST_CASE("presets carry the published parameter sets") {
    const CrfParams v1 = crf_preset("v1");
    CHECK(v1.w1 == 10.f);
    CHECK(v1.theta_alpha == 80.f);
    CHECK(v1.theta_beta == 13.f);
    CHECK(v1.w2 == 3.f);
    CHECK(v1.theta_gamma == 3.f);
    const CrfParams v2 = crf_preset("v2");
    CHECK(v2.w1 == 4.f);
    CHECK(v2.theta_alpha == 121.f);
    CHECK(v2.theta_beta == 5.f);
    CHECK(v2.w2 == 3.f);
    CHECK(v2.theta_gamma == 3.f);
    CHECK(v2.iterations == 10);
    CHECK_THROWS_AS(crf_preset("v3"), UsageError);
}

TEST_CASE("zero kernel weights reduce mean field to the unary argmin") {
    Lcg rng(301);
    CrfParams p;
    p.w1 = 0.f;
    p.w2 = 0.f;
    const UnaryField u = random_unary(rng, 4, 6, 7);
    const RgbImage img = random_image(rng, 6, 7);
    const MarginalField q = mean_field(u, img, p);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 7; ++x) {
            int argmin = 0;
            for (int l = 1; l < 4; ++l)
                if (u.at(l, y, x) < u.at(argmin, y, x)) argmin = l;
            REQUIRE(q.argmax(y, x) == argmin);
        }
}

TEST_CASE("two-pixel instance agrees with an independent fixed-point iteration") {
    // one row, two pixels, two labels; everything hand-set
    CrfParams p;
    p.w1 = 2.f;
    p.theta_alpha = 3.f;
    p.theta_beta = 10.f;
    p.w2 = 1.5f;
    p.theta_gamma = 2.f;
    p.iterations = 10;
    RgbImage img(1, 2);
    const std::uint8_t c0[3] = {10, 30, 200}, c1[3] = {40, 20, 160};
    std::copy_n(c0, 3, img.px(0, 0));
    std::copy_n(c1, 3, img.px(0, 1));
    const UnaryField u = from_probs(1, 2, {{0.7f, 0.3f}, {0.4f, 0.6f}});

    // reference: straight transcription of the update rule in doubles
    const double color2 = 30.0 * 30 + 10 * 10 + 40 * 40;
    const double k = 2.0 * std::exp(-1.0 / (2 * 3.0 * 3.0) - color2 / (2 * 10.0 * 10.0)) +
                     1.5 * std::exp(-1.0 / (2 * 2.0 * 2.0));
    double q[2][2];
    for (int i = 0; i < 2; ++i) {
        double e0 = std::exp(-u.data[i * 2 + 0]), e1 = std::exp(-u.data[i * 2 + 1]);
        q[i][0] = e0 / (e0 + e1);
        q[i][1] = e1 / (e0 + e1);
    }
    for (int it = 0; it < 10; ++it) {
        double next[2][2];
        for (int i = 0; i < 2; ++i) {
            const int j = 1 - i;
            for (int l = 0; l < 2; ++l)
                next[i][l] = std::exp(-u.data[i * 2 + l] + k * q[j][l]);
            const double s = next[i][0] + next[i][1];
            next[i][0] /= s;
            next[i][1] /= s;
        }
        std::memcpy(q, next, sizeof q);
    }

    const MarginalField out = mean_field(u, img, p);
    for (int i = 0; i < 2; ++i)
        for (int l = 0; l < 2; ++l)
            REQUIRE(out.q[static_cast<size_t>(i) * 2 + l] ==
                    Catch::Approx(q[i][l]).margin(1e-6));
}

TEST_CASE("a weak dissenter flips to the smooth majority") {
    // 5x5 uniform image: 24 pixels prefer label 0 at 0.9, the center prefers
    // label 1 at 0.55 only
    std::vector<std::vector<float>> probs(25, {0.9f, 0.1f});
    probs[12] = {0.45f, 0.55f};
    const UnaryField u = from_probs(5, 5, probs);
    CrfParams p;
    p.w1 = 0.f;
    p.w2 = 3.f;
    p.theta_gamma = 3.f;
    const MarginalField q = mean_field(u, uniform_image(5, 5), p);
    CHECK(q.argmax(2, 2) == 0);
    // and the rest never flips
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) REQUIRE(q.argmax(y, x) == 0);
}

TEST_CASE("marginals stay normalized through every iteration count") {
    Lcg rng(307);
    const UnaryField u = random_unary(rng, 5, 6, 6);
    const RgbImage img = random_image(rng, 6, 6);
    for (int iters = 1; iters <= 10; ++iters) {
        CrfParams p = crf_preset("v2");
        p.iterations = iters;
        const MarginalField q = mean_field(u, img, p);
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 6; ++x) {
                double sum = 0.0;
                for (int l = 0; l < 5; ++l) {
                    REQUIRE(q.at(l, y, x) >= 0.f);
                    sum += q.at(l, y, x);
                }
                REQUIRE(std::abs(sum - 1.0) <= 1e-6);
            }
    }
}

TEST_CASE("label permutation permutes marginals bit-exactly") {
    Lcg rng(311);
    const int L = 4;
    const UnaryField u = random_unary(rng, L, 6, 5);
    const RgbImage img = random_image(rng, 6, 5);
    const int perm[4] = {2, 0, 3, 1};
    UnaryField up(L, 6, 5);
    for (size_t i = 0; i < u.data.size() / L; ++i)
        for (int l = 0; l < L; ++l) up.data[i * L + perm[l]] = u.data[i * L + l];

    const CrfParams p = crf_preset("v1");
    const MarginalField q = mean_field(u, img, p);
    const MarginalField qp = mean_field(up, img, p);
    for (size_t i = 0; i < u.data.size() / L; ++i)
        for (int l = 0; l < L; ++l)
            REQUIRE(std::memcmp(&qp.q[i * L + perm[l]], &q.q[i * L + l], 4) == 0);
}

TEST_CASE("pair weights are symmetric on the exact path") {
    Lcg rng(313);
    const RgbImage img = random_image(rng, 9, 9);
    const detail::CrfKernel kernel(crf_preset("v2"), 9, 9);
    for (int n = 0; n < 200; ++n) {
        const int y1 = static_cast<int>(rng.next_below(9)), x1 = static_cast<int>(rng.next_below(9));
        const int y2 = static_cast<int>(rng.next_below(9)), x2 = static_cast<int>(rng.next_below(9));
        REQUIRE(kernel.weight(img, y1, x1, y2, x2) == kernel.weight(img, y2, x2, y1, x1));
    }
}

TEST_CASE("exact path limit is enforced and lifted by approx") {
    const int side = 129; // 16641 pixels, just past the limit
    UnaryField u(2, side, side, 0.5f);
    const RgbImage img = uniform_image(side, side);
    CrfParams p = crf_preset("v2");
    p.iterations = 1;
    CHECK_THROWS_AS(mean_field(u, img, p), ResourceError);
    MeanFieldOptions opts;
    opts.approx = true;
    opts.threads = 2;
    p.theta_alpha = 2.f; // keep the truncated window tiny
    p.theta_gamma = 2.f;
    CHECK_NOTHROW(mean_field(u, img, p, opts));
}

TEST_CASE("truncated messages agree with the exact path almost everywhere") {
    Lcg rng(317);
    const int side = 32;
    const UnaryField u = random_unary(rng, 3, side, side);
    RgbImage img(side, side);
    // piecewise-constant colors so the appearance kernel has structure
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            const std::uint8_t v = static_cast<std::uint8_t>(((y / 8) * 4 + x / 8) * 16);
            img.px(y, x)[0] = v;
            img.px(y, x)[1] = static_cast<std::uint8_t>(255 - v);
            img.px(y, x)[2] = 90;
        }
    CrfParams p;
    p.w1 = 4.f;
    p.theta_alpha = 6.f;
    p.theta_beta = 20.f;
    p.w2 = 3.f;
    p.theta_gamma = 3.f;
    const MarginalField exact = mean_field(u, img, p);
    MeanFieldOptions opts;
    opts.approx = true;
    const MarginalField approx = mean_field(u, img, p, opts);
    int agree = 0;
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            if (exact.argmax(y, x) == approx.argmax(y, x)) ++agree;
    CHECK(agree >= side * side * 99 / 100);
}

TEST_CASE("threading does not change the marginals") {
    Lcg rng(331);
    const UnaryField u = random_unary(rng, 3, 12, 12);
    const RgbImage img = random_image(rng, 12, 12);
    const CrfParams p = crf_preset("v2");
    const MarginalField a = mean_field(u, img, p, {false, 1});
    const MarginalField b = mean_field(u, img, p, {false, 2});
    REQUIRE(std::memcmp(a.q.data(), b.q.data(), a.q.size() * 4) == 0);
}

TEST_CASE("crf_postproc: one-hot probabilities with zero weights stay put") {
    Lcg rng(337);
    const int side = 6;
    ScoreMap probs(3, side, side);
    LabelMask original(side, side);
    for (size_t i = 0; i < original.data.size(); ++i) {
        const auto cls = rng.next_below(3);
        original.data[i] = static_cast<std::uint8_t>(cls);
        probs.data[cls * original.data.size() + i] = 1.f;
    }
    CrfParams p;
    p.w1 = 0.f;
    p.w2 = 0.f;
    const LabelMask out = crf_postproc(probs, uniform_image(side, side), p);
    CHECK(out == original);
}

TEST_CASE("crf_postproc is label-agnostic: permuted probabilities permute the output") {
    Lcg rng(347);
    const int side = 8;
    ScoreMap probs(3, side, side);
    for (auto& v : probs.data) v = rng.next_unit();
    const RgbImage img = random_image(rng, side, side);
    const CrfParams p = crf_preset("v1");
    const LabelMask base = crf_postproc(probs, img, p);

    const int perm[3] = {1, 2, 0};
    ScoreMap pp(3, side, side);
    for (int c = 0; c < 3; ++c)
        std::copy_n(probs.channel(c), probs.pixel_count(), pp.channel(perm[c]));
    const LabelMask permuted = crf_postproc(pp, img, p);
    for (size_t i = 0; i < base.data.size(); ++i)
        REQUIRE(permuted.data[i] == perm[base.data[i]]);
}

TEST_CASE("crf_postproc equals clip + mean_field + argmax") {
    Lcg rng(349);
    const int side = 7;
    ScoreMap probs(4, side, side);
    for (auto& v : probs.data) v = rng.next_unit();
    const RgbImage img = random_image(rng, side, side);
    const CrfParams p = crf_preset("v2");

    // oracle: build the unary the documented way and run the solver directly
    UnaryField u(4, side, side);
    for (size_t i = 0; i < probs.pixel_count(); ++i) {
        double clipped[4], sum = 0.0;
        for (int l = 0; l < 4; ++l) {
            clipped[l] = std::clamp(probs.data[static_cast<size_t>(l) * probs.pixel_count() + i],
                                    1e-5f, 1.f);
            sum += clipped[l];
        }
        for (int l = 0; l < 4; ++l)
            u.data[i * 4 + l] = -std::log(static_cast<float>(clipped[l] / sum));
    }
    const MarginalField q = mean_field(u, img, p);
    const LabelMask out = crf_postproc(probs, img, p);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) REQUIRE(out.at(y, x) == q.argmax(y, x));
}

TEST_CASE("crf_seed: unanimous background stays background") {
    const LabelMask seeds(6, 6);
    const LabelMask out = crf_seed(seeds, uniform_image(6, 6), crf_preset("v2"));
    CHECK(out == seeds);
}

TEST_CASE("crf_seed with zero weights is the identity") {
    Lcg rng(353);
    LabelMask seeds(8, 8);
    for (auto& v : seeds.data) v = static_cast<std::uint8_t>(rng.next_below(3));
    CrfParams p;
    p.w1 = 0.f;
    p.w2 = 0.f;
    CHECK(crf_seed(seeds, uniform_image(8, 8), p) == seeds);
}

TEST_CASE("crf_seed grows a confident blob outward on a uniform image") {
    LabelMask seeds(9, 9);
    for (int y = 3; y <= 5; ++y)
        for (int x = 3; x <= 5; ++x) seeds.at(y, x) = 1;
    CrfParams p;
    p.w1 = 4.f;
    p.theta_alpha = 4.f;
    p.theta_beta = 5.f;
    p.w2 = 3.f;
    p.theta_gamma = 3.f;
    const LabelMask out = crf_seed(seeds, uniform_image(9, 9), p);
    for (int y = 3; y <= 5; ++y)
        for (int x = 3; x <= 5; ++x) REQUIRE(out.at(y, x) == 1); // superset of the blob
    std::uint64_t fg = 0;
    for (auto v : out.data) fg += v == 1;
    CHECK(fg >= 9);
    // exact-path golden: identical on a rerun
    CHECK(crf_seed(seeds, uniform_image(9, 9), p) == out);
}

TEST_CASE("crf_seed validates confidence") {
    LabelMask seeds(2, 2);
    seeds.at(0, 0) = 1;
    CHECK_THROWS_AS(crf_seed(seeds, uniform_image(2, 2), crf_preset("v2"), 0.5f), UsageError);
    CHECK_THROWS_AS(crf_seed(seeds, uniform_image(2, 2), crf_preset("v2"), 1.f), UsageError);
}

TEST_CASE("region_crf with zero weights reproduces full seed coverage") {
    const int h = 4, w = 6;
    BinaryMask component(h, w, true);
    LabelMask seeds(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) seeds.at(y, x) = x < w / 2 ? 1 : 2;
    CrfParams p;
    p.w1 = 0.f;
    p.w2 = 0.f;
    LabelMask out(h, w, 99);
    region_crf(component, seeds, {1, 2}, uniform_image(h, w), p, out);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) REQUIRE(out.at(y, x) == seeds.at(y, x));
}

TEST_CASE("region_crf splits a uniform bar between two opposite seeds") {
    const int h = 4, w = 16;
    BinaryMask component(h, w, true);
    LabelMask seeds(h, w);
    for (int y = 0; y < h; ++y) {
        seeds.at(y, 0) = 1;
        seeds.at(y, w - 1) = 2;
    }
    CrfParams p;
    p.w1 = 0.f;
    p.w2 = 3.f;
    p.theta_gamma = 3.f;
    LabelMask out(h, w, 99);
    region_crf(component, seeds, {1, 2}, uniform_image(h, w), p, out);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) REQUIRE(out.at(y, x) == (x < w / 2 ? 1 : 2));
}

TEST_CASE("region_crf leaves pixels outside the component untouched") {
    BinaryMask component(6, 6);
    for (int y = 1; y <= 3; ++y)
        for (int x = 1; x <= 4; ++x) component.set(y, x, true);
    LabelMask seeds(6, 6);
    seeds.at(2, 1) = 1;
    seeds.at(2, 4) = 3;
    LabelMask out(6, 6, 77);
    region_crf(component, seeds, {1, 3}, uniform_image(6, 6), crf_preset("v2"), out);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) {
            if (component.at(y, x)) {
                REQUIRE((out.at(y, x) == 1 || out.at(y, x) == 3));
            } else {
                REQUIRE(out.at(y, x) == 77);
            }
        }
}

TEST_CASE("region_crf needs two classes") {
    BinaryMask component(2, 2, true);
    LabelMask seeds(2, 2);
    LabelMask out(2, 2);
    CHECK_THROWS_AS(
        region_crf(component, seeds, {1}, uniform_image(2, 2), crf_preset("v2"), out),
        UsageError);
}
