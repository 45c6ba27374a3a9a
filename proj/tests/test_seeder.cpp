#include <catch2/catch_amalgamated.hpp>

#include "guideseg/fixtures.hpp"
#include "guideseg/seeder.hpp"

using namespace guideseg;

namespace {

ScoreMap normalized_random(Lcg& rng, int c, int h, int w) {
    ScoreMap m(c, h, w);
    for (auto& v : m.data) v = rng.next_unit();
    return normalize_scores(m);
}

// independent restatement of the per-pixel rule
std::uint8_t rule_oracle(const ScoreMap& s, const std::vector<int>& considered, float tau,
                         size_t px) {
    float best = -1.f;
    int best_c = 0;
    for (int c : considered) {
        const float v = s.data[static_cast<size_t>(c - 1) * s.pixel_count() + px];
        if (v > best) {
            best = v;
            best_c = c;
        }
    }
    if (best < tau) return 0;
    return static_cast<std::uint8_t>(best_c);
}

} // namespace

TEST_CASE("the default threshold is 0.2") {
    CHECK(SeederConfig{}.tau == 0.2f);
    CHECK(SeederConfig{}.restrict_to_image_labels);
}

TEST_CASE("all scores below tau mean background, otherwise argmax wins") {
    ScoreMap m(2, 1, 2);
    // pixel 0: (0.1, 0.15) -> background; pixel 1: (0.9, 0.3) -> class 1
    m.at(0, 0, 0) = 0.1f;
    m.at(1, 0, 0) = 0.15f;
    m.at(0, 0, 1) = 0.9f;
    m.at(1, 0, 1) = 0.3f;
    const LabelMask seeds = extract_seeds(m, ImageLabels({1, 2}));
    CHECK(seeds.at(0, 0) == 0);
    CHECK(seeds.at(0, 1) == 1);
}

TEST_CASE("a score exactly at tau is foreground") {
    ScoreMap m(1, 1, 2);
    m.at(0, 0, 0) = 0.2f;
    m.at(0, 0, 1) = 0.19999f;
    const LabelMask seeds = extract_seeds(m, ImageLabels({1}));
    CHECK(seeds.at(0, 0) == 1);
    CHECK(seeds.at(0, 1) == 0);
}

TEST_CASE("argmax ties go to the lowest class index") {
    ScoreMap m(3, 1, 1);
    m.at(0, 0, 0) = 0.7f;
    m.at(1, 0, 0) = 0.7f;
    m.at(2, 0, 0) = 0.7f;
    CHECK(extract_seeds(m, ImageLabels({1, 2, 3})).at(0, 0) == 1);
    CHECK(extract_seeds(m, ImageLabels({2, 3})).at(0, 0) == 2);
}

TEST_CASE("200 random maps match the per-pixel rule oracle") {
    Lcg rng(101);
    for (int i = 0; i < 200; ++i) {
        const ScoreMap m = normalized_random(rng, 2, 8, 8);
        const LabelMask seeds = extract_seeds(m, ImageLabels({1, 2}));
        for (size_t px = 0; px < m.pixel_count(); ++px)
            REQUIRE(seeds.data[px] == rule_oracle(m, {1, 2}, 0.2f, px));
    }
}

TEST_CASE("label restriction hides channels outside the image labels") {
    ScoreMap m(3, 1, 1);
    m.at(0, 0, 0) = 0.1f;
    m.at(1, 0, 0) = 0.95f; // class 2 scores highest but is not in the labels
    m.at(2, 0, 0) = 0.4f;
    CHECK(extract_seeds(m, ImageLabels({1, 3})).at(0, 0) == 3);
    SeederConfig open;
    open.restrict_to_image_labels = false;
    CHECK(extract_seeds(m, ImageLabels({1, 3}), open).at(0, 0) == 2);
}

TEST_CASE("seeder input validation") {
    ScoreMap m(1, 1, 1);
    m.at(0, 0, 0) = 1.5f; // not normalized
    CHECK_THROWS_AS(extract_seeds(m, ImageLabels({1})), DataError);
    m.at(0, 0, 0) = 0.5f;
    CHECK_THROWS_AS(extract_seeds(m, ImageLabels{}), UsageError);
    CHECK_THROWS_AS(seeds_at_thresholds(m, ImageLabels({1}), {0.2f, 0.5f}), UsageError);
    CHECK_THROWS_AS(seeds_at_thresholds(m, ImageLabels({1}), {0.5f, 0.5f}), UsageError);
}

TEST_CASE("tau = 1.0 keeps only unit scores, tau = 0.0 keeps everything") {
    Lcg rng(107);
    const ScoreMap m = normalized_random(rng, 2, 6, 6);
    const auto masks = seeds_at_thresholds(m, ImageLabels({1, 2}), {1.f, 0.f});
    for (size_t px = 0; px < m.pixel_count(); ++px) {
        const float best = std::max(m.data[px], m.data[m.pixel_count() + px]);
        CHECK((masks[0].data[px] != 0) == (best >= 1.f));
        CHECK(masks[1].data[px] != 0); // every score >= 0
    }
}

TEST_CASE("foreground nests as tau loosens") {
    Lcg rng(113);
    const std::vector<float> taus = {0.8f, 0.5f, 0.2f, 0.05f};
    for (int i = 0; i < 50; ++i) {
        const ScoreMap m = normalized_random(rng, 3, 8, 8);
        const auto masks = seeds_at_thresholds(m, ImageLabels({1, 2, 3}), taus);
        for (size_t t = 1; t < masks.size(); ++t)
            for (size_t px = 0; px < m.pixel_count(); ++px)
                if (masks[t - 1].data[px] != 0) {
                    REQUIRE(masks[t].data[px] != 0);
                    // the class itself also stays fixed: argmax ignores tau
                    REQUIRE(masks[t].data[px] == masks[t - 1].data[px]);
                }
    }
}

TEST_CASE("permuting channels and labels permutes the output") {
    Lcg rng(127);
    const ScoreMap m = normalized_random(rng, 3, 8, 8);
    const LabelMask base = extract_seeds(m, ImageLabels({1, 2, 3}));

    // permutation 1->2, 2->3, 3->1
    const int perm[4] = {0, 2, 3, 1};
    ScoreMap pm(3, 8, 8);
    for (int c = 1; c <= 3; ++c)
        std::copy_n(m.channel(c - 1), m.pixel_count(), pm.channel(perm[c] - 1));
    const LabelMask permuted = extract_seeds(pm, ImageLabels({1, 2, 3}));
    for (size_t px = 0; px < m.pixel_count(); ++px)
        REQUIRE(permuted.data[px] == (base.data[px] ? perm[base.data[px]] : 0));
}

TEST_CASE("restricted output never contains a class outside the labels") {
    Lcg rng(131);
    for (int i = 0; i < 20; ++i) {
        const ScoreMap m = normalized_random(rng, 4, 8, 8);
        const LabelMask seeds = extract_seeds(m, ImageLabels({2, 4}));
        for (auto v : seeds.data) REQUIRE((v == 0 || v == 2 || v == 4));
    }
}
