#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include "guideseg/fixtures.hpp"
#include "guideseg/regions.hpp"
#include "guideseg/seeder.hpp"

using namespace guideseg;

TEST_CASE("noise-free unshrunk scenes recover the ground truth exactly") {
    SceneSpec spec;
    spec.seed = 9;
    spec.height = 24;
    spec.width = 24;
    spec.noise_amplitude = 0.f;
    spec.blur_radius = 0;
    spec.core_shrink = 1.f;
    const SyntheticScene scene = generate_scene(spec);
    // scores are exact indicators
    for (int c = 1; c <= spec.num_classes; ++c)
        for (size_t i = 0; i < scene.gt.size(); ++i)
            REQUIRE(scene.scores.channel(c - 1)[i] == (scene.gt.data[i] == c ? 1.f : 0.f));
    // and tau = 0.2 seeds reproduce the ground truth
    CHECK(extract_seeds(scene.scores, scene.labels) == scene.gt);
}

TEST_CASE("scene generation is bit-identical for a fixed seed") {
    SceneSpec spec;
    spec.seed = 42;
    spec.distractors = 1;
    const SyntheticScene a = generate_scene(spec);
    const SyntheticScene b = generate_scene(spec);
    CHECK(a.gt == b.gt);
    CHECK(a.image == b.image);
    REQUIRE(a.scores.data.size() == b.scores.data.size());
    CHECK(std::memcmp(a.scores.data.data(), b.scores.data.data(),
                      a.scores.data.size() * 4) == 0);
    CHECK(std::memcmp(a.saliency.data.data(), b.saliency.data.data(),
                      a.saliency.data.size() * 4) == 0);
    CHECK(a.labels.present == b.labels.present);
}

TEST_CASE("three disjoint blobs produce three components") {
    LabelMask gt(32, 32);
    paint_blob(gt, BlobShape::Rect, 5, 5, 3, 3, 1);
    paint_blob(gt, BlobShape::Disc, 5, 24, 3, 3, 2);
    paint_blob(gt, BlobShape::Rect, 24, 14, 3, 4, 3);
    BinaryMask fg(32, 32);
    for (size_t i = 0; i < gt.size(); ++i) fg.data[i] = gt.data[i] ? 1 : 0;
    CHECK(label_components(fg).count() == 3);
}

TEST_CASE("scene labels are exactly the classes present in the ground truth") {
    for (int i = 0; i < 20; ++i) {
        SceneSpec spec;
        spec.seed = static_cast<std::uint64_t>(i);
        spec.blobs = 4;
        const SyntheticScene scene = generate_scene(spec);
        REQUIRE_FALSE(scene.labels.empty());
        bool seen[256] = {};
        for (auto v : scene.gt.data) seen[v] = true;
        for (int c = 1; c <= spec.num_classes; ++c)
            REQUIRE(scene.labels.contains(static_cast<std::uint8_t>(c)) == seen[c]);
    }
}

TEST_CASE("oracle_g2 handles the trivial guide cases") {
    // single component, one seed inside
    BinaryMask sal(8, 8);
    for (int y = 1; y <= 6; ++y)
        for (int x = 1; x <= 6; ++x) sal.set(y, x, true);
    LabelMask seeds(8, 8);
    seeds.at(3, 3) = 1;
    LabelMask out = oracle_g2(seeds, sal);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) REQUIRE(out.at(y, x) == (sal.at(y, x) ? 1 : 0));

    // no seeds: ignore
    out = oracle_g2(LabelMask(8, 8), sal);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            REQUIRE(out.at(y, x) == (sal.at(y, x) ? kIgnoreLabel : 0));

    // isolated seed: kept
    seeds = LabelMask(8, 8);
    seeds.at(0, 0) = 7;
    out = oracle_g2(seeds, BinaryMask(8, 8));
    CHECK(out.at(0, 0) == 7);
}

TEST_CASE("oracle_g2 propagates a seed spanning two components to both") {
    BinaryMask sal(6, 12);
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x <= 3; ++x) sal.set(y, x, true);
        for (int x = 8; x <= 11; ++x) sal.set(y, x, true);
    }
    LabelMask seeds(6, 12);
    for (int x = 3; x <= 8; ++x) seeds.at(2, x) = 4;
    const LabelMask out = oracle_g2(seeds, sal);
    CHECK(out.at(0, 0) == 4);
    CHECK(out.at(5, 11) == 4);
    CHECK(out.at(2, 5) == kIgnoreLabel); // bleed-out between the components
}

TEST_CASE("oracle and production G2 agree on random scenes when sharing the stub") {
    for (int i = 0; i < 100; ++i) {
        SceneSpec spec;
        spec.seed = 5000 + static_cast<std::uint64_t>(i);
        spec.height = 32;
        spec.width = 32;
        spec.blobs = 4;
        spec.distractors = 1;
        const SyntheticScene scene = generate_scene(spec);
        const LabelMask seeds = extract_seeds(scene.scores, scene.labels);
        const BinaryMask sal = binarize_saliency(scene.saliency);
        REQUIRE(guide_g2(seeds, sal, nearest_seed_labeler()).mask == oracle_g2(seeds, sal));
    }
}

TEST_CASE("generate_scene rejects degenerate canvases") {
    SceneSpec spec;
    spec.height = 0;
    CHECK_THROWS_AS(generate_scene(spec), UsageError);
}
