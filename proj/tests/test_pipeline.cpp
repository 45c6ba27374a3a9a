#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "guideseg/pipeline.hpp"

using namespace guideseg;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / "guideseg_pipeline_tests" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::trunc);
    out << text;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

SceneSpec small_scene_spec() {
    SceneSpec spec;
    spec.height = 24;
    spec.width = 24;
    spec.blobs = 3;
    spec.num_classes = 3;
    spec.distractors = 1;
    return spec;
}

} // namespace

TEST_CASE("config parsing covers every RunConfig field") {
    const auto dir = fresh_dir("config");
    write_text(dir / "run.toml", R"(# full config
strategy = "g2"
tau = 0.35
crf_preset = "v1"
crf_iterations = 5
crf_stages = ["seed", "postproc"]
rng_seed = 99
connectivity = 4
area_fraction = 0.02
output_dir = "out"
crf_confidence = 0.8
crf_approx = true
num_classes = 3
strict = true
)");
    const RunConfig cfg = load_run_config((dir / "run.toml").string());
    CHECK(cfg.strategy == Strategy::G2);
    CHECK(cfg.tau == 0.35f);
    CHECK(cfg.crf.w1 == 10.f); // v1
    CHECK(cfg.crf.iterations == 5);
    CHECK(cfg.stage_crf_seed);
    CHECK(cfg.stage_crf_postproc);
    CHECK(cfg.rng_seed == 99);
    CHECK(cfg.connectivity == Connectivity::Four);
    CHECK(cfg.area_fraction == 0.02);
    CHECK(cfg.output_dir == "out");
    CHECK(cfg.crf_confidence == 0.8f);
    CHECK(cfg.crf_approx);
    CHECK(cfg.num_classes == 3);
    CHECK(cfg.strict);
}

TEST_CASE("config defaults match the documented ones") {
    const auto dir = fresh_dir("config_default");
    write_text(dir / "run.toml", "strategy = \"seeds-only\"\n");
    const RunConfig cfg = load_run_config((dir / "run.toml").string());
    CHECK(cfg.tau == 0.2f);
    CHECK(cfg.crf.w1 == 4.f); // v2 preset
    CHECK(cfg.connectivity == Connectivity::Eight);
    CHECK(cfg.area_fraction == 0.01);
    CHECK_FALSE(cfg.stage_crf_seed);
    CHECK_FALSE(cfg.stage_crf_postproc);
    CHECK(cfg.num_classes == 20);
}

TEST_CASE("config errors") {
    const auto dir = fresh_dir("config_bad");
    write_text(dir / "a.toml", "strategy = \"warp\"\n");
    CHECK_THROWS_AS(load_run_config((dir / "a.toml").string()), UsageError);
    write_text(dir / "b.toml", "strategy\n");
    CHECK_THROWS_AS(load_run_config((dir / "b.toml").string()), FormatError);
    write_text(dir / "c.toml", "strategy = \"g1\"\n");
    CHECK_THROWS_AS(load_run_config((dir / "c.toml").string()), UsageError); // scores missing
    write_text(dir / "d.toml", "connectivity = 6\n");
    CHECK_THROWS_AS(load_run_config((dir / "d.toml").string()), UsageError);
    write_text(dir / "e.toml", "tau = \"high\"\n");
    CHECK_THROWS_AS(load_run_config((dir / "e.toml").string()), FormatError);
}

TEST_CASE("manifest parsing resolves relative paths and rejects duplicates") {
    const auto dir = fresh_dir("manifest");
    write_text(dir / "m.jsonl",
               "{\"id\":\"a\",\"image\":\"a.png\",\"heatmap\":\"a.sgsm\",\"saliency\":\"a.sal\","
               "\"labels\":[1,2],\"gt\":\"a.gt.png\"}\n"
               "\n"
               "{\"id\":\"b\",\"image\":\"/abs/b.png\",\"heatmap\":\"b.sgsm\",\"saliency\":\"b.sal\","
               "\"labels\":[3]}\n");
    const auto records = parse_manifest((dir / "m.jsonl").string());
    REQUIRE(records.size() == 2);
    CHECK(records[0].id == "a");
    CHECK(records[0].image == (dir / "a.png").string());
    CHECK(records[0].gt == (dir / "a.gt.png").string());
    CHECK(records[1].image == "/abs/b.png"); // absolute paths kept
    CHECK(records[1].gt.empty());

    write_text(dir / "dup.jsonl",
               "{\"id\":\"a\",\"image\":\"x\",\"heatmap\":\"x\",\"saliency\":\"x\",\"labels\":[1]}\n"
               "{\"id\":\"a\",\"image\":\"y\",\"heatmap\":\"y\",\"saliency\":\"y\",\"labels\":[1]}\n");
    CHECK_THROWS_AS(parse_manifest((dir / "dup.jsonl").string()), FormatError);

    write_text(dir / "bad.jsonl", "{not json}\n");
    CHECK_THROWS_AS(parse_manifest((dir / "bad.jsonl").string()), FormatError);
}

TEST_CASE("run_image with seeds-only is exactly extract_seeds") {
    const auto dir = fresh_dir("seeds_only");
    const auto manifest = generate_fixture_dataset(dir.string(), 3, small_scene_spec(), 7);
    const auto records = parse_manifest(manifest);
    RunConfig cfg;
    cfg.num_classes = 3;
    for (size_t i = 0; i < records.size(); ++i) {
        const GuideResult out = run_image(records[i], cfg, i);
        const ScoreMap scores = normalize_scores(read_score_map(records[i].heatmap));
        const LabelMask expected =
            extract_seeds(scores, ImageLabels(records[i].labels, 3));
        REQUIRE(out.mask == expected);
    }
}

TEST_CASE("run_image g2 with an all-zero saliency map returns the seeds over background") {
    const auto dir = fresh_dir("g2_empty_sal");
    const auto manifest = generate_fixture_dataset(dir.string(), 1, small_scene_spec(), 3);
    auto records = parse_manifest(manifest);
    // overwrite the saliency file with zeros
    const ScoreMap zeros(1, 24, 24);
    write_score_map(zeros, records[0].saliency);
    RunConfig cfg;
    cfg.num_classes = 3;
    cfg.strategy = Strategy::G2;
    const GuideResult g2 = run_image(records[0], cfg, 0);
    cfg.strategy = Strategy::SeedsOnly;
    const GuideResult seeds = run_image(records[0], cfg, 0);
    CHECK(g2.mask == seeds.mask);
}

TEST_CASE("g0 strategy is keyed by manifest position, not scheduling") {
    const auto dir = fresh_dir("g0");
    const auto manifest = generate_fixture_dataset(dir.string(), 6, small_scene_spec(), 21);
    const auto records = parse_manifest(manifest);
    RunConfig cfg;
    cfg.num_classes = 3;
    cfg.strategy = Strategy::G0;
    cfg.rng_seed = 5;
    std::vector<LabelMask> first;
    for (size_t i = 0; i < records.size(); ++i) first.push_back(run_image(records[i], cfg, i).mask);
    // reprocessing any record with its position reproduces the mask
    for (size_t i : {size_t{0}, size_t{3}, size_t{5}})
        CHECK(run_image(records[i], cfg, i).mask == first[i]);
    // a different position generally draws a different class: just assert the
    // draw is position-dependent by checking the key stream differs
    CHECK(g0_stream_key(5, 0) != g0_stream_key(5, 1));
}

TEST_CASE("run_manifest output bytes are identical across worker counts") {
    const auto data = fresh_dir("det_data");
    const auto manifest = generate_fixture_dataset(data.string(), 12, small_scene_spec(), 77);
    const auto records = parse_manifest(manifest);

    auto run_with = [&](int workers, const std::string& tag) {
        RunConfig cfg;
        cfg.num_classes = 3;
        cfg.strategy = Strategy::G2;
        cfg.output_dir = (fresh_dir("det_out_" + tag)).string();
        const RunReport report = run_manifest(records, cfg, workers);
        REQUIRE(report.failures.empty());
        std::vector<std::vector<std::uint8_t>> bytes;
        for (const auto& r : records)
            bytes.push_back(file_bytes(fs::path(cfg.output_dir) / (r.id + ".png")));
        const std::string report_json = report.to_json().dump();
        bytes.emplace_back(report_json.begin(), report_json.end());
        return bytes;
    };
    const auto a = run_with(1, "w1");
    const auto b = run_with(3, "w3");
    const auto c = run_with(1, "w1again");
    CHECK(a == b);
    CHECK(a == c);
}

TEST_CASE("empty manifest yields an empty report") {
    RunConfig cfg;
    const RunReport report = run_manifest({}, cfg, 2);
    CHECK(report.images == 0);
    CHECK(report.failures.empty());
    CHECK_FALSE(report.any_gt);
}

TEST_CASE("report quality equals the sum of per-image counts") {
    const auto dir = fresh_dir("additivity");
    const auto manifest = generate_fixture_dataset(dir.string(), 8, small_scene_spec(), 55);
    const auto records = parse_manifest(manifest);
    RunConfig cfg;
    cfg.num_classes = 3;
    cfg.strategy = Strategy::G2;
    const RunReport report = run_manifest(records, cfg, 2);
    REQUIRE(report.failures.empty());
    REQUIRE(report.any_gt);

    GuideQualityCounts expected(3);
    for (size_t i = 0; i < records.size(); ++i) {
        const GuideResult guide = run_image(records[i], cfg, i);
        const LabelMask gt = read_label_mask(records[i].gt, 3);
        expected.add(gt, guide.mask);
    }
    CHECK(report.quality.tp == expected.tp);
    CHECK(report.quality.predicted == expected.predicted);
    CHECK(report.quality.truth == expected.truth);
}

TEST_CASE("perfect guides score perfect quality") {
    const auto dir = fresh_dir("perfect");
    SceneSpec spec = small_scene_spec();
    spec.noise_amplitude = 0.f;
    spec.blur_radius = 0;
    spec.core_shrink = 1.f;
    spec.distractors = 0;
    const auto manifest = generate_fixture_dataset(dir.string(), 4, spec, 11);
    const auto records = parse_manifest(manifest);
    RunConfig cfg;
    cfg.num_classes = 3;
    const RunReport report = run_manifest(records, cfg, 1);
    REQUIRE(report.failures.empty());
    const GuideQuality q = report.quality.finalize();
    CHECK(*q.fg_precision == 1.0);
    CHECK(*q.fg_recall == 1.0);
    CHECK(*q.bg_precision == 1.0);
    CHECK(*q.bg_recall == 1.0);
    const IouReport iou = miou(report.confusion);
    CHECK(iou.mean == 1.0);
}

TEST_CASE("failing records are collected, the rest proceed") {
    const auto dir = fresh_dir("failures");
    const auto manifest = generate_fixture_dataset(dir.string(), 3, small_scene_spec(), 13);
    auto records = parse_manifest(manifest);
    records[1].heatmap = (dir / "missing.sgsm").string();
    RunConfig cfg;
    cfg.num_classes = 3;
    const RunReport report = run_manifest(records, cfg, 2);
    REQUIRE(report.failures.size() == 1);
    CHECK(report.failures[0].first == "img0001");
    CHECK(report.images == 3);

    cfg.strict = true;
    const RunReport strict_report = run_manifest(records, cfg, 1);
    CHECK_FALSE(strict_report.failures.empty());
}

TEST_CASE("GUIDESEG_THREADS caps the worker pool") {
    ::setenv("GUIDESEG_THREADS", "2", 1);
    CHECK(effective_workers(8) == 2);
    CHECK(effective_workers(1) == 1);
    ::unsetenv("GUIDESEG_THREADS");
    CHECK(effective_workers(8) == 8);
}

TEST_CASE("crf stages compose with the strategies") {
    const auto dir = fresh_dir("stages");
    SceneSpec spec = small_scene_spec();
    const auto manifest = generate_fixture_dataset(dir.string(), 2, spec, 31);
    const auto records = parse_manifest(manifest);
    RunConfig cfg;
    cfg.num_classes = 3;
    cfg.strategy = Strategy::G2;
    cfg.stage_crf_seed = true;
    cfg.stage_crf_postproc = true;
    cfg.crf.iterations = 3;
    for (size_t i = 0; i < records.size(); ++i) {
        const GuideResult out = run_image(records[i], cfg, i);
        REQUIRE(out.mask.height == 24);
        // post-processing commits every pixel: no ignore left
        CHECK(out.histogram[255] == 0);
        std::uint64_t total = 0;
        for (auto v : out.histogram) total += v;
        CHECK(total == 24u * 24u);
    }
}
