#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "json.hpp"

#include "guideseg/common.hpp"
#include "guideseg/densecrf.hpp"
#include "guideseg/fixtures.hpp"
#include "guideseg/guides.hpp"
#include "guideseg/io.hpp"
#include "guideseg/metrics.hpp"
#include "guideseg/scores_file.hpp"
#include "guideseg/seeder.hpp"

namespace guideseg {

// ---------------------------------------------------------------------------
// Manifest (JSON Lines, one record per line)
// ---------------------------------------------------------------------------

struct ManifestRecord {
    std::string id;
    std::string image;
    std::string heatmap;
    std::string saliency;
    std::vector<int> labels;
    std::string gt; // empty = none
};

inline std::vector<ManifestRecord> parse_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path + "'");
    const auto base = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        if (p.empty()) return p;
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).string();
    };

    std::vector<ManifestRecord> records;
    std::map<std::string, int> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("manifest '" + path + "' line " + std::to_string(lineno) +
                              ": invalid JSON: " + e.what());
        }
        ManifestRecord r;
        try {
            r.id = j.at("id").get<std::string>();
            r.image = resolve(j.at("image").get<std::string>());
            r.heatmap = resolve(j.at("heatmap").get<std::string>());
            r.saliency = resolve(j.at("saliency").get<std::string>());
            r.labels = j.at("labels").get<std::vector<int>>();
            if (j.contains("gt") && !j["gt"].is_null())
                r.gt = resolve(j["gt"].get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("manifest '" + path + "' line " + std::to_string(lineno) + ": " +
                              e.what());
        }
        if (!seen.emplace(r.id, lineno).second)
            throw FormatError("manifest '" + path + "' line " + std::to_string(lineno) +
                              ": duplicate id '" + r.id + "'");
        records.push_back(std::move(r));
    }
    return records;
}

// ---------------------------------------------------------------------------
// Run configuration (flat-key TOML subset; see README for the grammar)
// ---------------------------------------------------------------------------

enum class Strategy { SeedsOnly, G0, G1, G2 };

inline Strategy strategy_from_name(const std::string& s) {
    if (s == "seeds-only") return Strategy::SeedsOnly;
    if (s == "g0") return Strategy::G0;
    if (s == "g1") return Strategy::G1;
    if (s == "g2") return Strategy::G2;
    throw UsageError("unknown strategy '" + s + "' (expected seeds-only, g0, g1 or g2)");
}

struct RunConfig {
    Strategy strategy = Strategy::SeedsOnly;
    float tau = 0.2f;
    CrfParams crf{};                 // default: preset v2
    bool stage_crf_seed = false;     // crf-seed before fusion
    bool stage_crf_postproc = false; // crf-postproc after fusion
    std::uint64_t rng_seed = 0;
    Connectivity connectivity = Connectivity::Eight;
    double area_fraction = 0.01;
    std::string output_dir;
    float crf_confidence = kSeedConfidence;
    bool crf_approx = false;
    int num_classes = 20;
    bool strict = false;
    std::string g1_scores; // required for strategy g1
};

namespace detail {

using TomlValue = std::variant<std::string, double, bool, std::vector<std::string>>;

inline std::string toml_strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline TomlValue toml_parse_value(std::string v, const std::string& where) {
    v = toml_strip(v);
    if (v.empty()) throw FormatError(where + ": empty value");
    if (v.front() == '"') {
        const auto end = v.find('"', 1);
        if (end == std::string::npos) throw FormatError(where + ": unterminated string");
        return v.substr(1, end - 1);
    }
    if (v.front() == '[') {
        const auto end = v.find(']');
        if (end == std::string::npos) throw FormatError(where + ": unterminated array");
        std::vector<std::string> items;
        std::string body = v.substr(1, end - 1);
        size_t pos = 0;
        while (pos < body.size()) {
            auto comma = body.find(',', pos);
            if (comma == std::string::npos) comma = body.size();
            std::string item = toml_strip(body.substr(pos, comma - pos));
            if (!item.empty()) {
                if (item.front() == '"' && item.back() == '"' && item.size() >= 2)
                    item = item.substr(1, item.size() - 2);
                items.push_back(item);
            }
            pos = comma + 1;
        }
        return items;
    }
    // strip a trailing comment
    const auto hash = v.find('#');
    if (hash != std::string::npos) v = toml_strip(v.substr(0, hash));
    if (v == "true") return true;
    if (v == "false") return false;
    try {
        size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (...) {
    }
    throw FormatError(where + ": cannot parse value '" + v + "'");
}

inline std::map<std::string, TomlValue> parse_flat_toml(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::map<std::string, TomlValue> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = "config '" + path + "' line " + std::to_string(lineno);
        std::string t = toml_strip(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw FormatError(where + ": expected key = value");
        const std::string key = toml_strip(t.substr(0, eq));
        if (key.empty()) throw FormatError(where + ": empty key");
        out[key] = toml_parse_value(t.substr(eq + 1), where);
    }
    return out;
}

} // namespace detail

inline RunConfig load_run_config(const std::string& path) {
    const auto kv = detail::parse_flat_toml(path);
    RunConfig cfg;
    auto str = [&](const char* key) -> std::optional<std::string> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        if (const auto* s = std::get_if<std::string>(&it->second)) return *s;
        throw FormatError(std::string("config key '") + key + "' must be a string");
    };
    auto num = [&](const char* key) -> std::optional<double> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        if (const auto* d = std::get_if<double>(&it->second)) return *d;
        throw FormatError(std::string("config key '") + key + "' must be a number");
    };
    auto boolean = [&](const char* key) -> std::optional<bool> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        if (const auto* b = std::get_if<bool>(&it->second)) return *b;
        throw FormatError(std::string("config key '") + key + "' must be a boolean");
    };

    if (auto v = str("strategy")) cfg.strategy = strategy_from_name(*v);
    if (auto v = num("tau")) cfg.tau = static_cast<float>(*v);
    if (auto v = str("crf_preset")) cfg.crf = crf_preset(*v);
    if (auto v = num("crf_w1")) cfg.crf.w1 = static_cast<float>(*v);
    if (auto v = num("crf_theta_alpha")) cfg.crf.theta_alpha = static_cast<float>(*v);
    if (auto v = num("crf_theta_beta")) cfg.crf.theta_beta = static_cast<float>(*v);
    if (auto v = num("crf_w2")) cfg.crf.w2 = static_cast<float>(*v);
    if (auto v = num("crf_theta_gamma")) cfg.crf.theta_gamma = static_cast<float>(*v);
    if (auto v = num("crf_iterations")) cfg.crf.iterations = static_cast<int>(*v);
    if (auto v = num("rng_seed")) cfg.rng_seed = static_cast<std::uint64_t>(*v);
    if (auto v = num("connectivity")) {
        if (*v != 4.0 && *v != 8.0) throw UsageError("connectivity must be 4 or 8");
        cfg.connectivity = *v == 4.0 ? Connectivity::Four : Connectivity::Eight;
    }
    if (auto v = num("area_fraction")) cfg.area_fraction = *v;
    if (auto v = str("output_dir")) cfg.output_dir = *v;
    if (auto v = num("crf_confidence")) cfg.crf_confidence = static_cast<float>(*v);
    if (auto v = boolean("crf_approx")) cfg.crf_approx = *v;
    if (auto v = num("num_classes")) cfg.num_classes = static_cast<int>(*v);
    if (auto v = boolean("strict")) cfg.strict = *v;
    if (auto v = str("g1_scores")) cfg.g1_scores = *v;
    if (auto it = kv.find("crf_stages"); it != kv.end()) {
        const auto* stages = std::get_if<std::vector<std::string>>(&it->second);
        if (!stages) throw FormatError("config key 'crf_stages' must be an array");
        for (const auto& s : *stages) {
            if (s == "seed")
                cfg.stage_crf_seed = true;
            else if (s == "postproc")
                cfg.stage_crf_postproc = true;
            else
                throw UsageError("unknown crf stage '" + s + "' (expected seed or postproc)");
        }
    }
    validate_crf_params(cfg.crf);
    if (cfg.tau < 0.f || cfg.tau > 1.f) throw UsageError("tau must be in [0,1]");
    if (cfg.num_classes < 1 || cfg.num_classes > 254)
        throw UsageError("num_classes must be in 1..254");
    if (cfg.strategy == Strategy::G1 && cfg.g1_scores.empty())
        throw UsageError("strategy g1 requires a g1_scores file");
    return cfg;
}

// ---------------------------------------------------------------------------
// Per-image orchestration
// ---------------------------------------------------------------------------

/// Saliency arrives either as a 1-channel SGSM probability map (thresholded
/// at 50% of its maximum) or as a ready-made 0/255 grayscale PNG.
inline BinaryMask load_saliency(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("cannot open '" + path + "' for reading");
    char magic[4] = {};
    probe.read(magic, 4);
    probe.close();
    if (std::memcmp(magic, "SGSM", 4) == 0) {
        const ScoreMap prob = read_score_map(path);
        if (prob.channels != 1)
            throw FormatError("'" + path + "': saliency score map must have one channel");
        return binarize_saliency(prob);
    }
    return read_binary_mask(path);
}

namespace detail {

/// crf stage applied to a label mask: seeded unaries on committed pixels,
/// uniform unaries on ignore pixels, over {background} + classes present.
/// With fewer than two labels present there is nothing to infer.
inline LabelMask apply_crf_stage(const LabelMask& mask, const RgbImage& image,
                                 const CrfParams& params, float confidence,
                                 const MeanFieldOptions& opts) {
    bool present[256] = {};
    present[0] = true;
    for (std::uint8_t v : mask.data)
        if (v != kIgnoreLabel) present[v] = true;
    std::vector<std::uint8_t> values;
    for (int v = 0; v < 255; ++v)
        if (present[v]) values.push_back(static_cast<std::uint8_t>(v));
    const int L = static_cast<int>(values.size());
    if (L < 2) return mask;

    std::vector<int> channel_of(256, -1);
    for (int l = 0; l < L; ++l) channel_of[values[static_cast<size_t>(l)]] = l;

    UnaryField unary(L, mask.height, mask.width);
    const float own = -std::log(confidence);
    const float other = -std::log((1.f - confidence) / static_cast<float>(L - 1));
    const float uniform = -std::log(1.f / static_cast<float>(L));
    for (size_t i = 0; i < mask.data.size(); ++i) {
        float* u = unary.data.data() + i * L;
        if (mask.data[i] == kIgnoreLabel) {
            for (int l = 0; l < L; ++l) u[l] = uniform;
        } else {
            const int lc = channel_of[mask.data[i]];
            for (int l = 0; l < L; ++l) u[l] = l == lc ? own : other;
        }
    }
    const MarginalField q = mean_field(unary, image, params, opts);
    LabelMask out(mask.height, mask.width);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            out.at(y, x) = values[static_cast<size_t>(q.argmax(y, x))];
    return out;
}

} // namespace detail

/// normalize -> extract_seeds -> (crf-seed) -> strategy -> (crf-postproc).
/// Deterministic in (record, cfg, manifest position); writes the guide mask
/// to output_dir/<id>.png when output_dir is set.
inline GuideResult run_image(const ManifestRecord& record, const RunConfig& cfg,
                             size_t manifest_position,
                             const std::map<std::string, G1Scores>* g1_scores = nullptr) {
    const ScoreMap heat = read_score_map(record.heatmap);
    if (heat.channels != cfg.num_classes)
        throw DataError("heatmap '" + record.heatmap + "' has " +
                        std::to_string(heat.channels) + " channels, expected " +
                        std::to_string(cfg.num_classes));
    const ScoreMap normalized = normalize_scores(heat);
    const ImageLabels labels(record.labels, cfg.num_classes);
    SeederConfig seeder_cfg;
    seeder_cfg.tau = cfg.tau;
    LabelMask seeds = extract_seeds(normalized, labels, seeder_cfg);

    const bool needs_image = cfg.stage_crf_seed || cfg.stage_crf_postproc ||
                             cfg.strategy == Strategy::G2;
    RgbImage image;
    if (needs_image) {
        image = read_rgb_image(record.image);
        if (image.height != heat.height || image.width != heat.width)
            throw DataError("'" + record.image + "': image and heatmap dimensions differ");
    }
    const MeanFieldOptions mf{cfg.crf_approx, 1};
    if (cfg.stage_crf_seed)
        seeds = crf_seed(seeds, image, cfg.crf, cfg.crf_confidence, mf);

    LabelMask mask;
    switch (cfg.strategy) {
        case Strategy::SeedsOnly:
            mask = seeds;
            break;
        case Strategy::G0: {
            const BinaryMask sal = load_saliency(record.saliency);
            if (sal.height != heat.height || sal.width != heat.width)
                throw DataError("'" + record.saliency + "': saliency and heatmap dimensions differ");
            mask = guide_g0(sal, labels, g0_stream_key(cfg.rng_seed, manifest_position)).mask;
            break;
        }
        case Strategy::G1: {
            const BinaryMask sal = load_saliency(record.saliency);
            if (sal.height != heat.height || sal.width != heat.width)
                throw DataError("'" + record.saliency + "': saliency and heatmap dimensions differ");
            if (!g1_scores) throw UsageError("strategy g1 requires a scores file");
            const auto it = g1_scores->find(record.id);
            if (it == g1_scores->end())
                throw DataError("g1 scores file has no entry for image '" + record.id + "'");
            const ComponentSet fg = filter_by_area(
                label_components(sal, cfg.connectivity), cfg.area_fraction);
            mask = guide_g1(fg, labels, it->second).mask;
            break;
        }
        case Strategy::G2: {
            const BinaryMask sal = load_saliency(record.saliency);
            if (sal.height != heat.height || sal.width != heat.width)
                throw DataError("'" + record.saliency + "': saliency and heatmap dimensions differ");
            G2Options opts;
            opts.connectivity = cfg.connectivity;
            opts.area_fraction = cfg.area_fraction;
            opts.crf = mf;
            mask = guide_g2(seeds, sal, image, cfg.crf, opts).mask;
            break;
        }
    }
    if (cfg.stage_crf_postproc)
        mask = detail::apply_crf_stage(mask, image, cfg.crf, cfg.crf_confidence, mf);

    if (!cfg.output_dir.empty()) {
        std::filesystem::create_directories(cfg.output_dir);
        write_label_mask(mask, (std::filesystem::path(cfg.output_dir) / (record.id + ".png")).string());
    }
    return make_guide_result(std::move(mask));
}

// ---------------------------------------------------------------------------
// Batch execution
// ---------------------------------------------------------------------------

struct RunReport {
    size_t images = 0;
    std::vector<std::pair<std::string, std::string>> failures; // (id, error)
    std::array<std::uint64_t, 256> histogram{};
    GuideQualityCounts quality{20};
    bool any_gt = false;
    ConfusionMatrix confusion{20};

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["images"] = images;
        j["failed"] = failures.size();
        nlohmann::ordered_json fails = nlohmann::ordered_json::array();
        for (const auto& [id, err] : failures) fails.push_back({{"id", id}, {"error", err}});
        j["failures"] = std::move(fails);
        nlohmann::ordered_json hist;
        hist["background"] = histogram[0];
        std::uint64_t fg = 0;
        for (int c = 1; c < 255; ++c) fg += histogram[static_cast<size_t>(c)];
        hist["foreground"] = fg;
        hist["ignore"] = histogram[255];
        j["pixels"] = std::move(hist);
        if (any_gt) {
            const GuideQuality q = quality.finalize();
            nlohmann::ordered_json gq;
            auto put = [&](const char* key, const std::optional<double>& v) {
                if (v)
                    gq[key] = *v;
                else
                    gq[key] = nullptr;
            };
            put("fg_precision", q.fg_precision);
            put("fg_recall", q.fg_recall);
            put("bg_precision", q.bg_precision);
            put("bg_recall", q.bg_recall);
            j["guide_quality"] = std::move(gq);
            try {
                const IouReport iou = miou(confusion);
                nlohmann::ordered_json per;
                for (size_t c = 0; c < iou.per_class.size(); ++c)
                    if (iou.per_class[c])
                        per[std::to_string(c)] = *iou.per_class[c];
                j["miou"] = iou.mean;
                j["per_class_iou"] = std::move(per);
            } catch (const DataError&) {
                j["miou"] = nullptr;
            }
        }
        return j;
    }
};

inline int effective_workers(int requested) {
    int workers = requested > 0 ? requested
                                : static_cast<int>(std::thread::hardware_concurrency());
    if (workers < 1) workers = 1;
    if (const char* cap = std::getenv("GUIDESEG_THREADS")) {
        const int c = std::atoi(cap);
        if (c > 0) workers = std::min(workers, c);
    }
    return workers;
}

/// Processes every record on a bounded worker pool. The report is merged in
/// manifest order, so its bytes do not depend on the worker count. Outputs
/// with ignore pixels are scored through guide_quality only; the confusion
/// matrix (which rejects predicted ignore) accumulates over ignore-free
/// outputs. In strict mode scheduling stops at the first failure and the
/// remaining records are reported as skipped.
inline RunReport run_manifest(const std::vector<ManifestRecord>& records, const RunConfig& cfg,
                              int workers = 0) {
    struct PerRecord {
        bool ok = false;
        std::string error;
        std::array<std::uint64_t, 256> histogram{};
        bool has_gt = false;
        GuideQualityCounts quality;
        ConfusionMatrix confusion;
        bool confusion_valid = false;
        PerRecord(int c) : quality(c), confusion(c) {}
    };

    std::map<std::string, G1Scores> g1_scores;
    if (cfg.strategy == Strategy::G1) {
        if (cfg.g1_scores.empty()) throw UsageError("strategy g1 requires a g1_scores file");
        g1_scores = load_g1_scores(cfg.g1_scores);
    }

    std::vector<PerRecord> results(records.size(), PerRecord(cfg.num_classes));
    std::atomic<size_t> next{0};
    std::atomic<bool> stop{false};

    auto process = [&](size_t i) {
        PerRecord& res = results[i];
        try {
            const GuideResult guide =
                run_image(records[i], cfg, i, cfg.strategy == Strategy::G1 ? &g1_scores : nullptr);
            res.histogram = guide.histogram;
            if (!records[i].gt.empty()) {
                const LabelMask gt = read_label_mask(records[i].gt, cfg.num_classes);
                if (gt.height != guide.mask.height || gt.width != guide.mask.width)
                    throw DataError("'" + records[i].gt + "': ground truth dimensions differ");
                res.has_gt = true;
                res.quality.add(gt, guide.mask);
                if (guide.histogram[255] == 0) {
                    accumulate_confusion(res.confusion, gt, guide.mask);
                    res.confusion_valid = true;
                }
            }
            res.ok = true;
        } catch (const std::exception& e) {
            res.error = std::string(e.what());
            if (cfg.strict) stop.store(true);
        }
    };

    const int pool_size = static_cast<int>(
        std::min<size_t>(static_cast<size_t>(effective_workers(workers)),
                         std::max<size_t>(records.size(), 1)));
    if (pool_size <= 1) {
        for (size_t i = 0; i < records.size() && !stop.load(); ++i) process(i);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < pool_size; ++t)
            pool.emplace_back([&] {
                for (;;) {
                    const size_t i = next.fetch_add(1);
                    if (i >= records.size() || stop.load()) return;
                    process(i);
                }
            });
        for (auto& th : pool) th.join();
    }

    RunReport report;
    report.images = records.size();
    report.quality = GuideQualityCounts(cfg.num_classes);
    report.confusion = ConfusionMatrix(cfg.num_classes);
    for (size_t i = 0; i < records.size(); ++i) {
        const PerRecord& res = results[i];
        if (!res.ok) {
            report.failures.emplace_back(records[i].id,
                                         res.error.empty() ? "skipped (strict abort)" : res.error);
            continue;
        }
        for (size_t v = 0; v < 256; ++v) report.histogram[v] += res.histogram[v];
        if (res.has_gt) {
            report.any_gt = true;
            report.quality += res.quality;
            if (res.confusion_valid) report.confusion += res.confusion;
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Synthetic dataset emission (fixtures External Interface)
// ---------------------------------------------------------------------------

/// Writes `count` scenes plus a manifest.jsonl into `dir` and returns the
/// manifest path. Scene i uses the (i+1)-th key of the seed stream.
inline std::string generate_fixture_dataset(const std::string& dir, int count,
                                            const SceneSpec& base, std::uint64_t dataset_seed) {
    if (count < 0) throw UsageError("fixture count must be non-negative");
    std::filesystem::create_directories(dir);
    const std::filesystem::path root(dir);
    std::ofstream manifest(root / "manifest.jsonl", std::ios::trunc);
    if (!manifest) throw IoError("cannot write manifest in '" + dir + "'");
    for (int i = 0; i < count; ++i) {
        SceneSpec spec = base;
        spec.seed = g0_stream_key(dataset_seed, static_cast<std::uint64_t>(i));
        const SyntheticScene scene = generate_scene(spec);
        char id[32];
        std::snprintf(id, sizeof(id), "img%04d", i);
        write_rgb_image(scene.image, (root / (std::string(id) + ".png")).string());
        write_score_map(scene.scores, (root / (std::string(id) + ".heat.sgsm")).string());
        write_score_map(scene.saliency, (root / (std::string(id) + ".sal.sgsm")).string());
        write_label_mask(scene.gt, (root / (std::string(id) + ".gt.png")).string());
        nlohmann::ordered_json j;
        j["id"] = id;
        j["image"] = std::string(id) + ".png";
        j["heatmap"] = std::string(id) + ".heat.sgsm";
        j["saliency"] = std::string(id) + ".sal.sgsm";
        nlohmann::ordered_json lbl = nlohmann::ordered_json::array();
        for (std::uint8_t c : scene.labels.present) lbl.push_back(static_cast<int>(c));
        j["labels"] = std::move(lbl);
        j["gt"] = std::string(id) + ".gt.png";
        manifest << j.dump() << "\n";
    }
    return (root / "manifest.jsonl").string();
}

} // namespace guideseg
