// guideseg: weak-supervision guide labelling and evaluation CLI.
//
// Subcommands: seed, fuse, crf, export-components, eval, prcurve, mp, run,
// fixtures generate. Exit codes: 0 success, 1 record/data failures,
// 2 usage or format errors.

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "guideseg/guideseg.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::vector<int> parse_label_list(const std::vector<std::string>& tokens,
                                  const guideseg::ClassRegistry& registry) {
    std::vector<int> out;
    for (const auto& t : tokens) {
        size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(t, &used);
        } catch (...) {
            used = 0;
        }
        if (used == t.size()) {
            out.push_back(v);
            continue;
        }
        const int idx = registry.index_of(t);
        if (idx == 0) throw guideseg::UsageError("unknown class '" + t + "'");
        out.push_back(idx);
    }
    return out;
}

guideseg::CrfParams crf_from_flags(const std::string& preset, std::optional<double> w1,
                                   std::optional<double> ta, std::optional<double> tb,
                                   std::optional<double> w2, std::optional<double> tg,
                                   std::optional<int> iters) {
    guideseg::CrfParams p = guideseg::crf_preset(preset);
    if (w1) p.w1 = static_cast<float>(*w1);
    if (ta) p.theta_alpha = static_cast<float>(*ta);
    if (tb) p.theta_beta = static_cast<float>(*tb);
    if (w2) p.w2 = static_cast<float>(*w2);
    if (tg) p.theta_gamma = static_cast<float>(*tg);
    if (iters) p.iterations = *iters;
    guideseg::validate_crf_params(p);
    return p;
}

ordered_json curve_to_json(const guideseg::PrCurve& curve) {
    ordered_json points = ordered_json::array();
    for (const auto& p : curve.points) {
        ordered_json pt;
        pt["tau"] = p.tau;
        if (p.precision)
            pt["precision"] = *p.precision;
        else
            pt["precision"] = nullptr;
        pt["recall"] = p.recall;
        points.push_back(std::move(pt));
    }
    ordered_json j;
    j["points"] = std::move(points);
    return j;
}

guideseg::PrCurve curve_from_json(const nlohmann::json& j, int class_id) {
    guideseg::PrCurve curve;
    curve.class_id = class_id;
    for (const auto& pt : j.at("points")) {
        guideseg::PrCurve::Point p;
        p.tau = pt.at("tau").get<double>();
        if (!pt.at("precision").is_null()) p.precision = pt["precision"].get<double>();
        p.recall = pt.at("recall").get<double>();
        curve.points.push_back(p);
    }
    return curve;
}

ordered_json sweep_to_json(const guideseg::PrSweepResult& sweep) {
    ordered_json j;
    j["foreground_mean"] = curve_to_json(sweep.fg_mean);
    j["background"] = curve_to_json(sweep.background);
    ordered_json per = ordered_json::object();
    for (const auto& c : sweep.per_class) per[std::to_string(c.class_id)] = curve_to_json(c);
    j["per_class"] = std::move(per);
    j["mp"] = guideseg::mp(sweep.fg_mean, sweep.background);
    return j;
}

void write_sweep_csv(const guideseg::PrSweepResult& sweep, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw guideseg::IoError("cannot open '" + path + "' for writing");
    out << "tau,precision,recall,class\n";
    auto emit = [&](const guideseg::PrCurve& c, const std::string& name) {
        for (const auto& p : c.points) {
            out << p.tau << ",";
            if (p.precision) out << *p.precision;
            out << "," << p.recall << "," << name << "\n";
        }
    };
    emit(sweep.fg_mean, "foreground_mean");
    emit(sweep.background, "background");
    for (const auto& c : sweep.per_class) emit(c, std::to_string(c.class_id));
}

void emit_json(const ordered_json& j, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        std::ofstream out(out_path, std::ios::trunc);
        if (!out) throw guideseg::IoError("cannot open '" + out_path + "' for writing");
        out << j.dump(2) << "\n";
    }
}

std::vector<float> default_taus() {
    std::vector<float> taus;
    for (int i = 19; i >= 1; --i) taus.push_back(static_cast<float>(i) / 20.f);
    return taus;
}

std::vector<guideseg::PrSample> sweep_samples_from_manifest(
    const std::vector<guideseg::ManifestRecord>& records, int num_classes) {
    std::vector<guideseg::PrSample> samples;
    for (const auto& r : records) {
        if (r.gt.empty()) continue;
        guideseg::PrSample s;
        s.scores = guideseg::normalize_scores(guideseg::read_score_map(r.heatmap));
        s.labels = guideseg::ImageLabels(r.labels, num_classes);
        s.gt = guideseg::read_label_mask(r.gt, num_classes);
        samples.push_back(std::move(s));
    }
    return samples;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"guide labelling from seeds, saliency and image-level labels"};
    app.require_subcommand(1);
    int num_classes = 20;
    app.add_option("--num-classes", num_classes, "foreground class count (default: 20, Pascal)");

    // ---- seed ----
    auto* seed_cmd = app.add_subcommand("seed", "extract seed labels from a heatmap");
    std::string seed_heatmap, seed_out;
    std::vector<std::string> seed_labels;
    double seed_tau = 0.2;
    bool seed_no_restrict = false;
    seed_cmd->add_option("--heatmap", seed_heatmap, "SGSM heatmap")->required();
    seed_cmd->add_option("--labels", seed_labels, "image-level labels (ids or names)")
        ->delimiter(',');
    seed_cmd->add_option("--tau", seed_tau, "foreground threshold (default 0.2)");
    seed_cmd->add_flag("--no-restrict", seed_no_restrict, "consider all channels");
    seed_cmd->add_option("--out", seed_out, "output mask PNG")->required();

    // ---- fuse ----
    auto* fuse_cmd = app.add_subcommand("fuse", "fuse seeds/saliency/labels into a guide mask");
    std::string fuse_strategy, fuse_saliency, fuse_seeds, fuse_image, fuse_out, fuse_scores,
        fuse_id, fuse_preset = "v2";
    std::vector<std::string> fuse_labels;
    std::uint64_t fuse_rng_seed = 0;
    int fuse_conn = 8;
    double fuse_area = 0.01;
    bool fuse_approx = false;
    fuse_cmd->add_option("--strategy", fuse_strategy, "g0, g1 or g2")->required();
    fuse_cmd->add_option("--saliency", fuse_saliency, "saliency mask (PNG or SGSM)")->required();
    fuse_cmd->add_option("--seeds", fuse_seeds, "seed mask PNG (g2)");
    fuse_cmd->add_option("--image", fuse_image, "RGB image (g2)");
    fuse_cmd->add_option("--labels", fuse_labels, "image labels (g0/g1)")->delimiter(',');
    fuse_cmd->add_option("--g1-scores", fuse_scores, "G1 classifier scores JSON");
    fuse_cmd->add_option("--id", fuse_id, "image id inside the scores file (g1)");
    fuse_cmd->add_option("--rng-seed", fuse_rng_seed, "G0 random seed");
    fuse_cmd->add_option("--preset", fuse_preset, "CRF preset v1/v2 (g2)");
    fuse_cmd->add_option("--connectivity", fuse_conn, "4 or 8 (default 8)");
    fuse_cmd->add_option("--area-fraction", fuse_area, "min component area (default 0.01)");
    fuse_cmd->add_flag("--approx", fuse_approx, "allow truncated CRF on large regions");
    fuse_cmd->add_option("--out", fuse_out, "output guide PNG")->required();

    // ---- crf ----
    auto* crf_cmd = app.add_subcommand("crf", "dense-CRF refinement of a mask or probability map");
    std::string crf_stage, crf_in, crf_image, crf_out, crf_preset_name = "v2";
    double crf_confidence = 0.9;
    std::optional<double> crf_w1, crf_ta, crf_tb, crf_w2, crf_tg;
    std::optional<int> crf_iters;
    bool crf_approx = false;
    crf_cmd->add_option("stage", crf_stage, "seed or postproc")->required();
    crf_cmd->add_option("--in", crf_in, "input mask PNG or SGSM probabilities")->required();
    crf_cmd->add_option("--image", crf_image, "RGB image")->required();
    crf_cmd->add_option("--preset", crf_preset_name, "v1 or v2 (default v2)");
    crf_cmd->add_option("--w1", crf_w1, "appearance weight override");
    crf_cmd->add_option("--theta-alpha", crf_ta, "appearance spatial bandwidth");
    crf_cmd->add_option("--theta-beta", crf_tb, "appearance color bandwidth");
    crf_cmd->add_option("--w2", crf_w2, "smoothness weight override");
    crf_cmd->add_option("--theta-gamma", crf_tg, "smoothness bandwidth");
    crf_cmd->add_option("--iterations", crf_iters, "mean-field iterations (default 10)");
    crf_cmd->add_option("--confidence", crf_confidence, "seed label confidence (default 0.9)");
    crf_cmd->add_flag("--approx", crf_approx, "truncated kernel for large inputs");
    crf_cmd->add_option("--out", crf_out, "output mask PNG")->required();

    // ---- export-components ----
    auto* exp_cmd = app.add_subcommand("export-components",
                                       "write each saliency component as mask and masked image");
    std::string exp_saliency, exp_image, exp_id, exp_out;
    int exp_conn = 8;
    double exp_area = 0.01;
    exp_cmd->add_option("--saliency", exp_saliency, "saliency mask (PNG or SGSM)")->required();
    exp_cmd->add_option("--image", exp_image, "RGB image")->required();
    exp_cmd->add_option("--id", exp_id, "image id used in file names")->required();
    exp_cmd->add_option("--out", exp_out, "output directory")->required();
    exp_cmd->add_option("--connectivity", exp_conn, "4 or 8 (default 8)");
    exp_cmd->add_option("--area-fraction", exp_area, "min component area (default 0.01)");

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "score predicted masks against ground truth");
    std::string eval_manifest, eval_pred, eval_out, eval_csv;
    std::vector<double> eval_taus;
    eval_cmd->add_option("--manifest", eval_manifest, "dataset manifest (JSONL)")->required();
    eval_cmd->add_option("--pred", eval_pred, "directory of predicted <id>.png masks")->required();
    eval_cmd->add_option("--taus", eval_taus, "PR sweep thresholds, descending")->delimiter(',');
    eval_cmd->add_option("--out", eval_out, "report JSON path (default stdout)");
    eval_cmd->add_option("--csv", eval_csv, "also dump curve points as CSV");

    // ---- prcurve ----
    auto* pr_cmd = app.add_subcommand("prcurve", "seed precision-recall sweep over a manifest");
    std::string pr_manifest, pr_out, pr_csv;
    std::vector<double> pr_taus;
    pr_cmd->add_option("--manifest", pr_manifest, "dataset manifest (JSONL)")->required();
    pr_cmd->add_option("--taus", pr_taus, "thresholds, descending")->delimiter(',');
    pr_cmd->add_option("--out", pr_out, "curves JSON path (default stdout)");
    pr_cmd->add_option("--csv", pr_csv, "also dump curve points as CSV");

    // ---- mp ----
    auto* mp_cmd = app.add_subcommand("mp", "mP from a curves JSON file");
    std::string mp_curves;
    mp_cmd->add_option("--curves", mp_curves, "JSON written by prcurve/eval")->required();

    // ---- run ----
    auto* run_cmd = app.add_subcommand("run", "batch guide generation over a manifest");
    std::string run_manifest_path, run_config_path, run_out_override;
    int run_workers = 0;
    run_cmd->add_option("--manifest", run_manifest_path, "dataset manifest (JSONL)")->required();
    run_cmd->add_option("--config", run_config_path, "RunConfig TOML")->required();
    run_cmd->add_option("--out", run_out_override, "override output_dir from the config");
    run_cmd->add_option("--workers", run_workers, "worker pool size (0 = auto)");

    // ---- fixtures ----
    auto* fix_cmd = app.add_subcommand("fixtures", "synthetic data utilities");
    auto* gen_cmd = fix_cmd->add_subcommand("generate", "emit scenes plus a manifest");
    std::string gen_out;
    int gen_count = 10;
    std::uint64_t gen_seed = 0;
    int gen_h = 64, gen_w = 64, gen_blobs = 3, gen_classes = 3, gen_distractors = 1;
    double gen_noise = 0.1, gen_shrink = 0.5;
    gen_cmd->add_option("--out", gen_out, "output directory")->required();
    gen_cmd->add_option("--count", gen_count, "number of scenes (default 10)");
    gen_cmd->add_option("--seed", gen_seed, "dataset seed (default 0)");
    gen_cmd->add_option("--height", gen_h, "scene height (default 64)");
    gen_cmd->add_option("--width", gen_w, "scene width (default 64)");
    gen_cmd->add_option("--blobs", gen_blobs, "blobs per scene (default 3)");
    gen_cmd->add_option("--classes", gen_classes, "class count (default 3)");
    gen_cmd->add_option("--distractors", gen_distractors, "classless salient blobs (default 1)");
    gen_cmd->add_option("--noise", gen_noise, "score noise amplitude (default 0.1)");
    gen_cmd->add_option("--shrink", gen_shrink, "seed core shrink factor (default 0.5)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return 2;
    }

    try {
        const guideseg::ClassRegistry registry =
            num_classes == 20 ? guideseg::ClassRegistry()
                              : guideseg::ClassRegistry::generic(num_classes);

        if (seed_cmd->parsed()) {
            const auto scores = guideseg::normalize_scores(guideseg::read_score_map(seed_heatmap));
            if (scores.channels != num_classes)
                throw guideseg::DataError("heatmap has " + std::to_string(scores.channels) +
                                          " channels, expected " + std::to_string(num_classes));
            guideseg::ImageLabels labels(parse_label_list(seed_labels, registry), num_classes);
            guideseg::SeederConfig cfg;
            cfg.tau = static_cast<float>(seed_tau);
            cfg.restrict_to_image_labels = !seed_no_restrict;
            guideseg::write_label_mask(guideseg::extract_seeds(scores, labels, cfg), seed_out);
            return 0;
        }

        if (fuse_cmd->parsed()) {
            const auto conn = fuse_conn == 4 ? guideseg::Connectivity::Four
                                             : guideseg::Connectivity::Eight;
            const guideseg::BinaryMask sal = guideseg::load_saliency(fuse_saliency);
            guideseg::GuideResult result;
            if (fuse_strategy == "g0") {
                guideseg::ImageLabels labels(parse_label_list(fuse_labels, registry), num_classes);
                result = guideseg::guide_g0(sal, labels, fuse_rng_seed);
            } else if (fuse_strategy == "g1") {
                if (fuse_scores.empty() || fuse_id.empty())
                    throw guideseg::UsageError("g1 needs --g1-scores and --id");
                guideseg::ImageLabels labels(parse_label_list(fuse_labels, registry), num_classes);
                const auto all = guideseg::load_g1_scores(fuse_scores);
                const auto it = all.find(fuse_id);
                if (it == all.end())
                    throw guideseg::DataError("scores file has no entry for '" + fuse_id + "'");
                const auto fg = guideseg::filter_by_area(
                    guideseg::label_components(sal, conn), fuse_area);
                result = guideseg::guide_g1(fg, labels, it->second);
            } else if (fuse_strategy == "g2") {
                if (fuse_seeds.empty() || fuse_image.empty())
                    throw guideseg::UsageError("g2 needs --seeds and --image");
                const auto seeds = guideseg::read_label_mask(fuse_seeds, num_classes);
                const auto image = guideseg::read_rgb_image(fuse_image);
                guideseg::G2Options opts;
                opts.connectivity = conn;
                opts.area_fraction = fuse_area;
                opts.crf = {fuse_approx, 1};
                result = guideseg::guide_g2(seeds, sal, image,
                                            guideseg::crf_preset(fuse_preset), opts);
            } else {
                throw guideseg::UsageError("unknown strategy '" + fuse_strategy + "'");
            }
            guideseg::write_label_mask(result.mask, fuse_out);
            return 0;
        }

        if (crf_cmd->parsed()) {
            if (crf_stage != "seed" && crf_stage != "postproc")
                throw guideseg::UsageError("crf stage must be seed or postproc");
            const auto params = crf_from_flags(crf_preset_name, crf_w1, crf_ta, crf_tb, crf_w2,
                                               crf_tg, crf_iters);
            const auto image = guideseg::read_rgb_image(crf_image);
            const guideseg::MeanFieldOptions opts{crf_approx, 1};
            guideseg::LabelMask out;
            std::ifstream probe(crf_in, std::ios::binary);
            char magic[4] = {};
            probe.read(magic, 4);
            probe.close();
            if (std::memcmp(magic, "SGSM", 4) == 0) {
                out = guideseg::crf_postproc(guideseg::read_score_map(crf_in), image, params, opts);
            } else {
                const auto mask = guideseg::read_label_mask(crf_in, num_classes);
                if (crf_stage == "seed")
                    out = guideseg::crf_seed(mask, image, params,
                                             static_cast<float>(crf_confidence), opts);
                else
                    out = guideseg::detail::apply_crf_stage(
                        mask, image, params, static_cast<float>(crf_confidence), opts);
            }
            guideseg::write_label_mask(out, crf_out);
            return 0;
        }

        if (exp_cmd->parsed()) {
            const auto conn = exp_conn == 4 ? guideseg::Connectivity::Four
                                            : guideseg::Connectivity::Eight;
            const auto sal = guideseg::load_saliency(exp_saliency);
            const auto image = guideseg::read_rgb_image(exp_image);
            if (image.height != sal.height || image.width != sal.width)
                throw guideseg::DataError("saliency and image dimensions differ");
            const auto fg = guideseg::filter_by_area(guideseg::label_components(sal, conn),
                                                     exp_area);
            fs::create_directories(exp_out);
            for (const auto& comp : fg.components) {
                guideseg::BinaryMask mask(sal.height, sal.width);
                guideseg::RgbImage masked(image.height, image.width); // background zeroed
                for (int y = 0; y < sal.height; ++y)
                    for (int x = 0; x < sal.width; ++x)
                        if (fg.id_at(y, x) == comp.id) {
                            mask.set(y, x, true);
                            std::copy_n(image.px(y, x), 3, masked.px(y, x));
                        }
                const std::string stem = exp_id + ".c" + std::to_string(comp.id);
                guideseg::write_binary_mask(mask, (fs::path(exp_out) / (stem + ".mask.png")).string());
                guideseg::write_rgb_image(masked, (fs::path(exp_out) / (stem + ".png")).string());
            }
            std::cout << fg.components.size() << " components\n";
            return 0;
        }

        if (eval_cmd->parsed()) {
            const auto records = guideseg::parse_manifest(eval_manifest);
            guideseg::GuideQualityCounts quality(num_classes);
            guideseg::ConfusionMatrix cm(num_classes);
            bool any_cm = false;
            std::vector<std::pair<std::string, std::string>> failures;
            for (const auto& r : records) {
                try {
                    if (r.gt.empty()) throw guideseg::DataError("record has no ground truth");
                    const auto gt = guideseg::read_label_mask(r.gt, num_classes);
                    const auto pred = guideseg::read_label_mask(
                        (fs::path(eval_pred) / (r.id + ".png")).string(), num_classes);
                    quality.add(gt, pred);
                    if (guideseg::label_histogram(pred)[255] == 0) {
                        guideseg::accumulate_confusion(cm, gt, pred);
                        any_cm = true;
                    }
                } catch (const std::exception& e) {
                    failures.emplace_back(r.id, e.what());
                }
            }
            std::vector<float> taus;
            for (double t : eval_taus) taus.push_back(static_cast<float>(t));
            if (taus.empty()) taus = default_taus();
            const auto samples = sweep_samples_from_manifest(records, num_classes);
            const auto sweep = guideseg::pr_sweep(samples, taus, num_classes);

            ordered_json j;
            j["images"] = records.size();
            j["failed"] = failures.size();
            ordered_json fails = ordered_json::array();
            for (const auto& [id, err] : failures) fails.push_back({{"id", id}, {"error", err}});
            j["failures"] = std::move(fails);
            const auto q = quality.finalize();
            ordered_json gq;
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
            if (any_cm) {
                const auto iou = guideseg::miou(cm);
                ordered_json per;
                for (size_t c = 0; c < iou.per_class.size(); ++c)
                    if (iou.per_class[c]) per[std::to_string(c)] = *iou.per_class[c];
                j["miou"] = iou.mean;
                j["per_class_iou"] = std::move(per);
            } else {
                j["miou"] = nullptr;
            }
            j["curves"] = sweep_to_json(sweep);
            j["mp"] = j["curves"]["mp"];
            emit_json(j, eval_out);
            if (!eval_csv.empty()) write_sweep_csv(sweep, eval_csv);
            return failures.empty() ? 0 : 1;
        }

        if (pr_cmd->parsed()) {
            const auto records = guideseg::parse_manifest(pr_manifest);
            std::vector<float> taus;
            for (double t : pr_taus) taus.push_back(static_cast<float>(t));
            if (taus.empty()) taus = default_taus();
            const auto samples = sweep_samples_from_manifest(records, num_classes);
            const auto sweep = guideseg::pr_sweep(samples, taus, num_classes);
            emit_json(sweep_to_json(sweep), pr_out);
            if (!pr_csv.empty()) write_sweep_csv(sweep, pr_csv);
            return 0;
        }

        if (mp_cmd->parsed()) {
            std::ifstream in(mp_curves);
            if (!in) throw guideseg::IoError("cannot open '" + mp_curves + "'");
            nlohmann::json doc;
            in >> doc;
            const nlohmann::json& root = doc.contains("curves") ? doc["curves"] : doc;
            const auto fg = curve_from_json(root.at("foreground_mean"),
                                            guideseg::PrCurve::kAveragedForeground);
            const auto bg = curve_from_json(root.at("background"), 0);
            std::cout << guideseg::mp(fg, bg) << "\n";
            return 0;
        }

        if (run_cmd->parsed()) {
            guideseg::RunConfig cfg = guideseg::load_run_config(run_config_path);
            if (!run_out_override.empty()) cfg.output_dir = run_out_override;
            const auto records = guideseg::parse_manifest(run_manifest_path);
            const auto report = guideseg::run_manifest(records, cfg, run_workers);
            ordered_json j = report.to_json();
            if (!cfg.output_dir.empty()) {
                std::ofstream out(fs::path(cfg.output_dir) / "report.json", std::ios::trunc);
                out << j.dump(2) << "\n";
            }
            std::cout << j.dump(2) << "\n";
            return report.failures.empty() ? 0 : 1;
        }

        if (gen_cmd->parsed()) {
            guideseg::SceneSpec spec;
            spec.height = gen_h;
            spec.width = gen_w;
            spec.blobs = gen_blobs;
            spec.num_classes = gen_classes;
            spec.distractors = gen_distractors;
            spec.noise_amplitude = static_cast<float>(gen_noise);
            spec.core_shrink = static_cast<float>(gen_shrink);
            const auto manifest =
                guideseg::generate_fixture_dataset(gen_out, gen_count, spec, gen_seed);
            std::cout << manifest << "\n";
            return 0;
        }

        throw guideseg::UsageError("no subcommand given");
    } catch (const guideseg::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const guideseg::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
