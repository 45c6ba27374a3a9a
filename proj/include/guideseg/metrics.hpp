#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "guideseg/common.hpp"
#include "guideseg/raster.hpp"
#include "guideseg/seeder.hpp"

namespace guideseg {

// ---------------------------------------------------------------------------
// Confusion matrix and mIoU
// ---------------------------------------------------------------------------

/// (C+1)x(C+1) counts, rows = ground truth class, cols = predicted class.
/// Ground-truth ignore pixels are never counted. Additive across images.
struct ConfusionMatrix {
    int num_classes = 0;
    std::vector<std::uint64_t> counts;

    explicit ConfusionMatrix(int c = 20) : num_classes(c) {
        counts.assign(static_cast<size_t>(c + 1) * (c + 1), 0);
    }

    std::uint64_t& at(int gt, int pred) {
        return counts[static_cast<size_t>(gt) * (num_classes + 1) + pred];
    }
    std::uint64_t at(int gt, int pred) const {
        return counts[static_cast<size_t>(gt) * (num_classes + 1) + pred];
    }

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (auto v : counts) t += v;
        return t;
    }

    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        if (o.num_classes != num_classes)
            throw UsageError("confusion matrices of different class counts");
        for (size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
        return *this;
    }
};

inline void accumulate_confusion(ConfusionMatrix& cm, const LabelMask& gt,
                                 const LabelMask& pred) {
    if (gt.height != pred.height || gt.width != pred.width)
        throw UsageError("confusion: mask dimensions differ");
    const int c = cm.num_classes;
    for (size_t i = 0; i < gt.data.size(); ++i) {
        const int g = gt.data[i];
        if (g == kIgnoreLabel) continue;
        const int p = pred.data[i];
        if (g > c) throw DataError("confusion: ground-truth value " + std::to_string(g) +
                                   " exceeds class count");
        if (p == kIgnoreLabel)
            throw UsageError("confusion: prediction contains ignore pixels; "
                             "use guide_quality to score guide labels");
        if (p > c) throw DataError("confusion: predicted value " + std::to_string(p) +
                                   " exceeds class count");
        cm.at(g, p) += 1;
    }
}

inline ConfusionMatrix confusion(const LabelMask& gt, const LabelMask& pred,
                                 int num_classes = 20) {
    ConfusionMatrix cm(num_classes);
    accumulate_confusion(cm, gt, pred);
    return cm;
}

struct IouReport {
    std::vector<std::optional<double>> per_class; // index 0 = background
    double mean = 0.0;
};

/// IoU_c = TP/(TP+FP+FN); classes with an empty union are left out of the mean.
inline IouReport miou(const ConfusionMatrix& cm) {
    const int c = cm.num_classes;
    IouReport rep;
    rep.per_class.assign(static_cast<size_t>(c + 1), std::nullopt);
    double sum = 0.0;
    int defined = 0;
    for (int k = 0; k <= c; ++k) {
        const std::uint64_t tp = cm.at(k, k);
        std::uint64_t fp = 0, fn = 0;
        for (int j = 0; j <= c; ++j) {
            if (j == k) continue;
            fp += cm.at(j, k);
            fn += cm.at(k, j);
        }
        const std::uint64_t denom = tp + fp + fn;
        if (denom == 0) continue;
        const double iou = static_cast<double>(tp) / static_cast<double>(denom);
        rep.per_class[static_cast<size_t>(k)] = iou;
        sum += iou;
        defined += 1;
    }
    if (defined == 0) throw DataError("miou: no class has any ground truth or prediction");
    rep.mean = sum / defined;
    return rep;
}

// ---------------------------------------------------------------------------
// Guide quality (Table-2 style supervision accounting)
// ---------------------------------------------------------------------------

struct GuideQuality {
    std::optional<double> fg_precision;
    std::optional<double> fg_recall;
    std::optional<double> bg_precision;
    std::optional<double> bg_recall;
};

/// Accumulable counts behind guide_quality. Guide "ignore" pixels count as no
/// prediction: they never enter a precision denominator but a ground-truth
/// pixel covered by ignore still counts against recall.
struct GuideQualityCounts {
    int num_classes = 0;
    std::vector<std::uint64_t> tp, predicted, truth; // indexed by class, 0 = background

    explicit GuideQualityCounts(int c = 20) : num_classes(c) {
        tp.assign(static_cast<size_t>(c + 1), 0);
        predicted.assign(static_cast<size_t>(c + 1), 0);
        truth.assign(static_cast<size_t>(c + 1), 0);
    }

    void add(const LabelMask& gt, const LabelMask& guide) {
        if (gt.height != guide.height || gt.width != guide.width)
            throw UsageError("guide_quality: mask dimensions differ");
        for (size_t i = 0; i < gt.data.size(); ++i) {
            const int g = gt.data[i];
            if (g == kIgnoreLabel) continue;
            if (g > num_classes)
                throw DataError("guide_quality: ground-truth value exceeds class count");
            const int p = guide.data[i];
            truth[static_cast<size_t>(g)] += 1;
            if (p == kIgnoreLabel) continue;
            if (p > num_classes)
                throw DataError("guide_quality: guide value exceeds class count");
            predicted[static_cast<size_t>(p)] += 1;
            if (p == g) tp[static_cast<size_t>(g)] += 1;
        }
    }

    GuideQualityCounts& operator+=(const GuideQualityCounts& o) {
        if (o.num_classes != num_classes)
            throw UsageError("guide-quality counts of different class counts");
        for (size_t i = 0; i < tp.size(); ++i) {
            tp[i] += o.tp[i];
            predicted[i] += o.predicted[i];
            truth[i] += o.truth[i];
        }
        return *this;
    }

    /// Foreground P/R per class, averaged over classes present in the ground
    /// truth; background is a single class.
    GuideQuality finalize() const {
        GuideQuality q;
        double psum = 0.0, rsum = 0.0;
        int pcount = 0, rcount = 0;
        for (int c = 1; c <= num_classes; ++c) {
            if (truth[static_cast<size_t>(c)] == 0) continue;
            rsum += static_cast<double>(tp[static_cast<size_t>(c)]) /
                    static_cast<double>(truth[static_cast<size_t>(c)]);
            rcount += 1;
            if (predicted[static_cast<size_t>(c)] > 0) {
                psum += static_cast<double>(tp[static_cast<size_t>(c)]) /
                        static_cast<double>(predicted[static_cast<size_t>(c)]);
                pcount += 1;
            }
        }
        if (rcount > 0) q.fg_recall = rsum / rcount;
        if (pcount > 0) q.fg_precision = psum / pcount;
        if (truth[0] > 0)
            q.bg_recall = static_cast<double>(tp[0]) / static_cast<double>(truth[0]);
        if (predicted[0] > 0)
            q.bg_precision = static_cast<double>(tp[0]) / static_cast<double>(predicted[0]);
        return q;
    }
};

inline GuideQuality guide_quality(const LabelMask& gt, const LabelMask& guide,
                                  int num_classes = 20) {
    GuideQualityCounts counts(num_classes);
    counts.add(gt, guide);
    return counts.finalize();
}

// ---------------------------------------------------------------------------
// Precision-recall sweeps and mP
// ---------------------------------------------------------------------------

/// Threshold-indexed precision/recall samples, tau strictly descending.
/// Precision is absent at thresholds with no predictions for the class.
struct PrCurve {
    static constexpr int kAveragedForeground = -1;
    int class_id = 0; // 0 = background, -1 = foreground classes averaged
    struct Point {
        double tau = 0.0;
        std::optional<double> precision;
        double recall = 0.0;
    };
    std::vector<Point> points;
};

struct PrSample {
    ScoreMap scores; // normalized
    ImageLabels labels;
    LabelMask gt;
};

struct PrSweepResult {
    std::vector<PrCurve> per_class; // classes with ground-truth presence only
    PrCurve fg_mean;
    PrCurve background;
};

/// Sweeps extract_seeds (label restriction off) over the thresholds, pooling
/// pixel counts over the dataset per class, then averaging the foreground
/// curves pointwise per tau.
inline PrSweepResult pr_sweep(const std::vector<PrSample>& samples,
                              const std::vector<float>& taus, int num_classes = 20) {
    if (samples.empty()) throw UsageError("pr_sweep: empty dataset");
    if (taus.empty()) throw UsageError("pr_sweep: empty threshold list");
    for (size_t i = 1; i < taus.size(); ++i)
        if (!(taus[i] < taus[i - 1]))
            throw UsageError("pr_sweep: thresholds must be strictly descending");

    const size_t nt = taus.size();
    const size_t nc = static_cast<size_t>(num_classes) + 1;
    std::vector<std::uint64_t> tp(nt * nc, 0), pred(nt * nc, 0), truth(nc, 0);

    for (const auto& s : samples) {
        if (s.scores.channels != num_classes)
            throw UsageError("pr_sweep: score channels and class count differ");
        if (s.gt.height != s.scores.height || s.gt.width != s.scores.width)
            throw UsageError("pr_sweep: score map and ground truth dimensions differ");
        const auto masks = seeds_at_thresholds(s.scores, s.labels, taus,
                                               /*restrict_to_image_labels=*/false);
        for (size_t i = 0; i < s.gt.data.size(); ++i) {
            const int g = s.gt.data[i];
            if (g == kIgnoreLabel) continue;
            if (g > num_classes)
                throw DataError("pr_sweep: ground-truth value exceeds class count");
            truth[static_cast<size_t>(g)] += 1;
            for (size_t t = 0; t < nt; ++t) {
                const int p = masks[t].data[i];
                pred[t * nc + static_cast<size_t>(p)] += 1;
                if (p == g) tp[t * nc + static_cast<size_t>(p)] += 1;
            }
        }
    }

    PrSweepResult res;
    res.fg_mean.class_id = PrCurve::kAveragedForeground;
    res.background.class_id = 0;
    for (int c = 1; c <= num_classes; ++c) {
        if (truth[static_cast<size_t>(c)] == 0) continue; // recall undefined
        PrCurve curve;
        curve.class_id = c;
        for (size_t t = 0; t < nt; ++t) {
            PrCurve::Point pt;
            pt.tau = taus[t];
            const std::uint64_t tpv = tp[t * nc + static_cast<size_t>(c)];
            const std::uint64_t pv = pred[t * nc + static_cast<size_t>(c)];
            if (pv > 0) pt.precision = static_cast<double>(tpv) / static_cast<double>(pv);
            pt.recall = static_cast<double>(tpv) / static_cast<double>(truth[static_cast<size_t>(c)]);
            curve.points.push_back(pt);
        }
        res.per_class.push_back(std::move(curve));
    }
    if (res.per_class.empty())
        throw DataError("pr_sweep: no foreground class present in the ground truth");

    for (size_t t = 0; t < nt; ++t) {
        PrCurve::Point pt;
        pt.tau = taus[t];
        double psum = 0.0, rsum = 0.0;
        int pcount = 0;
        for (const auto& curve : res.per_class) {
            if (curve.points[t].precision) {
                psum += *curve.points[t].precision;
                pcount += 1;
            }
            rsum += curve.points[t].recall;
        }
        if (pcount > 0) pt.precision = psum / pcount;
        pt.recall = rsum / static_cast<double>(res.per_class.size());
        res.fg_mean.points.push_back(pt);
    }

    for (size_t t = 0; t < nt; ++t) {
        PrCurve::Point pt;
        pt.tau = taus[t];
        const std::uint64_t tpv = tp[t * nc];
        const std::uint64_t pv = pred[t * nc];
        if (pv > 0) pt.precision = static_cast<double>(tpv) / static_cast<double>(pv);
        pt.recall = truth[0] > 0
                        ? static_cast<double>(tpv) / static_cast<double>(truth[0])
                        : 0.0;
        res.background.points.push_back(pt);
    }
    return res;
}

/// Precision linearly interpolated at the target recall. Points with absent
/// precision are skipped; outside the sampled recall range the nearest
/// endpoint's precision is returned.
inline double precision_at_recall(const PrCurve& curve, double target_recall) {
    if (target_recall < 0.0 || target_recall > 1.0)
        throw UsageError("precision_at_recall: target outside [0,1]");
    std::vector<std::pair<double, double>> pts; // (recall, precision)
    for (const auto& p : curve.points)
        if (p.precision) pts.emplace_back(p.recall, *p.precision);
    if (pts.empty()) throw DataError("precision_at_recall: empty curve");
    std::stable_sort(pts.begin(), pts.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });

    if (target_recall <= pts.front().first) return pts.front().second;
    if (target_recall >= pts.back().first) return pts.back().second;
    for (size_t i = 1; i < pts.size(); ++i) {
        if (target_recall > pts[i].first) continue;
        const auto& [r0, p0] = pts[i - 1];
        const auto& [r1, p1] = pts[i];
        if (target_recall == r1) return p1;
        if (r1 == r0) return p1;
        const double f = (target_recall - r0) / (r1 - r0);
        return p0 + f * (p1 - p0);
    }
    return pts.back().second; // unreachable
}

/// mP = (Prec_Fg@20% + Prec_Bg@80%) / 2.
inline double mp(const PrCurve& fg_mean_curve, const PrCurve& bg_curve) {
    return 0.5 * (precision_at_recall(fg_mean_curve, 0.20) +
                  precision_at_recall(bg_curve, 0.80));
}

} // namespace guideseg
