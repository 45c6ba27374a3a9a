#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "guideseg/common.hpp"
#include "guideseg/raster.hpp"

namespace guideseg {

struct SeederConfig {
    float tau = 0.2f;
    bool restrict_to_image_labels = true;
};

namespace detail {

inline void check_seeder_inputs(const ScoreMap& scores, const SeederConfig& cfg) {
    if (cfg.tau < 0.f || cfg.tau > 1.f)
        throw UsageError("seed threshold tau must be in [0,1]");
    for (float v : scores.data) {
        if (std::isnan(v)) throw DataError("extract_seeds: NaN score");
        if (v > 1.f + 1e-6f)
            throw DataError("extract_seeds: scores not normalized (value " +
                            std::to_string(v) + " > 1)");
    }
}

} // namespace detail

/// Threshold-and-argmax seed rule: a pixel is background when every
/// considered channel scores strictly below tau, otherwise it takes the
/// argmax class (ties go to the lowest class index). With
/// restrict_to_image_labels only channels in `labels` are considered.
inline LabelMask extract_seeds(const ScoreMap& scores, const ImageLabels& labels,
                               const SeederConfig& cfg = {}) {
    detail::check_seeder_inputs(scores, cfg);

    std::vector<std::uint8_t> considered;
    if (cfg.restrict_to_image_labels) {
        if (labels.empty())
            throw UsageError("extract_seeds: empty image label set with restriction enabled");
        for (std::uint8_t c : labels.present) {
            if (c > scores.channels)
                throw UsageError("extract_seeds: label " + std::to_string(c) +
                                 " exceeds channel count " + std::to_string(scores.channels));
            considered.push_back(c);
        }
    } else {
        for (int c = 1; c <= scores.channels; ++c)
            considered.push_back(static_cast<std::uint8_t>(c));
    }

    LabelMask out(scores.height, scores.width);
    const size_t n = scores.pixel_count();
    for (size_t i = 0; i < n; ++i) {
        float best = -1.f;
        std::uint8_t best_class = 0;
        for (std::uint8_t c : considered) {
            const float v = scores.data[static_cast<size_t>(c - 1) * n + i];
            if (v > best) { // strict: first (lowest) class wins ties
                best = v;
                best_class = c;
            }
        }
        out.data[i] = best < cfg.tau ? 0 : best_class;
    }
    return out;
}

/// One seed mask per threshold; taus must be strictly descending so the
/// foreground sets nest as the threshold loosens.
inline std::vector<LabelMask> seeds_at_thresholds(const ScoreMap& scores,
                                                  const ImageLabels& labels,
                                                  const std::vector<float>& taus,
                                                  bool restrict_to_image_labels = true) {
    if (taus.empty()) throw UsageError("seeds_at_thresholds: empty threshold list");
    for (size_t i = 1; i < taus.size(); ++i)
        if (!(taus[i] < taus[i - 1]))
            throw UsageError("seeds_at_thresholds: thresholds must be strictly descending");
    std::vector<LabelMask> out;
    out.reserve(taus.size());
    for (float tau : taus) {
        SeederConfig cfg;
        cfg.tau = tau;
        cfg.restrict_to_image_labels = restrict_to_image_labels;
        out.push_back(extract_seeds(scores, labels, cfg));
    }
    return out;
}

} // namespace guideseg
