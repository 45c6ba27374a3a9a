#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "guideseg/common.hpp"
#include "guideseg/densecrf.hpp"
#include "guideseg/raster.hpp"
#include "guideseg/regions.hpp"

namespace guideseg {

/// Guide mask plus its per-value pixel histogram (index 255 = ignore count).
/// The histogram always sums to H*W.
struct GuideResult {
    LabelMask mask;
    std::array<std::uint64_t, 256> histogram{};
};

inline std::array<std::uint64_t, 256> label_histogram(const LabelMask& mask) {
    std::array<std::uint64_t, 256> h{};
    for (std::uint8_t v : mask.data) h[v] += 1;
    return h;
}

inline GuideResult make_guide_result(LabelMask mask) {
    GuideResult r;
    r.histogram = label_histogram(mask);
    r.mask = std::move(mask);
    return r;
}

// ---------------------------------------------------------------------------
// G0: random class assignment
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Counter-based key: the `counter`-th output of the splitmix64 stream seeded
/// at `rng_seed`. The pipeline uses the image's manifest position as counter
/// so results do not depend on worker scheduling.
inline std::uint64_t g0_stream_key(std::uint64_t rng_seed, std::uint64_t counter) {
    return splitmix64(rng_seed + (counter + 1) * 0x9E3779B97F4A7C15ull);
}

/// All saliency-foreground pixels take one class drawn uniformly from the
/// image labels; everything else is background. Deterministic in rng_seed.
inline GuideResult guide_g0(const BinaryMask& saliency, const ImageLabels& labels,
                            std::uint64_t rng_seed) {
    if (labels.empty()) throw UsageError("guide_g0: image label set is empty");
    const size_t pick = static_cast<size_t>(splitmix64(rng_seed) % labels.present.size());
    const std::uint8_t cls = labels.present[pick];
    LabelMask mask(saliency.height, saliency.width);
    for (size_t i = 0; i < saliency.data.size(); ++i)
        mask.data[i] = saliency.data[i] ? cls : 0;
    return make_guide_result(std::move(mask));
}

// ---------------------------------------------------------------------------
// G1: per-component classification by score difference under masking
// ---------------------------------------------------------------------------

/// Classifier scores per retained foreground component and per image label:
/// on the full image and on the image with everything outside the component
/// zeroed.
struct G1Scores {
    struct Entry {
        double full = 0.0;
        double masked = 0.0;
    };
    std::map<std::uint32_t, std::map<std::uint8_t, Entry>> by_component;
};

/// Each component takes the label with the greatest positive (masked - full)
/// score difference; components with no positive difference become ignore.
inline GuideResult guide_g1(const ComponentSet& fg, const ImageLabels& labels,
                            const G1Scores& scores) {
    if (labels.empty()) throw UsageError("guide_g1: image label set is empty");
    LabelMask mask(fg.height, fg.width);

    std::vector<std::uint8_t> verdict(fg.components.size() + 1, 0);
    for (const auto& comp : fg.components) {
        const auto comp_it = scores.by_component.find(comp.id);
        double best = 0.0;
        std::uint8_t best_class = kIgnoreLabel;
        for (std::uint8_t c : labels.present) {
            const G1Scores::Entry* e = nullptr;
            if (comp_it != scores.by_component.end()) {
                const auto cls_it = comp_it->second.find(c);
                if (cls_it != comp_it->second.end()) e = &cls_it->second;
            }
            if (!e)
                throw DataError("guide_g1: missing score entry for component " +
                                std::to_string(comp.id) + " class " + std::to_string(c));
            const double d = e->masked - e->full;
            if (d > best) { // strictly greater: ties keep the lowest class
                best = d;
                best_class = c;
            }
        }
        verdict[comp.id] = best_class; // ignore when no positive difference
    }
    for (size_t i = 0; i < fg.id_map.size(); ++i)
        if (fg.id_map[i]) mask.data[i] = verdict[fg.id_map[i]];
    return make_guide_result(std::move(mask));
}

// ---------------------------------------------------------------------------
// G2: seed propagation over saliency components
// ---------------------------------------------------------------------------

/// Labels the pixels of one >=2-category component into `out`. `seeds` is the
/// full-size seed mask; only seed pixels inside the component and of a listed
/// class are anchors. The production labeler wraps region_crf; tests may
/// substitute a stub.
using RegionLabeler =
    std::function<void(const BinaryMask& component, const LabelMask& seeds,
                       const std::vector<std::uint8_t>& classes, LabelMask& out)>;

struct G2Options {
    Connectivity connectivity = Connectivity::Eight;
    double area_fraction = 0.01;
    MeanFieldOptions crf; // forwarded to region_crf by the default labeler
};

namespace detail {

inline BinaryMask component_mask(const ComponentSet& cs, const ComponentSet::Component& c) {
    BinaryMask m(cs.height, cs.width);
    for (int y = c.min_row; y <= c.max_row; ++y)
        for (int x = c.min_col; x <= c.max_col; ++x)
            if (cs.id_at(y, x) == c.id) m.set(y, x, true);
    return m;
}

template <typename Fn>
void for_component_pixels(const ComponentSet& cs, const ComponentSet::Component& c, Fn fn) {
    for (int y = c.min_row; y <= c.max_row; ++y)
        for (int x = c.min_col; x <= c.max_col; ++x)
            if (cs.id_at(y, x) == c.id) fn(y, x);
}

inline GuideResult run_g2(const LabelMask& seeds, const BinaryMask& saliency,
                          const G2Options& opts, const RegionLabeler& labeler) {
    if (seeds.height != saliency.height || seeds.width != saliency.width)
        throw UsageError("guide_g2: seed/saliency dimensions differ");
    for (std::uint8_t v : seeds.data)
        if (v == kIgnoreLabel)
            throw UsageError("guide_g2: seeds must not contain ignore pixels");

    // Pass 1: all intersections are known before any pixel is labeled, so a
    // seed spanning several components counts towards each of them.
    const ComponentSet fg =
        filter_by_area(label_components(saliency, opts.connectivity), opts.area_fraction);
    const ComponentSet sc = label_seed_components(seeds, opts.connectivity);
    const IntersectionTable table = intersect(fg, sc);

    // Pass 2.
    LabelMask out(seeds.height, seeds.width);
    for (const auto& comp : fg.components) {
        const auto& classes = table.fg_classes[comp.id];
        if (classes.empty()) {
            // (a) no seed evidence: neither trust nor reject the saliency blob
            for_component_pixels(fg, comp, [&](int y, int x) { out.at(y, x) = kIgnoreLabel; });
        } else if (classes.size() == 1) {
            // (b) the component delineates a single seeded instance
            for_component_pixels(fg, comp,
                                 [&](int y, int x) { out.at(y, x) = classes.front(); });
        } else {
            // (c) several classes compete inside the component
            labeler(component_mask(fg, comp), seeds, classes, out);
        }
    }
    for (const auto& seed : sc.components) {
        if (!table.seed_fgs[seed.id].empty()) {
            // (d) seed bleeding out of the saliency foreground turns to ignore
            for_component_pixels(sc, seed, [&](int y, int x) {
                if (fg.id_at(y, x) == 0) out.at(y, x) = kIgnoreLabel;
            });
        } else {
            // (f) isolated seed: foreground evidence the saliency missed
            for_component_pixels(sc, seed, [&](int y, int x) { out.at(y, x) = seed.cls; });
        }
    }
    return make_guide_result(std::move(out));
}

} // namespace detail

/// G2 with an explicit region labeler (tests inject the CRF stub here).
inline GuideResult guide_g2(const LabelMask& seeds, const BinaryMask& saliency,
                            const RegionLabeler& labeler, const G2Options& opts = {}) {
    if (!labeler) throw UsageError("guide_g2: region labeler is required");
    return detail::run_g2(seeds, saliency, opts, labeler);
}

/// G2 with dense-CRF inference inside multi-category components.
inline GuideResult guide_g2(const LabelMask& seeds, const BinaryMask& saliency,
                            const RgbImage& image, const CrfParams& params,
                            const G2Options& opts = {}) {
    if (image.height != seeds.height || image.width != seeds.width)
        throw UsageError("guide_g2: image dimensions differ");
    RegionLabeler crf_labeler = [&](const BinaryMask& component, const LabelMask& s,
                                    const std::vector<std::uint8_t>& classes, LabelMask& out) {
        region_crf(component, s, classes, image, params, out, opts.crf);
    };
    return detail::run_g2(seeds, saliency, opts, crf_labeler);
}

} // namespace guideseg
