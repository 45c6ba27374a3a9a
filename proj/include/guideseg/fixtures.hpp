#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "guideseg/common.hpp"
#include "guideseg/guides.hpp"
#include "guideseg/raster.hpp"
#include "guideseg/registry.hpp"

namespace guideseg {

// ---------------------------------------------------------------------------
// Deterministic synthetic scenes. All randomness flows through one integer
// LCG (Knuth MMIX multiplier) so regeneration is bit-identical on any
// platform; floats are only derived from integers at the very end.
// ---------------------------------------------------------------------------

struct Lcg {
    std::uint64_t state;
    explicit Lcg(std::uint64_t seed) : state(seed) {}
    std::uint32_t next_u32() {
        state = state * 6364136223846793005ull + 1442695040888963407ull;
        return static_cast<std::uint32_t>(state >> 32);
    }
    std::uint32_t next_below(std::uint32_t n) { return next_u32() % n; }
    /// Uniform in [0,1) on a 2^-24 grid, exact in binary32.
    float next_unit() { return static_cast<float>(next_u32() >> 8) * (1.f / 16777216.f); }
};

enum class BlobShape { Rect, Disc };

/// Paints one blob into a mask; later paints overwrite earlier ones.
inline void paint_blob(LabelMask& mask, BlobShape shape, int cy, int cx, int ry, int rx,
                       std::uint8_t cls) {
    for (int y = std::max(0, cy - ry); y <= std::min(mask.height - 1, cy + ry); ++y) {
        for (int x = std::max(0, cx - rx); x <= std::min(mask.width - 1, cx + rx); ++x) {
            if (shape == BlobShape::Disc) {
                const long dy = y - cy, dx = x - cx;
                // integer ellipse test: (dy/ry)^2 + (dx/rx)^2 <= 1
                if (dy * dy * static_cast<long>(rx) * rx + dx * dx * static_cast<long>(ry) * ry >
                    static_cast<long>(ry) * ry * rx * rx)
                    continue;
            }
            mask.at(y, x) = cls;
        }
    }
}

struct SceneSpec {
    std::uint64_t seed = 0;
    int height = 64;
    int width = 64;
    int blobs = 3;
    int num_classes = 3;     // also the score-map channel count
    int distractors = 0;     // salient blobs that belong to no class
    float noise_amplitude = 0.1f;
    int blur_radius = 1;
    float core_shrink = 0.5f; // score blobs cover only this fraction of the extent
};

struct SyntheticScene {
    LabelMask gt;
    ScoreMap scores;   // per-class, degraded and max-normalized
    ScoreMap saliency; // 1-channel foreground probability
    RgbImage image;
    ImageLabels labels;
};

namespace detail {

inline std::vector<float> box_blur(const std::vector<float>& src, int h, int w, int r) {
    if (r <= 0) return src;
    std::vector<float> out(src.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float sum = 0.f;
            int count = 0;
            for (int yy = std::max(0, y - r); yy <= std::min(h - 1, y + r); ++yy)
                for (int xx = std::max(0, x - r); xx <= std::min(w - 1, x + r); ++xx) {
                    sum += src[static_cast<size_t>(yy) * w + xx];
                    count += 1;
                }
            out[static_cast<size_t>(y) * w + x] = sum / static_cast<float>(count);
        }
    }
    return out;
}

} // namespace detail

/// GT = painted blobs; scores = per-class indicators of the (shrunk) blob
/// cores, box-blurred, plus uniform noise, max-normalized; saliency = the
/// union-of-blobs indicator degraded the same way.
inline SyntheticScene generate_scene(const SceneSpec& spec) {
    if (spec.height <= 0 || spec.width <= 0) throw UsageError("generate_scene: empty canvas");
    if (spec.blobs < 1 || spec.num_classes < 1 || spec.num_classes > 254)
        throw UsageError("generate_scene: bad blob spec");

    Lcg rng(spec.seed * 0x9E3779B97F4A7C15ull + 0xD1B54A32D192ED03ull);
    SyntheticScene scene;
    scene.gt = LabelMask(spec.height, spec.width);
    LabelMask core(spec.height, spec.width); // shrunk view driving the scores

    const int rmin = std::max(2, std::min(spec.height, spec.width) / 8);
    const int rmax = std::max(rmin + 1, std::min(spec.height, spec.width) / 4);
    for (int b = 0; b < spec.blobs; ++b) {
        const auto shape = rng.next_below(2) == 0 ? BlobShape::Rect : BlobShape::Disc;
        const std::uint8_t cls =
            static_cast<std::uint8_t>(1 + rng.next_below(static_cast<std::uint32_t>(spec.num_classes)));
        const int ry = rmin + static_cast<int>(rng.next_below(static_cast<std::uint32_t>(rmax - rmin)));
        const int rx = rmin + static_cast<int>(rng.next_below(static_cast<std::uint32_t>(rmax - rmin)));
        const int cy = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(spec.height)));
        const int cx = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(spec.width)));
        paint_blob(scene.gt, shape, cy, cx, ry, rx, cls);
        const int cry = std::max(1, static_cast<int>(std::lround(ry * spec.core_shrink)));
        const int crx = std::max(1, static_cast<int>(std::lround(rx * spec.core_shrink)));
        paint_blob(core, shape, cy, cx, cry, crx, cls);
    }
    // the core never reaches outside its blob's ground truth extent
    for (size_t i = 0; i < core.data.size(); ++i)
        if (core.data[i] != scene.gt.data[i]) core.data[i] = 0;

    // distractors are salient but carry no class: false positives for G2's
    // zero-category rule
    LabelMask salient = scene.gt;
    for (int b = 0; b < spec.distractors; ++b) {
        const auto shape = rng.next_below(2) == 0 ? BlobShape::Rect : BlobShape::Disc;
        const int ry = rmin + static_cast<int>(rng.next_below(static_cast<std::uint32_t>(rmax - rmin)));
        const int rx = rmin + static_cast<int>(rng.next_below(static_cast<std::uint32_t>(rmax - rmin)));
        const int cy = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(spec.height)));
        const int cx = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(spec.width)));
        paint_blob(salient, shape, cy, cx, ry, rx, 254);
    }

    const size_t n = scene.gt.size();
    auto degrade = [&](const std::vector<float>& indicator) {
        auto v = detail::box_blur(indicator, spec.height, spec.width, spec.blur_radius);
        for (size_t i = 0; i < n; ++i) v[i] += spec.noise_amplitude * rng.next_unit();
        return v;
    };

    scene.scores = ScoreMap(spec.num_classes, spec.height, spec.width);
    std::vector<float> indicator(n);
    for (int c = 1; c <= spec.num_classes; ++c) {
        for (size_t i = 0; i < n; ++i) indicator[i] = core.data[i] == c ? 1.f : 0.f;
        const auto v = degrade(indicator);
        std::copy(v.begin(), v.end(), scene.scores.channel(c - 1));
    }
    scene.scores = normalize_scores(scene.scores);

    scene.saliency = ScoreMap(1, spec.height, spec.width);
    for (size_t i = 0; i < n; ++i) indicator[i] = salient.data[i] ? 1.f : 0.f;
    {
        const auto v = degrade(indicator);
        std::copy(v.begin(), v.end(), scene.saliency.channel(0));
    }
    scene.saliency = normalize_scores(scene.saliency);

    scene.image = RgbImage(spec.height, spec.width);
    const auto& palette = pascal_palette();
    for (size_t i = 0; i < n; ++i) {
        const std::uint8_t cls = scene.gt.data[i];
        auto base = cls ? palette[cls] : std::array<std::uint8_t, 3>{40, 40, 40};
        if (!cls && salient.data[i] == 254) base = {110, 110, 110};
        std::uint8_t* px = scene.image.data.data() + i * 3;
        for (int ch = 0; ch < 3; ++ch) {
            const int jitter = static_cast<int>(rng.next_below(25)) - 12;
            px[ch] = static_cast<std::uint8_t>(std::clamp(base[ch] + jitter, 0, 255));
        }
    }

    std::vector<int> present;
    {
        bool seen[256] = {};
        for (std::uint8_t v : scene.gt.data) seen[v] = true;
        for (int c = 1; c <= spec.num_classes; ++c)
            if (seen[c]) present.push_back(c);
    }
    scene.labels = ImageLabels(present, spec.num_classes);
    return scene;
}

// ---------------------------------------------------------------------------
// Independent G2 rule oracle. Deliberately naive: plain flood fills and
// per-pixel double loops, no shared machinery with guides/regions. The
// multi-category case uses the nearest-seed stub instead of a CRF.
// ---------------------------------------------------------------------------

/// The CRF stand-in shared by oracle-equivalence tests: every pixel of a
/// multi-category component takes the class of the nearest in-component seed
/// pixel by squared Euclidean distance. Distance ties go to the anchor that
/// comes first in raster order, which keeps the rule class-permutation
/// equivariant.
inline RegionLabeler nearest_seed_labeler() {
    return [](const BinaryMask& component, const LabelMask& seeds,
              const std::vector<std::uint8_t>& classes, LabelMask& out) {
        struct Anchor {
            int y, x;
            std::uint8_t cls;
        };
        std::vector<Anchor> anchors; // raster order
        for (int y = 0; y < component.height; ++y)
            for (int x = 0; x < component.width; ++x)
                if (component.at(y, x) && seeds.at(y, x) != 0 &&
                    std::find(classes.begin(), classes.end(), seeds.at(y, x)) != classes.end())
                    anchors.push_back({y, x, seeds.at(y, x)});
        if (anchors.empty()) throw DataError("nearest_seed_labeler: component has no anchors");
        for (int y = 0; y < component.height; ++y) {
            for (int x = 0; x < component.width; ++x) {
                if (!component.at(y, x)) continue;
                long best_d = -1;
                std::uint8_t best_cls = 0;
                for (const auto& a : anchors) {
                    const long dy = y - a.y, dx = x - a.x;
                    const long d = dy * dy + dx * dx;
                    if (best_d < 0 || d < best_d) { // strict: first anchor wins ties
                        best_d = d;
                        best_cls = a.cls;
                    }
                }
                out.at(y, x) = best_cls;
            }
        }
    };
}

namespace detail {

struct OracleComponent {
    std::vector<std::pair<int, int>> pixels;
    std::uint8_t cls = 0;
};

// Stack-based flood fill collecting components of `value_at` (0 = none).
template <typename ValueFn>
std::vector<OracleComponent> oracle_flood(int h, int w, Connectivity conn, ValueFn value_at) {
    std::vector<bool> visited(static_cast<size_t>(h) * w, false);
    std::vector<OracleComponent> comps;
    const int dy4[] = {0, 0, -1, 1};
    const int dx4[] = {-1, 1, 0, 0};
    const int dy8[] = {0, 0, -1, 1, -1, -1, 1, 1};
    const int dx8[] = {-1, 1, 0, 0, -1, 1, -1, 1};
    const int ndirs = conn == Connectivity::Eight ? 8 : 4;
    const int* dy = conn == Connectivity::Eight ? dy8 : dy4;
    const int* dx = conn == Connectivity::Eight ? dx8 : dx4;

    for (int y0 = 0; y0 < h; ++y0) {
        for (int x0 = 0; x0 < w; ++x0) {
            const size_t i0 = static_cast<size_t>(y0) * w + x0;
            const int v = value_at(y0, x0);
            if (v == 0 || visited[i0]) continue;
            OracleComponent comp;
            comp.cls = static_cast<std::uint8_t>(v == -1 ? 0 : v);
            std::vector<std::pair<int, int>> stack{{y0, x0}};
            visited[i0] = true;
            while (!stack.empty()) {
                auto [y, x] = stack.back();
                stack.pop_back();
                comp.pixels.emplace_back(y, x);
                for (int d = 0; d < ndirs; ++d) {
                    const int yy = y + dy[d], xx = x + dx[d];
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    const size_t j = static_cast<size_t>(yy) * w + xx;
                    if (!visited[j] && value_at(yy, xx) == v) {
                        visited[j] = true;
                        stack.emplace_back(yy, xx);
                    }
                }
            }
            comps.push_back(std::move(comp));
        }
    }
    return comps;
}

} // namespace detail

/// Straight-line re-implementation of the G2 rules used only for testing.
inline LabelMask oracle_g2(const LabelMask& seeds, const BinaryMask& saliency,
                           Connectivity conn = Connectivity::Eight,
                           double area_fraction = 0.01) {
    if (seeds.height != saliency.height || seeds.width != saliency.width)
        throw UsageError("oracle_g2: dimensions differ");
    const int h = seeds.height, w = seeds.width;

    auto fg_comps = detail::oracle_flood(h, w, conn, [&](int y, int x) {
        return saliency.at(y, x) ? -1 : 0;
    });
    const double raw = area_fraction * static_cast<double>(h) * static_cast<double>(w);
    const std::uint64_t threshold = raw <= 0.0 ? 0 : static_cast<std::uint64_t>(std::ceil(raw - 1e-9));
    std::erase_if(fg_comps, [&](const detail::OracleComponent& c) {
        return c.pixels.size() < threshold;
    });

    const auto seed_comps = detail::oracle_flood(h, w, conn, [&](int y, int x) {
        const int v = seeds.at(y, x);
        return v == kIgnoreLabel ? 0 : v;
    });

    std::vector<int> fg_index(static_cast<size_t>(h) * w, -1);
    for (size_t k = 0; k < fg_comps.size(); ++k)
        for (auto [y, x] : fg_comps[k].pixels)
            fg_index[static_cast<size_t>(y) * w + x] = static_cast<int>(k);

    LabelMask out(h, w);
    for (size_t k = 0; k < fg_comps.size(); ++k) {
        const auto& comp = fg_comps[k];
        std::vector<std::uint8_t> classes;
        for (auto [y, x] : comp.pixels)
            if (seeds.at(y, x) != 0) classes.push_back(seeds.at(y, x));
        std::sort(classes.begin(), classes.end());
        classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

        if (classes.empty()) {
            for (auto [y, x] : comp.pixels) out.at(y, x) = kIgnoreLabel;
        } else if (classes.size() == 1) {
            for (auto [y, x] : comp.pixels) out.at(y, x) = classes.front();
        } else {
            // anchors in raster order so distance ties are class-independent
            std::vector<std::pair<int, int>> anchors;
            for (int sy = 0; sy < h; ++sy)
                for (int sx = 0; sx < w; ++sx)
                    if (fg_index[static_cast<size_t>(sy) * w + sx] == static_cast<int>(k) &&
                        seeds.at(sy, sx) != 0)
                        anchors.emplace_back(sy, sx);
            for (auto [y, x] : comp.pixels) {
                long best_d = -1;
                std::uint8_t best_cls = 0;
                for (auto [sy, sx] : anchors) {
                    const long dy = y - sy, dx = x - sx;
                    const long d = dy * dy + dx * dx;
                    if (best_d < 0 || d < best_d) {
                        best_d = d;
                        best_cls = seeds.at(sy, sx);
                    }
                }
                out.at(y, x) = best_cls;
            }
        }
    }
    for (const auto& seed : seed_comps) {
        bool touches = false;
        for (auto [y, x] : seed.pixels)
            if (fg_index[static_cast<size_t>(y) * w + x] >= 0) touches = true;
        if (touches) {
            for (auto [y, x] : seed.pixels)
                if (fg_index[static_cast<size_t>(y) * w + x] < 0) out.at(y, x) = kIgnoreLabel;
        } else {
            for (auto [y, x] : seed.pixels) out.at(y, x) = seed.cls;
        }
    }
    return out;
}

} // namespace guideseg
