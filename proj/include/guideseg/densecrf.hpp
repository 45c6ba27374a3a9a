#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "guideseg/common.hpp"
#include "guideseg/raster.hpp"

namespace guideseg {

/// Fully-connected CRF with an appearance kernel
/// exp(-|p_i-p_j|^2/(2 theta_alpha^2) - |I_i-I_j|^2/(2 theta_beta^2)) and a
/// smoothness kernel exp(-|p_i-p_j|^2/(2 theta_gamma^2)). Defaults are the
/// "v2" preset.
struct CrfParams {
    float w1 = 4.f;
    float theta_alpha = 121.f;
    float theta_beta = 5.f;
    float w2 = 3.f;
    float theta_gamma = 3.f;
    int iterations = 10;
};

inline CrfParams crf_preset(const std::string& name) {
    if (name == "v1") return {10.f, 80.f, 13.f, 3.f, 3.f, 10};
    if (name == "v2") return {4.f, 121.f, 5.f, 3.f, 3.f, 10};
    throw UsageError("unknown CRF preset '" + name + "' (expected v1 or v2)");
}

inline void validate_crf_params(const CrfParams& p) {
    if (!(p.theta_alpha > 0.f) || !(p.theta_beta > 0.f) || !(p.theta_gamma > 0.f))
        throw UsageError("CRF bandwidths must be positive");
    if (p.w1 < 0.f || p.w2 < 0.f) throw UsageError("CRF kernel weights must be non-negative");
    if (p.iterations < 1) throw UsageError("CRF iteration count must be positive");
}

/// Per-pixel negative log probabilities, pixel-major: data[(y*W+x)*L + l].
struct UnaryField {
    int num_labels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    UnaryField() = default;
    UnaryField(int labels, int h, int w, float fill = 0.f)
        : num_labels(labels), height(h), width(w) {
        if (labels < 2 || labels > 255)
            throw UsageError("unary field needs 2..255 labels, got " + std::to_string(labels));
        if (h <= 0 || w <= 0) throw UsageError("unary field dimensions must be positive");
        data.assign(static_cast<size_t>(h) * w * labels, fill);
    }

    float& at(int l, int y, int x) {
        return data[(static_cast<size_t>(y) * width + x) * num_labels + l];
    }
    float at(int l, int y, int x) const {
        return data[(static_cast<size_t>(y) * width + x) * num_labels + l];
    }
};

/// Mean-field marginals Q, same pixel-major layout as UnaryField.
struct MarginalField {
    int num_labels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> q;

    float at(int l, int y, int x) const {
        return q[(static_cast<size_t>(y) * width + x) * num_labels + l];
    }
    int argmax(int y, int x) const {
        const float* p = q.data() + (static_cast<size_t>(y) * width + x) * num_labels;
        int best = 0;
        for (int l = 1; l < num_labels; ++l)
            if (p[l] > p[best]) best = l;
        return best;
    }
};

// Exact message passing is O(N^2); inputs beyond this need the truncated path.
inline constexpr int kExactPixelLimit = 16384;

struct MeanFieldOptions {
    bool approx = false; // truncate messages to a 3*max(theta_alpha,theta_gamma) radius
    int threads = 1;
};

namespace detail {

// Gaussian factors as lookup tables. Row/column offsets and squared RGB
// distances are integers, so the kernel is three table fetches per pair.
struct CrfKernel {
    float w1 = 0.f, w2 = 0.f;
    std::vector<float> row_app, col_app;   // exp(-d^2 / (2 theta_alpha^2))
    std::vector<float> row_sm, col_sm;     // exp(-d^2 / (2 theta_gamma^2))
    std::vector<float> color;              // exp(-d / (2 theta_beta^2)), d = |I_i-I_j|^2

    CrfKernel(const CrfParams& p, int h, int w) : w1(p.w1), w2(p.w2) {
        auto axis = [](int n, float theta) {
            std::vector<float> t(static_cast<size_t>(n));
            const float inv = 1.f / (2.f * theta * theta);
            for (int d = 0; d < n; ++d)
                t[static_cast<size_t>(d)] = std::exp(-static_cast<float>(d) * d * inv);
            return t;
        };
        row_app = axis(h, p.theta_alpha);
        col_app = axis(w, p.theta_alpha);
        row_sm = axis(h, p.theta_gamma);
        col_sm = axis(w, p.theta_gamma);
        const int kMaxColorDist = 3 * 255 * 255;
        color.resize(static_cast<size_t>(kMaxColorDist) + 1);
        const float inv = 1.f / (2.f * p.theta_beta * p.theta_beta);
        for (int d = 0; d <= kMaxColorDist; ++d)
            color[static_cast<size_t>(d)] = std::exp(-static_cast<float>(d) * inv);
    }

    float weight(const RgbImage& img, int y1, int x1, int y2, int x2) const {
        const std::uint8_t* a = img.px(y1, x1);
        const std::uint8_t* b = img.px(y2, x2);
        const int dr = a[0] - b[0], dg = a[1] - b[1], db = a[2] - b[2];
        const int dy = std::abs(y1 - y2), dx = std::abs(x1 - x2);
        return w1 * row_app[static_cast<size_t>(dy)] * col_app[static_cast<size_t>(dx)] *
                   color[static_cast<size_t>(dr * dr + dg * dg + db * db)] +
               w2 * row_sm[static_cast<size_t>(dy)] * col_sm[static_cast<size_t>(dx)];
    }
};

// Sums values smallest-first so the result does not depend on label order;
// permuting labels must permute marginals bit-exactly.
inline double ordered_sum(const float* v, int n) {
    float sorted[256];
    std::copy(v, v + n, sorted);
    std::sort(sorted, sorted + n);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += sorted[i];
    return s;
}

// softmax of `logits` into `out` (may alias), numerically shifted by the max.
inline void canonical_softmax(const float* logits, int n, float* out) {
    float mx = logits[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    float e[256];
    for (int i = 0; i < n; ++i) e[i] = std::exp(logits[i] - mx);
    const double sum = ordered_sum(e, n);
    for (int i = 0; i < n; ++i) out[i] = static_cast<float>(e[i] / sum);
}

} // namespace detail

/// Synchronous mean-field inference: Q starts at softmax(-unary) and each
/// round recomputes Q_i(l) from exp(-unary_i(l) + sum_{j!=i} k(i,j) Q_j(l))
/// with per-pixel renormalization. Runs exactly params.iterations rounds.
inline MarginalField mean_field(const UnaryField& unary, const RgbImage& image,
                                const CrfParams& params, const MeanFieldOptions& opts = {}) {
    validate_crf_params(params);
    const int h = unary.height, w = unary.width, L = unary.num_labels;
    if (L < 2) throw UsageError("mean_field: need at least 2 labels");
    if (image.height != h || image.width != w)
        throw UsageError("mean_field: image and unary dimensions differ");
    const size_t n = static_cast<size_t>(h) * w;
    if (!opts.approx && n > kExactPixelLimit)
        throw ResourceError("mean_field: " + std::to_string(n) + " pixels exceed the exact-path limit of " +
                            std::to_string(kExactPixelLimit) + "; enable the truncated approximation");
    for (float v : unary.data)
        if (!std::isfinite(v)) throw DataError("mean_field: non-finite unary");

    const detail::CrfKernel kernel(params, h, w);
    // h + w always exceeds the grid diagonal, so the exact path skips nothing.
    const int radius = opts.approx
                           ? static_cast<int>(std::ceil(3.f * std::max(params.theta_alpha,
                                                                       params.theta_gamma)))
                           : h + w;
    const int radius_sq = radius * radius;

    std::vector<float> q(n * L), qnext(n * L);
    for (size_t i = 0; i < n; ++i) {
        float neg[256];
        for (int l = 0; l < L; ++l) neg[l] = -unary.data[i * L + l];
        detail::canonical_softmax(neg, L, q.data() + i * L);
    }

    const int threads = std::clamp(opts.threads, 1, h);
    std::vector<float> acc_buf(static_cast<size_t>(threads) * L);

    auto sweep_rows = [&](int y0, int y1, float* acc) {
        for (int yi = y0; yi < y1; ++yi) {
            for (int xi = 0; xi < w; ++xi) {
                const size_t i = static_cast<size_t>(yi) * w + xi;
                const std::uint8_t* ci = image.data.data() + i * 3;
                std::fill(acc, acc + L, 0.f);
                const int yj0 = std::max(0, yi - radius), yj1 = std::min(h - 1, yi + radius);
                for (int yj = yj0; yj <= yj1; ++yj) {
                    const int dy = std::abs(yi - yj);
                    const float ra = kernel.w1 * kernel.row_app[static_cast<size_t>(dy)];
                    const float rs = kernel.w2 * kernel.row_sm[static_cast<size_t>(dy)];
                    const std::uint8_t* crow = image.data.data() + static_cast<size_t>(yj) * w * 3;
                    const float* qrow = q.data() + static_cast<size_t>(yj) * w * L;
                    const int xj0 = std::max(0, xi - radius), xj1 = std::min(w - 1, xi + radius);
                    for (int xj = xj0; xj <= xj1; ++xj) {
                        if (yj == yi && xj == xi) continue;
                        const int dx = std::abs(xi - xj);
                        if (dy * dy + dx * dx > radius_sq) continue;
                        const std::uint8_t* cj = crow + static_cast<size_t>(xj) * 3;
                        const int dr = ci[0] - cj[0], dg = ci[1] - cj[1], db = ci[2] - cj[2];
                        const float wgt =
                            ra * kernel.col_app[static_cast<size_t>(dx)] *
                                kernel.color[static_cast<size_t>(dr * dr + dg * dg + db * db)] +
                            rs * kernel.col_sm[static_cast<size_t>(dx)];
                        const float* qj = qrow + static_cast<size_t>(xj) * L;
                        for (int l = 0; l < L; ++l) acc[l] += wgt * qj[l];
                    }
                }
                float logits[256];
                for (int l = 0; l < L; ++l) logits[l] = -unary.data[i * L + l] + acc[l];
                detail::canonical_softmax(logits, L, qnext.data() + i * L);
            }
        }
    };

    for (int it = 0; it < params.iterations; ++it) {
        if (threads == 1) {
            sweep_rows(0, h, acc_buf.data());
        } else {
            std::vector<std::thread> pool;
            const int rows_per = (h + threads - 1) / threads;
            for (int t = 0; t < threads; ++t) {
                const int y0 = t * rows_per, y1 = std::min(h, y0 + rows_per);
                if (y0 >= y1) break;
                pool.emplace_back(sweep_rows, y0, y1, acc_buf.data() + static_cast<size_t>(t) * L);
            }
            for (auto& th : pool) th.join();
        }
        std::swap(q, qnext);
    }

    MarginalField out;
    out.num_labels = L;
    out.height = h;
    out.width = w;
    out.q = std::move(q);
    return out;
}

inline constexpr float kProbClip = 1e-5f;
inline constexpr float kSeedConfidence = 0.9f;

/// CRF smoothing of a probability map: unary = -log(prob), mean-field, argmax.
/// Channel k of `probs` is label value k in the result.
inline LabelMask crf_postproc(const ScoreMap& probs, const RgbImage& image,
                              const CrfParams& params, const MeanFieldOptions& opts = {}) {
    const int L = probs.channels;
    if (L < 2 || L > 255) throw UsageError("crf_postproc: need 2..255 probability channels");
    UnaryField unary(L, probs.height, probs.width);
    const size_t n = probs.pixel_count();
    for (size_t i = 0; i < n; ++i) {
        float p[256];
        for (int l = 0; l < L; ++l) {
            float v = probs.data[static_cast<size_t>(l) * n + i];
            if (!std::isfinite(v)) throw DataError("crf_postproc: non-finite probability");
            p[l] = std::clamp(v, kProbClip, 1.f);
        }
        const double sum = detail::ordered_sum(p, L);
        for (int l = 0; l < L; ++l)
            unary.data[i * L + l] = -std::log(static_cast<float>(p[l] / sum));
    }
    const MarginalField q = mean_field(unary, image, params, opts);
    LabelMask out(probs.height, probs.width);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            out.at(y, x) = static_cast<std::uint8_t>(q.argmax(y, x));
    return out;
}

/// CRF smoothing of a seed mask: every pixel gets `confidence` on its own
/// label, the remaining mass spread over the other labels present. The label
/// set is {background} plus the classes present in the seeds.
inline LabelMask crf_seed(const LabelMask& seeds, const RgbImage& image, const CrfParams& params,
                          float confidence = kSeedConfidence, const MeanFieldOptions& opts = {}) {
    if (!(confidence > 0.5f && confidence < 1.f))
        throw UsageError("crf_seed: confidence must lie in (0.5, 1)");
    if (seeds.height != image.height || seeds.width != image.width)
        throw UsageError("crf_seed: seed/image dimensions differ");

    bool present[256] = {};
    present[0] = true; // background is always a candidate label
    for (std::uint8_t v : seeds.data) {
        if (v == kIgnoreLabel) throw UsageError("crf_seed: seeds must not contain ignore pixels");
        present[v] = true;
    }
    std::vector<std::uint8_t> values;
    for (int v = 0; v < 256; ++v)
        if (present[v]) values.push_back(static_cast<std::uint8_t>(v));
    const int L = static_cast<int>(values.size());
    if (L == 1) return seeds; // unanimous, nothing to infer

    std::vector<int> channel_of(256, -1);
    for (int l = 0; l < L; ++l) channel_of[values[static_cast<size_t>(l)]] = l;

    UnaryField unary(L, seeds.height, seeds.width);
    const float own = -std::log(confidence);
    const float other = -std::log((1.f - confidence) / static_cast<float>(L - 1));
    for (size_t i = 0; i < seeds.data.size(); ++i) {
        const int lc = channel_of[seeds.data[i]];
        for (int l = 0; l < L; ++l) unary.data[i * L + l] = l == lc ? own : other;
    }
    const MarginalField q = mean_field(unary, image, params, opts);
    LabelMask out(seeds.height, seeds.width);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            out.at(y, x) = values[static_cast<size_t>(q.argmax(y, x))];
    return out;
}

/// Dense CRF restricted to one connected component: inference runs on the
/// component's bounding box over exactly `classes` (no background label), and
/// only component pixels are written back into `out`. Seed pixels inside the
/// component anchor the unaries at kSeedConfidence.
inline void region_crf(const BinaryMask& component, const LabelMask& seeds,
                       const std::vector<std::uint8_t>& class_set, const RgbImage& image,
                       const CrfParams& params, LabelMask& out,
                       const MeanFieldOptions& opts = {}) {
    std::vector<std::uint8_t> classes = class_set;
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    if (classes.size() < 2)
        throw UsageError("region_crf: needs at least 2 candidate classes");
    if (component.height != image.height || component.width != image.width ||
        seeds.height != image.height || seeds.width != image.width ||
        out.height != image.height || out.width != image.width)
        throw UsageError("region_crf: input dimensions differ");

    int y0 = component.height, y1 = -1, x0 = component.width, x1 = -1;
    for (int y = 0; y < component.height; ++y)
        for (int x = 0; x < component.width; ++x)
            if (component.at(y, x)) {
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
            }
    if (y1 < 0) return; // empty component

    const int bh = y1 - y0 + 1, bw = x1 - x0 + 1;
    const int L = static_cast<int>(classes.size());
    UnaryField unary(L, bh, bw);
    RgbImage crop(bh, bw);
    const float uniform = -std::log(1.f / static_cast<float>(L));
    const float own = -std::log(kSeedConfidence);
    const float other = -std::log((1.f - kSeedConfidence) / static_cast<float>(L - 1));
    for (int y = 0; y < bh; ++y) {
        for (int x = 0; x < bw; ++x) {
            std::copy_n(image.px(y0 + y, x0 + x), 3, crop.px(y, x));
            float* u = unary.data.data() + (static_cast<size_t>(y) * bw + x) * L;
            int lc = -1;
            if (component.at(y0 + y, x0 + x)) {
                const std::uint8_t s = seeds.at(y0 + y, x0 + x);
                const auto it = std::lower_bound(classes.begin(), classes.end(), s);
                if (s != 0 && it != classes.end() && *it == s)
                    lc = static_cast<int>(it - classes.begin());
            }
            for (int l = 0; l < L; ++l)
                u[l] = lc < 0 ? uniform : (l == lc ? own : other);
        }
    }

    const MarginalField q = mean_field(unary, crop, params, opts);
    for (int y = 0; y < bh; ++y)
        for (int x = 0; x < bw; ++x)
            if (component.at(y0 + y, x0 + x))
                out.at(y0 + y, x0 + x) = classes[static_cast<size_t>(q.argmax(y, x))];
}

} // namespace guideseg
