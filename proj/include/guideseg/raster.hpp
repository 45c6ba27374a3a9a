#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "guideseg/common.hpp"

namespace guideseg {

/// C-channel float heatmap. Channel-major, row-major within a channel.
/// C=1 maps double as saliency probability maps.
struct ScoreMap {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    ScoreMap() = default;
    ScoreMap(int c, int h, int w, float fill = 0.f)
        : channels(c), height(h), width(w) {
        if (c <= 0 || h <= 0 || w <= 0)
            throw UsageError("score map dimensions must be positive");
        data.assign(static_cast<size_t>(c) * h * w, fill);
    }

    size_t pixel_count() const { return static_cast<size_t>(height) * width; }

    float& at(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    const float* channel(int c) const { return data.data() + static_cast<size_t>(c) * pixel_count(); }
    float* channel(int c) { return data.data() + static_cast<size_t>(c) * pixel_count(); }
};

/// H×W raster of 8-bit class indices: 0 background, 1..C classes, 255 ignore.
struct LabelMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;

    LabelMask() = default;
    LabelMask(int h, int w, std::uint8_t fill = 0) : height(h), width(w) {
        if (h <= 0 || w <= 0) throw UsageError("label mask dimensions must be positive");
        data.assign(static_cast<size_t>(h) * w, fill);
    }

    std::uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return data.size(); }

    bool operator==(const LabelMask& o) const {
        return height == o.height && width == o.width && data == o.data;
    }
};

/// H×W boolean raster, true = salient foreground. Stored as bytes 0/1.
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;

    BinaryMask() = default;
    BinaryMask(int h, int w, bool fill = false) : height(h), width(w) {
        if (h <= 0 || w <= 0) throw UsageError("binary mask dimensions must be positive");
        data.assign(static_cast<size_t>(h) * w, fill ? 1 : 0);
    }

    bool at(int y, int x) const { return data[static_cast<size_t>(y) * width + x] != 0; }
    void set(int y, int x, bool v) { data[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
    size_t size() const { return data.size(); }

    bool operator==(const BinaryMask& o) const {
        return height == o.height && width == o.width && data == o.data;
    }
};

/// H×W×3 8-bit image, interleaved RGB.
struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;

    RgbImage() = default;
    RgbImage(int h, int w) : height(h), width(w) {
        if (h <= 0 || w <= 0) throw UsageError("image dimensions must be positive");
        data.assign(static_cast<size_t>(h) * w * 3, 0);
    }

    std::uint8_t* px(int y, int x) { return data.data() + (static_cast<size_t>(y) * width + x) * 3; }
    const std::uint8_t* px(int y, int x) const {
        return data.data() + (static_cast<size_t>(y) * width + x) * 3;
    }

    bool operator==(const RgbImage& o) const {
        return height == o.height && width == o.width && data == o.data;
    }
};

/// Image-level label set: sorted, unique foreground class indices in 1..C.
struct ImageLabels {
    std::vector<std::uint8_t> present;

    ImageLabels() = default;
    explicit ImageLabels(std::vector<int> classes, int num_classes = 254) {
        for (int c : classes) {
            if (c < 1 || c > num_classes)
                throw UsageError("image label " + std::to_string(c) + " outside 1.." +
                                 std::to_string(num_classes));
            present.push_back(static_cast<std::uint8_t>(c));
        }
        std::sort(present.begin(), present.end());
        present.erase(std::unique(present.begin(), present.end()), present.end());
    }

    bool contains(std::uint8_t c) const {
        return std::binary_search(present.begin(), present.end(), c);
    }
    bool empty() const { return present.empty(); }
    size_t size() const { return present.size(); }
};

/// Validates the {0..C, 255} value-set invariant of a label mask.
inline void validate_label_mask(const LabelMask& m, int num_classes,
                                const std::string& what = "label mask") {
    for (size_t i = 0; i < m.data.size(); ++i) {
        const int v = m.data[i];
        if (v != kIgnoreLabel && v > num_classes)
            throw DataError(what + ": value " + std::to_string(v) + " at pixel " +
                            std::to_string(i) + " is not background, a class in 1.." +
                            std::to_string(num_classes) + ", or ignore");
    }
}

/// Divides every channel by its own maximum after clamping negatives to zero.
/// Identically-zero channels pass through; any non-finite value is a data error.
inline ScoreMap normalize_scores(const ScoreMap& map) {
    ScoreMap out = map;
    const size_t n = out.pixel_count();
    for (int c = 0; c < out.channels; ++c) {
        float* ch = out.channel(c);
        float mx = 0.f;
        for (size_t i = 0; i < n; ++i) {
            if (!std::isfinite(ch[i]))
                throw DataError("normalize_scores: non-finite value in channel " +
                                std::to_string(c));
            if (ch[i] < 0.f) ch[i] = 0.f;
            mx = std::max(mx, ch[i]);
        }
        if (mx > 0.f)
            for (size_t i = 0; i < n; ++i) ch[i] /= mx;
    }
    return out;
}

/// Thresholds a 1-channel probability map at 50% of its maximum.
/// An identically-zero map yields an all-background mask.
inline BinaryMask binarize_saliency(const ScoreMap& prob) {
    if (prob.channels != 1)
        throw UsageError("binarize_saliency expects a 1-channel map, got " +
                         std::to_string(prob.channels));
    float mx = 0.f;
    for (float v : prob.data) {
        if (!std::isfinite(v) || v < 0.f)
            throw DataError("binarize_saliency: values must be finite and non-negative");
        mx = std::max(mx, v);
    }
    BinaryMask out(prob.height, prob.width);
    if (mx == 0.f) return out;
    const float cutoff = 0.5f * mx;
    for (size_t i = 0; i < prob.data.size(); ++i)
        out.data[i] = prob.data[i] >= cutoff ? 1 : 0;
    return out;
}

} // namespace guideseg
