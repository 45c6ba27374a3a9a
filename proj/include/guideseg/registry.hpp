#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "guideseg/common.hpp"

namespace guideseg {

/// Ordered set of foreground class names. Index 0 is background and index
/// 255 is ignore; neither appears in the list. Class i has label value i+1.
class ClassRegistry {
public:
    ClassRegistry() : names_(pascal_voc_names()) {}

    explicit ClassRegistry(std::vector<std::string> names) : names_(std::move(names)) {
        if (names_.empty() || names_.size() > 254)
            throw UsageError("class registry must hold between 1 and 254 names");
        std::set<std::string> seen;
        for (const auto& n : names_) {
            if (n.empty()) throw UsageError("class registry: empty class name");
            if (!seen.insert(n).second)
                throw UsageError("class registry: duplicate class name '" + n + "'");
        }
    }

    /// Registry with generic names class01..classNN (used for synthetic data).
    static ClassRegistry generic(int count) {
        if (count < 1 || count > 254) throw UsageError("class count out of range");
        std::vector<std::string> names;
        names.reserve(static_cast<size_t>(count));
        for (int i = 1; i <= count; ++i) {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "class%02d", i);
            names.emplace_back(buf);
        }
        return ClassRegistry(std::move(names));
    }

    int count() const { return static_cast<int>(names_.size()); }

    const std::string& name(int class_index) const {
        if (class_index < 1 || class_index > count())
            throw UsageError("class index out of range: " + std::to_string(class_index));
        return names_[static_cast<size_t>(class_index - 1)];
    }

    /// 1-based index of a class name, 0 if unknown.
    int index_of(const std::string& name) const {
        for (size_t i = 0; i < names_.size(); ++i)
            if (names_[i] == name) return static_cast<int>(i + 1);
        return 0;
    }

    const std::vector<std::string>& names() const { return names_; }

    static const std::vector<std::string>& pascal_voc_names() {
        static const std::vector<std::string> kNames = {
            "aeroplane", "bicycle", "bird", "boat", "bottle", "bus", "car",
            "cat", "chair", "cow", "diningtable", "dog", "horse", "motorbike",
            "person", "pottedplant", "sheep", "sofa", "train", "tvmonitor"};
        return kNames;
    }

private:
    std::vector<std::string> names_;
};

/// The canonical Pascal VOC 256-entry colormap (bit-reversal construction).
/// Entry 255 comes out as (224,224,192), the usual ignore colour.
inline const std::array<std::array<std::uint8_t, 3>, 256>& pascal_palette() {
    static const auto kPalette = [] {
        std::array<std::array<std::uint8_t, 3>, 256> p{};
        for (int i = 0; i < 256; ++i) {
            int id = i;
            std::uint8_t r = 0, g = 0, b = 0;
            for (int k = 0; k < 8; ++k) {
                r = static_cast<std::uint8_t>(r | ((id >> 0 & 1) << (7 - k)));
                g = static_cast<std::uint8_t>(g | ((id >> 1 & 1) << (7 - k)));
                b = static_cast<std::uint8_t>(b | ((id >> 2 & 1) << (7 - k)));
                id >>= 3;
            }
            p[static_cast<size_t>(i)] = {r, g, b};
        }
        return p;
    }();
    return kPalette;
}

} // namespace guideseg
