#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "guideseg/common.hpp"
#include "guideseg/raster.hpp"

namespace guideseg {

enum class Connectivity { Four = 4, Eight = 8 };

/// Connected-component decomposition. Ids are dense 1..K and deterministic:
/// components are numbered by the raster position of their first pixel.
/// `cls` is 0 for saliency components and the seed class for seed components.
struct ComponentSet {
    struct Component {
        std::uint32_t id = 0;
        std::uint64_t area = 0;
        int min_row = 0, min_col = 0, max_row = 0, max_col = 0;
        std::uint8_t cls = 0;
    };

    int height = 0;
    int width = 0;
    std::vector<std::uint32_t> id_map; // 0 = no component
    std::vector<Component> components; // index k holds id k+1

    std::uint32_t id_at(int y, int x) const { return id_map[static_cast<size_t>(y) * width + x]; }
    size_t count() const { return components.size(); }
    const Component& component(std::uint32_t id) const { return components[id - 1]; }
};

namespace detail {

struct UnionFind {
    std::vector<std::uint32_t> parent;
    explicit UnionFind(size_t n) : parent(n) {
        for (size_t i = 0; i < n; ++i) parent[i] = static_cast<std::uint32_t>(i);
    }
    std::uint32_t find(std::uint32_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(std::uint32_t a, std::uint32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        // keep the smaller index as root so roots track first raster occurrence
        if (a < b)
            parent[b] = a;
        else
            parent[a] = b;
    }
};

// Shared two-pass labeling. `key(i)` returns 0 for non-foreground pixels and a
// nonzero group key otherwise; pixels join a component only when keys match.
template <typename KeyFn>
ComponentSet label_generic(int height, int width, Connectivity conn, KeyFn key) {
    const size_t n = static_cast<size_t>(height) * width;
    UnionFind uf(n);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const size_t i = static_cast<size_t>(y) * width + x;
            const int k = key(i);
            if (k == 0) continue;
            auto try_join = [&](int yy, int xx) {
                if (yy < 0 || xx < 0 || xx >= width) return;
                const size_t j = static_cast<size_t>(yy) * width + xx;
                if (key(j) == k) uf.unite(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
            };
            try_join(y, x - 1);
            try_join(y - 1, x);
            if (conn == Connectivity::Eight) {
                try_join(y - 1, x - 1);
                try_join(y - 1, x + 1);
            }
        }
    }

    ComponentSet cs;
    cs.height = height;
    cs.width = width;
    cs.id_map.assign(n, 0);
    std::unordered_map<std::uint32_t, std::uint32_t> root_to_id;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const size_t i = static_cast<size_t>(y) * width + x;
            const int k = key(i);
            if (k == 0) continue;
            const std::uint32_t root = uf.find(static_cast<std::uint32_t>(i));
            auto [it, inserted] = root_to_id.emplace(root, static_cast<std::uint32_t>(cs.components.size() + 1));
            if (inserted) {
                ComponentSet::Component c;
                c.id = it->second;
                c.min_row = c.max_row = y;
                c.min_col = c.max_col = x;
                c.cls = static_cast<std::uint8_t>(k == -1 ? 0 : k);
                cs.components.push_back(c);
            }
            const std::uint32_t id = it->second;
            cs.id_map[i] = id;
            auto& c = cs.components[id - 1];
            c.area += 1;
            c.min_row = std::min(c.min_row, y);
            c.max_row = std::max(c.max_row, y);
            c.min_col = std::min(c.min_col, x);
            c.max_col = std::max(c.max_col, x);
        }
    }
    return cs;
}

} // namespace detail

/// Components of a binary foreground mask.
inline ComponentSet label_components(const BinaryMask& mask,
                                     Connectivity conn = Connectivity::Eight) {
    return detail::label_generic(mask.height, mask.width, conn,
                                 [&](size_t i) { return mask.data[i] ? -1 : 0; });
}

/// Per-class components of a label mask: a component never spans two classes.
/// Background and ignore pixels belong to no component.
inline ComponentSet label_seed_components(const LabelMask& seeds,
                                          Connectivity conn = Connectivity::Eight) {
    return detail::label_generic(seeds.height, seeds.width, conn, [&](size_t i) {
        const int v = seeds.data[i];
        return (v == 0 || v == kIgnoreLabel) ? 0 : v;
    });
}

/// Keeps components with area >= ceil(min_fraction * H * W), re-densifying ids
/// in their original (first-pixel raster) order. The 1e-9 slack absorbs float
/// rounding when the product lands on an integer.
inline ComponentSet filter_by_area(const ComponentSet& cs, double min_fraction) {
    if (min_fraction < 0.0 || min_fraction > 1.0)
        throw UsageError("filter_by_area: fraction must be in [0,1]");
    const double raw = min_fraction * static_cast<double>(cs.height) *
                       static_cast<double>(cs.width);
    const std::uint64_t threshold =
        raw <= 0.0 ? 0 : static_cast<std::uint64_t>(std::ceil(raw - 1e-9));

    ComponentSet out;
    out.height = cs.height;
    out.width = cs.width;
    out.id_map.assign(cs.id_map.size(), 0);
    std::vector<std::uint32_t> remap(cs.components.size() + 1, 0);
    for (const auto& c : cs.components) {
        if (c.area >= threshold) {
            ComponentSet::Component kept = c;
            kept.id = static_cast<std::uint32_t>(out.components.size() + 1);
            remap[c.id] = kept.id;
            out.components.push_back(kept);
        }
    }
    for (size_t i = 0; i < cs.id_map.size(); ++i)
        if (cs.id_map[i]) out.id_map[i] = remap[cs.id_map[i]];
    return out;
}

/// Exact pixel-overlap counts between two component decompositions of the
/// same grid, with the derived views G2 needs: per foreground component the
/// distinct intersecting seed classes, per seed the touched foreground ids.
struct IntersectionTable {
    struct Pair {
        std::uint32_t fg_id = 0;
        std::uint32_t seed_id = 0;
        std::uint64_t overlap = 0;
    };
    std::vector<Pair> pairs; // sorted by (fg_id, seed_id)
    std::vector<std::vector<std::uint8_t>> fg_classes;  // [fg_id] -> sorted distinct classes
    std::vector<std::vector<std::uint32_t>> seed_fgs;   // [seed_id] -> sorted touched fg ids
};

inline IntersectionTable intersect(const ComponentSet& fg, const ComponentSet& seeds) {
    if (fg.height != seeds.height || fg.width != seeds.width)
        throw UsageError("intersect: component sets cover different grids");

    std::unordered_map<std::uint64_t, std::uint64_t> counts;
    for (size_t i = 0; i < fg.id_map.size(); ++i) {
        const std::uint32_t a = fg.id_map[i];
        const std::uint32_t b = seeds.id_map[i];
        if (a && b) counts[(static_cast<std::uint64_t>(a) << 32) | b] += 1;
    }

    IntersectionTable t;
    t.pairs.reserve(counts.size());
    for (const auto& [key, overlap] : counts)
        t.pairs.push_back({static_cast<std::uint32_t>(key >> 32),
                           static_cast<std::uint32_t>(key & 0xffffffffu), overlap});
    std::sort(t.pairs.begin(), t.pairs.end(), [](const auto& l, const auto& r) {
        return l.fg_id != r.fg_id ? l.fg_id < r.fg_id : l.seed_id < r.seed_id;
    });

    t.fg_classes.assign(fg.components.size() + 1, {});
    t.seed_fgs.assign(seeds.components.size() + 1, {});
    for (const auto& p : t.pairs) {
        t.fg_classes[p.fg_id].push_back(seeds.component(p.seed_id).cls);
        t.seed_fgs[p.seed_id].push_back(p.fg_id);
    }
    for (auto& cls : t.fg_classes) {
        std::sort(cls.begin(), cls.end());
        cls.erase(std::unique(cls.begin(), cls.end()), cls.end());
    }
    return t;
}

} // namespace guideseg
