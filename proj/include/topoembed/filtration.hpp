#pragma once

// Simplicial complexes over pixel grids and their lower-star filtrations.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "ingest.hpp"

namespace topoembed::filtration {

using SimplexId = std::uint32_t;
using Edge = std::array<std::uint32_t, 2>;
using Triangle = std::array<std::uint32_t, 3>;

/// A 2-dimensional simplicial complex.
///
/// Simplex ids are dense: vertices occupy [0, V), edges [V, V + E) and
/// triangles [V + E, V + E + T). Vertex tuples are stored sorted ascending.
/// Complexes built by build_complex() also carry their grid size; a vertex
/// id is then row * width + col.
struct SimplicialComplex {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t vertex_count = 0;
    std::vector<Edge> edges;
    std::vector<Triangle> triangles;
    std::vector<std::array<std::uint32_t, 3>> triangle_edges;  // edge indices, ascending

    std::size_t simplex_count() const { return vertex_count + edges.size() + triangles.size(); }

    int dimension(SimplexId s) const {
        if (s < vertex_count) return 0;
        return s < vertex_count + edges.size() ? 1 : 2;
    }

    SimplexId edge_id(std::size_t edge_index) const {
        return static_cast<SimplexId>(vertex_count + edge_index);
    }
    SimplexId triangle_id(std::size_t triangle_index) const {
        return static_cast<SimplexId>(vertex_count + edges.size() + triangle_index);
    }

    /// Sorted vertices of simplex `s` (1 to 3 entries).
    std::span<const std::uint32_t> vertices(const SimplexId& s) const {
        if (s < vertex_count) return {&s, 1};
        if (s < vertex_count + edges.size()) return edges[s - vertex_count];
        return triangles[s - vertex_count - edges.size()];
    }

    /// Codimension-1 faces of `s` as simplex ids, ascending.
    std::vector<SimplexId> boundary(SimplexId s) const {
        switch (dimension(s)) {
            case 0:
                return {};
            case 1: {
                const auto& e = edges[s - vertex_count];
                return {e[0], e[1]};
            }
            default: {
                const auto& te = triangle_edges[s - vertex_count - edges.size()];
                return {edge_id(te[0]), edge_id(te[1]), edge_id(te[2])};
            }
        }
    }
};

/// Builds a complex from its triangles plus any additional edges; every face
/// of a triangle is included. Edges are enumerated in lexicographic order.
inline SimplicialComplex make_complex(std::size_t vertex_count, std::vector<Triangle> triangles,
                                      std::vector<Edge> extra_edges = {}) {
    SimplicialComplex c;
    c.vertex_count = vertex_count;
    for (auto& t : triangles) std::sort(t.begin(), t.end());
    std::sort(triangles.begin(), triangles.end());
    triangles.erase(std::unique(triangles.begin(), triangles.end()), triangles.end());

    std::vector<Edge> edges = std::move(extra_edges);
    for (auto& e : edges) std::sort(e.begin(), e.end());
    for (const auto& t : triangles) {
        edges.push_back({t[0], t[1]});
        edges.push_back({t[0], t[2]});
        edges.push_back({t[1], t[2]});
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    for (const auto& e : edges)
        if (e[1] >= vertex_count || e[0] == e[1])
            throw InvalidArgument("edge references an invalid vertex");

    auto index_of = [&](std::uint32_t a, std::uint32_t b) {
        auto it = std::lower_bound(edges.begin(), edges.end(), Edge{a, b});
        return static_cast<std::uint32_t>(it - edges.begin());
    };
    c.triangle_edges.reserve(triangles.size());
    for (const auto& t : triangles)
        c.triangle_edges.push_back({index_of(t[0], t[1]), index_of(t[0], t[2]), index_of(t[1], t[2])});
    c.edges = std::move(edges);
    c.triangles = std::move(triangles);
    return c;
}

/// Freudenthal triangulation of a width x height vertex grid: every unit
/// square is split along its top-left to bottom-right diagonal.
inline SimplicialComplex build_complex(std::size_t width, std::size_t height) {
    if (width < 2 || height < 2)
        throw GridTooSmall("grid " + std::to_string(width) + "x" + std::to_string(height) +
                           " needs at least 2x2 vertices");
    std::vector<Triangle> triangles;
    triangles.reserve(2 * (width - 1) * (height - 1));
    for (std::size_t r = 0; r + 1 < height; ++r) {
        for (std::size_t c = 0; c + 1 < width; ++c) {
            const auto tl = static_cast<std::uint32_t>(r * width + c);
            const auto tr = tl + 1;
            const auto bl = static_cast<std::uint32_t>(tl + width);
            const auto br = bl + 1;
            triangles.push_back({tl, tr, br});
            triangles.push_back({tl, bl, br});
        }
    }
    SimplicialComplex c = make_complex(width * height, std::move(triangles));
    c.width = width;
    c.height = height;
    return c;
}

/// Simplices of a complex with their lower-star values, in filtration order.
struct Filtration {
    std::shared_ptr<const SimplicialComplex> complex;
    std::vector<double> values;       // by simplex id
    std::vector<SimplexId> order;     // position -> simplex id
    std::vector<std::uint32_t> position;  // simplex id -> position

    double value_at(std::size_t pos) const { return values[order[pos]]; }
};

/// Lower-star filtration: a simplex takes the maximum of its vertex values.
/// Order is (value, dimension, vertex tuple) ascending, which places every
/// face before its cofaces.
inline Filtration lower_star_filtration(std::shared_ptr<const SimplicialComplex> complex,
                                        std::span<const double> vertex_values) {
    const SimplicialComplex& c = *complex;
    if (vertex_values.size() != c.vertex_count)
        throw DimensionMismatch(std::to_string(vertex_values.size()) + " vertex values for a complex with " +
                                std::to_string(c.vertex_count) + " vertices");

    Filtration f;
    const std::size_t n = c.simplex_count();
    f.values.resize(n);
    for (SimplexId s = 0; s < n; ++s) {
        double v = vertex_values[c.vertices(s)[0]];
        for (auto u : c.vertices(s)) v = std::max(v, vertex_values[u]);
        f.values[s] = v;
    }

    f.order.resize(n);
    std::iota(f.order.begin(), f.order.end(), SimplexId{0});
    std::sort(f.order.begin(), f.order.end(), [&](SimplexId a, SimplexId b) {
        if (f.values[a] != f.values[b]) return f.values[a] < f.values[b];
        const int da = c.dimension(a);
        const int db = c.dimension(b);
        if (da != db) return da < db;
        const auto va = c.vertices(a);
        const auto vb = c.vertices(b);
        return std::lexicographical_compare(va.begin(), va.end(), vb.begin(), vb.end());
    });
    f.position.resize(n);
    for (std::uint32_t p = 0; p < n; ++p) f.position[f.order[p]] = p;
    f.complex = std::move(complex);
    return f;
}

inline Filtration lower_star_filtration(std::shared_ptr<const SimplicialComplex> complex,
                                        const ingest::ScalarGrid& grid) {
    if (grid.width != complex->width || grid.height != complex->height)
        throw DimensionMismatch("grid " + std::to_string(grid.width) + "x" + std::to_string(grid.height) +
                                " does not match complex " + std::to_string(complex->width) + "x" +
                                std::to_string(complex->height));
    return lower_star_filtration(std::move(complex), std::span<const double>(grid.values));
}

/// Shares one grid complex per (width, height). Not thread-safe; resolve the
/// complexes before fanning out work.
class ComplexCache {
public:
    std::shared_ptr<const SimplicialComplex> get(std::size_t width, std::size_t height) {
        auto& slot = cache_[{width, height}];
        if (!slot) slot = std::make_shared<const SimplicialComplex>(build_complex(width, height));
        return slot;
    }

private:
    std::map<std::pair<std::size_t, std::size_t>, std::shared_ptr<const SimplicialComplex>> cache_;
};

}  // namespace topoembed::filtration
