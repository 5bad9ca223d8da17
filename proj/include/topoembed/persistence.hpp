#pragma once

// Persistent homology over the two-element field by left-to-right boundary
// matrix reduction, with representative 1-cycles read off the reduced
// columns of the killing triangles.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "error.hpp"
#include "filtration.hpp"

namespace topoembed::persistence {

using filtration::Edge;
using filtration::Filtration;
using filtration::SimplexId;

/// Reduced boundary matrix indexed by filtration position. Column entries are
/// filtration positions, ascending.
struct ReducedMatrix {
    std::vector<std::vector<std::uint32_t>> columns;
    std::vector<std::int64_t> low;  // -1 for zero columns

    static constexpr std::int64_t none = -1;
};

struct PersistencePair {
    int dim = 0;
    double birth = 0.0;
    double death = 0.0;
    double persistence = 0.0;
    SimplexId birth_simplex = 0;
    SimplexId death_simplex = 0;

    bool operator==(const PersistencePair&) const = default;
};

struct EssentialClass {
    int dim = 0;
    double birth = 0.0;
    SimplexId simplex = 0;

    bool operator==(const EssentialClass&) const = default;
};

struct PersistenceDiagram {
    std::string item_id;
    std::vector<PersistencePair> pairs;
    std::vector<EssentialClass> essential;

    bool operator==(const PersistenceDiagram&) const = default;
};

/// A dim-1 pair with an explicit closed chain of edges (vertex-id pairs).
struct PersistenceCycle {
    PersistencePair pair;
    std::vector<Edge> edges;

    bool operator==(const PersistenceCycle&) const = default;
};

namespace detail {

// a <- a + b over Z/2 (symmetric difference of sorted sets)
inline void add_column(std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b,
                       std::vector<std::uint32_t>& scratch) {
    scratch.clear();
    std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(scratch));
    a.swap(scratch);
}

}  // namespace detail

/// Standard column reduction: while column j shares its lowest entry with an
/// earlier column, add that column into j.
inline ReducedMatrix reduce(const Filtration& f) {
    const auto& complex = *f.complex;
    const std::size_t n = f.order.size();
    ReducedMatrix m;
    m.columns.resize(n);
    m.low.assign(n, ReducedMatrix::none);
    std::vector<std::int64_t> column_with_low(n, ReducedMatrix::none);
    std::vector<std::uint32_t> scratch;

    for (std::size_t j = 0; j < n; ++j) {
        auto& col = m.columns[j];
        for (SimplexId face : complex.boundary(f.order[j])) col.push_back(f.position[face]);
        std::sort(col.begin(), col.end());
        while (!col.empty()) {
            const auto pivot = column_with_low[col.back()];
            if (pivot == ReducedMatrix::none) break;
            detail::add_column(col, m.columns[static_cast<std::size_t>(pivot)], scratch);
        }
        if (!col.empty()) {
            m.low[j] = col.back();
            column_with_low[col.back()] = static_cast<std::int64_t>(j);
        }
    }
    return m;
}

/// Reads the pairing off a reduced matrix. Pairs are listed by death
/// position; zero-persistence pairs are dropped unless `keep_zero` is set.
inline PersistenceDiagram extract_pairs(const ReducedMatrix& m, const Filtration& f,
                                        bool keep_zero = false, std::string item_id = {}) {
    const auto& complex = *f.complex;
    const std::size_t n = f.order.size();
    PersistenceDiagram d;
    d.item_id = std::move(item_id);
    std::vector<bool> is_low(n, false);
    for (std::size_t j = 0; j < n; ++j) {
        if (m.low[j] == ReducedMatrix::none) continue;
        const auto birth_pos = static_cast<std::size_t>(m.low[j]);
        is_low[birth_pos] = true;
        PersistencePair p;
        p.birth_simplex = f.order[birth_pos];
        p.death_simplex = f.order[j];
        p.dim = complex.dimension(p.birth_simplex);
        p.birth = f.values[p.birth_simplex];
        p.death = f.values[p.death_simplex];
        p.persistence = p.death - p.birth;
        if (keep_zero || p.death != p.birth) d.pairs.push_back(p);
    }
    for (std::size_t j = 0; j < n; ++j) {
        if (m.low[j] != ReducedMatrix::none || is_low[j]) continue;
        const SimplexId s = f.order[j];
        d.essential.push_back({complex.dimension(s), f.values[s], s});
    }
    return d;
}

/// One cycle per dim-1 pair of `d`: the reduced column of the pair's death
/// triangle, as vertex pairs in filtration order.
inline std::vector<PersistenceCycle> representative_cycles(const ReducedMatrix& m, const Filtration& f,
                                                           const PersistenceDiagram& d) {
    const auto& complex = *f.complex;
    std::vector<PersistenceCycle> out;
    for (const auto& pair : d.pairs) {
        if (pair.dim != 1) continue;
        PersistenceCycle cycle{pair, {}};
        for (auto pos : m.columns[f.position[pair.death_simplex]]) {
            const SimplexId e = f.order[pos];
            cycle.edges.push_back(complex.edges[e - complex.vertex_count]);
        }
        out.push_back(std::move(cycle));
    }
    return out;
}

/// Keeps the cycles whose persistence is at least `tau`, in input order.
inline std::vector<PersistenceCycle> filter_by_persistence(const std::vector<PersistenceCycle>& cycles,
                                                           double tau) {
    if (!(tau >= 0.0 && tau <= 1.0))
        throw InvalidArgument("cycle threshold must lie in [0, 1], got " + std::to_string(tau));
    std::vector<PersistenceCycle> out;
    std::copy_if(cycles.begin(), cycles.end(), std::back_inserter(out),
                 [tau](const PersistenceCycle& c) { return c.pair.persistence >= tau; });
    return out;
}

/// Diagram and cycles of one scalar grid.
struct ItemTopology {
    PersistenceDiagram diagram;
    std::vector<PersistenceCycle> cycles;
};

inline ItemTopology compute_topology(std::shared_ptr<const filtration::SimplicialComplex> complex,
                                     const ingest::ScalarGrid& grid, std::string item_id,
                                     bool keep_zero = false) {
    const Filtration f = filtration::lower_star_filtration(std::move(complex), grid);
    const ReducedMatrix m = reduce(f);
    ItemTopology t;
    t.diagram = extract_pairs(m, f, keep_zero, std::move(item_id));
    t.cycles = representative_cycles(m, f, t.diagram);
    return t;
}

}  // namespace topoembed::persistence
