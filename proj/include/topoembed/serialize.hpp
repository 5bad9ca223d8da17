#pragma once

// JSON and binary encodings of pipeline artifacts. Doubles are written in
// their shortest round-trip decimal form, so decoding is bit-exact.

#include <bit>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "analysis.hpp"
#include "encoding.hpp"
#include "error.hpp"
#include "ingest.hpp"
#include "persistence.hpp"
#include "vectorize.hpp"

namespace topoembed::serialize {

using json = nlohmann::json;

template <typename T>
T field(const json& j, std::string_view key, std::string_view context) {
    auto it = j.find(key);
    if (it == j.end())
        throw IoError(std::string(context) + ": missing field '" + std::string(key) + "'");
    try {
        return it->get<T>();
    } catch (const json::exception& e) {
        throw IoError(std::string(context) + ": field '" + std::string(key) + "': " + e.what());
    }
}

inline json parse(std::string_view text, std::string_view context) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw IoError(std::string(context) + ": " + e.what());
    }
}

// ---- items ----------------------------------------------------------------

inline json item_to_json(const ingest::LabeledRaster& r) {
    return {{"id", r.id},
            {"label", r.label},
            {"width", r.width},
            {"height", r.height},
            {"raster", encoding::base64_encode(r.pixels)}};
}

inline ingest::LabeledRaster item_from_json(const json& j) {
    ingest::LabeledRaster r;
    r.id = field<std::string>(j, "id", "item");
    r.label = field<int>(j, "label", r.id);
    r.width = field<std::size_t>(j, "width", r.id);
    r.height = field<std::size_t>(j, "height", r.id);
    r.pixels = encoding::base64_decode(field<std::string>(j, "raster", r.id));
    if (r.pixels.size() != r.width * r.height)
        throw IoError("item '" + r.id + "': raster has " + std::to_string(r.pixels.size()) + " bytes, expected " +
                      std::to_string(r.width * r.height));
    return r;
}

// ---- diagrams ---------------------------------------------------------------

inline json diagram_to_json(const persistence::PersistenceDiagram& d) {
    json pairs = json::array();
    for (const auto& p : d.pairs)
        pairs.push_back({{"dim", p.dim},
                         {"birth", p.birth},
                         {"death", p.death},
                         {"persistence", p.persistence},
                         {"birth_simplex", p.birth_simplex},
                         {"death_simplex", p.death_simplex}});
    json essential = json::array();
    for (const auto& e : d.essential)
        essential.push_back({{"dim", e.dim}, {"birth", e.birth}, {"simplex", e.simplex}});
    return {{"id", d.item_id}, {"pairs", std::move(pairs)}, {"essential", std::move(essential)}};
}

inline persistence::PersistenceDiagram diagram_from_json(const json& j) {
    persistence::PersistenceDiagram d;
    d.item_id = field<std::string>(j, "id", "diagram");
    for (const auto& p : field<json>(j, "pairs", d.item_id))
        d.pairs.push_back({field<int>(p, "dim", d.item_id), field<double>(p, "birth", d.item_id),
                           field<double>(p, "death", d.item_id), field<double>(p, "persistence", d.item_id),
                           field<std::uint32_t>(p, "birth_simplex", d.item_id),
                           field<std::uint32_t>(p, "death_simplex", d.item_id)});
    for (const auto& e : field<json>(j, "essential", d.item_id))
        d.essential.push_back({field<int>(e, "dim", d.item_id), field<double>(e, "birth", d.item_id),
                               field<std::uint32_t>(e, "simplex", d.item_id)});
    return d;
}

// ---- cycles -----------------------------------------------------------------

/// Cycles reference their pair by its index in the diagram's pair list.
inline json cycles_to_json(const std::string& item_id, const persistence::PersistenceDiagram& d,
                           const std::vector<persistence::PersistenceCycle>& cycles) {
    json out = json::array();
    for (const auto& c : cycles) {
        std::size_t index = 0;
        while (index < d.pairs.size() && !(d.pairs[index] == c.pair)) ++index;
        if (index == d.pairs.size())
            throw IoError("item '" + item_id + "': cycle does not belong to the diagram");
        json edges = json::array();
        for (const auto& e : c.edges) edges.push_back({e[0], e[1]});
        out.push_back({{"pair_index", index},
                       {"birth", c.pair.birth},
                       {"death", c.pair.death},
                       {"persistence", c.pair.persistence},
                       {"edges", std::move(edges)}});
    }
    return {{"id", item_id}, {"cycles", std::move(out)}};
}

inline std::vector<persistence::PersistenceCycle> cycles_from_json(const json& j,
                                                                   const persistence::PersistenceDiagram& d) {
    const auto id = field<std::string>(j, "id", "cycles");
    std::vector<persistence::PersistenceCycle> out;
    for (const auto& c : field<json>(j, "cycles", id)) {
        const auto index = field<std::size_t>(c, "pair_index", id);
        if (index >= d.pairs.size() || d.pairs[index].dim != 1)
            throw IoError("cycles of '" + id + "' reference pair " + std::to_string(index) +
                          " which is not a dim-1 pair of the diagram");
        persistence::PersistenceCycle cycle{d.pairs[index], {}};
        for (const auto& e : field<json>(c, "edges", id))
            cycle.edges.push_back({e.at(0).get<std::uint32_t>(), e.at(1).get<std::uint32_t>()});
        out.push_back(std::move(cycle));
    }
    return out;
}

// ---- persistence images -----------------------------------------------------

inline json image_to_json(const vectorize::PersistenceImage& img, const vectorize::ImageParams& params) {
    json j{{"id", img.item_id},
           {"resolution", img.resolution},
           {"sigma", params.sigma},
           {"mode", vectorize::to_string(params.mode)},
           {"pixels", img.pixels}};
    j["global_scale"] = params.global_scale ? json(*params.global_scale) : json(nullptr);
    return j;
}

inline vectorize::PersistenceImage image_from_json(const json& j) {
    vectorize::PersistenceImage img;
    img.item_id = field<std::string>(j, "id", "persistence image");
    img.resolution = field<std::size_t>(j, "resolution", img.item_id);
    img.pixels = field<std::vector<double>>(j, "pixels", img.item_id);
    if (img.pixels.size() != img.resolution * img.resolution)
        throw IoError("persistence image '" + img.item_id + "' has " + std::to_string(img.pixels.size()) +
                      " pixels for resolution " + std::to_string(img.resolution));
    return img;
}

// ---- embeddings -------------------------------------------------------------

inline json embedding_to_json(const analysis::Embedding& e) {
    json coords = json::array();
    for (std::size_t i = 0; i < e.n; ++i) coords.push_back({e.x(i), e.y(i)});
    json j{{"method", analysis::to_string(e.method)},
           {"coords", std::move(coords)},
           {"params", e.params},
           {"notes", e.notes}};
    j["seed"] = e.seed ? json(*e.seed) : json(nullptr);
    return j;
}

inline analysis::Embedding embedding_from_json(const json& j) {
    analysis::Embedding e;
    e.method = analysis::parse_method(field<std::string>(j, "method", "embedding"));
    const auto coords = field<json>(j, "coords", "embedding");
    e.n = coords.size();
    for (const auto& c : coords) {
        e.coords.push_back(c.at(0).get<double>());
        e.coords.push_back(c.at(1).get<double>());
    }
    e.params = field<std::map<std::string, double>>(j, "params", "embedding");
    e.notes = field<std::vector<std::string>>(j, "notes", "embedding");
    if (auto it = j.find("seed"); it != j.end() && !it->is_null()) e.seed = it->get<std::uint64_t>();
    return e;
}

// ---- distance matrix --------------------------------------------------------

/// Row-major little-endian IEEE-754 doubles.
inline std::string distances_to_bytes(const analysis::DistanceMatrix& D) {
    std::string out(8 * D.d.size(), '\0');
    for (std::size_t i = 0; i < D.d.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(D.d[i]);
        for (int b = 0; b < 8; ++b) out[8 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
    return out;
}

inline analysis::DistanceMatrix distances_from_bytes(std::string_view bytes, std::vector<std::string> ids) {
    const std::size_t n = ids.size();
    if (bytes.size() != 8 * n * n)
        throw IoError("distances.bin has " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(8 * n * n));
    analysis::DistanceMatrix D{n, std::vector<double>(n * n), std::move(ids)};
    for (std::size_t i = 0; i < n * n; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= std::uint64_t{static_cast<std::uint8_t>(bytes[8 * i + b])} << (8 * b);
        D.d[i] = std::bit_cast<double>(bits);
    }
    return D;
}

}  // namespace topoembed::serialize
