#pragma once

// Pipeline orchestration and the on-disk project store.
//
//   <project>/config.json         ProjectConfig (without the thread count)
//   <project>/items.json          [{id, label, width, height, raster(base64)}]
//   <project>/diagrams/<id>.json  persistence pairs and essential classes
//   <project>/cycles/<id>.json    representative 1-cycles
//   <project>/pimages/<id>.json   persistence images
//   <project>/distances.bin       n*n little-endian doubles, row-major
//   <project>/embeddings.json     one entry per embedding method
//   <project>/manifest.json       pipeline version, parameters, SHA-256 per artifact
//
// Every file is written to a temporary name and renamed into place; the
// manifest is written last, so readers only ever see completed artifacts.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "analysis.hpp"
#include "encoding.hpp"
#include "error.hpp"
#include "filtration.hpp"
#include "ingest.hpp"
#include "parallel.hpp"
#include "persistence.hpp"
#include "serialize.hpp"
#include "vectorize.hpp"

namespace topoembed::project {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr int pipeline_version = 1;
inline constexpr const char* store_format = "topoembed-project";

struct InputSpec {
    std::string path;
    std::string format = "idx";  // idx | dir
    std::string labels;          // idx only; derived from `path` when empty
};

struct ProjectConfig {
    InputSpec input;
    std::size_t per_class = 100;
    std::uint64_t seed = 42;
    bool invert = true;

    double sigma = 0.01;
    std::size_t resolution = 10;
    vectorize::ImageMode mode = vectorize::ImageMode::integrate;
    bool global_scale = false;

    std::vector<analysis::Method> methods{analysis::Method::mds, analysis::Method::isomap, analysis::Method::tsne};
    std::size_t isomap_k = 10;
    double perplexity = 30.0;
    int iterations = 1000;
    double learning_rate = 200.0;
    std::uint64_t embedding_seed = 42;

    std::size_t threads = 0;  // runtime only, never persisted

    void validate() const {
        if (input.format != "idx" && input.format != "dir")
            throw InvalidArgument("input format must be 'idx' or 'dir', got '" + input.format + "'");
        if (per_class < 1) throw InvalidArgument("per_class must be at least 1");
        if (!(sigma > 0.0)) throw InvalidArgument("sigma must be positive");
        if (resolution < 1) throw InvalidArgument("resolution must be at least 1");
        if (methods.empty()) throw InvalidArgument("at least one embedding method is required");
        if (isomap_k < 1) throw InvalidArgument("k must be at least 1");
        if (!(perplexity > 0.0)) throw InvalidArgument("perplexity must be positive");
        if (iterations < 0) throw InvalidArgument("iterations must be non-negative");
        if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
    }

    vectorize::ImageParams image_params() const {
        return {resolution, sigma, mode, std::nullopt};
    }
};

inline json config_to_json(const ProjectConfig& c) {
    json methods = json::array();
    for (auto m : c.methods) methods.push_back(analysis::to_string(m));
    return {{"input", {{"path", c.input.path}, {"format", c.input.format}, {"labels", c.input.labels}}},
            {"per_class", c.per_class},
            {"seed", c.seed},
            {"invert", c.invert},
            {"image",
             {{"sigma", c.sigma},
              {"resolution", c.resolution},
              {"mode", vectorize::to_string(c.mode)},
              {"global_scale", c.global_scale}}},
            {"embedding",
             {{"methods", std::move(methods)},
              {"k", c.isomap_k},
              {"perplexity", c.perplexity},
              {"iterations", c.iterations},
              {"learning_rate", c.learning_rate},
              {"seed", c.embedding_seed}}}};
}

/// Fields present in `j` override those of `base`; the schema matches
/// config_to_json() plus an optional top-level "threads".
inline ProjectConfig config_from_json(const json& j, ProjectConfig base = {}) {
    try {
        if (!j.is_object()) throw InvalidArgument("configuration must be a JSON object");
        if (auto in = j.find("input"); in != j.end()) {
            base.input.path = in->value("path", base.input.path);
            base.input.format = in->value("format", base.input.format);
            base.input.labels = in->value("labels", base.input.labels);
        }
        base.per_class = j.value("per_class", base.per_class);
        base.seed = j.value("seed", base.seed);
        base.invert = j.value("invert", base.invert);
        base.threads = j.value("threads", base.threads);
        if (auto img = j.find("image"); img != j.end()) {
            base.sigma = img->value("sigma", base.sigma);
            base.resolution = img->value("resolution", base.resolution);
            if (img->contains("mode")) base.mode = vectorize::parse_image_mode(img->at("mode").get<std::string>());
            base.global_scale = img->value("global_scale", base.global_scale);
        }
        if (auto emb = j.find("embedding"); emb != j.end()) {
            if (emb->contains("methods")) {
                base.methods.clear();
                for (const auto& m : emb->at("methods")) base.methods.push_back(analysis::parse_method(m.get<std::string>()));
            }
            base.isomap_k = emb->value("k", base.isomap_k);
            base.perplexity = emb->value("perplexity", base.perplexity);
            base.iterations = emb->value("iterations", base.iterations);
            base.learning_rate = emb->value("learning_rate", base.learning_rate);
            base.embedding_seed = emb->value("seed", base.embedding_seed);
        }
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("invalid configuration: ") + e.what());
    }
    return base;
}

/// Locations inside a project directory.
struct StorePaths {
    fs::path root;

    fs::path manifest() const { return root / "manifest.json"; }
    fs::path config() const { return root / "config.json"; }
    fs::path items() const { return root / "items.json"; }
    fs::path distances() const { return root / "distances.bin"; }
    fs::path embeddings() const { return root / "embeddings.json"; }
    static std::string diagram(const std::string& id) { return "diagrams/" + id + ".json"; }
    static std::string cycles(const std::string& id) { return "cycles/" + id + ".json"; }
    static std::string pimage(const std::string& id) { return "pimages/" + id + ".json"; }
};

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return std::move(buffer).str();
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
inline void write_atomic(const fs::path& path, std::string_view bytes) {
    fs::create_directories(path.parent_path());
    const auto tag = std::hash<std::thread::id>{}(std::this_thread::get_id());
    fs::path tmp = path;
    tmp += ".tmp-" + std::to_string(tag);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp.string() + "'");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw IoError("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw IoError("cannot move '" + tmp.string() + "' into place: " + ec.message());
    }
}

/// Manifest being assembled by a pipeline stage.
class ManifestWriter {
public:
    explicit ManifestWriter(fs::path root) : root_(std::move(root)) {}

    /// Starts from the manifest on disk (if any) so later stages extend it.
    static ManifestWriter resume(const fs::path& root) {
        ManifestWriter w(root);
        const StorePaths paths{root};
        if (fs::exists(paths.manifest())) {
            const json m = serialize::parse(read_file(paths.manifest()), "manifest.json");
            w.artifacts_ = m.value("artifacts", json::object());
            w.stages_ = m.value("stages", std::vector<std::string>{});
        }
        return w;
    }

    /// Writes an artifact atomically and records its checksum.
    void write(const std::string& relative, std::string_view bytes) {
        write_atomic(root_ / relative, bytes);
        artifacts_[relative] = encoding::sha256_hex(bytes);
    }

    void forget(const std::string& relative) {
        artifacts_.erase(relative);
        std::error_code ec;
        fs::remove(root_ / relative, ec);
    }

    /// Drops every artifact whose path starts with `prefix`.
    void forget_prefix(const std::string& prefix) {
        std::vector<std::string> doomed;
        for (auto it = artifacts_.begin(); it != artifacts_.end(); ++it)
            if (it.key().rfind(prefix, 0) == 0) doomed.push_back(it.key());
        for (const auto& d : doomed) forget(d);
    }

    void set_stages(std::vector<std::string> stages) { stages_ = std::move(stages); }
    const std::vector<std::string>& stages() const { return stages_; }

    void commit(const ProjectConfig& config) const {
        json m{{"format", store_format},
               {"pipeline_version", pipeline_version},
               {"stages", stages_},
               {"parameters", config_to_json(config)},
               {"artifacts", artifacts_}};
        write_atomic(StorePaths{root_}.manifest(), m.dump(2) + "\n");
    }

private:
    fs::path root_;
    json artifacts_ = json::object();
    std::vector<std::string> stages_;
};

/// Everything a project directory holds, cross-indexed by item id.
struct Project {
    ProjectConfig config;
    std::vector<std::string> stages;
    std::vector<ingest::LabeledRaster> items;
    std::vector<persistence::PersistenceDiagram> diagrams;
    std::vector<std::vector<persistence::PersistenceCycle>> cycles;
    std::vector<vectorize::PersistenceImage> images;
    std::optional<analysis::DistanceMatrix> distances;
    std::map<analysis::Method, analysis::Embedding> embeddings;
    std::map<std::string, std::size_t> index;

    bool computed() const { return !images.empty() || (items.empty() && distances.has_value()); }

    std::optional<std::size_t> find(const std::string& id) const {
        auto it = index.find(id);
        if (it == index.end()) return std::nullopt;
        return it->second;
    }
};

// ---- stage 0: ingest -------------------------------------------------------

namespace detail {

inline fs::path find_single(const fs::path& dir, std::string_view marker) {
    std::vector<fs::path> hits;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename().string().find(marker) != std::string::npos)
            hits.push_back(e.path());
    if (hits.size() != 1)
        throw IoError("expected exactly one '*" + std::string(marker) + "*' file in '" + dir.string() + "', found " +
                      std::to_string(hits.size()));
    return hits.front();
}

}  // namespace detail

/// Reads the corpus named by `input`. For IDX input, `path` may be the image
/// file (labels found by replacing "images-idx3" with "labels-idx1" in the
/// filename) or a directory holding one file of each kind.
inline std::vector<ingest::LabeledRaster> read_corpus(const InputSpec& input) {
    if (input.format == "dir") return ingest::load_image_dir(input.path);
    if (input.format != "idx") throw InvalidArgument("unknown input format '" + input.format + "'");

    fs::path images = input.path;
    fs::path labels = input.labels;
    if (fs::is_directory(images)) {
        if (labels.empty()) labels = detail::find_single(images, "labels-idx1");
        images = detail::find_single(images, "images-idx3");
    } else if (labels.empty()) {
        std::string name = images.filename().string();
        const auto at = name.find("images-idx3");
        if (at == std::string::npos)
            throw IoError("cannot derive the label file for '" + images.string() + "'; pass it explicitly");
        name.replace(at, std::string_view("images-idx3").size(), "labels-idx1");
        labels = images.parent_path() / name;
    }
    return ingest::load_idx(images, labels);
}

inline void write_items(ManifestWriter& manifest, const std::vector<ingest::LabeledRaster>& items) {
    json arr = json::array();
    for (const auto& r : items) arr.push_back(serialize::item_to_json(r));
    manifest.write("items.json", arr.dump() + "\n");
}

/// Loads and subsamples the corpus, then starts a fresh store in `out`.
inline std::size_t ingest_stage(const ProjectConfig& cfg, const fs::path& out) {
    cfg.validate();
    const auto corpus = read_corpus(cfg.input);
    const auto items = ingest::sample_per_class(corpus, cfg.per_class, cfg.seed);
    for (const auto& r : items)
        if (r.id.find_first_of("/\\") != std::string::npos || r.id.empty() || r.id[0] == '.')
            throw IoError("item id '" + r.id + "' cannot be used as a file name");

    fs::create_directories(out);
    ManifestWriter manifest = ManifestWriter::resume(out);
    manifest.forget_prefix("diagrams/");
    manifest.forget_prefix("cycles/");
    manifest.forget_prefix("pimages/");
    manifest.forget("distances.bin");
    manifest.forget("embeddings.json");
    manifest.write("config.json", config_to_json(cfg).dump(2) + "\n");
    write_items(manifest, items);
    manifest.set_stages({"ingest"});
    manifest.commit(cfg);
    return items.size();
}

// ---- loading -----------------------------------------------------------------

namespace detail {

struct VerifiedStore {
    fs::path root;
    json manifest;
    std::map<std::string, std::string> artifacts;

    bool has(const std::string& relative) const { return artifacts.contains(relative); }

    std::string read(const std::string& relative, const std::string& id, const std::string& kind) const {
        auto it = artifacts.find(relative);
        if (it == artifacts.end() || !fs::exists(root / relative))
            throw MissingArtifact(kind + " for '" + id + "' (" + (root / relative).string() + ")");
        std::string bytes = read_file(root / relative);
        if (encoding::sha256_hex(bytes) != it->second)
            throw ChecksumMismatch("'" + (root / relative).string() + "' does not match manifest.json");
        return bytes;
    }
};

inline VerifiedStore open_store(const fs::path& root) {
    const StorePaths paths{root};
    if (!fs::exists(paths.manifest()))
        throw MissingArtifact("manifest for project '" + root.string() + "' (" + paths.manifest().string() + ")");
    VerifiedStore store{root, serialize::parse(read_file(paths.manifest()), paths.manifest().string()), {}};
    if (store.manifest.value("format", std::string{}) != store_format)
        throw VersionMismatch("'" + paths.manifest().string() + "' is not a project manifest");
    const int version = store.manifest.value("pipeline_version", -1);
    if (version != pipeline_version)
        throw VersionMismatch("project written by pipeline version " + std::to_string(version) +
                              ", this build reads version " + std::to_string(pipeline_version));
    store.artifacts = store.manifest.value("artifacts", std::map<std::string, std::string>{});
    return store;
}

inline std::vector<ingest::LabeledRaster> read_items(const VerifiedStore& store) {
    std::vector<ingest::LabeledRaster> items;
    for (const auto& j : serialize::parse(store.read("items.json", "project", "item list"), "items.json"))
        items.push_back(serialize::item_from_json(j));
    return items;
}

}  // namespace detail

inline ProjectConfig read_config(const fs::path& root) {
    const auto store = detail::open_store(root);
    return config_from_json(serialize::parse(store.read("config.json", "project", "configuration"), "config.json"));
}

/// Loads and verifies every artifact listed in the manifest.
inline Project load_project(const fs::path& root) {
    const auto store = detail::open_store(root);
    Project p;
    p.config = config_from_json(serialize::parse(store.read("config.json", "project", "configuration"), "config.json"));
    p.stages = store.manifest.value("stages", std::vector<std::string>{});
    p.items = detail::read_items(store);
    for (std::size_t i = 0; i < p.items.size(); ++i) {
        if (!p.index.emplace(p.items[i].id, i).second)
            throw IoError("duplicate item id '" + p.items[i].id + "' in items.json");
    }

    const bool computed = std::find(p.stages.begin(), p.stages.end(), "compute") != p.stages.end();
    if (computed) {
        for (const auto& item : p.items) {
            auto diagram = serialize::diagram_from_json(serialize::parse(
                store.read(StorePaths::diagram(item.id), item.id, "diagram"), StorePaths::diagram(item.id)));
            auto cycles = serialize::cycles_from_json(
                serialize::parse(store.read(StorePaths::cycles(item.id), item.id, "cycles"), StorePaths::cycles(item.id)),
                diagram);
            auto image = serialize::image_from_json(serialize::parse(
                store.read(StorePaths::pimage(item.id), item.id, "persistence image"), StorePaths::pimage(item.id)));
            if (diagram.item_id != item.id || image.item_id != item.id)
                throw IoError("artifacts of '" + item.id + "' carry a different item id");
            p.diagrams.push_back(std::move(diagram));
            p.cycles.push_back(std::move(cycles));
            p.images.push_back(std::move(image));
        }
        std::vector<std::string> ids;
        for (const auto& item : p.items) ids.push_back(item.id);
        p.distances = serialize::distances_from_bytes(store.read("distances.bin", "project", "distance matrix"),
                                                      std::move(ids));
    }

    if (store.has("embeddings.json")) {
        const json j = serialize::parse(store.read("embeddings.json", "project", "embeddings"), "embeddings.json");
        const auto ids = serialize::field<std::vector<std::string>>(j, "item_ids", "embeddings.json");
        if (ids.size() != p.items.size() ||
            !std::equal(ids.begin(), ids.end(), p.items.begin(), [](const auto& id, const auto& item) {
                return id == item.id;
            }))
            throw IoError("embeddings.json lists a different item order than items.json");
        const auto entries = serialize::field<json>(j, "embeddings", "embeddings.json");
        for (const auto& [name, value] : entries.items()) {
            auto e = serialize::embedding_from_json(value);
            if (e.n != p.items.size())
                throw IoError("embedding '" + name + "' has " + std::to_string(e.n) + " points for " +
                              std::to_string(p.items.size()) + " items");
            p.embeddings.emplace(e.method, std::move(e));
        }
    }
    return p;
}

// ---- stage 1-2: topology and persistence images ----------------------------

/// Computes diagrams, cycles, persistence images and the distance matrix for
/// the ingested items of `root`. `cfg` replaces the stored configuration.
inline void compute_stage(const fs::path& root, const ProjectConfig& cfg) {
    cfg.validate();
    const auto store = detail::open_store(root);
    const auto items = detail::read_items(store);
    const std::size_t n = items.size();

    filtration::ComplexCache complexes;
    std::vector<std::shared_ptr<const filtration::SimplicialComplex>> complex_of(n);
    for (std::size_t i = 0; i < n; ++i) complex_of[i] = complexes.get(items[i].width, items[i].height);

    auto with_context = [](const std::string& id, auto&& fn) {
        try {
            return fn();
        } catch (const Error& e) {
            throw Error("item '" + id + "': " + e.what(), e.kind());
        }
    };

    auto topology = parallel_map<persistence::ItemTopology>(n, cfg.threads, [&](std::size_t i) {
        return with_context(items[i].id, [&] {
            return persistence::compute_topology(complex_of[i], ingest::to_filtration_function(items[i], cfg.invert),
                                                 items[i].id);
        });
    });

    vectorize::ImageParams params = cfg.image_params();
    if (cfg.global_scale) {
        double scale = 0.0;
        for (const auto& t : topology)
            for (const auto& p : t.diagram.pairs)
                if (p.dim == 1) scale = std::max(scale, p.persistence);
        if (scale > 0.0) params.global_scale = scale;
    }
    auto images = parallel_map<vectorize::PersistenceImage>(n, cfg.threads, [&](std::size_t i) {
        return with_context(items[i].id, [&] { return vectorize::persistence_image(topology[i].diagram, params); });
    });
    const auto distances = analysis::distance_matrix(images, cfg.threads);

    ManifestWriter manifest = ManifestWriter::resume(root);
    manifest.forget_prefix("diagrams/");
    manifest.forget_prefix("cycles/");
    manifest.forget_prefix("pimages/");
    manifest.forget("embeddings.json");
    manifest.write("config.json", config_to_json(cfg).dump(2) + "\n");
    for (std::size_t i = 0; i < n; ++i) {
        const auto& id = items[i].id;
        manifest.write(StorePaths::diagram(id), serialize::diagram_to_json(topology[i].diagram).dump() + "\n");
        manifest.write(StorePaths::cycles(id),
                       serialize::cycles_to_json(id, topology[i].diagram, topology[i].cycles).dump() + "\n");
        manifest.write(StorePaths::pimage(id), serialize::image_to_json(images[i], params).dump() + "\n");
    }
    manifest.write("distances.bin", serialize::distances_to_bytes(distances));
    manifest.set_stages({"ingest", "compute"});
    manifest.commit(cfg);
}

// ---- stage 3: embeddings -----------------------------------------------------

inline analysis::Embedding run_method(analysis::Method method, const analysis::DistanceMatrix& D,
                                      const ProjectConfig& cfg) {
    if (method != analysis::Method::mds && D.n < 2)
        throw InvalidArgument(std::string(analysis::to_string(method)) + " needs at least two items");
    switch (method) {
        case analysis::Method::mds:
            return analysis::classical_mds(D);
        case analysis::Method::isomap:
            return analysis::isomap(D, cfg.isomap_k, 2, cfg.threads);
        case analysis::Method::tsne: {
            analysis::TsneParams p;
            p.perplexity = cfg.perplexity;
            p.iterations = cfg.iterations;
            p.learning_rate = cfg.learning_rate;
            p.seed = cfg.embedding_seed;
            return analysis::tsne(D, p, cfg.threads).embedding;
        }
    }
    throw InvalidArgument("unknown embedding method");
}

/// Computes the configured embeddings from the stored distance matrix.
/// Diagnostics (such as Isomap graph repairs) go to `log` when given.
inline void embed_stage(const fs::path& root, const ProjectConfig& cfg, std::ostream* log = nullptr) {
    cfg.validate();
    const Project p = load_project(root);
    if (!p.distances) throw MissingArtifact("distance matrix for project '" + root.string() + "' (run compute first)");

    json entries = json::object();
    for (auto m : cfg.methods) {
        const auto e = run_method(m, *p.distances, cfg);
        if (log)
            for (const auto& note : e.notes) *log << analysis::to_string(m) << ": " << note << "\n";
        entries[std::string(analysis::to_string(m))] = serialize::embedding_to_json(e);
    }
    json ids = json::array();
    for (const auto& item : p.items) ids.push_back(item.id);

    ManifestWriter manifest = ManifestWriter::resume(root);
    manifest.write("config.json", config_to_json(cfg).dump(2) + "\n");
    manifest.write("embeddings.json", json{{"item_ids", std::move(ids)}, {"embeddings", std::move(entries)}}.dump() + "\n");
    manifest.set_stages({"ingest", "compute", "embed"});
    manifest.commit(cfg);
}

/// ingest -> compute -> embed, then reload the finished store.
inline Project run_pipeline(const ProjectConfig& cfg, const fs::path& out) {
    ingest_stage(cfg, out);
    compute_stage(out, cfg);
    embed_stage(out, cfg);
    return load_project(out);
}

}  // namespace topoembed::project
