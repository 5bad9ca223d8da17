#pragma once

// Read-only JSON API over a loaded project.
//
//   GET /api/meta
//   GET /api/embedding?method=mds|isomap|tsne
//   GET /api/item/<id>
//   GET /api/diff?a=<id>&b=<id>
//
// ApiService answers requests without any networking so that it can be tested
// directly; HttpServer binds it to cpp-httplib and serves the UI bundle.

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "httplib.h"

#include "encoding.hpp"
#include "project.hpp"
#include "vectorize.hpp"

namespace topoembed::server {

using json = nlohmann::json;

struct Response {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

class ApiService {
public:
    using Query = std::map<std::string, std::string, std::less<>>;

    /// Publishes a loaded project; until then every endpoint answers 503.
    void set_project(std::shared_ptr<const project::Project> p) {
        auto state = std::make_shared<const State>(build_state(std::move(p)));
        std::lock_guard lock(mutex_);
        state_ = std::move(state);
    }

    bool ready() const { return snapshot() != nullptr; }

    Response handle(std::string_view path, const Query& query) const {
        const auto state = snapshot();
        if (path == "/api/meta") return state ? ok(state->meta) : loading();
        if (path == "/api/embedding") {
            if (!state) return loading();
            auto m = query.find("method");
            if (m == query.end()) return error(400, "missing query parameter 'method'");
            return embedding(*state, m->second);
        }
        constexpr std::string_view item_prefix = "/api/item/";
        if (path.starts_with(item_prefix)) {
            if (!state) return loading();
            return item(*state, std::string(path.substr(item_prefix.size())));
        }
        if (path == "/api/diff") {
            if (!state) return loading();
            auto a = query.find("a");
            auto b = query.find("b");
            if (a == query.end() || b == query.end()) return error(400, "missing query parameter 'a' or 'b'");
            return diff(*state, a->second, b->second);
        }
        return error(404, "unknown endpoint '" + std::string(path) + "'");
    }

private:
    struct State {
        std::shared_ptr<const project::Project> project;
        std::string meta;
    };

    std::shared_ptr<const State> snapshot() const {
        std::lock_guard lock(mutex_);
        return state_;
    }

    static State build_state(std::shared_ptr<const project::Project> p) {
        std::map<std::string, std::size_t> histogram;
        for (const auto& item : p->items) ++histogram[std::to_string(item.label)];
        double max_persistence = 0.0;
        for (const auto& d : p->diagrams)
            for (const auto& pair : d.pairs)
                if (pair.dim == 1) max_persistence = std::max(max_persistence, pair.persistence);
        json methods = json::array();
        for (const auto& [m, e] : p->embeddings) methods.push_back(analysis::to_string(m));
        json meta{{"n", p->items.size()},
                  {"labels", histogram},
                  {"methods", std::move(methods)},
                  {"global_max_persistence", max_persistence},
                  {"resolution", p->config.resolution}};
        return {std::move(p), meta.dump()};
    }

    static Response ok(std::string body) { return {200, std::move(body)}; }

    static Response error(int status, const std::string& message) {
        return {status, json{{"error", message}}.dump()};
    }

    static Response loading() { return error(503, "project is still loading"); }

    static Response embedding(const State& s, const std::string& name) {
        std::optional<analysis::Method> method;
        try {
            method = analysis::parse_method(name);
        } catch (const InvalidArgument&) {
        }
        const auto& p = *s.project;
        auto it = method ? p.embeddings.find(*method) : p.embeddings.end();
        if (it == p.embeddings.end()) return error(404, "UnknownMethod: '" + name + "'");
        const auto& e = it->second;
        json points = json::array();
        for (std::size_t i = 0; i < e.n; ++i)
            points.push_back({{"id", p.items[i].id}, {"x", e.x(i)}, {"y", e.y(i)}, {"label", p.items[i].label}});
        return ok(points.dump());
    }

    static Response item(const State& s, const std::string& id) {
        const auto& p = *s.project;
        const auto index = p.find(id);
        if (!index) return error(404, "UnknownItem: '" + id + "'");
        const auto& raster = p.items[*index];

        json out{{"id", raster.id},
                 {"label", raster.label},
                 {"raster",
                  {{"width", raster.width},
                   {"height", raster.height},
                   {"data", encoding::base64_encode(raster.pixels)}}}};
        json pairs = json::array();
        json cycles = json::array();
        json image = nullptr;
        if (p.computed()) {
            const auto& diagram = p.diagrams[*index];
            std::vector<persistence::PersistencePair> dim1;
            for (const auto& pair : diagram.pairs)
                if (pair.dim == 1) dim1.push_back(pair);
            for (const auto& pair : dim1)
                pairs.push_back({{"birth", pair.birth}, {"death", pair.death}, {"persistence", pair.persistence}});
            for (const auto& c : p.cycles[*index]) {
                const auto at = std::find(dim1.begin(), dim1.end(), c.pair);
                json edges = json::array();
                for (const auto& e : c.edges)
                    edges.push_back({{e[0] / raster.width, e[0] % raster.width},
                                     {e[1] / raster.width, e[1] % raster.width}});
                cycles.push_back({{"pair_index", at - dim1.begin()},
                                  {"persistence", c.pair.persistence},
                                  {"edges", std::move(edges)}});
            }
            const auto& img = p.images[*index];
            image = {{"resolution", img.resolution}, {"pixels", img.pixels}};
        }
        out["pairs"] = std::move(pairs);
        out["cycles"] = std::move(cycles);
        out["image"] = std::move(image);
        return ok(out.dump());
    }

    static Response diff(const State& s, const std::string& a, const std::string& b) {
        const auto& p = *s.project;
        const auto ia = p.find(a);
        if (!ia) return error(404, "UnknownItem: '" + a + "'");
        const auto ib = p.find(b);
        if (!ib) return error(404, "UnknownItem: '" + b + "'");
        if (!p.computed()) return error(404, "persistence images have not been computed");
        const auto sorted = vectorize::pixel_diff(p.images[*ia], p.images[*ib]);
        json entries = json::array();
        for (const auto& e : sorted.entries) entries.push_back({e.pixel_index, e.diff});
        return ok(json{{"a", a}, {"b", b}, {"sorted", std::move(entries)}, {"max_diff", sorted.max_diff()}}.dump());
    }

    mutable std::mutex mutex_;
    std::shared_ptr<const State> state_;
};

/// HTTP front end: the API under /api, CORS for local development, and an
/// optional static UI bundle mounted at /.
class HttpServer {
public:
    explicit HttpServer(const ApiService& api, std::optional<std::filesystem::path> ui_dir = std::nullopt)
        : api_(api) {
        server_.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
        server_.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Methods", "GET, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.status = 204;
        });
        server_.Get(R"(/api/.*)", [this](const httplib::Request& req, httplib::Response& res) {
            ApiService::Query query;
            for (const auto& [k, v] : req.params) query.emplace(k, v);
            const Response r = api_.handle(req.path, query);
            res.status = r.status;
            res.set_content(r.body, r.content_type);
        });
        if (ui_dir && std::filesystem::is_directory(*ui_dir)) server_.set_mount_point("/", ui_dir->string());
    }

    /// Blocks until stop() is called.
    bool listen(const std::string& host, int port) { return server_.listen(host, port); }

    /// Binds an ephemeral port and returns it; follow with listen_after_bind().
    int bind_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
    bool listen_after_bind() { return server_.listen_after_bind(); }

    void stop() { server_.stop(); }
    void wait_until_ready() const { server_.wait_until_ready(); }

private:
    const ApiService& api_;
    httplib::Server server_;
};

}  // namespace topoembed::server
