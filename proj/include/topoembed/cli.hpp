#pragma once

// Command-line front end: ingest -> compute -> embed -> serve / export.
// Exit codes: 0 success, 2 I/O or data error, 64 usage error.

#include <charconv>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "project.hpp"
#include "server.hpp"

namespace topoembed::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_data = 2;
inline constexpr int exit_usage = 64;

namespace detail {

inline std::string format_double(double v) {
    char buffer[32];
    auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, v);
    return std::string(buffer, end);
}

inline std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ','))
        if (!part.empty()) out.push_back(part);
    return out;
}

inline project::ProjectConfig load_config_file(const std::string& path, project::ProjectConfig base) {
    if (path.empty()) return base;
    return project::config_from_json(serialize::parse(project::read_file(path), path), std::move(base));
}

inline std::string export_distances(const project::Project& p, bool csv) {
    const auto& D = *p.distances;
    if (csv) {
        std::string out;
        for (std::size_t i = 0; i < D.n; ++i) out += (i ? "," : "") + D.item_ids[i];
        out += "\n";
        for (std::size_t i = 0; i < D.n; ++i) {
            for (std::size_t j = 0; j < D.n; ++j) out += (j ? "," : "") + format_double(D.at(i, j));
            out += "\n";
        }
        return out;
    }
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < D.n; ++i)
        rows.push_back(std::vector<double>(D.d.begin() + static_cast<std::ptrdiff_t>(i * D.n),
                                           D.d.begin() + static_cast<std::ptrdiff_t>((i + 1) * D.n)));
    return nlohmann::json{{"item_ids", D.item_ids}, {"distances", std::move(rows)}}.dump() + "\n";
}

inline std::string export_embeddings(const project::Project& p, bool csv) {
    if (csv) {
        std::string out = "method,id,label,x,y\n";
        for (const auto& [m, e] : p.embeddings)
            for (std::size_t i = 0; i < e.n; ++i)
                out += std::string(analysis::to_string(m)) + "," + p.items[i].id + "," +
                       std::to_string(p.items[i].label) + "," + format_double(e.x(i)) + "," + format_double(e.y(i)) +
                       "\n";
        return out;
    }
    nlohmann::json entries = nlohmann::json::object();
    for (const auto& [m, e] : p.embeddings) entries[std::string(analysis::to_string(m))] = serialize::embedding_to_json(e);
    std::vector<std::string> ids;
    for (const auto& item : p.items) ids.push_back(item.id);
    return nlohmann::json{{"item_ids", ids}, {"embeddings", std::move(entries)}}.dump() + "\n";
}

inline std::string export_images(const project::Project& p, bool csv) {
    if (csv) {
        std::string out = "id,label";
        const std::size_t pixels = p.images.empty() ? 0 : p.images.front().pixels.size();
        for (std::size_t k = 0; k < pixels; ++k) out += ",p" + std::to_string(k);
        out += "\n";
        for (std::size_t i = 0; i < p.images.size(); ++i) {
            out += p.items[i].id + "," + std::to_string(p.items[i].label);
            for (double v : p.images[i].pixels) out += "," + format_double(v);
            out += "\n";
        }
        return out;
    }
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i = 0; i < p.images.size(); ++i)
        arr.push_back({{"id", p.items[i].id},
                       {"label", p.items[i].label},
                       {"resolution", p.images[i].resolution},
                       {"pixels", p.images[i].pixels}});
    return arr.dump() + "\n";
}

inline server::HttpServer* active_server = nullptr;

extern "C" inline void stop_server(int) {
    if (active_server) active_server->stop();
}

}  // namespace detail

/// Runs the command line; `out` receives machine output (export to stdout),
/// `err` receives diagnostics.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Persistence-based similarity analysis of 2D scalar-field corpora", "topoembed"};
    app.require_subcommand(1);

    std::string config_file;
    std::size_t threads = 0;

    // ingest
    auto* ingest = app.add_subcommand("ingest", "load a corpus and start a project");
    std::string input;
    std::string format = "idx";
    std::string labels;
    std::size_t per_class = 100;
    std::uint64_t seed = 42;
    std::string out_dir;
    ingest->add_option("--input", input, "IDX image file, directory with IDX files, or image directory")->required();
    auto* format_opt = ingest->add_option("--format", format, "input format")->check(CLI::IsMember({"idx", "dir"}));
    ingest->add_option("--labels", labels, "IDX label file (derived from --input when omitted)");
    auto* per_class_opt = ingest->add_option("--per-class", per_class, "items sampled per label");
    auto* seed_opt = ingest->add_option("--seed", seed, "sampling seed");
    ingest->add_option("--out", out_dir, "project directory")->required();
    ingest->add_option("--config", config_file, "JSON configuration overriding defaults");

    // compute
    auto* compute = app.add_subcommand("compute", "persistence diagrams, cycles, images and distances");
    std::string project_dir;
    double sigma = 0.01;
    std::size_t resolution = 10;
    std::string mode = "integrate";
    bool no_invert = false;
    bool global_scale = false;
    compute->add_option("--project", project_dir, "project directory")->required();
    auto* sigma_opt = compute->add_option("--sigma", sigma, "Gaussian kernel width");
    auto* resolution_opt = compute->add_option("--resolution", resolution, "persistence image pixels per side");
    auto* mode_opt = compute->add_option("--mode", mode, "pixel evaluation")->check(CLI::IsMember({"integrate", "sample"}));
    auto* no_invert_opt = compute->add_flag("--no-invert", no_invert, "use pixel/255 instead of 1 - pixel/255");
    auto* global_scale_opt = compute->add_flag("--global-scale", global_scale, "weight by the corpus-wide max persistence");
    compute->add_option("--threads", threads, "worker threads (0 = all cores)");
    compute->add_option("--config", config_file, "JSON configuration overriding the stored one");

    // embed
    auto* embed = app.add_subcommand("embed", "2D embeddings of the distance matrix");
    std::string methods;
    std::size_t k = 10;
    double perplexity = 30.0;
    int iterations = 1000;
    double learning_rate = 200.0;
    std::uint64_t embed_seed = 42;
    embed->add_option("--project", project_dir, "project directory")->required();
    auto* methods_opt = embed->add_option("--methods", methods, "comma-separated subset of mds,isomap,tsne");
    auto* k_opt = embed->add_option("--k", k, "Isomap neighbour count");
    auto* perplexity_opt = embed->add_option("--perplexity", perplexity, "t-SNE perplexity");
    auto* iterations_opt = embed->add_option("--iterations", iterations, "t-SNE iterations");
    auto* lr_opt = embed->add_option("--learning-rate", learning_rate, "t-SNE learning rate");
    auto* embed_seed_opt = embed->add_option("--seed", embed_seed, "t-SNE initialisation seed");
    embed->add_option("--threads", threads, "worker threads (0 = all cores)");
    embed->add_option("--config", config_file, "JSON configuration overriding the stored one");

    // run
    auto* run_all = app.add_subcommand("run", "ingest, compute and embed in one go");
    run_all->add_option("--config", config_file, "JSON configuration")->required();
    run_all->add_option("--out", out_dir, "project directory")->required();
    run_all->add_option("--threads", threads, "worker threads (0 = all cores)");

    // serve
    auto* serve = app.add_subcommand("serve", "HTTP API and explorer UI");
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string ui_dir;
    serve->add_option("--project", project_dir, "project directory")->required();
    serve->add_option("--port", port, "listening port");
    serve->add_option("--host", host, "listening address");
    serve->add_option("--ui", ui_dir, "static UI bundle served at /");

    // export
    auto* exporter = app.add_subcommand("export", "write artifacts as CSV or JSON");
    std::string what;
    std::string export_format = "csv";
    std::string export_out = "-";
    exporter->add_option("--project", project_dir, "project directory")->required();
    exporter->add_option("--what", what, "artifact")->required()->check(CLI::IsMember({"distances", "embedding", "pimages"}));
    exporter->add_option("--format", export_format, "output format")->check(CLI::IsMember({"csv", "json"}));
    exporter->add_option("--out", export_out, "output file, '-' for standard output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    }

    try {
        if (*ingest) {
            auto cfg = detail::load_config_file(config_file, {});
            cfg.input.path = input;
            if (format_opt->count() || config_file.empty()) cfg.input.format = format;
            if (!labels.empty()) cfg.input.labels = labels;
            if (per_class_opt->count()) cfg.per_class = per_class;
            if (seed_opt->count()) cfg.seed = seed;
            const auto n = project::ingest_stage(cfg, out_dir);
            err << "ingested " << n << " items into " << out_dir << "\n";
        } else if (*compute) {
            auto cfg = detail::load_config_file(config_file, project::read_config(project_dir));
            if (sigma_opt->count()) cfg.sigma = sigma;
            if (resolution_opt->count()) cfg.resolution = resolution;
            if (mode_opt->count()) cfg.mode = vectorize::parse_image_mode(mode);
            if (no_invert_opt->count()) cfg.invert = false;
            if (global_scale_opt->count()) cfg.global_scale = true;
            cfg.threads = threads;
            project::compute_stage(project_dir, cfg);
            err << "computed topology (sigma " << cfg.sigma << ", resolution " << cfg.resolution << ")\n";
        } else if (*embed) {
            auto cfg = detail::load_config_file(config_file, project::read_config(project_dir));
            if (methods_opt->count()) {
                cfg.methods.clear();
                for (const auto& m : detail::split_list(methods)) cfg.methods.push_back(analysis::parse_method(m));
            }
            if (k_opt->count()) cfg.isomap_k = k;
            if (perplexity_opt->count()) cfg.perplexity = perplexity;
            if (iterations_opt->count()) cfg.iterations = iterations;
            if (lr_opt->count()) cfg.learning_rate = learning_rate;
            if (embed_seed_opt->count()) cfg.embedding_seed = embed_seed;
            cfg.threads = threads;
            project::embed_stage(project_dir, cfg, &err);
            err << "embedded with " << cfg.methods.size() << " method(s)\n";
        } else if (*run_all) {
            auto cfg = detail::load_config_file(config_file, {});
            if (threads) cfg.threads = threads;
            const auto p = project::run_pipeline(cfg, out_dir);
            err << "pipeline finished: " << p.items.size() << " items\n";
        } else if (*serve) {
            server::ApiService api;
            server::HttpServer http(api, ui_dir.empty() ? std::nullopt : std::optional<std::filesystem::path>(ui_dir));
            std::optional<std::string> load_error;
            std::jthread loader([&] {
                try {
                    api.set_project(std::make_shared<const project::Project>(project::load_project(project_dir)));
                    err << "project loaded from " << project_dir << "\n";
                } catch (const std::exception& e) {
                    load_error = e.what();
                    // a stop() issued before listen() starts would be lost
                    http.wait_until_ready();
                    http.stop();
                }
            });
            detail::active_server = &http;
            std::signal(SIGINT, detail::stop_server);
            std::signal(SIGTERM, detail::stop_server);
            err << "serving on http://" << host << ":" << port << "\n";
            const bool listened = http.listen(host, port);
            detail::active_server = nullptr;
            loader.join();
            if (load_error) {
                err << "error: " << *load_error << "\n";
                return exit_data;
            }
            if (!listened) {
                err << "error: cannot listen on " << host << ":" << port << "\n";
                return exit_data;
            }
        } else if (*exporter) {
            const auto p = project::load_project(project_dir);
            const bool csv = export_format == "csv";
            std::string body;
            if (what == "embedding") {
                if (p.embeddings.empty()) throw MissingArtifact("embeddings for '" + project_dir + "' (run embed first)");
                body = detail::export_embeddings(p, csv);
            } else {
                if (!p.distances) throw MissingArtifact("computed artifacts for '" + project_dir + "' (run compute first)");
                body = what == "distances" ? detail::export_distances(p, csv) : detail::export_images(p, csv);
            }
            if (export_out == "-") {
                out << body;
            } else {
                project::write_atomic(export_out, body);
            }
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.kind() == ErrorKind::usage ? exit_usage : exit_data;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return exit_data;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_data;
    }
    return exit_ok;
}

}  // namespace topoembed::cli
