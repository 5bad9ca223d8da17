#pragma once

// Helpers shared by the unit tests and the acceptance runner: scratch
// directories, corpus writers and a small synthetic corpus of digit-like
// strokes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <zlib.h>

#include <topoembed/ingest.hpp>
#include <topoembed/project.hpp>

namespace topoembed::testkit {

namespace fs = std::filesystem;

class TempDir {
public:
    explicit TempDir(const std::string& tag = "topoembed") {
        std::string pattern = (fs::temp_directory_path() / (tag + "-XXXXXX")).string();
        if (!::mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed for " + pattern);
        path_ = pattern;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void put_be32(std::string& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xff));
}

inline void write_bytes(const fs::path& path, const std::string& bytes, bool gzip = false) {
    if (gzip) {
        gzFile f = gzopen(path.string().c_str(), "wb");
        gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
        gzclose(f);
        return;
    }
    std::ofstream(path, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string idx_images(const std::vector<ingest::LabeledRaster>& items, std::size_t rows, std::size_t cols) {
    std::string out;
    put_be32(out, 0x00000803u);
    put_be32(out, static_cast<std::uint32_t>(items.size()));
    put_be32(out, static_cast<std::uint32_t>(rows));
    put_be32(out, static_cast<std::uint32_t>(cols));
    for (const auto& r : items) out.append(r.pixels.begin(), r.pixels.end());
    return out;
}

inline std::string idx_labels(const std::vector<ingest::LabeledRaster>& items) {
    std::string out;
    put_be32(out, 0x00000801u);
    put_be32(out, static_cast<std::uint32_t>(items.size()));
    for (const auto& r : items) out.push_back(static_cast<char>(r.label));
    return out;
}

/// Writes `<stem>-images-idx3-ubyte[.gz]` and the matching label file.
inline std::pair<fs::path, fs::path> write_idx(const fs::path& dir, const std::vector<ingest::LabeledRaster>& items,
                                               bool gzip = false, const std::string& stem = "corpus") {
    const std::string suffix = gzip ? ".gz" : "";
    const fs::path images = dir / (stem + "-images-idx3-ubyte" + suffix);
    const fs::path labels = dir / (stem + "-labels-idx1-ubyte" + suffix);
    write_bytes(images, idx_images(items, items.at(0).height, items.at(0).width), gzip);
    write_bytes(labels, idx_labels(items), gzip);
    return {images, labels};
}

inline void write_pgm(const fs::path& path, const ingest::LabeledRaster& r) {
    std::string out = "P5\n" + std::to_string(r.width) + " " + std::to_string(r.height) + "\n255\n";
    out.append(r.pixels.begin(), r.pixels.end());
    write_bytes(path, out);
}

/// One `<label>_<index>.pgm` file per raster.
inline void write_pgm_dir(const fs::path& dir, const std::vector<ingest::LabeledRaster>& items) {
    fs::create_directories(dir);
    for (const auto& r : items) write_pgm(dir / (r.id + ".pgm"), r);
}

// ---- synthetic strokes -------------------------------------------------------

struct Canvas {
    std::size_t size;
    std::vector<double> ink;

    explicit Canvas(std::size_t n) : size(n), ink(n * n, 0.0) {}

    void stamp(double row, double col) {
        for (std::size_t r = 0; r < size; ++r)
            for (std::size_t c = 0; c < size; ++c) {
                const double d = std::hypot(static_cast<double>(r) - row, static_cast<double>(c) - col);
                ink[r * size + c] = std::max(ink[r * size + c], std::clamp(1.5 - d, 0.0, 1.0));
            }
    }

    void line(double r0, double c0, double r1, double c1) {
        const int steps = 4 * static_cast<int>(std::ceil(std::hypot(r1 - r0, c1 - c0))) + 1;
        for (int s = 0; s <= steps; ++s) {
            const double t = static_cast<double>(s) / steps;
            stamp(r0 + t * (r1 - r0), c0 + t * (c1 - c0));
        }
    }

    void arc(double row, double col, double radius_r, double radius_c, double from = 0.0,
             double to = 2.0 * std::numbers::pi) {
        const int steps = 64;
        for (int s = 0; s <= steps; ++s) {
            const double a = from + (to - from) * s / steps;
            stamp(row + radius_r * std::sin(a), col + radius_c * std::cos(a));
        }
    }

    ingest::LabeledRaster raster(std::string id, int label) const {
        ingest::LabeledRaster r{std::move(id), label, size, size, std::vector<std::uint8_t>(ink.size())};
        for (std::size_t i = 0; i < ink.size(); ++i)
            r.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * ink[i]));
        return r;
    }
};

/// A 16x16 stroke drawing of `digit`; `variant` shifts and stretches it a little.
inline ingest::LabeledRaster toy_digit(int digit, int variant = 0) {
    constexpr double pi = std::numbers::pi;
    Canvas c(16);
    const double dx = 0.5 * (variant % 3 - 1);
    const double s = 1.0 + 0.05 * (variant % 2);
    switch (digit) {
        case 0: c.arc(7.5, 7.5 + dx, 5.0 * s, 3.5); break;
        case 1: c.line(2, 8 + dx, 13, 8 + dx); c.line(2, 8 + dx, 4, 6 + dx); break;
        case 2:
            c.arc(5, 7.5 + dx, 2.5, 3.0 * s, pi, 2.2 * pi);
            c.line(6.5, 10 + dx, 12, 4 + dx);
            c.line(12, 4 + dx, 12, 11 + dx);
            break;
        case 3:
            c.arc(5, 7 + dx, 2.5, 3.0 * s, -0.6 * pi, 0.5 * pi);
            c.arc(10, 7 + dx, 2.5, 3.0 * s, -0.5 * pi, 0.6 * pi);
            break;
        case 4:
            c.line(2, 9 + dx, 9, 4 + dx);
            c.line(9, 4 + dx, 9, 12 + dx);
            c.line(2, 9 + dx, 13, 9 + dx);
            break;
        case 5:
            c.line(2, 5 + dx, 2, 11 + dx);
            c.line(2, 5 + dx, 6, 5 + dx);
            c.arc(9.5, 7 + dx, 3.0 * s, 3.5, -0.8 * pi, 0.7 * pi);
            break;
        case 6:
            c.arc(10, 7.5 + dx, 3.0, 3.0 * s);
            c.line(2, 9 + dx, 8, 4.6 + dx);
            break;
        case 7: c.line(2, 4 + dx, 2, 12 + dx); c.line(2, 12 + dx, 13, 6 + dx); break;
        case 8:
            c.arc(4.5, 7.5 + dx, 2.5, 2.5 * s);
            c.arc(10.5, 7.5 + dx, 3.0, 3.0 * s);
            break;
        case 9:
            c.arc(5, 7.5 + dx, 3.0, 3.0 * s);
            c.line(5, 10.5 + dx, 13, 9 + dx);
            break;
        default: throw std::invalid_argument("toy digits are 0-9");
    }
    return c.raster(std::to_string(digit) + "_" + std::to_string(variant), digit);
}

/// `per_digit` variants of every digit, ordered by label then variant.
inline std::vector<ingest::LabeledRaster> toy_corpus(int per_digit = 1) {
    std::vector<ingest::LabeledRaster> out;
    for (int d = 0; d < 10; ++d)
        for (int v = 0; v < per_digit; ++v) out.push_back(toy_digit(d, v));
    return out;
}

/// Configuration of the 10-item project the API suite runs against.
inline project::ProjectConfig toy_config(const fs::path& corpus_dir) {
    project::ProjectConfig cfg;
    cfg.input.path = corpus_dir.string();
    cfg.input.format = "dir";
    cfg.per_class = 1;
    cfg.isomap_k = 3;
    cfg.perplexity = 3.0;
    cfg.iterations = 300;
    cfg.threads = 1;
    return cfg;
}

/// Writes the toy corpus and runs the full pipeline into `dir / "project"`.
inline fs::path build_toy_project(const fs::path& dir) {
    const fs::path corpus = dir / "corpus";
    write_pgm_dir(corpus, toy_corpus());
    const fs::path out = dir / "project";
    project::run_pipeline(toy_config(corpus), out);
    return out;
}

/// The 3x3 grid with a dark centre surrounded by a bright ring.
inline ingest::ScalarGrid ring_grid() {
    return {3, 3, {0.2, 0.1, 0.2, 0.1, 0.9, 0.1, 0.2, 0.1, 0.2}};
}

/// Random grid with values drawn from {0, 0.1, ..., 1}.
inline ingest::ScalarGrid random_grid(std::mt19937_64& rng, std::size_t width, std::size_t height) {
    std::uniform_int_distribution<int> tenths(0, 10);
    ingest::ScalarGrid g{width, height, std::vector<double>(width * height)};
    for (auto& v : g.values) v = tenths(rng) / 10.0;
    return g;
}

}  // namespace topoembed::testkit
