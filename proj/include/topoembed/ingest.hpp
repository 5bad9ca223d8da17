#pragma once

// Corpus loading: IDX binaries (optionally gzip-compressed) and directories
// of grayscale images, per-class subsampling, and conversion of rasters into
// normalized filtration functions.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <png.h>
#include <zlib.h>

#include "error.hpp"
#include "rng.hpp"

namespace topoembed::ingest {

struct LabeledRaster {
    std::string id;
    int label = 0;
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // row-major

    bool operator==(const LabeledRaster&) const = default;
};

/// Filtration function sampled on the pixel grid; values lie in [0, 1].
struct ScalarGrid {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> values;  // row-major

    double at(std::size_t row, std::size_t col) const { return values[row * width + col]; }
};

namespace detail {

inline std::vector<std::uint8_t> read_maybe_gzipped(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path))
        throw IoError("cannot open '" + path.string() + "'");
    // gzread passes uncompressed files through unchanged.
    std::unique_ptr<gzFile_s, decltype(&gzclose)> file(gzopen(path.c_str(), "rb"), &gzclose);
    if (!file) throw IoError("cannot open '" + path.string() + "'");
    std::vector<std::uint8_t> bytes;
    std::uint8_t buffer[1 << 16];
    for (;;) {
        int got = gzread(file.get(), buffer, sizeof buffer);
        if (got < 0) throw IoError("decompression failed for '" + path.string() + "'");
        if (got == 0) break;
        bytes.insert(bytes.end(), buffer, buffer + got);
    }
    return bytes;
}

inline std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset,
                               const std::filesystem::path& path) {
    if (offset + 4 > bytes.size())
        throw TruncatedFile("'" + path.string() + "' ends at offset " +
                            std::to_string(bytes.size()) + ", header field expected at offset " +
                            std::to_string(offset));
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline void expect_magic(std::span<const std::uint8_t> bytes, std::uint32_t magic,
                         const std::filesystem::path& path) {
    const std::uint32_t found = read_be32(bytes, 0, path);
    if (found != magic) {
        char msg[96];
        std::snprintf(msg, sizeof msg, "expected 0x%08x, found 0x%08x at offset 0", magic, found);
        throw BadMagic("'" + path.string() + "': " + msg);
    }
}

inline bool parse_uint(std::string_view text, int& out) {
    if (text.empty()) return false;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc{} && end == text.data() + text.size() && out >= 0;
}

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline LabeledRaster read_png(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw IoError("'" + path.string() + "': " + image.message);
    if (image.format & (PNG_FORMAT_FLAG_COLOR | PNG_FORMAT_FLAG_ALPHA)) {
        png_image_free(&image);
        throw NonGrayscaleImage("'" + path.string() + "' is not a single-channel grayscale image");
    }
    image.format = PNG_FORMAT_GRAY;
    LabeledRaster raster;
    raster.width = image.width;
    raster.height = image.height;
    raster.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, raster.pixels.data(), 0, nullptr))
        throw IoError("'" + path.string() + "': " + image.message);
    return raster;
}

// Netpbm graymap, binary (P5) or plain (P2), maxval <= 255.
inline LabeledRaster read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::string magic;
    in >> magic;
    if (magic == "P3" || magic == "P6")
        throw NonGrayscaleImage("'" + path.string() + "' is a color pixmap");
    if (magic != "P2" && magic != "P5") throw IoError("'" + path.string() + "' is not a PGM file");

    auto next_number = [&]() -> long {
        for (;;) {
            in >> std::ws;
            if (in.peek() == '#') {
                std::string comment;
                std::getline(in, comment);
                continue;
            }
            long value = -1;
            if (!(in >> value)) throw TruncatedFile("'" + path.string() + "' has an incomplete header");
            return value;
        }
    };
    const long width = next_number();
    const long height = next_number();
    const long maxval = next_number();
    if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255)
        throw IoError("'" + path.string() + "' has an unsupported PGM header");

    LabeledRaster raster;
    raster.width = static_cast<std::size_t>(width);
    raster.height = static_cast<std::size_t>(height);
    raster.pixels.resize(raster.width * raster.height);
    auto scale = [maxval](long v) {
        return static_cast<std::uint8_t>((v * 255 + maxval / 2) / maxval);
    };
    if (magic == "P5") {
        in.get();  // single whitespace after maxval
        in.read(reinterpret_cast<char*>(raster.pixels.data()),
                static_cast<std::streamsize>(raster.pixels.size()));
        if (in.gcount() != static_cast<std::streamsize>(raster.pixels.size()))
            throw TruncatedFile("'" + path.string() + "' pixel data ends at offset " +
                                std::to_string(in.gcount()));
        if (maxval != 255)
            for (auto& p : raster.pixels) p = scale(p);
    } else {
        for (auto& p : raster.pixels) p = scale(std::clamp(next_number(), 0L, maxval));
    }
    return raster;
}

}  // namespace detail

/// Loads an IDX image file (magic 0x00000803) and its label file
/// (magic 0x00000801). Either file may be gzip-compressed.
/// Items keep file order and are named "idx-<position>".
inline std::vector<LabeledRaster> load_idx(const std::filesystem::path& images_path,
                                           const std::filesystem::path& labels_path) {
    const auto images = detail::read_maybe_gzipped(images_path);
    const auto labels = detail::read_maybe_gzipped(labels_path);

    detail::expect_magic(images, 0x00000803u, images_path);
    detail::expect_magic(labels, 0x00000801u, labels_path);
    const std::uint32_t image_count = detail::read_be32(images, 4, images_path);
    const std::uint32_t rows = detail::read_be32(images, 8, images_path);
    const std::uint32_t cols = detail::read_be32(images, 12, images_path);
    const std::uint32_t label_count = detail::read_be32(labels, 4, labels_path);

    if (image_count != label_count)
        throw CountMismatch("'" + images_path.string() + "' declares " + std::to_string(image_count) +
                            " images at offset 4 but '" + labels_path.string() + "' declares " +
                            std::to_string(label_count) + " labels at offset 4");
    if (rows < 2 || cols < 2)
        throw GridTooSmall("'" + images_path.string() + "' declares " + std::to_string(rows) + "x" +
                           std::to_string(cols) + " images");

    const std::size_t frame = std::size_t{rows} * cols;
    const std::size_t images_needed = 16 + frame * image_count;
    if (images.size() < images_needed)
        throw TruncatedFile("'" + images_path.string() + "' ends at offset " +
                            std::to_string(images.size()) + ", expected " +
                            std::to_string(images_needed) + " bytes");
    if (labels.size() < 8 + std::size_t{label_count})
        throw TruncatedFile("'" + labels_path.string() + "' ends at offset " +
                            std::to_string(labels.size()) + ", expected " +
                            std::to_string(8 + std::size_t{label_count}) + " bytes");

    std::vector<LabeledRaster> out;
    out.reserve(image_count);
    for (std::size_t i = 0; i < image_count; ++i) {
        LabeledRaster r;
        r.id = "idx-" + std::to_string(i);
        r.label = labels[8 + i];
        r.width = cols;
        r.height = rows;
        const auto* first = images.data() + 16 + i * frame;
        r.pixels.assign(first, first + frame);
        out.push_back(std::move(r));
    }
    return out;
}

/// Loads every `<label>_<index>.png|pgm` file in `dir`, sorted by filename.
/// Files with other extensions are ignored.
inline std::vector<LabeledRaster> load_image_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");

    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = detail::lower(entry.path().extension().string());
        if (ext == ".png" || ext == ".pgm") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });

    std::vector<LabeledRaster> out;
    out.reserve(files.size());
    for (const auto& file : files) {
        const std::string stem = file.stem().string();
        const auto sep = stem.find('_');
        int label = 0;
        int index = 0;
        if (sep == std::string::npos || !detail::parse_uint(std::string_view(stem).substr(0, sep), label) ||
            !detail::parse_uint(std::string_view(stem).substr(sep + 1), index))
            throw UnparsableName("'" + file.string() + "' does not match <label>_<index>.<ext>");

        const auto ext = detail::lower(file.extension().string());
        LabeledRaster r = ext == ".png" ? detail::read_png(file) : detail::read_pgm(file);
        if (r.width < 2 || r.height < 2)
            throw GridTooSmall("'" + file.string() + "' is smaller than 2x2");
        r.id = stem;
        r.label = label;
        out.push_back(std::move(r));
    }
    return out;
}

/// Picks exactly `per_class` items of every label present, seeded and
/// platform-independent. The result keeps the input order.
inline std::vector<LabeledRaster> sample_per_class(std::span<const LabeledRaster> items,
                                                   std::size_t per_class, std::uint64_t seed) {
    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < items.size(); ++i) members[items[i].label].push_back(i);

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> chosen;
    for (auto& [label, idx] : members) {
        if (idx.size() < per_class)
            throw InsufficientClassMembers("label " + std::to_string(label) + ": available " +
                                           std::to_string(idx.size()) + ", requested " +
                                           std::to_string(per_class));
        // partial Fisher-Yates: the first per_class slots become the sample
        for (std::size_t k = 0; k < per_class; ++k) {
            std::size_t j = k + static_cast<std::size_t>(uniform_below(rng, idx.size() - k));
            std::swap(idx[k], idx[j]);
        }
        chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(per_class));
    }
    std::sort(chosen.begin(), chosen.end());

    std::vector<LabeledRaster> out;
    out.reserve(chosen.size());
    for (auto i : chosen) out.push_back(items[i]);
    return out;
}

/// value = pixel / 255, or 1 - pixel / 255 when `invert` is set so that bright
/// strokes enter the sublevel filtration first.
inline ScalarGrid to_filtration_function(const LabeledRaster& r, bool invert = true) {
    ScalarGrid g{r.width, r.height, std::vector<double>(r.pixels.size())};
    for (std::size_t i = 0; i < r.pixels.size(); ++i) {
        const int level = invert ? 255 - r.pixels[i] : r.pixels[i];
        g.values[i] = level / 255.0;
    }
    return g;
}

}  // namespace topoembed::ingest
