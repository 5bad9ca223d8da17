#pragma once

// Persistence images over birth-persistence space and pixel-wise image
// differences.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "persistence.hpp"

namespace topoembed::vectorize {

struct Point {
    double x = 0.0;  // birth
    double y = 0.0;  // persistence

    bool operator==(const Point&) const = default;
};

/// Pixels cover [0,1] x [0,1]; pixel k = iy * resolution + ix where ix bins
/// birth and iy bins persistence, both from low to high.
struct PersistenceImage {
    std::string item_id;
    std::size_t resolution = 0;
    std::vector<double> pixels;

    bool operator==(const PersistenceImage&) const = default;
};

enum class ImageMode { integrate, sample };

inline std::string_view to_string(ImageMode mode) {
    return mode == ImageMode::integrate ? "integrate" : "sample";
}

inline ImageMode parse_image_mode(std::string_view text) {
    if (text == "integrate") return ImageMode::integrate;
    if (text == "sample") return ImageMode::sample;
    throw InvalidArgument("unknown image mode '" + std::string(text) + "'");
}

struct ImageParams {
    std::size_t resolution = 10;
    double sigma = 0.01;
    ImageMode mode = ImageMode::integrate;
    /// Weight scale shared by every diagram; unset means each diagram uses
    /// its own largest persistence.
    std::optional<double> global_scale;
};

struct DiffEntry {
    std::size_t pixel_index = 0;
    double diff = 0.0;

    bool operator==(const DiffEntry&) const = default;
};

/// |a_k - b_k| for every pixel, ascending by difference then pixel index.
struct SortedDiff {
    std::vector<DiffEntry> entries;

    double max_diff() const { return entries.empty() ? 0.0 : entries.back().diff; }
};

/// (birth, death) -> (birth, death - birth) for the dim-1 pairs.
inline std::vector<Point> birth_persistence_transform(const persistence::PersistenceDiagram& d) {
    std::vector<Point> points;
    for (const auto& p : d.pairs)
        if (p.dim == 1) points.push_back({p.birth, p.death - p.birth});
    return points;
}

/// Linear ramp 0 -> 1 over persistence (0, b].
inline double weight(double y, double b) {
    if (!(b > 0.0)) throw DegenerateScale("weight scale must be positive, got " + std::to_string(b));
    if (y <= 0.0) return 0.0;
    if (y >= b) return 1.0;
    return y / b;
}

/// Isotropic 2D Gaussian density centred at `mean`.
inline double gaussian(double x, double y, Point mean, double sigma) {
    const double dx = x - mean.x;
    const double dy = y - mean.y;
    return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)) /
           (2.0 * std::numbers::pi * sigma * sigma);
}

/// Standard normal mass in [lo, hi], accurate in both tails.
inline double normal_mass(double lo, double hi) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    double m;
    if (lo >= 0.0)
        m = 0.5 * (std::erfc(lo * inv_sqrt2) - std::erfc(hi * inv_sqrt2));
    else if (hi <= 0.0)
        m = 0.5 * (std::erfc(-hi * inv_sqrt2) - std::erfc(-lo * inv_sqrt2));
    else
        m = 1.0 - 0.5 * (std::erfc(-lo * inv_sqrt2) + std::erfc(hi * inv_sqrt2));
    return std::max(m, 0.0);
}

inline PersistenceImage persistence_image_from_points(const std::vector<Point>& points,
                                                      const ImageParams& params,
                                                      std::string item_id = {}) {
    const std::size_t n = params.resolution;
    if (n < 1) throw InvalidArgument("image resolution must be at least 1");
    if (!(params.sigma > 0.0)) throw InvalidArgument("kernel width must be positive");

    PersistenceImage img{std::move(item_id), n, std::vector<double>(n * n, 0.0)};
    if (points.empty()) return img;

    double scale = 0.0;
    if (params.global_scale) {
        scale = *params.global_scale;
        if (!(scale > 0.0))
            throw DegenerateScale("global weight scale must be positive, got " + std::to_string(scale));
    } else {
        for (const auto& p : points) scale = std::max(scale, p.y);
    }
    if (!(scale > 0.0)) return img;  // every weight would be zero

    const double width = 1.0 / static_cast<double>(n);
    const double sigma = params.sigma;
    std::vector<double> mass_x(n);
    std::vector<double> mass_y(n);
    for (const auto& p : points) {
        const double w = weight(p.y, scale);
        if (w == 0.0) continue;
        if (params.mode == ImageMode::integrate) {
            for (std::size_t i = 0; i < n; ++i) {
                const double lo = static_cast<double>(i) * width;
                const double hi = static_cast<double>(i + 1) * width;
                mass_x[i] = normal_mass((lo - p.x) / sigma, (hi - p.x) / sigma);
                mass_y[i] = normal_mass((lo - p.y) / sigma, (hi - p.y) / sigma);
            }
            for (std::size_t iy = 0; iy < n; ++iy)
                for (std::size_t ix = 0; ix < n; ++ix) img.pixels[iy * n + ix] += w * mass_x[ix] * mass_y[iy];
        } else {
            for (std::size_t iy = 0; iy < n; ++iy)
                for (std::size_t ix = 0; ix < n; ++ix) {
                    const double cx = (static_cast<double>(ix) + 0.5) * width;
                    const double cy = (static_cast<double>(iy) + 0.5) * width;
                    img.pixels[iy * n + ix] += w * gaussian(cx, cy, p, sigma) * width * width;
                }
        }
    }
    return img;
}

/// Sum of weighted Gaussians, one per dim-1 pair, integrated over (or
/// sampled at the centre of) each pixel.
inline PersistenceImage persistence_image(const persistence::PersistenceDiagram& d,
                                          const ImageParams& params = {}) {
    return persistence_image_from_points(birth_persistence_transform(d), params, d.item_id);
}

inline SortedDiff pixel_diff(const PersistenceImage& a, const PersistenceImage& b) {
    if (a.resolution != b.resolution || a.pixels.size() != b.pixels.size())
        throw ResolutionMismatch("images '" + a.item_id + "' (" + std::to_string(a.resolution) + ") and '" +
                                 b.item_id + "' (" + std::to_string(b.resolution) + ")");
    SortedDiff out;
    out.entries.reserve(a.pixels.size());
    for (std::size_t k = 0; k < a.pixels.size(); ++k)
        out.entries.push_back({k, std::abs(a.pixels[k] - b.pixels[k])});
    std::sort(out.entries.begin(), out.entries.end(), [](const DiffEntry& l, const DiffEntry& r) {
        return l.diff != r.diff ? l.diff < r.diff : l.pixel_index < r.pixel_index;
    });
    return out;
}

}  // namespace topoembed::vectorize
