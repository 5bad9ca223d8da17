#pragma once

// Pairwise image distances and 2D embeddings (classical MDS, Isomap, exact
// t-SNE).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// <resolv.h> (pulled in by cpp-httplib) defines _res, which Eigen uses as a parameter name
#pragma push_macro("_res")
#undef _res
#include <Eigen/Dense>
#pragma pop_macro("_res")

#include "error.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "vectorize.hpp"

namespace topoembed::analysis {

/// Symmetric n x n matrix of distances with a zero diagonal.
struct DistanceMatrix {
    std::size_t n = 0;
    std::vector<double> d;  // row-major
    std::vector<std::string> item_ids;

    double at(std::size_t i, std::size_t j) const { return d[i * n + j]; }
    double& at(std::size_t i, std::size_t j) { return d[i * n + j]; }

    bool operator==(const DistanceMatrix&) const = default;
};

enum class Method { mds, isomap, tsne };

inline std::string_view to_string(Method m) {
    switch (m) {
        case Method::mds: return "mds";
        case Method::isomap: return "isomap";
        case Method::tsne: return "tsne";
    }
    return "";
}

inline Method parse_method(std::string_view text) {
    if (text == "mds") return Method::mds;
    if (text == "isomap") return Method::isomap;
    if (text == "tsne") return Method::tsne;
    throw InvalidArgument("unknown embedding method '" + std::string(text) + "'");
}

struct Embedding {
    Method method = Method::mds;
    std::size_t n = 0;
    std::vector<double> coords;  // n x 2, row-major
    std::map<std::string, double> params;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> notes;  // diagnostics such as graph repairs

    double x(std::size_t i) const { return coords[2 * i]; }
    double y(std::size_t i) const { return coords[2 * i + 1]; }
};

/// Euclidean distance between the pixel vectors of every pair of images.
/// Each unordered pair is computed once and mirrored.
inline DistanceMatrix distance_matrix(std::span<const vectorize::PersistenceImage> images,
                                      std::size_t threads = 0) {
    const std::size_t n = images.size();
    for (const auto& img : images)
        if (img.pixels.size() != images[0].pixels.size() || img.resolution != images[0].resolution)
            throw ResolutionMismatch("image '" + img.item_id + "' has resolution " +
                                     std::to_string(img.resolution) + ", expected " +
                                     std::to_string(images[0].resolution));
    DistanceMatrix out{n, std::vector<double>(n * n, 0.0), {}};
    for (const auto& img : images) out.item_ids.push_back(img.item_id);

    parallel_for(n, threads, [&](std::size_t i) {
        const auto& p = images[i].pixels;
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto& q = images[j].pixels;
            double sum = 0.0;
            for (std::size_t k = 0; k < p.size(); ++k) {
                const double diff = p[k] - q[k];
                sum += diff * diff;
            }
            out.d[i * n + j] = out.d[j * n + i] = std::sqrt(sum);
        }
    });
    return out;
}

namespace detail {

constexpr double eigen_tolerance = 1e-10;

inline std::vector<double> mds_coordinates(const DistanceMatrix& D, std::size_t out_dim) {
    const std::size_t n = D.n;
    std::vector<double> coords(n * out_dim, 0.0);
    if (n <= 1) return coords;

    // B = -1/2 J D^2 J via row, column and grand means of the squared distances
    Eigen::MatrixXd sq(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) sq(i, j) = D.at(i, j) * D.at(i, j);
    const Eigen::VectorXd row_mean = sq.rowwise().mean();
    const double grand_mean = row_mean.mean();
    Eigen::MatrixXd B(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            B(i, j) = -0.5 * (sq(i, j) - row_mean(i) - row_mean(j) + grand_mean);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(B);
    if (solver.info() != Eigen::Success)
        throw EigenFailure("symmetric eigensolver did not converge for n = " + std::to_string(n) +
                           ", max |B| = " + std::to_string(B.cwiseAbs().maxCoeff()));

    const auto& values = solver.eigenvalues();  // ascending
    const double largest = std::max(values(values.size() - 1), 0.0);
    for (std::size_t k = 0; k < out_dim && k < n; ++k) {
        const Eigen::Index col = static_cast<Eigen::Index>(n - 1 - k);
        double lambda = values(col);
        if (!(lambda > eigen_tolerance * largest)) continue;  // clamped to zero: axis stays zero
        const double s = std::sqrt(lambda);
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += solver.eigenvectors()(static_cast<Eigen::Index>(i), col) * s;
        mean /= static_cast<double>(n);

        std::size_t extreme = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double& c = coords[i * out_dim + k];
            c = solver.eigenvectors()(static_cast<Eigen::Index>(i), col) * s - mean;
            if (std::abs(c) > std::abs(coords[extreme * out_dim + k])) extreme = i;
        }
        if (coords[extreme * out_dim + k] < 0.0)
            for (std::size_t i = 0; i < n; ++i) coords[i * out_dim + k] = -coords[i * out_dim + k];
    }
    return coords;
}

struct DisjointSets {
    std::vector<std::size_t> parent;
    explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    bool unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[std::max(a, b)] = std::min(a, b);
        return true;
    }
};

}  // namespace detail

/// Classical (Torgerson) MDS into two dimensions. Eigenvalues below a
/// relative tolerance are clamped to zero, giving an all-zero axis. Each axis
/// is oriented so that its largest-magnitude coordinate is positive.
inline Embedding classical_mds(const DistanceMatrix& D, std::size_t out_dim = 2) {
    if (out_dim != 2) throw InvalidArgument("only two-dimensional embeddings are supported");
    if (D.n < 1) throw InvalidArgument("cannot embed an empty distance matrix");
    Embedding e;
    e.method = Method::mds;
    e.n = D.n;
    e.coords = detail::mds_coordinates(D, out_dim);
    return e;
}

/// Shortest-path distances over the symmetric k-nearest-neighbour graph of D.
/// A disconnected graph is joined by repeatedly adding the globally shortest
/// edge between two components; each such edge is reported in `notes`.
inline DistanceMatrix geodesic_distances(const DistanceMatrix& D, std::size_t k, std::size_t threads,
                                         std::vector<std::string>& notes) {
    const std::size_t n = D.n;
    if (!(k >= 1 && n > k))
        throw InvalidArgument("isomap needs n > k >= 1 (n = " + std::to_string(n) + ", k = " +
                              std::to_string(k) + ")");

    std::vector<std::vector<std::size_t>> neighbours(n);
    parallel_for(n, threads, [&](std::size_t i) {
        std::vector<std::size_t> others;
        others.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) others.push_back(j);
        std::partial_sort(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(k), others.end(),
                          [&](std::size_t a, std::size_t b) {
                              return D.at(i, a) != D.at(i, b) ? D.at(i, a) < D.at(i, b) : a < b;
                          });
        others.resize(k);
        neighbours[i] = std::move(others);
    });

    std::vector<std::uint8_t> linked(n * n, 0);
    std::size_t edge_count = 0;
    detail::DisjointSets components(n);
    std::size_t component_count = n;
    auto link = [&](std::size_t a, std::size_t b) {
        if (linked[a * n + b]) return;
        linked[a * n + b] = linked[b * n + a] = 1;
        ++edge_count;
        if (components.unite(a, b)) --component_count;
    };
    for (std::size_t i = 0; i < n; ++i)
        for (auto j : neighbours[i]) link(i, j);

    if (component_count > 1) {
        std::vector<std::pair<std::size_t, std::size_t>> candidates;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (components.find(i) != components.find(j)) candidates.emplace_back(i, j);
        std::sort(candidates.begin(), candidates.end(), [&](const auto& a, const auto& b) {
            const double da = D.at(a.first, a.second);
            const double db = D.at(b.first, b.second);
            return da != db ? da < db : a < b;
        });
        for (const auto& [i, j] : candidates) {
            if (component_count == 1) break;
            if (components.find(i) == components.find(j)) continue;
            link(i, j);
            notes.push_back("connected components with edge " + std::to_string(i) + "-" + std::to_string(j) +
                            " (distance " + std::to_string(D.at(i, j)) + ")");
        }
    }

    // A complete graph over a metric has the direct distances as geodesics.
    if (edge_count == n * (n - 1) / 2) return D;

    std::vector<std::vector<std::size_t>> adjacency(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (linked[i * n + j]) adjacency[i].push_back(j);

    DistanceMatrix G{n, std::vector<double>(n * n, 0.0), D.item_ids};
    parallel_for(n, threads, [&](std::size_t source) {
        std::vector<double> dist(n, std::numeric_limits<double>::infinity());
        using Entry = std::pair<double, std::size_t>;
        std::priority_queue<Entry, std::vector<Entry>, std::greater<>> frontier;
        dist[source] = 0.0;
        frontier.emplace(0.0, source);
        while (!frontier.empty()) {
            auto [du, u] = frontier.top();
            frontier.pop();
            if (du > dist[u]) continue;
            for (auto v : adjacency[u]) {
                const double alt = du + D.at(u, v);
                if (alt < dist[v]) {
                    dist[v] = alt;
                    frontier.emplace(alt, v);
                }
            }
        }
        // only the upper triangle is kept, so G is exactly symmetric
        for (std::size_t j = source + 1; j < n; ++j) G.d[source * n + j] = dist[j];
    });
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) G.d[j * n + i] = G.d[i * n + j];
    return G;
}

/// Isomap: classical MDS of the k-nearest-neighbour geodesic distances.
inline Embedding isomap(const DistanceMatrix& D, std::size_t k = 10, std::size_t out_dim = 2,
                        std::size_t threads = 0) {
    std::vector<std::string> notes;
    const DistanceMatrix G = geodesic_distances(D, k, threads, notes);
    Embedding e = classical_mds(G, out_dim);
    e.method = Method::isomap;
    e.params["k"] = static_cast<double>(k);
    e.notes = std::move(notes);
    return e;
}

struct TsneParams {
    double perplexity = 30.0;
    int iterations = 1000;
    double learning_rate = 200.0;
    std::uint64_t seed = 42;
    double exaggeration = 12.0;
    int exaggeration_iterations = 250;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    int momentum_switch_iteration = 250;
    double init_stddev = 1e-4;
    double perplexity_tolerance = 1e-5;  // relative to the target perplexity
    int max_search_steps = 50;
    int trace_every = 50;
};

struct TsneResult {
    Embedding embedding;
    std::vector<double> row_perplexity;  // achieved 2^H(P_i) per row
    std::vector<std::pair<int, double>> kl_trace;  // (iteration, KL(P||Q)) before that iteration's update
    double initial_kl = 0.0;
    double final_kl = 0.0;
};

namespace detail {

struct RowCalibration {
    double perplexity = 0.0;
    std::vector<double> probabilities;
};

// Gaussian conditional distribution over row i with bandwidth chosen by
// bisection on log(beta) so that exp(H) matches the target perplexity.
inline RowCalibration calibrate_row(const DistanceMatrix& D, std::size_t i, const TsneParams& p) {
    const std::size_t n = D.n;
    std::vector<double> sq(n, 0.0);
    double min_sq = std::numeric_limits<double>::infinity();
    double mean_sq = 0.0;
    std::size_t nonzero = 0;
    for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        sq[j] = D.at(i, j) * D.at(i, j);
        min_sq = std::min(min_sq, sq[j]);
        if (sq[j] > 0.0) {
            mean_sq += sq[j];
            ++nonzero;
        }
    }
    mean_sq = nonzero ? mean_sq / static_cast<double>(nonzero) : 1.0;

    RowCalibration row;
    row.probabilities.assign(n, 0.0);
    auto evaluate = [&](double log_beta) {
        const double beta = std::exp(log_beta);
        double sum = 0.0;
        double weighted = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double shifted = sq[j] - min_sq;
            const double v = std::exp(-beta * shifted);
            row.probabilities[j] = v;
            sum += v;
            weighted += v * shifted;
        }
        for (std::size_t j = 0; j < n; ++j) row.probabilities[j] /= sum;
        return std::exp(std::log(sum) + beta * weighted / sum);
    };

    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    double x = -std::log(mean_sq);
    for (int step = 0; step < p.max_search_steps; ++step) {
        row.perplexity = evaluate(x);
        const double gap = row.perplexity - p.perplexity;
        if (std::abs(gap) <= p.perplexity_tolerance * p.perplexity) break;
        if (gap > 0.0) {  // too flat: sharpen
            lo = x;
            x = std::isinf(hi) ? x + 2.0 : 0.5 * (lo + hi);
        } else {
            hi = x;
            x = std::isinf(lo) ? x - 2.0 : 0.5 * (lo + hi);
        }
        if (step + 1 == p.max_search_steps) row.perplexity = evaluate(x);
    }
    return row;
}

inline double kl_divergence(const std::vector<double>& P, const std::vector<double>& Y, std::size_t n) {
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double dx = Y[2 * i] - Y[2 * j];
            const double dy = Y[2 * i + 1] - Y[2 * j + 1];
            z += 1.0 / (1.0 + dx * dx + dy * dy);
        }
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double pij = P[i * n + j];
            if (i == j || pij <= 0.0) continue;
            const double dx = Y[2 * i] - Y[2 * j];
            const double dy = Y[2 * i + 1] - Y[2 * j + 1];
            const double qij = 1.0 / (1.0 + dx * dx + dy * dy) / z;
            kl += pij * std::log(pij / qij);
        }
    return kl;
}

}  // namespace detail

/// Exact t-SNE on a precomputed distance matrix, deterministic for a seed
/// and independent of the thread count.
inline TsneResult tsne(const DistanceMatrix& D, const TsneParams& p = {}, std::size_t threads = 0) {
    const std::size_t n = D.n;
    if (!(static_cast<double>(n) > 3.0 * p.perplexity))
        throw PerplexityTooLarge("perplexity " + std::to_string(p.perplexity) + " needs more than " +
                                 std::to_string(3.0 * p.perplexity) + " items, got " + std::to_string(n));
    if (p.iterations < 0 || !(p.learning_rate > 0.0))
        throw InvalidArgument("t-SNE needs iterations >= 0 and a positive learning rate");

    TsneResult result;
    result.row_perplexity.resize(n);
    std::vector<double> P(n * n, 0.0);
    {
        std::vector<std::vector<double>> conditional(n);
        parallel_for(n, threads, [&](std::size_t i) {
            auto row = detail::calibrate_row(D, i, p);
            result.row_perplexity[i] = row.perplexity;
            conditional[i] = std::move(row.probabilities);
        });
        const double norm = 2.0 * static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                P[i * n + j] = (conditional[i][j] + conditional[j][i]) / norm;
    }

    std::vector<double> Y(2 * n);
    NormalSource normal(p.seed);
    for (auto& y : Y) y = normal.next() * p.init_stddev;
    std::vector<double> update(2 * n, 0.0);
    std::vector<double> gains(2 * n, 1.0);
    std::vector<double> grad(2 * n, 0.0);
    std::vector<double> kernel(n * n, 0.0);
    std::vector<double> row_sum(n, 0.0);

    result.initial_kl = detail::kl_divergence(P, Y, n);
    for (int iter = 0; iter < p.iterations; ++iter) {
        if (p.trace_every > 0 && iter % p.trace_every == 0)
            result.kl_trace.emplace_back(iter, iter == 0 ? result.initial_kl : detail::kl_divergence(P, Y, n));

        const double exaggeration = iter < p.exaggeration_iterations ? p.exaggeration : 1.0;
        const double momentum = iter < p.momentum_switch_iteration ? p.initial_momentum : p.final_momentum;

        parallel_for(n, threads, [&](std::size_t i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) {
                    kernel[i * n + j] = 0.0;
                    continue;
                }
                const double dx = Y[2 * i] - Y[2 * j];
                const double dy = Y[2 * i + 1] - Y[2 * j + 1];
                const double k = 1.0 / (1.0 + dx * dx + dy * dy);
                kernel[i * n + j] = k;
                s += k;
            }
            row_sum[i] = s;
        });
        double z = 0.0;
        for (double s : row_sum) z += s;

        parallel_for(n, threads, [&](std::size_t i) {
            double gx = 0.0;
            double gy = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double k = kernel[i * n + j];
                const double mult = (exaggeration * P[i * n + j] - k / z) * k;
                gx += mult * (Y[2 * i] - Y[2 * j]);
                gy += mult * (Y[2 * i + 1] - Y[2 * j + 1]);
            }
            grad[2 * i] = 4.0 * gx;
            grad[2 * i + 1] = 4.0 * gy;
        });

        for (std::size_t c = 0; c < 2 * n; ++c) {
            gains[c] = (grad[c] > 0.0) != (update[c] > 0.0) ? gains[c] + 0.2 : gains[c] * 0.8;
            gains[c] = std::max(gains[c], 0.01);
            update[c] = momentum * update[c] - p.learning_rate * gains[c] * grad[c];
            Y[c] += update[c];
        }
        double mx = 0.0;
        double my = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mx += Y[2 * i];
            my += Y[2 * i + 1];
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            Y[2 * i] -= mx;
            Y[2 * i + 1] -= my;
        }
    }
    result.final_kl = detail::kl_divergence(P, Y, n);
    result.kl_trace.emplace_back(p.iterations, result.final_kl);

    auto& e = result.embedding;
    e.method = Method::tsne;
    e.n = n;
    e.coords = std::move(Y);
    e.params = {{"perplexity", p.perplexity},
                {"iterations", static_cast<double>(p.iterations)},
                {"learning_rate", p.learning_rate},
                {"exaggeration", p.exaggeration}};
    e.seed = p.seed;
    return result;
}

}  // namespace topoembed::analysis
