#include "evlf/kmeans.hpp"

#include <cmath>
#include <limits>

#include "evlf/errors.hpp"
#include "evlf/rng.hpp"

namespace evlf {

namespace {

double sq_dist(const double* a, const double* b, std::size_t dim) {
    double acc = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

KMeansResult run_once(const double* pts, std::size_t n, std::size_t dim, std::size_t k, Rng& rng,
                      std::size_t max_iters, double tol) {
    // k-means++ seeding
    std::vector<double> centers(k * dim);
    std::vector<double> d2(n, std::numeric_limits<double>::max());
    const std::size_t first = static_cast<std::size_t>(rng.integer(n));
    for (std::size_t j = 0; j < dim; ++j) centers[j] = pts[first * dim + j];
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = sq_dist(pts + i * dim, centers.data() + (c - 1) * dim, dim);
            d2[i] = std::min(d2[i], d);
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double run = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                run += d2[i];
                if (run >= r) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<std::size_t>(rng.integer(n));
        }
        for (std::size_t j = 0; j < dim; ++j) centers[c * dim + j] = pts[pick * dim + j];
    }

    std::vector<std::size_t> assign(n, 0);
    std::vector<std::size_t> counts(k, 0);
    std::vector<double> next(k * dim);
    double inertia = 0.0;
    std::size_t iter = 0;
    for (; iter < max_iters; ++iter) {
        inertia = 0.0;
        std::fill(counts.begin(), counts.end(), 0);
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = sq_dist(pts + i * dim, centers.data(), dim);
            for (std::size_t c = 1; c < k; ++c) {
                const double d = sq_dist(pts + i * dim, centers.data() + c * dim, dim);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            assign[i] = best;
            counts[best]++;
            inertia += best_d;
            for (std::size_t j = 0; j < dim; ++j) next[best * dim + j] += pts[i * dim + j];
        }

        // empty cluster: reseed to the point farthest from its center
        bool reseeded = false;
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = sq_dist(pts + i * dim, centers.data() + assign[i] * dim, dim);
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            for (std::size_t j = 0; j < dim; ++j) centers[c * dim + j] = pts[far * dim + j];
            reseeded = true;
        }
        if (reseeded) continue;

        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            for (std::size_t j = 0; j < dim; ++j) next[c * dim + j] /= static_cast<double>(counts[c]);
            shift = std::max(shift, std::sqrt(sq_dist(next.data() + c * dim,
                                                      centers.data() + c * dim, dim)));
        }
        centers = next;
        if (shift < tol) {
            ++iter;
            break;
        }
    }

    // final assignment against the settled centers
    inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        double best_d = sq_dist(pts + i * dim, centers.data(), dim);
        for (std::size_t c = 1; c < k; ++c) {
            const double d = sq_dist(pts + i * dim, centers.data() + c * dim, dim);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        assign[i] = best;
        inertia += best_d;
    }

    KMeansResult out;
    out.centers = Tensor::from_data({k, dim}, std::move(centers));
    out.assignment = std::move(assign);
    out.inertia = inertia;
    out.iterations = iter;
    return out;
}

}  // namespace

KMeansResult kmeans(const Tensor& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iters, double tol, std::size_t restarts) {
    if (points.rank() != 2) throw ShapeError("kmeans: points must be [n x dim]");
    const std::size_t n = points.dim(0), dim = points.dim(1);
    if (k == 0) throw ConfigError("kmeans: k must be >= 1");
    if (n < k) {
        throw ConfigError("kmeans: " + std::to_string(n) + " points cannot fill k=" +
                          std::to_string(k) + " clusters");
    }
    if (restarts == 0) restarts = 1;

    KMeansResult best;
    for (std::size_t r = 0; r < restarts; ++r) {
        Rng rng(seed, 0x4B0 + r);
        KMeansResult cand = run_once(points.data().data(), n, dim, k, rng, max_iters, tol);
        if (r == 0 || cand.inertia < best.inertia) best = std::move(cand);
    }
    return best;
}

std::vector<FusedLatent> cluster_prototypes(const std::vector<FusedLatent>& latents, std::size_t k,
                                            std::uint64_t seed) {
    if (latents.empty()) throw ConfigError("cluster_prototypes: no latents");
    if (latents.size() < k) {
        throw ConfigError("cluster_prototypes: " + std::to_string(latents.size()) +
                          " latents for k=" + std::to_string(k));
    }
    const Shape grid_shape = latents[0].grid.shape();
    const std::size_t dim = latents[0].grid.numel();
    std::vector<double> rows;
    rows.reserve(latents.size() * dim);
    for (const FusedLatent& z : latents) {
        if (z.grid.shape() != grid_shape) throw ShapeError("cluster_prototypes: ragged latents");
        rows.insert(rows.end(), z.grid.data().begin(), z.grid.data().end());
    }
    KMeansResult res = kmeans(Tensor::from_data({latents.size(), dim}, std::move(rows)), k, seed);

    std::vector<FusedLatent> centers;
    centers.reserve(k);
    for (std::size_t c = 0; c < k; ++c) {
        auto d = res.centers.data();
        centers.push_back({Tensor::from_data(
            grid_shape, std::vector<double>(d.begin() + c * dim, d.begin() + (c + 1) * dim))});
    }
    return centers;
}

}  // namespace evlf
