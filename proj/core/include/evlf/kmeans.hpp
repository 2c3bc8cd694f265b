#pragma once

#include <cstdint>
#include <vector>

#include "evlf/fusion.hpp"
#include "evlf/tensor.hpp"

namespace evlf {

struct KMeansResult {
    Tensor centers;                       // [k x dim]
    std::vector<std::size_t> assignment;  // nearest center per point, ties to lowest index
    double inertia = 0.0;                 // sum of squared distances
    std::size_t iterations = 0;
};

// Lloyd iterations from k-means++ seeds until the largest center shift drops
// below tol or max_iters is hit. Empty clusters are reseeded to the point
// farthest from its assigned center. With restarts > 1 the best inertia over
// seeded reruns wins; everything is deterministic in `seed`.
KMeansResult kmeans(const Tensor& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iters = 100, double tol = 1e-6, std::size_t restarts = 4);

// Per-class prototype selection: flattens the fused latents, clusters them,
// and returns the k centers reshaped back to latent grids.
std::vector<FusedLatent> cluster_prototypes(const std::vector<FusedLatent>& latents, std::size_t k,
                                            std::uint64_t seed);

}  // namespace evlf
