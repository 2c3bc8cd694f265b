#include <algorithm>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "evlf/errors.hpp"
#include "evlf/kmeans.hpp"
#include "evlf/rng.hpp"

using namespace evlf;

namespace {

// Exhaustive search over all assignments of n points to k clusters (empty
// clusters skipped); returns the optimal inertia.
double brute_force_inertia(const Tensor& pts, std::size_t k) {
    const std::size_t n = pts.dim(0), dim = pts.dim(1);
    double best = std::numeric_limits<double>::max();
    std::vector<std::size_t> assign(n, 0);
    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total *= k;
    for (std::size_t code = 0; code < total; ++code) {
        std::size_t c = code;
        for (std::size_t i = 0; i < n; ++i) {
            assign[i] = c % k;
            c /= k;
        }
        std::vector<double> mean(k * dim, 0.0);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            counts[assign[i]]++;
            for (std::size_t j = 0; j < dim; ++j) mean[assign[i] * dim + j] += pts.at(i, j);
        }
        if (std::any_of(counts.begin(), counts.end(), [](std::size_t x) { return x == 0; })) continue;
        for (std::size_t cl = 0; cl < k; ++cl)
            for (std::size_t j = 0; j < dim; ++j) mean[cl * dim + j] /= static_cast<double>(counts[cl]);
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < dim; ++j) {
                const double d = pts.at(i, j) - mean[assign[i] * dim + j];
                inertia += d * d;
            }
        best = std::min(best, inertia);
    }
    return best;
}

}  // namespace

TEST_CASE("k equal to point count gives zero inertia") {
    Rng rng(1);
    Tensor pts = Tensor::randn({5, 3}, rng);
    KMeansResult res = kmeans(pts, 5, 0);
    CHECK(res.inertia == doctest::Approx(0.0).epsilon(1e-12));
    // every point is its own center
    std::vector<bool> used(5, false);
    for (std::size_t i = 0; i < 5; ++i) {
        bool matched = false;
        for (std::size_t c = 0; c < 5 && !matched; ++c) {
            bool same = true;
            for (std::size_t j = 0; j < 3; ++j) same = same && pts.at(i, j) == res.centers.at(c, j);
            if (same && !used[c]) {
                used[c] = true;
                matched = true;
            }
        }
        CHECK(matched);
    }
}

TEST_CASE("k=1 returns the mean") {
    Rng rng(2);
    Tensor pts = Tensor::randn({7, 2}, rng);
    KMeansResult res = kmeans(pts, 1, 4);
    for (std::size_t j = 0; j < 2; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < 7; ++i) mean += pts.at(i, j);
        mean /= 7.0;
        CHECK(res.centers.at(0, j) == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("two well-separated pairs give the group means") {
    Tensor pts = Tensor::from_data({4, 2}, {0.0, 0.1, 0.1, 0.0, 10.0, 10.1, 10.1, 10.0});
    KMeansResult res = kmeans(pts, 2, 7);
    CHECK(res.inertia == doctest::Approx(brute_force_inertia(pts, 2)).epsilon(1e-12));
    // centers are {0.05, 0.05} and {10.05, 10.05} in some order
    std::vector<std::pair<double, double>> centers = {{res.centers.at(0, 0), res.centers.at(0, 1)},
                                                      {res.centers.at(1, 0), res.centers.at(1, 1)}};
    std::sort(centers.begin(), centers.end());
    CHECK(centers[0].first == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(centers[0].second == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(centers[1].first == doctest::Approx(10.05).epsilon(1e-9));
    CHECK(centers[1].second == doctest::Approx(10.05).epsilon(1e-9));
}

TEST_CASE("kmeans matches the exhaustive-partition optimum on 4-point instances") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor pts = Tensor::randn({4, 2}, rng);
        for (std::size_t k : {2ul, 3ul}) {
            KMeansResult res = kmeans(pts, k, trial, 100, 1e-9, 8);
            const double opt = brute_force_inertia(pts, k);
            INFO("trial " << trial << " k " << k);
            CHECK(res.inertia <= opt + 1e-9);
            CHECK(res.inertia >= opt - 1e-9);
        }
    }
}

TEST_CASE("fewer samples than k is an error") {
    Rng rng(3);
    Tensor pts = Tensor::randn({3, 2}, rng);
    CHECK_THROWS_AS(kmeans(pts, 4, 0), ConfigError);
}

TEST_CASE("fixed seed gives identical centers across runs") {
    Rng rng(5);
    Tensor pts = Tensor::randn({40, 6}, rng);
    KMeansResult a = kmeans(pts, 5, 123);
    KMeansResult b = kmeans(pts, 5, 123);
    for (std::size_t i = 0; i < a.centers.numel(); ++i) CHECK(a.centers.at(i) == b.centers.at(i));
    CHECK(a.assignment == b.assignment);

    KMeansResult c = kmeans(pts, 5, 124);
    CHECK(c.inertia == doctest::Approx(a.inertia).epsilon(0.5));  // same data, similar quality
}

TEST_CASE("inertia never increases across Lloyd iterations") {
    // probed indirectly: rerunning with more allowed iterations never worsens
    Rng rng(7);
    Tensor pts = Tensor::randn({30, 3}, rng);
    double prev = std::numeric_limits<double>::max();
    for (std::size_t iters : {1ul, 2ul, 5ul, 20ul, 100ul}) {
        KMeansResult res = kmeans(pts, 4, 9, iters, 0.0, 1);
        CHECK(res.inertia <= prev + 1e-9);
        prev = res.inertia;
    }
}

TEST_CASE("cluster_prototypes preserves grid shape and handles errors") {
    Rng rng(13);
    std::vector<FusedLatent> latents;
    for (int i = 0; i < 10; ++i) latents.push_back({Tensor::randn({2, 2, 3}, rng)});
    auto centers = cluster_prototypes(latents, 4, 99);
    REQUIRE(centers.size() == 4);
    for (const auto& c : centers) CHECK(c.grid.shape() == Shape{2, 2, 3});

    CHECK_THROWS_AS(cluster_prototypes(latents, 11, 0), ConfigError);
    CHECK_THROWS_AS(cluster_prototypes({}, 1, 0), ConfigError);
}
