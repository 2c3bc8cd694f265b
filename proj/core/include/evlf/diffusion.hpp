#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "evlf/encoders.hpp"
#include "evlf/tensor.hpp"

namespace evlf {

// Forward-process schedule. alpha_bar[t-1] is the cumulative signal fraction
// at step t (1-based), i.e. the product of (1 - beta) up to t.
struct NoiseSchedule {
    std::size_t steps = 0;  // T
    Tensor alpha_bar;       // [T], strictly decreasing in (0,1)
    Tensor beta;            // [T], each in (0,1)

    double alpha_bar_at(std::size_t t) const;  // t in 1..T
    double beta_at(std::size_t t) const;
};

// Linear beta ramp; alpha_bar by cumulative product.
NoiseSchedule make_schedule(std::size_t steps, double beta_min, double beta_max);

// z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps, elementwise on any
// shape; differentiable in z0 and eps.
Tensor forward_noise(const Tensor& z0, std::size_t t, const Tensor& eps,
                     const NoiseSchedule& schedule);

// Conditioned MLP noise predictor: learnable time-embedding table plus a
// mean-pooled text-embedding conditioning vector, concatenated to the
// flattened latent and pushed through a two-hidden-layer trunk.
struct DenoiserParams {
    std::size_t latent_size = 0;
    std::size_t time_dim = 0;
    std::size_t cond_dim = 0;  // 0 disables conditioning
    std::size_t width = 0;
    Tensor time_table;  // [T x time_dim]
    Tensor w1, b1;      // input -> width
    Tensor w2, b2;      // width -> width
    Tensor w3, b3;      // width -> latent_size

    static DenoiserParams init(std::size_t latent_size, std::size_t schedule_steps,
                               std::size_t time_dim, std::size_t cond_dim, std::size_t width,
                               std::uint64_t seed, bool trainable = true);
    std::vector<Tensor> parameters() const;
    void freeze();
};

// eps_theta(z_t, t, e_text); output has the shape of z_t. An undefined
// e_text requires cond_dim == 0.
Tensor predict_noise(const DenoiserParams& params, const Tensor& z_t, std::size_t t,
                     const TextEmbedding& e_text);

// Batched trunk used by training and sampling; cond may be 0-wide.
Tensor predict_noise_rows(const DenoiserParams& params, const Tensor& z_rows,
                          const std::vector<std::size_t>& ts, const Tensor& cond_rows);

// Flattened latents plus per-row conditioning vectors.
struct LatentSet {
    Tensor rows;  // [n x latent_size]
    Tensor cond;  // [n x cond_dim]; cond_dim 0 for unconditional
};

struct DenoiserTrainConfig {
    std::size_t width = 128;
    std::size_t time_dim = 32;
    std::size_t batch = 32;
    double lr = 1e-3;
};

// Noise-prediction training from scratch; returns trained (still trainable)
// params. Mean losses over consecutive 1000-step windows are appended to
// *window_means.
DenoiserParams train_denoiser(const LatentSet& data, const NoiseSchedule& schedule,
                              std::size_t steps, std::uint64_t seed,
                              const DenoiserTrainConfig& cfg = {},
                              std::vector<double>* window_means = nullptr);

// Continue training existing params on a (typically fused-latent) set.
void finetune_denoiser(DenoiserParams& params, const LatentSet& data,
                       const NoiseSchedule& schedule, std::size_t steps, double lr,
                       std::uint64_t seed, std::size_t batch = 32,
                       std::vector<double>* window_means = nullptr);

// Ancestral DDPM reverse chain starting at z_start, already at noise level
// t_start. deterministic = true zeroes the per-step noise (it is always zero
// at t = 1).
Tensor sample_from(const DenoiserParams& params, const TextEmbedding& e_text,
                   const NoiseSchedule& schedule, const Tensor& z_start, std::size_t t_start,
                   std::uint64_t seed, bool deterministic = false);

// Reverse chain over num_steps <= T. With `init`, start from
// forward_noise(init, num_steps) (partial-noising path; num_steps = 0 returns
// init unchanged); otherwise from standard normal noise.
Tensor sample(const DenoiserParams& params, const TextEmbedding& e_text,
              const NoiseSchedule& schedule, std::size_t num_steps, std::uint64_t seed,
              const std::optional<Tensor>& init = std::nullopt, bool deterministic = false);

}  // namespace evlf
