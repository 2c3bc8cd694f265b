#pragma once

#include <cstdint>
#include <vector>

#include "evlf/diffusion.hpp"
#include "evlf/encoders.hpp"
#include "evlf/fusion.hpp"
#include "evlf/tensor.hpp"

namespace evlf {

// B x B binary matrix marking same-label pairs; symmetric, all-ones diagonal.
struct ClassMask {
    Tensor m;  // [B x B] of {0,1}
};

ClassMask class_mask(const std::vector<std::size_t>& labels);

// lambda1 fixed; lambda2 ramped linearly from start to end over the first
// ramp_epochs epochs, clamped at end thereafter.
struct LossWeights {
    double lambda1 = 0.1;
    double lambda2_start = 0.05;
    double lambda2_end = 1.0;
    std::size_t lambda2_ramp_epochs = 2;

    double lambda2_at(std::size_t epoch) const;
};

// Mean squared elementwise difference (mean, not sum, so the lambda balance
// is independent of latent size).
Tensor mse_loss(const FusedLatent& z_fused, const VisualLatent& z_img);

// s[i][j] = cos(z_proj_i, e_text_j) / temperature, rows eps-safe normalized.
Tensor similarity_logits(const Tensor& z_proj, const Tensor& e_text_batch, double temperature);

// (1/B) sum_i -log( sum_j M_ij e^{s_ij} / sum_j e^{s_ij} ), log-sum-exp
// stabilized. Nonnegative; zero exactly when every mask row is all ones.
Tensor info_nce(const Tensor& s, const ClassMask& mask);

// One fusion-training batch: precomputed visual latents plus labels.
struct FusionBatch {
    std::vector<VisualLatent> latents;
    std::vector<std::size_t> labels;
};

struct FusionLossResult {
    Tensor total;
    double infonce = 0.0;
    double mse = 0.0;
    double lambda2 = 0.0;
};

// Composes fuse/project/embed over the batch and returns
// lambda1 * L_InfoNCE + lambda2(epoch) * L_MSE with the parts for logging.
FusionLossResult fusion_loss(const FusionBatch& batch, const FusionParams& params,
                             const ProjectorParams& proj, const TextEmbeddingTable& table,
                             const LossWeights& weights, std::size_t epoch, double temperature);

// || eps_theta(z_t, t, e_text) - eps ||^2, mean-reduced, with z_t from the
// forward-noising marginal.
Tensor diffusion_loss(const DenoiserParams& denoiser, const FusedLatent& z0,
                      const TextEmbedding& e_text, std::size_t t, const Tensor& eps,
                      const NoiseSchedule& schedule);

}  // namespace evlf
