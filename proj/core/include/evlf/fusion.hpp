#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "evlf/encoders.hpp"
#include "evlf/tensor.hpp"

namespace evlf {

// Latent carrying both visual structure and class semantics; same shape as
// the source VisualLatent.
struct FusedLatent {
    Tensor grid;  // [H x W x C]
};

// Early-fusion cross-attention block: shared-space projections, image-query
// attention over text tokens, residual + LayerNorm, pre-norm FFN, and the
// channel restore map back to the latent grid.
struct FusionParams {
    std::size_t d = 0, heads = 0;
    std::size_t latent_c = 0;  // C
    std::size_t text_dim = 0;  // C_t

    Tensor phi_img_w, phi_img_b;    // C -> d
    Tensor phi_text_w, phi_text_b;  // C_t -> d
    Tensor w_q, w_k, w_v;           // d -> d, bias-free
    Tensor ln1_gamma, ln1_beta;     // post-residual norm
    Tensor ln2_gamma, ln2_beta;     // pre-FFN norm
    Tensor ffn_w1, ffn_b1;          // d -> 4d
    Tensor ffn_w2, ffn_b2;          // 4d -> d
    Tensor psi_w, psi_b;            // d -> C restore

    // Gaussian std 0.02, zero biases; psi scaled by 1/sqrt(d) so the fused
    // latent starts at the scale of the input latent.
    static FusionParams init(std::size_t latent_c, std::size_t text_dim, std::size_t d,
                             std::size_t heads, std::uint64_t seed, bool trainable = true);
    std::vector<Tensor> parameters() const;
    void freeze();
};

// Eq-5 style shared-space projections: flattened latent tokens and text
// tokens mapped to width d.
std::pair<Tensor, Tensor> project_tokens(const VisualLatent& z_img, const TextEmbedding& e_text,
                                         const FusionParams& params);

// Multi-head attention with image tokens as queries, text tokens as keys and
// values; logits scaled by 1/sqrt(d_head). Inner reductions run in canonical
// order, so permuting key/value rows together is a bit-exact no-op.
Tensor cross_attention(const Tensor& z_tokens, const Tensor& e_tokens, const FusionParams& params);

FusedLatent fuse(const VisualLatent& z_img, const TextEmbedding& e_text,
                 const FusionParams& params);

// Mean-pool the fused grid, map into text-embedding space, L2-normalize.
struct ProjectorParams {
    Tensor w;  // [C x C_t]
    Tensor b;  // [C_t]
    static ProjectorParams init(std::size_t latent_c, std::size_t text_dim, std::uint64_t seed,
                                bool trainable = true);
    std::vector<Tensor> parameters() const;
    void freeze();
};

Tensor project_latent(const FusedLatent& z_fused, const ProjectorParams& proj);  // [C_t], unit norm

}  // namespace evlf
