#include "evlf/fusion.hpp"

#include <cmath>

#include "evlf/errors.hpp"
#include "evlf/rng.hpp"

namespace evlf {

FusionParams FusionParams::init(std::size_t latent_c, std::size_t text_dim, std::size_t d,
                                std::size_t heads, std::uint64_t seed, bool trainable) {
    if (heads == 0 || d % heads != 0) {
        throw ConfigError("fusion: d=" + std::to_string(d) + " not divisible by heads=" +
                          std::to_string(heads));
    }
    FusionParams p;
    p.d = d;
    p.heads = heads;
    p.latent_c = latent_c;
    p.text_dim = text_dim;
    Rng rng(seed, 0xF051);
    const double std_w = 0.02;
    p.phi_img_w = Tensor::randn({latent_c, d}, rng, std_w, trainable);
    p.phi_img_b = Tensor::zeros({d}, trainable);
    p.phi_text_w = Tensor::randn({text_dim, d}, rng, std_w, trainable);
    p.phi_text_b = Tensor::zeros({d}, trainable);
    p.w_q = Tensor::randn({d, d}, rng, std_w, trainable);
    p.w_k = Tensor::randn({d, d}, rng, std_w, trainable);
    p.w_v = Tensor::randn({d, d}, rng, std_w, trainable);
    p.ln1_gamma = Tensor::full({d}, 1.0, trainable);
    p.ln1_beta = Tensor::zeros({d}, trainable);
    p.ln2_gamma = Tensor::full({d}, 1.0, trainable);
    p.ln2_beta = Tensor::zeros({d}, trainable);
    p.ffn_w1 = Tensor::randn({d, 4 * d}, rng, std_w, trainable);
    p.ffn_b1 = Tensor::zeros({4 * d}, trainable);
    p.ffn_w2 = Tensor::randn({4 * d, d}, rng, std_w, trainable);
    p.ffn_b2 = Tensor::zeros({d}, trainable);
    p.psi_w = Tensor::randn({d, latent_c}, rng, 1.0 / std::sqrt(static_cast<double>(d)), trainable);
    p.psi_b = Tensor::zeros({latent_c}, trainable);
    return p;
}

std::vector<Tensor> FusionParams::parameters() const {
    return {phi_img_w, phi_img_b, phi_text_w, phi_text_b, w_q,    w_k,    w_v,
            ln1_gamma, ln1_beta,  ln2_gamma,  ln2_beta,   ffn_w1, ffn_b1, ffn_w2,
            ffn_b2,    psi_w,     psi_b};
}

void FusionParams::freeze() {
    for (Tensor* t : {&phi_img_w, &phi_img_b, &phi_text_w, &phi_text_b, &w_q, &w_k, &w_v,
                      &ln1_gamma, &ln1_beta, &ln2_gamma, &ln2_beta, &ffn_w1, &ffn_b1, &ffn_w2,
                      &ffn_b2, &psi_w, &psi_b}) {
        *t = t->detached();
    }
}

std::pair<Tensor, Tensor> project_tokens(const VisualLatent& z_img, const TextEmbedding& e_text,
                                         const FusionParams& params) {
    if (z_img.grid.rank() != 3 || z_img.grid.shape()[2] != params.latent_c) {
        throw ShapeError("project_tokens: latent " + shape_str(z_img.grid.shape()) +
                         " does not match C=" + std::to_string(params.latent_c));
    }
    if (e_text.tokens.rank() != 2 || e_text.tokens.dim(1) != params.text_dim) {
        throw ShapeError("project_tokens: text tokens " + shape_str(e_text.tokens.shape()) +
                         " do not match C_t=" + std::to_string(params.text_dim));
    }
    const std::size_t n = z_img.grid.shape()[0] * z_img.grid.shape()[1];
    Tensor flat = reshape(z_img.grid, {n, params.latent_c});
    Tensor z = add_row_vector(matmul(flat, params.phi_img_w), params.phi_img_b);
    Tensor e = add_row_vector(matmul(e_text.tokens, params.phi_text_w), params.phi_text_b);
    return {z, e};
}

Tensor cross_attention(const Tensor& z_tokens, const Tensor& e_tokens,
                       const FusionParams& params) {
    if (z_tokens.rank() != 2 || z_tokens.dim(1) != params.d || e_tokens.rank() != 2 ||
        e_tokens.dim(1) != params.d) {
        throw ShapeError("cross_attention: token widths " + shape_str(z_tokens.shape()) + ", " +
                         shape_str(e_tokens.shape()) + " must equal d=" + std::to_string(params.d));
    }
    const std::size_t dh = params.d / params.heads;
    Tensor q = matmul(z_tokens, params.w_q);
    Tensor k = matmul(e_tokens, params.w_k);
    Tensor v = matmul(e_tokens, params.w_v);

    Tensor out;
    for (std::size_t h = 0; h < params.heads; ++h) {
        Tensor qh = slice_cols(q, h * dh, dh);
        Tensor kh = slice_cols(k, h * dh, dh);
        Tensor vh = slice_cols(v, h * dh, dh);
        Tensor logits = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
        Tensor mixed = ordered_matmul(softmax_rows(logits), vh);
        out = h == 0 ? mixed : concat_cols(out, mixed);
    }
    return out;
}

FusedLatent fuse(const VisualLatent& z_img, const TextEmbedding& e_text,
                 const FusionParams& params) {
    auto [z, e] = project_tokens(z_img, e_text, params);
    Tensor attended = cross_attention(z, e, params);
    Tensor u = layer_norm(add(z, attended), params.ln1_gamma, params.ln1_beta);
    Tensor u2 = layer_norm(u, params.ln2_gamma, params.ln2_beta);
    Tensor ffn = add_row_vector(
        matmul(relu(add_row_vector(matmul(u2, params.ffn_w1), params.ffn_b1)), params.ffn_w2),
        params.ffn_b2);
    Tensor restored = add_row_vector(matmul(add(u, ffn), params.psi_w), params.psi_b);
    return {reshape(restored, z_img.grid.shape())};
}

ProjectorParams ProjectorParams::init(std::size_t latent_c, std::size_t text_dim,
                                      std::uint64_t seed, bool trainable) {
    Rng rng(seed, 0x9807);
    ProjectorParams p;
    p.w = Tensor::randn({latent_c, text_dim}, rng, 0.02, trainable);
    p.b = Tensor::zeros({text_dim}, trainable);
    return p;
}

std::vector<Tensor> ProjectorParams::parameters() const { return {w, b}; }

void ProjectorParams::freeze() {
    w = w.detached();
    b = b.detached();
}

Tensor project_latent(const FusedLatent& z_fused, const ProjectorParams& proj) {
    if (z_fused.grid.rank() != 3 || z_fused.grid.shape()[2] != proj.w.dim(0)) {
        throw ShapeError("project_latent: latent " + shape_str(z_fused.grid.shape()) +
                         " does not match projector input " + shape_str(proj.w.shape()));
    }
    const std::size_t n = z_fused.grid.shape()[0] * z_fused.grid.shape()[1];
    const std::size_t c = proj.w.dim(0);
    Tensor pooled = mean_rows(reshape(z_fused.grid, {n, c}));
    Tensor mapped = add_row_vector(matmul(reshape(pooled, {1, c}), proj.w), proj.b);
    return reshape(l2_normalize_rows(mapped), {proj.w.dim(1)});
}

}  // namespace evlf
