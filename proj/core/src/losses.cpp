#include "evlf/losses.hpp"

#include <algorithm>

#include "evlf/errors.hpp"

namespace evlf {

ClassMask class_mask(const std::vector<std::size_t>& labels) {
    const std::size_t b = labels.size();
    if (b == 0) throw ShapeError("class_mask: empty batch");
    std::vector<double> m(b * b, 0.0);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < b; ++j) m[i * b + j] = labels[i] == labels[j] ? 1.0 : 0.0;
    return {Tensor::from_data({b, b}, std::move(m))};
}

double LossWeights::lambda2_at(std::size_t epoch) const {
    if (epoch >= lambda2_ramp_epochs) return lambda2_end;
    const double frac = static_cast<double>(epoch) / static_cast<double>(lambda2_ramp_epochs);
    return lambda2_start + (lambda2_end - lambda2_start) * frac;
}

Tensor mse_loss(const FusedLatent& z_fused, const VisualLatent& z_img) {
    if (z_fused.grid.shape() != z_img.grid.shape()) {
        throw ShapeError("mse_loss: shapes differ, " + shape_str(z_fused.grid.shape()) + " vs " +
                         shape_str(z_img.grid.shape()));
    }
    Tensor diff = sub(z_fused.grid, z_img.grid);
    return mean(mul(diff, diff));
}

Tensor similarity_logits(const Tensor& z_proj, const Tensor& e_text_batch, double temperature) {
    if (temperature <= 0.0) {
        throw ConfigError("similarity_logits: temperature must be positive, got " +
                          std::to_string(temperature));
    }
    if (z_proj.rank() != 2 || e_text_batch.rank() != 2 || z_proj.dim(1) != e_text_batch.dim(1)) {
        throw ShapeError("similarity_logits: incompatible shapes " + shape_str(z_proj.shape()) +
                         " vs " + shape_str(e_text_batch.shape()));
    }
    Tensor zn = l2_normalize_rows(z_proj);
    Tensor en = l2_normalize_rows(e_text_batch);
    return scale(matmul(zn, transpose(en)), 1.0 / temperature);
}

Tensor info_nce(const Tensor& s, const ClassMask& mask) {
    if (s.rank() != 2 || s.dim(0) != s.dim(1) || s.shape() != mask.m.shape()) {
        throw ShapeError("info_nce: logits " + shape_str(s.shape()) + " and mask " +
                         shape_str(mask.m.shape()) + " must be equal square matrices");
    }
    // the row max cancels between the two log-sum-exp terms
    Tensor stabilized = exp(sub_row_offsets(s, row_max(s)));
    Tensor log_denom = log(row_sums(stabilized));
    Tensor log_num = log(row_sums(mul(stabilized, mask.m)));
    return mean(sub(log_denom, log_num));
}

FusionLossResult fusion_loss(const FusionBatch& batch, const FusionParams& params,
                             const ProjectorParams& proj, const TextEmbeddingTable& table,
                             const LossWeights& weights, std::size_t epoch, double temperature) {
    const std::size_t b = batch.latents.size();
    if (b == 0 || batch.labels.size() != b) throw ShapeError("fusion_loss: empty or ragged batch");

    std::vector<Tensor> proj_rows, text_rows;
    Tensor mse_sum;
    for (std::size_t i = 0; i < b; ++i) {
        TextEmbedding e = table.embed(batch.labels[i]);
        FusedLatent fused = fuse(batch.latents[i], e, params);
        Tensor m = mse_loss(fused, batch.latents[i]);
        mse_sum = i == 0 ? m : add(mse_sum, m);
        proj_rows.push_back(project_latent(fused, proj));
        text_rows.push_back(mean_rows(e.tokens));  // class vector: token average
    }
    Tensor mse = scale(mse_sum, 1.0 / static_cast<double>(b));
    Tensor s = similarity_logits(stack_rows(proj_rows), stack_rows(text_rows), temperature);
    Tensor nce = info_nce(s, class_mask(batch.labels));

    FusionLossResult out;
    out.infonce = nce.value();
    out.mse = mse.value();
    out.lambda2 = weights.lambda2_at(epoch);
    out.total = add(scale(nce, weights.lambda1), scale(mse, out.lambda2));
    return out;
}

Tensor diffusion_loss(const DenoiserParams& denoiser, const FusedLatent& z0,
                      const TextEmbedding& e_text, std::size_t t, const Tensor& eps,
                      const NoiseSchedule& schedule) {
    Tensor z_t = forward_noise(z0.grid, t, eps, schedule);
    Tensor pred = predict_noise(denoiser, z_t, t, e_text);
    Tensor diff = sub(pred, eps);
    return mean(mul(diff, diff));
}

}  // namespace evlf
