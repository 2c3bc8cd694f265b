#include "evlf/diffusion.hpp"

#include <cmath>

#include "evlf/errors.hpp"
#include "evlf/optim.hpp"
#include "evlf/rng.hpp"

namespace evlf {

double NoiseSchedule::alpha_bar_at(std::size_t t) const {
    if (t < 1 || t > steps) {
        throw ShapeError("schedule: t=" + std::to_string(t) + " outside 1.." + std::to_string(steps));
    }
    return alpha_bar.at(t - 1);
}

double NoiseSchedule::beta_at(std::size_t t) const {
    if (t < 1 || t > steps) {
        throw ShapeError("schedule: t=" + std::to_string(t) + " outside 1.." + std::to_string(steps));
    }
    return beta.at(t - 1);
}

NoiseSchedule make_schedule(std::size_t steps, double beta_min, double beta_max) {
    if (steps < 1) throw ConfigError("make_schedule: need at least one step");
    if (!(beta_min > 0.0) || beta_min > beta_max || !(beta_max < 1.0)) {
        throw ConfigError("make_schedule: betas must satisfy 0 < beta_min <= beta_max < 1");
    }
    std::vector<double> beta(steps), alpha_bar(steps);
    double prod = 1.0;
    for (std::size_t i = 0; i < steps; ++i) {
        beta[i] = steps == 1 ? beta_min
                             : beta_min + (beta_max - beta_min) * static_cast<double>(i) /
                                              static_cast<double>(steps - 1);
        prod *= 1.0 - beta[i];
        alpha_bar[i] = prod;
    }
    NoiseSchedule s;
    s.steps = steps;
    s.beta = Tensor::from_data({steps}, std::move(beta));
    s.alpha_bar = Tensor::from_data({steps}, std::move(alpha_bar));
    return s;
}

Tensor forward_noise(const Tensor& z0, std::size_t t, const Tensor& eps,
                     const NoiseSchedule& schedule) {
    if (z0.shape() != eps.shape()) {
        throw ShapeError("forward_noise: eps " + shape_str(eps.shape()) + " does not match z0 " +
                         shape_str(z0.shape()));
    }
    const double ab = schedule.alpha_bar_at(t);
    return add(scale(z0, std::sqrt(ab)), scale(eps, std::sqrt(1.0 - ab)));
}

DenoiserParams DenoiserParams::init(std::size_t latent_size, std::size_t schedule_steps,
                                    std::size_t time_dim, std::size_t cond_dim, std::size_t width,
                                    std::uint64_t seed, bool trainable) {
    if (latent_size == 0 || width == 0 || time_dim == 0) {
        throw ConfigError("denoiser: latent_size, width, time_dim must be positive");
    }
    DenoiserParams p;
    p.latent_size = latent_size;
    p.time_dim = time_dim;
    p.cond_dim = cond_dim;
    p.width = width;
    Rng rng(seed, 0xDE);
    const std::size_t in = latent_size + time_dim + cond_dim;
    p.time_table = Tensor::randn({schedule_steps, time_dim}, rng, 1.0, trainable);
    p.w1 = Tensor::randn({in, width}, rng, std::sqrt(2.0 / static_cast<double>(in)), trainable);
    p.b1 = Tensor::zeros({width}, trainable);
    p.w2 = Tensor::randn({width, width}, rng, std::sqrt(2.0 / static_cast<double>(width)), trainable);
    p.b2 = Tensor::zeros({width}, trainable);
    p.w3 = Tensor::randn({width, latent_size}, rng, 0.02, trainable);
    p.b3 = Tensor::zeros({latent_size}, trainable);
    return p;
}

std::vector<Tensor> DenoiserParams::parameters() const {
    return {time_table, w1, b1, w2, b2, w3, b3};
}

void DenoiserParams::freeze() {
    for (Tensor* t : {&time_table, &w1, &b1, &w2, &b2, &w3, &b3}) *t = t->detached();
}

Tensor predict_noise_rows(const DenoiserParams& params, const Tensor& z_rows,
                          const std::vector<std::size_t>& ts, const Tensor& cond_rows) {
    if (z_rows.rank() != 2 || z_rows.dim(1) != params.latent_size) {
        throw ShapeError("predict_noise: rows " + shape_str(z_rows.shape()) +
                         " do not match latent size " + std::to_string(params.latent_size));
    }
    if (ts.size() != z_rows.dim(0)) throw ShapeError("predict_noise: one timestep per row required");
    std::vector<std::size_t> table_rows(ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (ts[i] < 1 || ts[i] > params.time_table.dim(0)) {
            throw ShapeError("predict_noise: t=" + std::to_string(ts[i]) + " outside schedule");
        }
        table_rows[i] = ts[i] - 1;
    }
    Tensor input = concat_cols(z_rows, gather_rows(params.time_table, table_rows));
    if (params.cond_dim > 0) {
        if (cond_rows.rank() != 2 || cond_rows.dim(0) != z_rows.dim(0) ||
            cond_rows.dim(1) != params.cond_dim) {
            throw ShapeError("predict_noise: conditioning rows " + shape_str(cond_rows.shape()) +
                             " do not match cond_dim=" + std::to_string(params.cond_dim));
        }
        input = concat_cols(input, cond_rows);
    }
    Tensor h1 = relu(add_row_vector(matmul(input, params.w1), params.b1));
    Tensor h2 = relu(add_row_vector(matmul(h1, params.w2), params.b2));
    return add_row_vector(matmul(h2, params.w3), params.b3);
}

namespace {

Tensor pooled_condition(const DenoiserParams& params, const TextEmbedding& e_text) {
    if (params.cond_dim == 0) return Tensor::zeros({1, 0});
    if (!e_text.tokens.defined() || e_text.tokens.rank() != 2 ||
        e_text.tokens.dim(1) != params.cond_dim) {
        throw ShapeError("predict_noise: text embedding does not match cond_dim=" +
                         std::to_string(params.cond_dim));
    }
    return reshape(mean_rows(e_text.tokens), {1, params.cond_dim});
}

}  // namespace

Tensor predict_noise(const DenoiserParams& params, const Tensor& z_t, std::size_t t,
                     const TextEmbedding& e_text) {
    if (z_t.numel() != params.latent_size) {
        throw ShapeError("predict_noise: z_t " + shape_str(z_t.shape()) +
                         " does not flatten to latent size " + std::to_string(params.latent_size));
    }
    Tensor rows = reshape(z_t, {1, params.latent_size});
    Tensor out = predict_noise_rows(params, rows, {t}, pooled_condition(params, e_text));
    return reshape(out, z_t.shape());
}

namespace {

void train_loop(DenoiserParams& params, const LatentSet& data, const NoiseSchedule& schedule,
                std::size_t steps, double lr, std::uint64_t seed, std::size_t batch,
                std::vector<double>* window_means) {
    const std::size_t n = data.rows.defined() ? data.rows.dim(0) : 0;
    if (n == 0) throw ConfigError("train_denoiser: empty latent set");
    if (data.cond.defined() && data.cond.dim(1) != params.cond_dim) {
        throw ShapeError("train_denoiser: conditioning width mismatch");
    }
    std::vector<Tensor> trainable = params.parameters();
    AdamW opt(lr, 0.0);
    Rng rng(seed, 0xD1F);

    double window_sum = 0.0;
    std::size_t window_count = 0;
    for (std::size_t step = 0; step < steps; ++step) {
        std::vector<std::size_t> idx(batch);
        for (auto& i : idx) i = static_cast<std::size_t>(rng.integer(n));
        std::vector<std::size_t> ts(batch);
        std::vector<double> sqrt_ab(batch), sqrt_1mab(batch);
        for (std::size_t i = 0; i < batch; ++i) {
            ts[i] = 1 + static_cast<std::size_t>(rng.integer(schedule.steps));
            const double ab = schedule.alpha_bar_at(ts[i]);
            sqrt_ab[i] = std::sqrt(ab);
            sqrt_1mab[i] = std::sqrt(1.0 - ab);
        }
        Tensor z0 = gather_rows(data.rows, idx);
        Tensor eps = Tensor::randn({batch, params.latent_size}, rng);
        Tensor z_t = add(scale_rows(z0, Tensor::from_data({batch}, sqrt_ab)),
                         scale_rows(eps, Tensor::from_data({batch}, sqrt_1mab)));
        Tensor cond = params.cond_dim > 0 ? gather_rows(data.cond, idx) : Tensor::zeros({batch, 0});
        Tensor pred = predict_noise_rows(params, z_t, ts, cond);
        Tensor diff = sub(pred, eps);
        Tensor loss = mean(mul(diff, diff));

        window_sum += loss.value();
        ++window_count;
        if (window_means && window_count == 1000) {
            window_means->push_back(window_sum / 1000.0);
            window_sum = 0.0;
            window_count = 0;
        }

        zero_grads(trainable);
        backward(loss);
        opt.step(trainable);
    }
    if (window_means && window_count > 0) {
        window_means->push_back(window_sum / static_cast<double>(window_count));
    }
}

}  // namespace

DenoiserParams train_denoiser(const LatentSet& data, const NoiseSchedule& schedule,
                              std::size_t steps, std::uint64_t seed,
                              const DenoiserTrainConfig& cfg, std::vector<double>* window_means) {
    const std::size_t cond_dim = data.cond.defined() && data.cond.rank() == 2 ? data.cond.dim(1) : 0;
    DenoiserParams params = DenoiserParams::init(data.rows.dim(1), schedule.steps, cfg.time_dim,
                                                 cond_dim, cfg.width, seed, true);
    train_loop(params, data, schedule, steps, cfg.lr, seed, cfg.batch, window_means);
    return params;
}

void finetune_denoiser(DenoiserParams& params, const LatentSet& data,
                       const NoiseSchedule& schedule, std::size_t steps, double lr,
                       std::uint64_t seed, std::size_t batch,
                       std::vector<double>* window_means) {
    // continue from the given weights, trainable regardless of prior freeze
    for (Tensor* t : {&params.time_table, &params.w1, &params.b1, &params.w2, &params.b2,
                      &params.w3, &params.b3}) {
        *t = t->clone(true);
    }
    train_loop(params, data, schedule, steps, lr, seed ^ 0xF17E, batch, window_means);
}

Tensor sample_from(const DenoiserParams& params, const TextEmbedding& e_text,
                   const NoiseSchedule& schedule, const Tensor& z_start, std::size_t t_start,
                   std::uint64_t seed, bool deterministic) {
    if (t_start > schedule.steps) {
        throw ConfigError("sample: t_start=" + std::to_string(t_start) + " exceeds T=" +
                          std::to_string(schedule.steps));
    }
    DenoiserParams frozen = params;
    frozen.freeze();
    Rng rng(seed, 0x5A3);

    Tensor z = z_start.detached();
    for (std::size_t t = t_start; t >= 1; --t) {
        Tensor eps_hat = predict_noise(frozen, z, t, e_text);
        const double beta = schedule.beta_at(t);
        const double ab = schedule.alpha_bar_at(t);
        if (deterministic) {
            // per-step inversion of the forward marginal: recover the clean
            // estimate, then re-noise to t-1 with the same predicted noise
            const double ab_prev = t > 1 ? schedule.alpha_bar_at(t - 1) : 1.0;
            Tensor z0_hat =
                scale(sub(z, scale(eps_hat, std::sqrt(1.0 - ab))), 1.0 / std::sqrt(ab));
            z = add(scale(z0_hat, std::sqrt(ab_prev)), scale(eps_hat, std::sqrt(1.0 - ab_prev)));
        } else {
            Tensor mean_t = scale(sub(z, scale(eps_hat, beta / std::sqrt(1.0 - ab))),
                                  1.0 / std::sqrt(1.0 - beta));
            if (t > 1) {
                Tensor xi = Tensor::randn(z.shape(), rng);
                z = add(mean_t, scale(xi, std::sqrt(beta)));
            } else {
                z = mean_t;
            }
        }
    }
    return z;
}

Tensor sample(const DenoiserParams& params, const TextEmbedding& e_text,
              const NoiseSchedule& schedule, std::size_t num_steps, std::uint64_t seed,
              const std::optional<Tensor>& init, bool deterministic) {
    if (num_steps > schedule.steps) {
        throw ConfigError("sample: num_steps=" + std::to_string(num_steps) + " exceeds T=" +
                          std::to_string(schedule.steps));
    }
    Rng rng(seed, 0x1417);
    Tensor z_start;
    if (init.has_value()) {
        if (num_steps == 0) return init->clone();
        Tensor eps = deterministic ? Tensor::zeros(init->shape()) : Tensor::randn(init->shape(), rng);
        z_start = forward_noise(*init, num_steps, eps, schedule);
    } else {
        if (num_steps == 0) throw ConfigError("sample: num_steps=0 requires an init latent");
        z_start = deterministic ? Tensor::zeros({params.latent_size})
                                : Tensor::randn({params.latent_size}, rng);
    }
    return sample_from(params, e_text, schedule, z_start, num_steps, seed, deterministic);
}

}  // namespace evlf
