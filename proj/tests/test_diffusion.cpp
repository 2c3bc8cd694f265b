#include <cmath>

#include "doctest.h"
#include "evlf/diffusion.hpp"
#include "evlf/errors.hpp"
#include "evlf/rng.hpp"

using namespace evlf;

namespace {

// Constant-output denoiser: zero trunk, eps on the output bias.
DenoiserParams constant_denoiser(const Tensor& eps_flat, std::size_t schedule_steps) {
    DenoiserParams p = DenoiserParams::init(eps_flat.numel(), schedule_steps, 4, 0, 6, 0, false);
    p.w1 = Tensor::zeros(p.w1.shape());
    p.b1 = Tensor::zeros(p.b1.shape());
    p.w2 = Tensor::zeros(p.w2.shape());
    p.b2 = Tensor::zeros(p.b2.shape());
    p.w3 = Tensor::zeros(p.w3.shape());
    p.b3 = eps_flat.clone();
    return p;
}

}  // namespace

TEST_CASE("make_schedule single-step case") {
    NoiseSchedule s = make_schedule(1, 0.1, 0.1);
    CHECK(s.beta.at(0) == 0.1);
    CHECK(s.alpha_bar.at(0) == doctest::Approx(0.9).epsilon(1e-15));
}

TEST_CASE("make_schedule produces a strictly decreasing alpha_bar in (0,1)") {
    NoiseSchedule s = make_schedule(100, 1e-4, 0.02);
    double prev = 1.0;
    for (std::size_t i = 0; i < 100; ++i) {
        CHECK(s.alpha_bar.at(i) > 0.0);
        CHECK(s.alpha_bar.at(i) < 1.0);
        CHECK(s.alpha_bar.at(i) < prev);
        prev = s.alpha_bar.at(i);
    }
}

TEST_CASE("alpha_bar matches an independent cumulative product") {
    NoiseSchedule s = make_schedule(200, 1e-4, 0.02);
    double prod = 1.0;
    for (std::size_t i = 0; i < 200; ++i) {
        const double beta = 1e-4 + (0.02 - 1e-4) * static_cast<double>(i) / 199.0;
        prod *= 1.0 - beta;
        CHECK(std::abs(s.alpha_bar.at(i) - prod) < 1e-12);
        CHECK(std::abs(s.beta.at(i) - beta) < 1e-15);
    }
    CHECK(s.alpha_bar.at(199) == doctest::Approx(prod).epsilon(1e-12));
}

TEST_CASE("make_schedule rejects invalid ranges") {
    CHECK_THROWS_AS(make_schedule(0, 1e-4, 0.02), ConfigError);
    CHECK_THROWS_AS(make_schedule(10, 0.0, 0.02), ConfigError);
    CHECK_THROWS_AS(make_schedule(10, 0.03, 0.02), ConfigError);
    CHECK_THROWS_AS(make_schedule(10, 1e-4, 1.0), ConfigError);
}

TEST_CASE("forward_noise limit cases via synthetic schedules") {
    Rng rng(1);
    Tensor z0 = Tensor::randn({3, 2}, rng);
    Tensor eps = Tensor::randn({3, 2}, rng);

    NoiseSchedule pure_signal;
    pure_signal.steps = 1;
    pure_signal.beta = Tensor::from_data({1}, {0.0});
    pure_signal.alpha_bar = Tensor::from_data({1}, {1.0});
    Tensor zs = forward_noise(z0, 1, eps, pure_signal);
    for (std::size_t i = 0; i < z0.numel(); ++i) CHECK(zs.at(i) == z0.at(i));

    NoiseSchedule pure_noise;
    pure_noise.steps = 1;
    pure_noise.beta = Tensor::from_data({1}, {1.0});
    pure_noise.alpha_bar = Tensor::from_data({1}, {0.0});
    Tensor zn = forward_noise(z0, 1, eps, pure_noise);
    for (std::size_t i = 0; i < z0.numel(); ++i) CHECK(zn.at(i) == eps.at(i));
}

TEST_CASE("forward_noise enforces bounds and shapes") {
    NoiseSchedule s = make_schedule(10, 1e-3, 0.1);
    Tensor z0 = Tensor::zeros({2, 2});
    CHECK_THROWS_AS(forward_noise(z0, 0, Tensor::zeros({2, 2}), s), ShapeError);
    CHECK_THROWS_AS(forward_noise(z0, 11, Tensor::zeros({2, 2}), s), ShapeError);
    CHECK_THROWS_AS(forward_noise(z0, 5, Tensor::zeros({2, 3}), s), ShapeError);
}

TEST_CASE("forward_noise empirical moments match Eq. 3") {
    NoiseSchedule s = make_schedule(50, 1e-3, 0.05);
    const std::size_t t = 30;
    const double ab = s.alpha_bar_at(t);
    Tensor z0 = Tensor::from_data({2}, {1.3, -0.8});
    Rng rng(7);
    const std::size_t draws = 100000;
    double sum0 = 0.0, sum1 = 0.0, sq0 = 0.0, sq1 = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
        Tensor eps = Tensor::randn({2}, rng);
        Tensor zt = forward_noise(z0, t, eps, s);
        sum0 += zt.at(0);
        sum1 += zt.at(1);
        sq0 += zt.at(0) * zt.at(0);
        sq1 += zt.at(1) * zt.at(1);
    }
    const double m0 = sum0 / draws, m1 = sum1 / draws;
    const double sd0 = std::sqrt(sq0 / draws - m0 * m0);
    const double sd1 = std::sqrt(sq1 / draws - m1 * m1);
    CHECK(std::abs(m0 - std::sqrt(ab) * 1.3) < 0.02 * std::abs(std::sqrt(ab) * 1.3) + 0.01);
    CHECK(std::abs(m1 - std::sqrt(ab) * (-0.8)) < 0.02 * std::abs(std::sqrt(ab) * 0.8) + 0.01);
    CHECK(std::abs(sd0 - std::sqrt(1 - ab)) < 0.02 * std::sqrt(1 - ab));
    CHECK(std::abs(sd1 - std::sqrt(1 - ab)) < 0.02 * std::sqrt(1 - ab));
}

TEST_CASE("variance identity holds for random z0") {
    NoiseSchedule s = make_schedule(40, 1e-3, 0.08);
    const std::size_t t = 25;
    const double ab = s.alpha_bar_at(t);
    const double var_z0 = 0.49;
    Rng rng(9);
    const std::size_t draws = 60000;
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
        Tensor z0 = Tensor::randn({1}, rng, std::sqrt(var_z0));
        Tensor eps = Tensor::randn({1}, rng);
        const double zt = forward_noise(z0, t, eps, s).at(0);
        sum += zt;
        sq += zt * zt;
    }
    const double mean_zt = sum / draws;
    const double var_zt = sq / draws - mean_zt * mean_zt;
    const double expect = ab * var_z0 + (1.0 - ab);
    CHECK(std::abs(var_zt - expect) < 0.03 * expect);
}

TEST_CASE("predict_noise zero-weight and determinism cases") {
    DenoiserParams zero = constant_denoiser(Tensor::zeros({6}), 10);
    Rng rng(11);
    Tensor z = Tensor::randn({2, 3}, rng);
    Tensor out = predict_noise(zero, z, 4, TextEmbedding{});
    CHECK(out.shape() == z.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out.at(i) == 0.0);

    DenoiserParams p = DenoiserParams::init(6, 10, 4, 3, 8, 5, false);
    TextEmbedding e{Tensor::randn({2, 3}, rng)};
    Tensor a = predict_noise(p, z, 4, e);
    Tensor b = predict_noise(p, z, 4, e);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));

    CHECK_THROWS_AS(predict_noise(p, Tensor::zeros({5}), 4, e), ShapeError);
    CHECK_THROWS_AS(predict_noise(p, z, 0, e), ShapeError);
    CHECK_THROWS_AS(predict_noise(p, z, 11, e), ShapeError);
}

TEST_CASE("noise-prediction loss gradient passes grad_check") {
    NoiseSchedule s = make_schedule(10, 1e-3, 0.2);
    DenoiserParams p = DenoiserParams::init(6, 10, 4, 3, 8, 13);
    Rng rng(13);
    Tensor z0 = Tensor::randn({6}, rng, 0.5);
    Tensor eps = Tensor::randn({6}, rng);
    TextEmbedding e{Tensor::randn({2, 3}, rng)};
    Tensor z_t = forward_noise(z0, 6, eps, s);

    auto loss_with = [&](const DenoiserParams& q) {
        Tensor pred = predict_noise(q, z_t, 6, e);
        Tensor d = sub(pred, eps);
        return mean(mul(d, d));
    };
    auto check_param = [&](const char* name, Tensor DenoiserParams::*member) {
        auto f = [&](const Tensor& probe) {
            DenoiserParams q = p;
            q.*member = probe;
            return loss_with(q);
        };
        INFO("param: " << name);
        CHECK(grad_check(f, p.*member, 1e-5) < 1e-5);
    };
    check_param("w1", &DenoiserParams::w1);
    check_param("b1", &DenoiserParams::b1);
    check_param("w2", &DenoiserParams::w2);
    check_param("w3", &DenoiserParams::w3);
    check_param("b3", &DenoiserParams::b3);
    check_param("time_table", &DenoiserParams::time_table);
}

TEST_CASE("train_denoiser with lr=0 keeps the init weights") {
    Rng rng(17);
    LatentSet data{Tensor::randn({20, 4}, rng), Tensor::zeros({20, 0})};
    NoiseSchedule s = make_schedule(10, 1e-3, 0.1);
    DenoiserTrainConfig cfg;
    cfg.width = 8;
    cfg.time_dim = 4;
    cfg.lr = 0.0;
    DenoiserParams trained = train_denoiser(data, s, 50, 99, cfg);
    DenoiserParams init = DenoiserParams::init(4, 10, 4, 0, 8, 99, false);
    for (std::size_t i = 0; i < trained.w1.numel(); ++i) CHECK(trained.w1.at(i) == init.w1.at(i));
    for (std::size_t i = 0; i < trained.b3.numel(); ++i) CHECK(trained.b3.at(i) == init.b3.at(i));
}

TEST_CASE("train_denoiser reduces windowed loss and is seed-deterministic") {
    Rng rng(19);
    // two tight clusters in 2-D
    std::vector<double> rows;
    for (int i = 0; i < 60; ++i) {
        const double sign = i % 2 == 0 ? 1.0 : -1.0;
        rows.push_back(sign * 1.5 + 0.1 * rng.normal());
        rows.push_back(sign * 1.5 + 0.1 * rng.normal());
    }
    LatentSet data{Tensor::from_data({60, 2}, rows), Tensor::zeros({60, 0})};
    NoiseSchedule s = make_schedule(30, 1e-3, 0.15);
    DenoiserTrainConfig cfg;
    cfg.width = 32;
    cfg.time_dim = 8;
    std::vector<double> windows;
    DenoiserParams a = train_denoiser(data, s, 2000, 7, cfg, &windows);
    REQUIRE(windows.size() == 2);
    CHECK(windows.back() <= windows.front());

    DenoiserParams b = train_denoiser(data, s, 2000, 7, cfg);
    for (std::size_t i = 0; i < a.w3.numel(); ++i) CHECK(a.w3.at(i) == b.w3.at(i));
}

TEST_CASE("train_denoiser rejects an empty latent set") {
    NoiseSchedule s = make_schedule(10, 1e-3, 0.1);
    LatentSet data{Tensor::zeros({0, 4}), Tensor::zeros({0, 0})};
    CHECK_THROWS_AS(train_denoiser(data, s, 10, 0), ConfigError);
}

TEST_CASE("finetuning on a shifted set lowers its loss") {
    Rng rng(23);
    LatentSet base{Tensor::randn({40, 3}, rng, 0.3), Tensor::zeros({40, 0})};
    NoiseSchedule s = make_schedule(20, 1e-3, 0.1);
    DenoiserTrainConfig cfg;
    cfg.width = 16;
    cfg.time_dim = 4;
    DenoiserParams p = train_denoiser(base, s, 800, 3, cfg);

    // a different distribution, standing in for fused latents
    std::vector<double> shifted_rows(40 * 3);
    for (auto& v : shifted_rows) v = 1.0 + 0.3 * rng.normal();
    LatentSet shifted{Tensor::from_data({40, 3}, shifted_rows), Tensor::zeros({40, 0})};

    auto eval_loss = [&](const DenoiserParams& q) {
        // fixed probe batch, fixed noise
        Rng probe_rng(101);
        double acc = 0.0;
        for (std::size_t i = 0; i < 40; ++i) {
            Tensor z0 = Tensor::from_data({3}, {shifted.rows.at(i, 0), shifted.rows.at(i, 1),
                                                shifted.rows.at(i, 2)});
            Tensor eps = Tensor::randn({3}, probe_rng);
            const std::size_t t = 1 + probe_rng.integer(20);
            Tensor zt = forward_noise(z0, t, eps, s);
            Tensor pred = predict_noise(q, zt, t, TextEmbedding{});
            for (std::size_t j = 0; j < 3; ++j) {
                const double d = pred.at(j) - eps.at(j);
                acc += d * d;
            }
        }
        return acc / (40.0 * 3.0);
    };

    const double before = eval_loss(p);
    DenoiserParams tuned = p;
    finetune_denoiser(tuned, shifted, s, 800, 1e-3, 3);
    const double after = eval_loss(tuned);
    CHECK(after < before);
}

TEST_CASE("sampler identity and bound cases") {
    NoiseSchedule s = make_schedule(20, 1e-3, 0.1);
    DenoiserParams p = constant_denoiser(Tensor::zeros({4}), 20);
    Rng rng(29);
    Tensor init = Tensor::randn({4}, rng);

    Tensor same = sample(p, TextEmbedding{}, s, 0, 1, init);
    for (std::size_t i = 0; i < 4; ++i) CHECK(same.at(i) == init.at(i));

    CHECK_THROWS_AS(sample(p, TextEmbedding{}, s, 21, 1, init), ConfigError);

    Tensor a = sample(p, TextEmbedding{}, s, 10, 5, init);
    Tensor b = sample(p, TextEmbedding{}, s, 10, 5, init);
    for (std::size_t i = 0; i < 4; ++i) CHECK(a.at(i) == b.at(i));
}

TEST_CASE("perfect-oracle denoiser inverts forward noising deterministically") {
    NoiseSchedule s = make_schedule(25, 1e-3, 0.12);
    Rng rng(31);
    Tensor z0 = Tensor::randn({5}, rng, 0.8);
    Tensor eps = Tensor::randn({5}, rng);
    DenoiserParams oracle = constant_denoiser(eps, 25);

    for (std::size_t steps : {1ul, 7ul, 25ul}) {
        Tensor z_t = forward_noise(z0, steps, eps, s);
        Tensor rec = sample_from(oracle, TextEmbedding{}, s, z_t, steps, 0, true);
        for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(rec.at(i) - z0.at(i)) < 1e-6);
    }
}
