#include <cmath>
#include <vector>

#include "doctest.h"
#include "evlf/errors.hpp"
#include "evlf/optim.hpp"
#include "evlf/rng.hpp"
#include "evlf/tensor.hpp"

using namespace evlf;

namespace {

// Independent triple-loop product, no shared code with matmul.
std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                 std::size_t m, std::size_t k, std::size_t n) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
    return c;
}

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false) {
    return Tensor::randn(std::move(shape), rng, 1.0, requires_grad);
}

}  // namespace

TEST_CASE("matmul identity and scalar cases") {
    Tensor eye = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Rng rng(7);
    Tensor b = random_tensor({3, 5}, rng);
    Tensor prod = matmul(eye, b);
    for (std::size_t i = 0; i < b.numel(); ++i) CHECK(prod.at(i) == b.at(i));

    Tensor two = Tensor::from_data({1, 1}, {2.0});
    Tensor three = Tensor::from_data({1, 1}, {3.0});
    CHECK(matmul(two, three).at(0) == 6.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
    Rng rng(11);
    Tensor a = random_tensor({5, 4}, rng);
    Tensor b = random_tensor({4, 3}, rng);
    auto expect = naive_matmul({a.data().begin(), a.data().end()},
                               {b.data().begin(), b.data().end()}, 5, 4, 3);
    Tensor c = matmul(a, b);
    for (std::size_t i = 0; i < expect.size(); ++i)
        CHECK(std::abs(c.at(i) - expect[i]) < 1e-12);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), ShapeError);
}

TEST_CASE("softmax_rows basics") {
    Tensor same = Tensor::full({1, 4}, 2.5);
    Tensor u = softmax_rows(same);
    for (std::size_t j = 0; j < 4; ++j) CHECK(u.at(j) == doctest::Approx(0.25).epsilon(1e-12));

    Tensor x = Tensor::from_data({1, 2}, {0.0, std::log(3.0)});
    Tensor y = softmax_rows(x);
    CHECK(y.at(0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(y.at(1) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax_rows rows sum to one, including large magnitudes") {
    Rng rng(3);
    for (double mag : {1.0, 1e3}) {
        Tensor x = Tensor::randn({4, 6}, rng, mag);
        Tensor y = softmax_rows(x);
        for (std::size_t i = 0; i < 4; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < 6; ++j) {
                s += y.at(i, j);
                CHECK(y.at(i, j) >= 0.0);
            }
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("layer_norm analytic cases") {
    Tensor gamma = Tensor::full({3}, 1.0);
    Tensor beta = Tensor::zeros({3});
    Tensor c = Tensor::full({1, 3}, 4.2);
    Tensor out = layer_norm(c, gamma, beta);
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(out.at(j)) < 1e-6);

    Tensor g2 = Tensor::full({2}, 1.0);
    Tensor b2 = Tensor::zeros({2});
    Tensor x = Tensor::from_data({1, 2}, {1.0, 3.0});
    Tensor y = layer_norm(x, g2, b2, 1e-12);
    CHECK(y.at(0) == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(y.at(1) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("layer_norm dimension mismatch") {
    Tensor gamma = Tensor::full({4}, 1.0);
    Tensor beta = Tensor::zeros({4});
    CHECK_THROWS_AS(layer_norm(Tensor::zeros({2, 3}), gamma, beta), ShapeError);
}

TEST_CASE("grad_check on exact-gradient quadratic") {
    Rng rng(5);
    Tensor x = random_tensor({3, 3}, rng);
    double err = grad_check([](const Tensor& t) { return sum(mul(t, t)); }, x);
    CHECK(err < 1e-8);
}

TEST_CASE("grad_check on softmax log-loss") {
    Rng rng(17);
    Tensor x = random_tensor({3, 3}, rng);
    auto f = [](const Tensor& t) {
        Tensor p = softmax_rows(t);
        // pick the diagonal as "targets"
        Tensor mask = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
        return neg(mean(log(row_sums(mul(p, mask)))));
    };
    CHECK(grad_check(f, x) < 1e-6);
}

TEST_CASE("grad_check rejects non-finite evaluation") {
    Tensor x = Tensor::from_data({2}, {-1.0, 2.0});
    CHECK_THROWS_AS(grad_check([](const Tensor& t) { return sum(log(t)); }, x), NumericError);
}

TEST_CASE("every differentiable op passes grad_check across seeds") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        Tensor a = random_tensor({3, 4}, rng);
        Tensor b = random_tensor({3, 4}, rng);
        Tensor w = random_tensor({4, 2}, rng);
        Tensor v4 = random_tensor({4}, rng);
        Tensor v3 = random_tensor({3}, rng);

        auto check = [&](const char* name, const std::function<Tensor(const Tensor&)>& f,
                         const Tensor& at) {
            INFO("op: " << name << " seed: " << seed);
            CHECK(grad_check(f, at) < 1e-6);
        };

        check("add", [&](const Tensor& t) { return sum(add(t, b)); }, a);
        check("add_rhs", [&](const Tensor& t) { return sum(add(a, t)); }, b);
        check("sub", [&](const Tensor& t) { return sum(sub(t, b)); }, a);
        check("mul", [&](const Tensor& t) { return mean(mul(t, b)); }, a);
        check("scale", [&](const Tensor& t) { return sum(scale(t, -2.5)); }, a);
        check("add_scalar", [&](const Tensor& t) { return sum(add_scalar(t, 1.5)); }, a);
        check("neg", [&](const Tensor& t) { return sum(neg(t)); }, a);
        check("relu", [&](const Tensor& t) { return sum(relu(t)); }, a);
        check("exp", [&](const Tensor& t) { return sum(exp(scale(t, 0.3))); }, a);
        check("log", [&](const Tensor& t) { return sum(log(add_scalar(exp(t), 0.5))); }, a);
        check("tanh", [&](const Tensor& t) { return sum(tanh(t)); }, a);
        check("reshape", [&](const Tensor& t) { return sum(mul(reshape(t, {4, 3}), reshape(b, {4, 3}))); }, a);
        check("transpose", [&](const Tensor& t) { return sum(mul(transpose(t), transpose(b))); }, a);
        check("slice_cols", [&](const Tensor& t) { return sum(slice_cols(t, 1, 2)); }, a);
        check("concat_cols", [&](const Tensor& t) { return mean(concat_cols(t, b)); }, a);
        check("gather_rows", [&](const Tensor& t) { return sum(gather_rows(t, {0, 2, 2})); }, a);
        check("matmul_lhs", [&](const Tensor& t) { return mean(matmul(t, w)); }, a);
        check("matmul_rhs", [&](const Tensor& t) { return mean(matmul(a, t)); }, w);
        check("ordered_matmul_lhs", [&](const Tensor& t) { return mean(ordered_matmul(t, w)); }, a);
        check("ordered_matmul_rhs", [&](const Tensor& t) { return mean(ordered_matmul(a, t)); }, w);
        check("add_row_vector", [&](const Tensor& t) { return mean(add_row_vector(a, t)); }, v4);
        check("add_row_vector_x", [&](const Tensor& t) { return mean(add_row_vector(t, v4)); }, a);
        check("sub_row_offsets", [&](const Tensor& t) { return mean(sub_row_offsets(a, t)); }, v3);
        check("scale_rows", [&](const Tensor& t) { return mean(scale_rows(t, v3)); }, a);
        check("scale_rows_s", [&](const Tensor& t) { return mean(scale_rows(a, t)); }, v3);
        check("row_sums", [&](const Tensor& t) { return mean(row_sums(t)); }, a);
        check("mean_rows", [&](const Tensor& t) { return sum(mean_rows(t)); }, a);
        check("sum", [&](const Tensor& t) { return sum(t); }, a);
        check("mean", [&](const Tensor& t) { return mean(t); }, a);
        check("softmax_rows", [&](const Tensor& t) { return mean(mul(softmax_rows(t), b)); }, a);
        check("l2_normalize_rows", [&](const Tensor& t) { return mean(mul(l2_normalize_rows(t), b)); }, a);

        Tensor gamma = random_tensor({4}, rng);
        Tensor beta = random_tensor({4}, rng);
        check("layer_norm_x", [&](const Tensor& t) { return mean(mul(layer_norm(t, gamma, beta), b)); }, a);
        check("layer_norm_gamma", [&](const Tensor& t) { return mean(mul(layer_norm(a, t, beta), b)); }, gamma);
        check("layer_norm_beta", [&](const Tensor& t) { return mean(mul(layer_norm(a, gamma, t), b)); }, beta);
    }
}

TEST_CASE("layer_norm gradient vs central differences") {
    Rng rng(23);
    Tensor x = random_tensor({2, 5}, rng);
    Tensor gamma = random_tensor({5}, rng);
    Tensor beta = random_tensor({5}, rng);
    auto f = [&](const Tensor& t) { return sum(mul(layer_norm(t, gamma, beta), t)); };
    CHECK(grad_check(f, x, 1e-5) < 1e-6);
}

TEST_CASE("shared subexpressions accumulate gradients") {
    Rng rng(29);
    Tensor x = random_tensor({3, 3}, rng);

    // f(x) uses x twice through one node.
    Tensor probe = x.clone(true);
    Tensor shared = mul(probe, probe);
    Tensor loss = sum(add(shared, probe));
    backward(loss);
    auto g_shared = probe.grad();

    // Oracle: duplicate the input so each use is a distinct leaf, then sum.
    Tensor x1 = x.clone(true);
    Tensor x2 = x.clone(true);
    Tensor x3 = x.clone(true);
    backward(sum(add(mul(x1, x2), x3)));
    REQUIRE(!g_shared.empty());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        double expect = x1.grad()[i] + x2.grad()[i] + x3.grad()[i];
        CHECK(g_shared[i] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("GradTape visits a diamond graph correctly") {
    Tensor x = Tensor::from_data({2}, {1.5, -0.5}, true);
    Tensor a = scale(x, 2.0);
    Tensor loss = sum(add(a, a));  // dL/dx = 4
    GradTape tape(loss);
    CHECK(tape.node_count() == 3);
    tape.backward();
    CHECK(x.grad()[0] == doctest::Approx(4.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("ordered_matmul is invariant under matching permutations") {
    Rng rng(31);
    Tensor w = random_tensor({4, 5}, rng);
    Tensor v = random_tensor({5, 3}, rng);
    Tensor base = ordered_matmul(w, v);

    // permute inner dimension: columns of w together with rows of v
    std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    std::vector<double> wp(4 * 5), vp(5 * 3);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 5; ++j) wp[i * 5 + j] = w.at(i * 5 + perm[j]);
    for (std::size_t j = 0; j < 5; ++j)
        for (std::size_t c = 0; c < 3; ++c) vp[j * 3 + c] = v.at(perm[j] * 3 + c);
    Tensor permuted = ordered_matmul(Tensor::from_data({4, 5}, wp), Tensor::from_data({5, 3}, vp));
    for (std::size_t i = 0; i < base.numel(); ++i) CHECK(base.at(i) == permuted.at(i));
}

TEST_CASE("optimizers with zero learning rate are exact no-ops") {
    Rng rng(41);
    std::vector<Tensor> params = {random_tensor({4, 4}, rng, true),
                                  random_tensor({4}, rng, true)};
    std::vector<double> before;
    for (auto& p : params) before.insert(before.end(), p.data().begin(), p.data().end());

    auto run_loss = [&]() {
        Tensor h = add_row_vector(matmul(params[0], params[0]), params[1]);
        return mean(mul(h, h));
    };
    backward(run_loss());

    SUBCASE("sgd") {
        Sgd opt{0.0, 0.0};
        opt.step(params);
    }
    SUBCASE("adamw") {
        AdamW opt(0.0, 1e-2);
        opt.step(params);
    }

    std::vector<double> after;
    for (auto& p : params) after.insert(after.end(), p.data().begin(), p.data().end());
    REQUIRE(before.size() == after.size());
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
}

TEST_CASE("adamw reduces a quadratic") {
    Tensor p = Tensor::from_data({3}, {5.0, -4.0, 2.0}, true);
    std::vector<Tensor> params = {p};
    AdamW opt(0.05, 0.0);
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 200; ++step) {
        zero_grads(params);
        Tensor loss = sum(mul(p, p));
        if (step == 0) first = loss.value();
        last = loss.value();
        backward(loss);
        opt.step(params);
    }
    CHECK(last < first * 0.05);
}

TEST_CASE("tensor invariants and accessors") {
    CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1.0, 2.0}), ShapeError);
    Tensor t = Tensor::from_data({2, 3}, {0, 1, 2, 3, 4, 5});
    CHECK(t.numel() == 6);
    CHECK(t.at(1, 2) == 5.0);
    CHECK(t.finite());
    Tensor inf = Tensor::from_data({1}, {std::numeric_limits<double>::infinity()});
    CHECK(!inf.finite());
}
