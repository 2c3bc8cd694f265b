#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "evlf/rng.hpp"

namespace evlf {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major f64 tensor with reverse-mode autodiff. Copies share the
// underlying buffers (value semantics over shared state). Ops record a
// define-by-run graph when any input requires gradients; GradTape walks it.
//
// Tensors are treated as immutable once created; the only sanctioned
// mutation points are optimizer steps on parameters (raw_data) between
// forward passes, and grad accumulation during backward.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value);
    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;
    std::size_t dim(std::size_t axis) const;

    std::span<const double> data() const;
    // Mutable view for optimizer updates; never call while a tape referencing
    // this tensor is still pending backward.
    std::span<double> raw_data();

    double value() const;                               // numel() == 1
    double at(std::size_t i) const;                     // flat index
    double at(std::size_t row, std::size_t col) const;  // rank-2

    bool requires_grad() const;
    // Same data buffer, detached from the graph and gradient-free.
    Tensor detached() const;
    // Deep copy of the data into a fresh leaf.
    Tensor clone(bool requires_grad = false) const;

    std::span<const double> grad() const;  // empty until backward reaches this tensor
    void zero_grad();

    // Graph node constructor used by every op. `backward` receives the
    // output gradient and must accumulate into the parents' grad buffers.
    static Tensor op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                     std::function<void(std::span<const double>)> backward);

    // Lazily allocated gradient accumulator (backward-pass use).
    std::vector<double>& grad_buffer() const;

    bool finite() const;  // no NaN/Inf in data

private:
    struct Node;
    struct Impl;
    std::shared_ptr<Impl> impl_;
    friend class GradTape;
};

// Reverse-mode tape: the topologically ordered list of recorded operations
// reachable from a root, rebuilt per forward pass. backward() seeds the root
// gradient with ones and visits every node exactly once in reverse order.
class GradTape {
public:
    explicit GradTape(const Tensor& root);
    void backward();
    std::size_t node_count() const { return order_.size(); }

private:
    Tensor root_;
    std::vector<std::shared_ptr<Tensor::Impl>> order_;
};

// Convenience: build the tape for `loss` and run it.
void backward(const Tensor& loss);

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor neg(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);  // throws NumericError on non-positive input
Tensor tanh(const Tensor& x);

// ---- shape ----
Tensor reshape(const Tensor& x, Shape new_shape);
Tensor transpose(const Tensor& x);  // rank-2
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows);
Tensor stack_rows(const std::vector<Tensor>& rows);  // k tensors [n] -> [k x n]

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
// Matrix product whose inner summation runs in value-sorted order, so the
// result is invariant under matching row permutations of `v` / column
// permutations of `w`. Used for attention mixing.
Tensor ordered_matmul(const Tensor& w, const Tensor& v);

// ---- row-structured (x: [m x n]) ----
Tensor add_row_vector(const Tensor& x, const Tensor& v);    // v: [n], bias add
Tensor sub_row_offsets(const Tensor& x, const Tensor& off); // off: [m]
Tensor scale_rows(const Tensor& x, const Tensor& s);        // s: [m]
Tensor row_sums(const Tensor& x);                           // -> [m]
Tensor row_max(const Tensor& x);                            // -> [m], detached
Tensor mean_rows(const Tensor& x);                          // -> [n]

// ---- reductions ----
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// ---- fused neural ops ----
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);

// Max over coordinates of |analytic - central difference| / max(1, |central|)
// for a scalar-valued f at x. Throws NumericError if f evaluates non-finite.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

}  // namespace evlf
