#include "evlf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "evlf/errors.hpp"

namespace evlf {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

struct Tensor::Node {
    std::vector<Tensor> parents;
    std::function<void(std::span<const double>)> backward;
};

struct Tensor::Impl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;
    std::shared_ptr<Node> node;
};

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

// Sum in ascending value order: the result depends only on the multiset of
// addends, which makes reductions invariant under operand permutation.
double sorted_sum(std::vector<double>& terms) {
    std::sort(terms.begin(), terms.end());
    double acc = 0.0;
    for (double t : terms) acc += t;
    return acc;
}

void require_rank2(const Tensor& x, const char* op_name) {
    if (x.rank() != 2) {
        throw ShapeError(std::string(op_name) + ": rank-2 tensor required, got " +
                         shape_str(x.shape()));
    }
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return from_data(shape, std::vector<double>(shape_numel(shape), 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    return from_data(shape, std::vector<double>(shape_numel(shape), value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, bool requires_grad) {
    if (values.size() != shape_numel(shape)) {
        throw ShapeError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
    }
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(values);
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(double value) { return from_data({}, {value}); }

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
    return from_data(shape, rng.normal_vec(shape_numel(shape), stddev), requires_grad);
}

const Shape& Tensor::shape() const {
    static const Shape empty;
    return impl_ ? impl_->shape : empty;
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data.size() : 0; }

std::size_t Tensor::dim(std::size_t axis) const {
    require(axis < rank(), "dim axis out of range");
    return impl_->shape[axis];
}

std::span<const double> Tensor::data() const {
    if (!impl_) return {};
    return {impl_->data.data(), impl_->data.size()};
}

std::span<double> Tensor::raw_data() {
    require(impl_ != nullptr, "raw_data on undefined tensor");
    return {impl_->data.data(), impl_->data.size()};
}

double Tensor::value() const {
    require(numel() == 1, "value() requires a single-element tensor, got " + shape_str(shape()));
    return impl_->data[0];
}

double Tensor::at(std::size_t i) const {
    require(impl_ && i < impl_->data.size(), "flat index out of range");
    return impl_->data[i];
}

double Tensor::at(std::size_t row, std::size_t col) const {
    require(rank() == 2, "at(row, col) requires rank-2, got " + shape_str(shape()));
    require(row < dim(0) && col < dim(1), "index out of range");
    return impl_->data[row * dim(1) + col];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor Tensor::detached() const {
    if (!impl_) return {};
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    return t;
}

Tensor Tensor::clone(bool requires_grad) const {
    if (!impl_) return {};
    return from_data(impl_->shape, impl_->data, requires_grad);
}

std::span<const double> Tensor::grad() const {
    if (!impl_ || impl_->grad.empty()) return {};
    return {impl_->grad.data(), impl_->grad.size()};
}

void Tensor::zero_grad() {
    if (impl_) impl_->grad.clear();
}

std::vector<double>& Tensor::grad_buffer() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
}

bool Tensor::finite() const {
    if (!impl_) return true;
    return std::all_of(impl_->data.begin(), impl_->data.end(),
                       [](double v) { return std::isfinite(v); });
}

Tensor Tensor::op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                  std::function<void(std::span<const double>)> backward) {
    const bool needs_grad =
        std::any_of(parents.begin(), parents.end(), [](const Tensor& p) { return p.requires_grad(); });
    Tensor out = from_data(std::move(shape), std::move(data), needs_grad);
    if (needs_grad) {
        out.impl_->node = std::make_shared<Node>();
        out.impl_->node->parents = std::move(parents);
        out.impl_->node->backward = std::move(backward);
    }
    return out;
}

GradTape::GradTape(const Tensor& root) : root_(root) {
    if (!root.impl_ || !root.impl_->node) return;
    // Iterative post-order DFS: children (parents in graph terms) are emitted
    // before the node that consumes them, so order_ is topological.
    std::unordered_set<Tensor::Impl*> seen;
    std::vector<std::pair<std::shared_ptr<Tensor::Impl>, bool>> stack;
    stack.emplace_back(root.impl_, false);
    while (!stack.empty()) {
        auto [impl, expanded] = stack.back();
        stack.pop_back();
        if (expanded) {
            order_.push_back(impl);
            continue;
        }
        if (!impl->node || seen.count(impl.get())) continue;
        seen.insert(impl.get());
        stack.emplace_back(impl, true);
        for (const Tensor& p : impl->node->parents) {
            if (p.impl_ && p.impl_->node && !seen.count(p.impl_.get())) {
                stack.emplace_back(p.impl_, false);
            }
        }
    }
}

void GradTape::backward() {
    if (!root_.impl_) return;
    auto& seed = root_.grad_buffer();
    std::fill(seed.begin(), seed.end(), 1.0);
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        Tensor::Impl* impl = it->get();
        if (impl->grad.empty()) continue;  // no gradient flowed here
        impl->node->backward({impl->grad.data(), impl->grad.size()});
    }
}

void backward(const Tensor& loss) { GradTape(loss).backward(); }

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op_name) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op_name) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    }
}

void axpy(std::vector<double>& dst, std::span<const double> src, double c = 1.0) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += c * src[i];
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
    return Tensor::op(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
        if (a.requires_grad()) axpy(a.grad_buffer(), g);
        if (b.requires_grad()) axpy(b.grad_buffer(), g);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
    return Tensor::op(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
        if (a.requires_grad()) axpy(a.grad_buffer(), g);
        if (b.requires_grad()) axpy(b.grad_buffer(), g, -1.0);
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
    return Tensor::op(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
        if (a.requires_grad()) {
            auto& ga = a.grad_buffer();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * b.at(i);
        }
        if (b.requires_grad()) {
            auto& gb = b.grad_buffer();
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * a.at(i);
        }
    });
}

Tensor scale(const Tensor& x, double c) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x.at(i);
    return Tensor::op(x.shape(), std::move(out), {x}, [x, c](std::span<const double> g) {
        if (x.requires_grad()) axpy(x.grad_buffer(), g, c);
    });
}

Tensor add_scalar(const Tensor& x, double c) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) + c;
    return Tensor::op(x.shape(), std::move(out), {x}, [x](std::span<const double> g) {
        if (x.requires_grad()) axpy(x.grad_buffer(), g);
    });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) > 0.0 ? x.at(i) : 0.0;
    return Tensor::op(x.shape(), std::move(out), {x}, [x](std::span<const double> g) {
        if (!x.requires_grad()) return;
        auto& gx = x.grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) {
            if (x.at(i) > 0.0) gx[i] += g[i];
        }
    });
}

Tensor exp(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x.at(i));
    std::vector<double> saved = out;
    return Tensor::op(
        x.shape(), std::move(out), {x},
        [x, yd = std::move(saved)](std::span<const double> g) {
            if (!x.requires_grad()) return;
            auto& gx = x.grad_buffer();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * yd[i];
        });
}

Tensor log(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(x.at(i) > 0.0)) {
            throw NumericError("log: non-positive input " + std::to_string(x.at(i)));
        }
        out[i] = std::log(x.at(i));
    }
    return Tensor::op(x.shape(), std::move(out), {x}, [x](std::span<const double> g) {
        if (!x.requires_grad()) return;
        auto& gx = x.grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] / x.at(i);
    });
}

Tensor tanh(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.at(i));
    std::vector<double> saved = out;
    return Tensor::op(
        x.shape(), std::move(out), {x},
        [x, yd = std::move(saved)](std::span<const double> g) {
            if (!x.requires_grad()) return;
            auto& gx = x.grad_buffer();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * (1.0 - yd[i] * yd[i]);
        });
}

// ---------------------------------------------------------------------------
// shape
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(new_shape));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    return Tensor::op(std::move(new_shape), std::move(out), {x}, [x](std::span<const double> g) {
        if (x.requires_grad()) axpy(x.grad_buffer(), g);
    });
}

Tensor transpose(const Tensor& x) {
    require_rank2(x, "transpose");
    const std::size_t m = x.dim(0), n = x.dim(1);
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x.at(i * n + j);
    return Tensor::op({n, m}, std::move(out), {x}, [x, m, n](std::span<const double> g) {
        if (!x.requires_grad()) return;
        auto& gx = x.grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j * m + i];
    });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
    require_rank2(x, "slice_cols");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (begin + count > n) {
        throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") exceeds " + shape_str(x.shape()));
    }
    std::vector<double> out(m * count);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j) out[i * count + j] = x.at(i * n + begin + j);
    return Tensor::op({m, count}, std::move(out), {x},
                      [x, m, n, begin, count](std::span<const double> g) {
                          if (!x.requires_grad()) return;
                          auto& gx = x.grad_buffer();
                          for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < count; ++j)
                                  gx[i * n + begin + j] += g[i * count + j];
                      });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    require_rank2(a, "concat_cols");
    require_rank2(b, "concat_cols");
    if (a.dim(0) != b.dim(0)) {
        throw ShapeError("concat_cols: row counts differ " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), p = a.dim(1), q = b.dim(1);
    std::vector<double> out(m * (p + q));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < p; ++j) out[i * (p + q) + j] = a.at(i * p + j);
        for (std::size_t j = 0; j < q; ++j) out[i * (p + q) + p + j] = b.at(i * q + j);
    }
    return Tensor::op({m, p + q}, std::move(out), {a, b}, [a, b, m, p, q](std::span<const double> g) {
        if (a.requires_grad()) {
            auto& ga = a.grad_buffer();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < p; ++j) ga[i * p + j] += g[i * (p + q) + j];
        }
        if (b.requires_grad()) {
            auto& gb = b.grad_buffer();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < q; ++j) gb[i * q + j] += g[i * (p + q) + p + j];
        }
    });
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
    require_rank2(x, "gather_rows");
    const std::size_t m = x.dim(0), n = x.dim(1);
    for (std::size_t r : rows) {
        if (r >= m) {
            throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range for " +
                             shape_str(x.shape()));
        }
    }
    std::vector<double> out(rows.size() * n);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.at(rows[i] * n + j);
    return Tensor::op({rows.size(), n}, std::move(out), {x}, [x, rows, n](std::span<const double> g) {
        if (!x.requires_grad()) return;
        auto& gx = x.grad_buffer();
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < n; ++j) gx[rows[i] * n + j] += g[i * n + j];
    });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no rows");
    const std::size_t n = rows[0].numel();
    std::vector<double> out;
    out.reserve(rows.size() * n);
    for (const Tensor& r : rows) {
        if (r.rank() != 1 || r.numel() != n) {
            throw ShapeError("stack_rows: expected rank-1 rows of length " + std::to_string(n) +
                             ", got " + shape_str(r.shape()));
        }
        out.insert(out.end(), r.data().begin(), r.data().end());
    }
    return Tensor::op({rows.size(), n}, std::move(out), rows, [rows, n](std::span<const double> g) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (!rows[i].requires_grad()) continue;
            auto& gr = rows[i].grad_buffer();
            for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
        }
    });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    if (a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ad[i * k + p];
            const double* brow = bd + p * n;
            double* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return Tensor::op({m, n}, std::move(out), {a, b}, [a, b, m, k, n](std::span<const double> g) {
        const double* ad = a.data().data();
        const double* bd = b.data().data();
        if (a.requires_grad()) {
            auto& ga = a.grad_buffer();  // dA = g . B^T
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bd[p * n + j];
                    ga[i * k + p] += acc;
                }
        }
        if (b.requires_grad()) {
            auto& gb = b.grad_buffer();  // dB = A^T . g
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = ad[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
                }
        }
    });
}

Tensor ordered_matmul(const Tensor& w, const Tensor& v) {
    require_rank2(w, "ordered_matmul");
    require_rank2(v, "ordered_matmul");
    if (w.dim(1) != v.dim(0)) {
        throw ShapeError("ordered_matmul: inner dimensions disagree, " + shape_str(w.shape()) +
                         " x " + shape_str(v.shape()));
    }
    const std::size_t m = w.dim(0), k = w.dim(1), n = v.dim(1);
    std::vector<double> out(m * n);
    std::vector<double> terms(k);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t p = 0; p < k; ++p) terms[p] = w.at(i * k + p) * v.at(p * n + j);
            out[i * n + j] = sorted_sum(terms);
        }
    }
    return Tensor::op({m, n}, std::move(out), {w, v}, [w, v, m, k, n](std::span<const double> g) {
        const double* wd = w.data().data();
        const double* vd = v.data().data();
        if (w.requires_grad()) {
            auto& gw = w.grad_buffer();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * vd[p * n + j];
                    gw[i * k + p] += acc;
                }
        }
        if (v.requires_grad()) {
            auto& gv = v.grad_buffer();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double wv = wd[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) gv[p * n + j] += wv * g[i * n + j];
                }
        }
    });
}

// ---------------------------------------------------------------------------
// row-structured
// ---------------------------------------------------------------------------

Tensor add_row_vector(const Tensor& x, const Tensor& v) {
    require_rank2(x, "add_row_vector");
    if (v.rank() != 1 || v.dim(0) != x.dim(1)) {
        throw ShapeError("add_row_vector: vector " + shape_str(v.shape()) +
                         " does not match columns of " + shape_str(x.shape()));
    }
    const std::size_t m = x.dim(0), n = x.dim(1);
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.at(i * n + j) + v.at(j);
    return Tensor::op({m, n}, std::move(out), {x, v}, [x, v, m, n](std::span<const double> g) {
        if (x.requires_grad()) axpy(x.grad_buffer(), g);
        if (v.requires_grad()) {
            auto& gv = v.grad_buffer();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gv[j] += g[i * n + j];
        }
    });
}

Tensor sub_row_offsets(const Tensor& x, const Tensor& off) {
    require_rank2(x, "sub_row_offsets");
    if (off.rank() != 1 || off.dim(0) != x.dim(0)) {
        throw ShapeError("sub_row_offsets: offsets " + shape_str(off.shape()) +
                         " do not match rows of " + shape_str(x.shape()));
    }
    const std::size_t m = x.dim(0), n = x.dim(1);
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.at(i * n + j) - off.at(i);
    return Tensor::op({m, n}, std::move(out), {x, off}, [x, off, m, n](std::span<const double> g) {
        if (x.requires_grad()) axpy(x.grad_buffer(), g);
        if (off.requires_grad()) {
            auto& go = off.grad_buffer();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) go[i] -= g[i * n + j];
        }
    });
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
    require_rank2(x, "scale_rows");
    if (s.rank() != 1 || s.dim(0) != x.dim(0)) {
        throw ShapeError("scale_rows: scales " + shape_str(s.shape()) + " do not match rows of " +
                         shape_str(x.shape()));
    }
    const std::size_t m = x.dim(0), n = x.dim(1);
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.at(i * n + j) * s.at(i);
    return Tensor::op({m, n}, std::move(out), {x, s}, [x, s, m, n](std::span<const double> g) {
        if (x.requires_grad()) {
            auto& gx = x.grad_buffer();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i * n + j] * s.at(i);
        }
        if (s.requires_grad()) {
            auto& gs = s.grad_buffer();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gs[i] += g[i * n + j] * x.at(i * n + j);
        }
    });
}

Tensor row_sums(const Tensor& x) {
    require_rank2(x, "row_sums");
    const std::size_t m = x.dim(0), n = x.dim(1);
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i] += x.at(i * n + j);
    return Tensor::op({m}, std::move(out), {x}, [x, m, n](std::span<const double> g) {
        if (!x.requires_grad()) return;
        auto& gx = x.grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i];
    });
}

Tensor row_max(const Tensor& x) {
    require_rank2(x, "row_max");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (n == 0) throw ShapeError("row_max: empty rows");
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        double best = x.at(i * n);
        for (std::size_t j = 1; j < n; ++j) best = std::max(best, x.at(i * n + j));
        out[i] = best;
    }
    return Tensor::from_data({m}, std::move(out));  // detached by design
}

Tensor mean_rows(const Tensor& x) {
    require_rank2(x, "mean_rows");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (m == 0) throw ShapeError("mean_rows: no rows");
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j] += x.at(i * n + j);
    for (std::size_t j = 0; j < n; ++j) out[j] /= static_cast<double>(m);
    return Tensor::op({n}, std::move(out), {x}, [x, m, n](std::span<const double> g) {
        if (!x.requires_grad()) return;
        auto& gx = x.grad_buffer();
        const double inv = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j] * inv;
    });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) acc += x.at(i);
    return Tensor::op({}, {acc}, {x}, [x](std::span<const double> g) {
        if (!x.requires_grad()) return;
        auto& gx = x.grad_buffer();
        for (double& v : gx) v += g[0];
    });
}

Tensor mean(const Tensor& x) {
    if (x.numel() == 0) throw ShapeError("mean: empty tensor");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) acc += x.at(i);
    const double inv = 1.0 / static_cast<double>(x.numel());
    return Tensor::op({}, {acc * inv}, {x}, [x, inv](std::span<const double> g) {
        if (!x.requires_grad()) return;
        auto& gx = x.grad_buffer();
        for (double& v : gx) v += g[0] * inv;
    });
}

// ---------------------------------------------------------------------------
// fused neural ops
// ---------------------------------------------------------------------------

Tensor softmax_rows(const Tensor& x) {
    require_rank2(x, "softmax_rows");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (n == 0) throw ShapeError("softmax_rows: empty rows");
    std::vector<double> out(m * n);
    std::vector<double> terms(n);
    for (std::size_t i = 0; i < m; ++i) {
        double mx = x.at(i * n);
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x.at(i * n + j));
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] = std::exp(x.at(i * n + j) - mx);
            terms[j] = out[i * n + j];
        }
        const double denom = sorted_sum(terms);
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= denom;
    }
    std::vector<double> saved = out;
    return Tensor::op(
        {m, n}, std::move(out), {x},
        [x, yd = std::move(saved), m, n](std::span<const double> g) {
            if (!x.requires_grad()) return;
            auto& gx = x.grad_buffer();
            for (std::size_t i = 0; i < m; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * yd[i * n + j];
                for (std::size_t j = 0; j < n; ++j)
                    gx[i * n + j] += yd[i * n + j] * (g[i * n + j] - dot);
            }
        });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (x.rank() < 1) throw ShapeError("layer_norm: rank >= 1 required");
    const std::size_t d = x.shape().back();
    if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d) {
        throw ShapeError("layer_norm: gamma " + shape_str(gamma.shape()) + " / beta " +
                         shape_str(beta.shape()) + " do not match last dimension of " +
                         shape_str(x.shape()));
    }
    const std::size_t rows = x.numel() / d;
    std::vector<double> out(x.numel());
    std::vector<double> xhat(x.numel());
    std::vector<double> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data().data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (std::size_t j = 0; j < d; ++j) {
            xhat[r * d + j] = (xr[j] - mu) * is;
            out[r * d + j] = gamma.at(j) * xhat[r * d + j] + beta.at(j);
        }
    }
    return Tensor::op(
        x.shape(), std::move(out), {x, gamma, beta},
        [x, gamma, beta, xh = std::move(xhat), is = std::move(inv_std), rows,
         d](std::span<const double> g) {
            if (gamma.requires_grad()) {
                auto& gg = gamma.grad_buffer();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xh[r * d + j];
            }
            if (beta.requires_grad()) {
                auto& gb = beta.grad_buffer();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
            }
            if (x.requires_grad()) {
                auto& gx = x.grad_buffer();
                const double invd = 1.0 / static_cast<double>(d);
                for (std::size_t r = 0; r < rows; ++r) {
                    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dxh = g[r * d + j] * gamma.at(j);
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xh[r * d + j];
                    }
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dxh = g[r * d + j] * gamma.at(j);
                        gx[r * d + j] += is[r] * (dxh - invd * sum_dxhat -
                                                  xh[r * d + j] * invd * sum_dxhat_xhat);
                    }
                }
            }
        });
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
    require_rank2(x, "l2_normalize_rows");
    const std::size_t m = x.dim(0), n = x.dim(1);
    std::vector<double> out(m * n);
    std::vector<double> norms(m);
    for (std::size_t i = 0; i < m; ++i) {
        double ss = 0.0;
        for (std::size_t j = 0; j < n; ++j) ss += x.at(i * n + j) * x.at(i * n + j);
        const double s = std::sqrt(ss);
        norms[i] = s;
        const double denom = s + eps;
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.at(i * n + j) / denom;
    }
    return Tensor::op(
        {m, n}, std::move(out), {x},
        [x, s = std::move(norms), eps, m, n](std::span<const double> g) {
            if (!x.requires_grad()) return;
            auto& gx = x.grad_buffer();
            for (std::size_t i = 0; i < m; ++i) {
                const double denom = s[i] + eps;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * x.at(i * n + j);
                for (std::size_t j = 0; j < n; ++j) {
                    gx[i * n + j] += g[i * n + j] / denom;
                    if (s[i] > 0.0)
                        gx[i * n + j] -= dot * x.at(i * n + j) / (s[i] * denom * denom);
                }
            }
        });
}

// ---------------------------------------------------------------------------
// gradient verification
// ---------------------------------------------------------------------------

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
    Tensor probe = x.clone(true);
    Tensor loss = f(probe);
    if (loss.numel() != 1) throw ShapeError("grad_check: f must be scalar-valued");
    if (!std::isfinite(loss.value())) throw NumericError("grad_check: f(x) is not finite");
    GradTape tape(loss);
    tape.backward();
    std::vector<double> analytic(probe.numel(), 0.0);
    if (!probe.grad().empty()) {
        analytic.assign(probe.grad().begin(), probe.grad().end());
    }

    double worst = 0.0;
    std::vector<double> base(x.data().begin(), x.data().end());
    for (std::size_t i = 0; i < base.size(); ++i) {
        auto eval_at = [&](double v) {
            std::vector<double> d = base;
            d[i] = v;
            const double y = f(Tensor::from_data(x.shape(), std::move(d))).value();
            if (!std::isfinite(y)) throw NumericError("grad_check: perturbed f(x) is not finite");
            return y;
        };
        const double central = (eval_at(base[i] + h) - eval_at(base[i] - h)) / (2.0 * h);
        const double err = std::abs(analytic[i] - central) / std::max(1.0, std::abs(central));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace evlf
