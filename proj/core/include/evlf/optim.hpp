#pragma once

#include <span>
#include <vector>

#include "evlf/tensor.hpp"

namespace evlf {

void zero_grads(std::span<Tensor> params);

// Plain gradient descent; optional decoupled weight decay.
struct Sgd {
    double lr = 1e-2;
    double weight_decay = 0.0;
    void step(std::span<Tensor> params);
};

// AdamW: Adam moments plus weight decay applied directly to the parameters
// (decoupled from the gradient), scaled by the learning rate. Parameters are
// keyed by position, so pass them in a stable order.
class AdamW {
public:
    explicit AdamW(double lr, double weight_decay = 1e-2, double beta1 = 0.9,
                   double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::span<Tensor> params);
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

private:
    double lr_, weight_decay_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace evlf
