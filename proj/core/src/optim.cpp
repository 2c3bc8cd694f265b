#include "evlf/optim.hpp"

#include <cmath>

#include "evlf/errors.hpp"

namespace evlf {

void zero_grads(std::span<Tensor> params) {
    for (Tensor& p : params) p.zero_grad();
}

void Sgd::step(std::span<Tensor> params) {
    for (Tensor& p : params) {
        auto g = p.grad();
        if (g.empty()) continue;
        auto d = p.raw_data();
        for (std::size_t i = 0; i < d.size(); ++i) {
            d[i] -= lr * (g[i] + weight_decay * d[i]);
        }
    }
}

void AdamW::step(std::span<Tensor> params) {
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t k = 0; k < params.size(); ++k) {
            m_[k].assign(params[k].numel(), 0.0);
            v_[k].assign(params[k].numel(), 0.0);
        }
    }
    if (m_.size() != params.size()) {
        throw ConfigError("AdamW: parameter count changed between steps");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto g = params[k].grad();
        if (g.empty()) continue;
        auto d = params[k].raw_data();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < d.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            d[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * d[i]);
        }
    }
}

}  // namespace evlf
