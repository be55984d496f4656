#pragma once

#include <string>

#include "eisnet/tensor.hpp"

namespace eisnet {

/// θ ← θ − lr·grad.
template <typename T>
void sgd_step(Tensor<T>& param, const Tensor<T>& grad, T lr) {
    if (param.shape() != grad.shape())
        throw ShapeError("sgd_step: param " + shape_str(param.shape()) + " vs grad " + shape_str(grad.shape()));
    if (!(lr > T(0))) throw DomainError("sgd_step: lr must be positive, got " + std::to_string(lr));
    auto p = param.data();
    const auto g = grad.data();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
}

inline void check_delta(double delta) {
    if (!(delta >= 0.0 && delta < 1.0)) throw DomainError("delta must be in [0,1), got " + std::to_string(delta));
}

/// Momentum-encoder update θ_g ← δ·θ_g + (1−δ)·θ_f.
template <typename T>
void ema_step(Tensor<T>& theta_g, const Tensor<T>& theta_f, T delta) {
    check_delta(static_cast<double>(delta));
    if (theta_g.shape() != theta_f.shape())
        throw ShapeError("ema_step: theta_g " + shape_str(theta_g.shape()) + " vs theta_f " +
                         shape_str(theta_f.shape()));
    auto g = theta_g.data();
    const auto f = theta_f.data();
    if (delta == T(0)) {
        std::copy(f.begin(), f.end(), g.begin());
        return;
    }
    const T keep = delta, take = T(1) - delta;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = keep * g[i] + take * f[i];
}

} // namespace eisnet
