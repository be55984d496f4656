#pragma once

// Small utilities shared by the test suites. Oracles live in the suites
// themselves, not here.

#include <cmath>
#include <vector>

#include "eisnet/rng.hpp"
#include "eisnet/tensor.hpp"

namespace testutil {

inline eisnet::Tensor<double> randn(eisnet::Shape shape, eisnet::Rng& rng, double scale = 1.0) {
    eisnet::Tensor<double> t(std::move(shape));
    for (double& v : t.data()) v = scale * rng.normal();
    return t;
}

inline std::vector<double> unit(std::size_t d, eisnet::Rng& rng) {
    std::vector<double> v(d);
    double n = 0;
    for (double& x : v) {
        x = rng.normal();
        n += x * x;
    }
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    return v;
}

inline double dot(const eisnet::Tensor<double>& a, const eisnet::Tensor<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace testutil
