#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "eisnet/rng.hpp"
#include "eisnet/tensor.hpp"

namespace eisnet {

struct GradCheckOptions {
    double eps = 1e-6;
    /// Tensors larger than this are checked on a random subset of this many coordinates (at least 64).
    std::size_t coords_per_tensor = 64;
    std::uint64_t seed = 0;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
    std::size_t worst_tensor = 0;
    std::size_t worst_index = 0;
};

/// Central-difference check of analytic gradients.
///
/// `loss` re-evaluates the objective from the current contents of `params`;
/// `analytic[i]` is the gradient of that objective w.r.t. `*params[i]`.
/// Relative error per coordinate is |analytic − numeric| / max(1e-8, |numeric|).
template <typename T>
GradCheckResult finite_diff_check(const std::function<T()>& loss, std::span<Tensor<T>* const> params,
                                  std::span<const Tensor<T>> analytic, const GradCheckOptions& opt = {}) {
    if (!(opt.eps >= 1e-6 && opt.eps <= 1e-3)) throw DomainError("finite_diff_check: eps must be in [1e-6, 1e-3]");
    if (params.size() != analytic.size()) throw ShapeError("finite_diff_check: params/gradient count mismatch");
    const std::size_t per_tensor = std::max<std::size_t>(opt.coords_per_tensor, 64);
    Rng rng(opt.seed);
    GradCheckResult result;
    const T eps = static_cast<T>(opt.eps);
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor<T>& p = *params[t];
        if (p.shape() != analytic[t].shape()) throw ShapeError("finite_diff_check: gradient shape mismatch");
        std::vector<std::size_t> coords(p.size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (coords.size() > per_tensor) {
            for (std::size_t i = 0; i < per_tensor; ++i) std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
            coords.resize(per_tensor);
        }
        for (std::size_t idx : coords) {
            const T saved = p[idx];
            p[idx] = saved + eps;
            const T up = loss();
            p[idx] = saved - eps;
            const T down = loss();
            p[idx] = saved;
            if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError("finite_diff_check: non-finite loss");
            const double numeric = (static_cast<double>(up) - static_cast<double>(down)) / (2.0 * opt.eps);
            const double err = std::abs(static_cast<double>(analytic[t][idx]) - numeric) / std::max(1e-8, std::abs(numeric));
            ++result.coords_checked;
            if (err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst_tensor = t;
                result.worst_index = idx;
            }
        }
    }
    return result;
}

} // namespace eisnet
