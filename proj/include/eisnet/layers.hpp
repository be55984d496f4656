#pragma once

// Forward/backward pairs with analytic gradients. Every function is pure:
// backward passes take the forward inputs (or the forward cache) explicitly.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "eisnet/tensor.hpp"

namespace eisnet {

// ---------------------------------------------------------------------------
// Fully connected
// ---------------------------------------------------------------------------

template <typename T>
struct AffineGrads {
    Tensor<T> x;
    Tensor<T> W;
    Tensor<T> b;
};

template <typename T>
void check_affine(const Tensor<T>& x, const Tensor<T>& W, std::size_t bias_size) {
    require_rank(x, 2, "affine input");
    require_rank(W, 2, "affine weight");
    if (x.dim(1) != W.dim(0))
        throw ShapeError("affine: input " + shape_str(x.shape()) + " does not conform to weight " +
                         shape_str(W.shape()));
    if (bias_size != W.dim(1))
        throw ShapeError("affine: bias length " + std::to_string(bias_size) + " != output width " +
                         std::to_string(W.dim(1)));
}

/// y = xW + b, b broadcast over rows.
template <typename T>
Tensor<T> affine_forward(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& b) {
    check_affine(x, W, b.size());
    const std::size_t B = x.dim(0), I = x.dim(1), O = W.dim(1);
    Tensor<T> y({B, O});
    const T* xp = x.data().data();
    const T* wp = W.data().data();
    const T* bp = b.data().data();
    T* yp = y.data().data();
    for (std::size_t r = 0; r < B; ++r) {
        T* yr = yp + r * O;
        for (std::size_t o = 0; o < O; ++o) yr[o] = bp[o];
        for (std::size_t i = 0; i < I; ++i) {
            const T xv = xp[r * I + i];
            if (xv == T(0)) continue;
            const T* wr = wp + i * O;
            for (std::size_t o = 0; o < O; ++o) yr[o] += xv * wr[o];
        }
    }
    return y;
}

template <typename T>
AffineGrads<T> affine_backward(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& grad_y,
                               bool need_dx = true) {
    require_rank(W, 2, "affine weight");
    check_affine(x, W, W.dim(1));
    const std::size_t B = x.dim(0), I = x.dim(1), O = W.dim(1);
    require_shape(grad_y, {B, O}, "affine grad_y");
    AffineGrads<T> g{Tensor<T>(), Tensor<T>({I, O}), Tensor<T>({O})};
    const T* xp = x.data().data();
    const T* gp = grad_y.data().data();
    T* dW = g.W.data().data();
    T* db = g.b.data().data();
    for (std::size_t r = 0; r < B; ++r) {
        const T* gr = gp + r * O;
        for (std::size_t o = 0; o < O; ++o) db[o] += gr[o];
        for (std::size_t i = 0; i < I; ++i) {
            const T xv = xp[r * I + i];
            if (xv == T(0)) continue;
            T* dwr = dW + i * O;
            for (std::size_t o = 0; o < O; ++o) dwr[o] += xv * gr[o];
        }
    }
    if (need_dx) {
        // dx = grad_y Wᵀ, evaluated as row axpys over a transposed copy of W.
        std::vector<T> Wt(O * I);
        const T* wp = W.data().data();
        for (std::size_t i = 0; i < I; ++i)
            for (std::size_t o = 0; o < O; ++o) Wt[o * I + i] = wp[i * O + o];
        g.x = Tensor<T>({B, I});
        T* dx = g.x.data().data();
        for (std::size_t r = 0; r < B; ++r) {
            T* dxr = dx + r * I;
            for (std::size_t o = 0; o < O; ++o) {
                const T gv = gp[r * O + o];
                if (gv == T(0)) continue;
                const T* wt = Wt.data() + o * I;
                for (std::size_t i = 0; i < I; ++i) dxr[i] += gv * wt[i];
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// 3x3 valid convolution, stride 1, no bias
// ---------------------------------------------------------------------------

template <typename T>
struct ConvGrads {
    Tensor<T> x;
    Tensor<T> k;
};

template <typename T>
void check_conv(const Tensor<T>& x, const Tensor<T>& k) {
    require_rank(x, 4, "conv2d input");
    require_rank(k, 4, "conv2d kernel");
    if (k.dim(2) != 3 || k.dim(3) != 3) throw ShapeError("conv2d: kernel must be Fx Cx3x3, got " + shape_str(k.shape()));
    if (k.dim(1) != x.dim(1))
        throw ShapeError("conv2d: kernel channels " + std::to_string(k.dim(1)) + " != input channels " +
                         std::to_string(x.dim(1)));
    if (x.dim(2) < 3 || x.dim(3) < 3)
        throw ShapeError("conv2d: kernel 3x3 larger than input " + shape_str(x.shape()));
}

namespace detail {

/// cols[(c*9 + di*3 + dj), i*Wo + j] = x[c, i+di, j+dj] for one image.
template <typename T>
void im2col3(const T* x, std::size_t C, std::size_t H, std::size_t W, T* cols) {
    const std::size_t Ho = H - 2, Wo = W - 2, P = Ho * Wo;
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t di = 0; di < 3; ++di)
            for (std::size_t dj = 0; dj < 3; ++dj) {
                T* dst = cols + (c * 9 + di * 3 + dj) * P;
                for (std::size_t i = 0; i < Ho; ++i) {
                    const T* src = x + (c * H + i + di) * W + dj;
                    std::copy(src, src + Wo, dst + i * Wo);
                }
            }
}

/// Scatter-add inverse of im2col3.
template <typename T>
void col2im3(const T* cols, std::size_t C, std::size_t H, std::size_t W, T* x) {
    const std::size_t Ho = H - 2, Wo = W - 2, P = Ho * Wo;
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t di = 0; di < 3; ++di)
            for (std::size_t dj = 0; dj < 3; ++dj) {
                const T* src = cols + (c * 9 + di * 3 + dj) * P;
                for (std::size_t i = 0; i < Ho; ++i) {
                    T* dst = x + (c * H + i + di) * W + dj;
                    const T* s = src + i * Wo;
                    for (std::size_t j = 0; j < Wo; ++j) dst[j] += s[j];
                }
            }
}

} // namespace detail

/// Cross-correlation: y[b,f,i,j] = sum_{c,di,dj} k[f,c,di,dj] x[b,c,i+di,j+dj].
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& k) {
    check_conv(x, k);
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), F = k.dim(0);
    const std::size_t Ho = H - 2, Wo = W - 2, P = Ho * Wo, Q = C * 9;
    Tensor<T> y({B, F, Ho, Wo});
    std::vector<T> cols(Q * P);
    const T* kp = k.data().data();
    for (std::size_t b = 0; b < B; ++b) {
        detail::im2col3(x.data().data() + b * C * H * W, C, H, W, cols.data());
        T* yb = y.data().data() + b * F * P;
        for (std::size_t f = 0; f < F; ++f) {
            T* yr = yb + f * P;
            for (std::size_t q = 0; q < Q; ++q) {
                const T kv = kp[f * Q + q];
                const T* cr = cols.data() + q * P;
                for (std::size_t p = 0; p < P; ++p) yr[p] += kv * cr[p];
            }
        }
    }
    return y;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& grad_y, bool need_dx = true) {
    check_conv(x, k);
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), F = k.dim(0);
    const std::size_t Ho = H - 2, Wo = W - 2, P = Ho * Wo, Q = C * 9;
    require_shape(grad_y, {B, F, Ho, Wo}, "conv2d grad_y");
    ConvGrads<T> g{need_dx ? Tensor<T>(x.shape()) : Tensor<T>(), Tensor<T>(k.shape())};
    const T* kp = k.data().data();
    T* dk = g.k.data().data();
    std::vector<T> cols(Q * P), cols_t(P * Q), dcols(need_dx ? Q * P : 0);
    for (std::size_t b = 0; b < B; ++b) {
        detail::im2col3(x.data().data() + b * C * H * W, C, H, W, cols.data());
        for (std::size_t q = 0; q < Q; ++q)
            for (std::size_t p = 0; p < P; ++p) cols_t[p * Q + q] = cols[q * P + p];
        const T* gb = grad_y.data().data() + b * F * P;
        // dk[f,:] += gy[f,p] * cols_t[p,:]
        for (std::size_t f = 0; f < F; ++f) {
            T* dkr = dk + f * Q;
            const T* gr = gb + f * P;
            for (std::size_t p = 0; p < P; ++p) {
                const T gv = gr[p];
                if (gv == T(0)) continue;
                const T* ct = cols_t.data() + p * Q;
                for (std::size_t q = 0; q < Q; ++q) dkr[q] += gv * ct[q];
            }
        }
        if (need_dx) {
            std::fill(dcols.begin(), dcols.end(), T(0));
            // dcols[q,:] += k[f,q] * gy[f,:]
            for (std::size_t q = 0; q < Q; ++q) {
                T* dr = dcols.data() + q * P;
                for (std::size_t f = 0; f < F; ++f) {
                    const T kv = kp[f * Q + q];
                    const T* gr = gb + f * P;
                    for (std::size_t p = 0; p < P; ++p) dr[p] += kv * gr[p];
                }
            }
            detail::col2im3(dcols.data(), C, H, W, g.x.data().data() + b * C * H * W);
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// ReLU and 2x2 max pooling
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (T& v : y.data()) v = v > T(0) ? v : T(0);
    return y;
}

/// Gradient passes where the forward input was strictly positive.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_y) {
    require_shape(grad_y, x.shape(), "relu grad_y");
    Tensor<T> g = grad_y;
    const auto xs = x.data();
    auto gs = g.data();
    for (std::size_t i = 0; i < gs.size(); ++i)
        if (!(xs[i] > T(0))) gs[i] = T(0);
    return g;
}

template <typename T>
struct PoolResult {
    Tensor<T> y;
    Shape input_shape;
    std::vector<std::size_t> argmax; // flat input index per output element
};

/// 2x2 stride-2 max pooling over the last two axes of a BxCxHxW tensor.
/// Ties resolve to the first window element in row-major order.
template <typename T>
PoolResult<T> maxpool2_forward(const Tensor<T>& x) {
    require_rank(x, 4, "maxpool2 input");
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 != 0 || W % 2 != 0)
        throw ShapeError("maxpool2: spatial dims must be even, got " + shape_str(x.shape()));
    const std::size_t Ho = H / 2, Wo = W / 2;
    PoolResult<T> r{Tensor<T>({B, C, Ho, Wo}), x.shape(), std::vector<std::size_t>(B * C * Ho * Wo)};
    const T* xp = x.data().data();
    T* yp = r.y.data().data();
    std::size_t o = 0;
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        const std::size_t base = bc * H * W;
        for (std::size_t i = 0; i < Ho; ++i)
            for (std::size_t j = 0; j < Wo; ++j, ++o) {
                const std::size_t cand[4] = {base + (2 * i) * W + 2 * j, base + (2 * i) * W + 2 * j + 1,
                                             base + (2 * i + 1) * W + 2 * j, base + (2 * i + 1) * W + 2 * j + 1};
                std::size_t best = cand[0];
                for (int t = 1; t < 4; ++t)
                    if (xp[cand[t]] > xp[best]) best = cand[t];
                yp[o] = xp[best];
                r.argmax[o] = best;
            }
    }
    return r;
}

template <typename T>
Tensor<T> maxpool2_backward(const PoolResult<T>& fwd, const Tensor<T>& grad_y) {
    require_shape(grad_y, fwd.y.shape(), "maxpool2 grad_y");
    Tensor<T> g(fwd.input_shape);
    const auto gy = grad_y.data();
    auto gx = g.data();
    for (std::size_t o = 0; o < gy.size(); ++o) gx[fwd.argmax[o]] += gy[o];
    return g;
}

// ---------------------------------------------------------------------------
// L2 normalization
// ---------------------------------------------------------------------------

inline constexpr double kNormEpsilon = 1e-12;

/// u = v / ||v||.
template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& v) {
    const T n = l2_norm(v.data());
    if (!(n > T(kNormEpsilon))) throw DomainError("l2_normalize: degenerate vector with norm " + std::to_string(n));
    Tensor<T> u = v;
    for (T& x : u.data()) x /= n;
    return u;
}

/// Applies the Jacobian (I - u uᵀ) / ||v||.
template <typename T>
Tensor<T> l2_normalize_backward(const Tensor<T>& v, const Tensor<T>& grad_u) {
    require_shape(grad_u, v.shape(), "l2_normalize grad_u");
    const T n = l2_norm(v.data());
    if (!(n > T(kNormEpsilon))) throw DomainError("l2_normalize: degenerate vector with norm " + std::to_string(n));
    T dot = 0;
    for (std::size_t i = 0; i < v.size(); ++i) dot += (v[i] / n) * grad_u[i];
    Tensor<T> g(v.shape());
    for (std::size_t i = 0; i < v.size(); ++i) g[i] = (grad_u[i] - (v[i] / n) * dot) / n;
    return g;
}

template <typename T>
struct RowNormalized {
    Tensor<T> u;
    std::vector<T> norms;
};

/// Row-wise l2_normalize of a BxD matrix.
template <typename T>
RowNormalized<T> l2_normalize_rows(const Tensor<T>& v) {
    require_rank(v, 2, "l2_normalize_rows input");
    RowNormalized<T> r{v, std::vector<T>(v.dim(0))};
    for (std::size_t b = 0; b < v.dim(0); ++b) {
        auto row = r.u.row(b);
        const T n = l2_norm(std::span<const T>(row));
        if (!(n > T(kNormEpsilon)))
            throw DomainError("l2_normalize: degenerate embedding in row " + std::to_string(b));
        for (T& x : row) x /= n;
        r.norms[b] = n;
    }
    return r;
}

template <typename T>
Tensor<T> l2_normalize_rows_backward(const RowNormalized<T>& fwd, const Tensor<T>& grad_u) {
    require_shape(grad_u, fwd.u.shape(), "l2_normalize_rows grad_u");
    Tensor<T> g(grad_u.shape());
    for (std::size_t b = 0; b < fwd.u.dim(0); ++b) {
        const auto u = fwd.u.row(b);
        const auto gu = grad_u.row(b);
        auto gv = g.row(b);
        T dot = 0;
        for (std::size_t i = 0; i < u.size(); ++i) dot += u[i] * gu[i];
        for (std::size_t i = 0; i < u.size(); ++i) gv[i] = (gu[i] - u[i] * dot) / fwd.norms[b];
    }
    return g;
}

// ---------------------------------------------------------------------------
// Losses and distances
// ---------------------------------------------------------------------------

template <typename T>
struct LossGrad {
    T loss;
    Tensor<T> grad;
};

/// Mean softmax cross-entropy over rows; grad = (softmax - onehot) / B.
template <typename T>
LossGrad<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> targets) {
    require_rank(logits, 2, "softmax_cross_entropy logits");
    const std::size_t B = logits.dim(0), C = logits.dim(1);
    if (targets.size() != B)
        throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(B) + " rows");
    LossGrad<T> r{T(0), Tensor<T>(logits.shape())};
    const T inv_b = T(1) / static_cast<T>(B);
    for (std::size_t b = 0; b < B; ++b) {
        const int t = targets[b];
        if (t < 0 || static_cast<std::size_t>(t) >= C)
            throw DomainError("softmax_cross_entropy: target " + std::to_string(t) + " outside [0, " +
                              std::to_string(C) + ")");
        const auto z = logits.row(b);
        auto g = r.grad.row(b);
        T mx = z[0];
        for (T v : z) mx = std::max(mx, v);
        T sum = 0;
        for (std::size_t c = 0; c < C; ++c) {
            g[c] = std::exp(z[c] - mx);
            sum += g[c];
        }
        r.loss += (std::log(sum) - (z[t] - mx)) * inv_b;
        for (std::size_t c = 0; c < C; ++c) g[c] = (g[c] / sum) * inv_b;
        g[t] -= inv_b;
    }
    return r;
}

template <typename T>
struct DistanceGrad {
    T value;
    std::vector<T> grad_u;
    std::vector<T> grad_v;
};

/// ||u - v||² with gradients 2(u-v) and -2(u-v).
template <typename T>
DistanceGrad<T> sq_euclidean(std::span<const T> u, std::span<const T> v) {
    if (u.size() != v.size())
        throw ShapeError("sq_euclidean: dimension mismatch " + std::to_string(u.size()) + " vs " +
                         std::to_string(v.size()));
    DistanceGrad<T> r{T(0), std::vector<T>(u.size()), std::vector<T>(u.size())};
    for (std::size_t i = 0; i < u.size(); ++i) {
        const T d = u[i] - v[i];
        r.value += d * d;
        r.grad_u[i] = T(2) * d;
        r.grad_v[i] = T(-2) * d;
    }
    return r;
}

/// Value-only squared distance for hot loops.
template <typename T>
T sq_distance(std::span<const T> u, std::span<const T> v) {
    T s = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const T d = u[i] - v[i];
        s += d * d;
    }
    return s;
}

} // namespace eisnet
