#pragma once

// Encoder f with three heads (classifier, 128-d unit embedding, 31-way jigsaw)
// and the momentum-updated twin that produces memory-bank embeddings.

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "eisnet/layers.hpp"
#include "eisnet/optim.hpp"
#include "eisnet/rng.hpp"
#include "eisnet/tensor.hpp"

namespace eisnet {

enum class EncoderKind { Conv, Mlp };

std::string to_string(EncoderKind kind);
EncoderKind parse_encoder_kind(std::string_view s);

struct ModelConfig {
    std::size_t image_side = 30;
    std::size_t channels = 3;
    std::size_t num_classes = 5;
    std::size_t feature_dim = 128;
    std::size_t embed_dim = 128;
    std::size_t aux_classes = 31;
    EncoderKind encoder = EncoderKind::Conv;
    std::size_t conv1_filters = 16;
    std::size_t conv2_filters = 32;
    std::size_t mlp_hidden = 256;

    /// Throws DomainError when the configuration cannot be realized.
    void validate() const;

    /// Spatial side after the two conv/pool blocks.
    std::size_t conv_output_side() const { return ((image_side - 2) / 2 - 2) / 2; }
    std::size_t flat_dim() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct NamedTensor {
    std::string name;
    Tensor<T> value;
};

/// Ordered name → tensor collection with a stable schema.
template <typename T>
class ParamSet {
public:
    void add(std::string name, Tensor<T> value) {
        if (find(name)) throw DomainError("duplicate parameter name " + name);
        entries_.push_back({std::move(name), std::move(value)});
    }

    const Tensor<T>* find(std::string_view name) const {
        for (const auto& e : entries_)
            if (e.name == name) return &e.value;
        return nullptr;
    }
    Tensor<T>* find(std::string_view name) {
        for (auto& e : entries_)
            if (e.name == name) return &e.value;
        return nullptr;
    }
    const Tensor<T>& get(std::string_view name) const {
        if (const auto* t = find(name)) return *t;
        throw DomainError("missing parameter " + std::string(name));
    }
    Tensor<T>& get(std::string_view name) {
        if (auto* t = find(name)) return *t;
        throw DomainError("missing parameter " + std::string(name));
    }

    std::size_t size() const noexcept { return entries_.size(); }
    auto begin() noexcept { return entries_.begin(); }
    auto end() noexcept { return entries_.end(); }
    auto begin() const noexcept { return entries_.begin(); }
    auto end() const noexcept { return entries_.end(); }
    NamedTensor<T>& operator[](std::size_t i) { return entries_[i]; }
    const NamedTensor<T>& operator[](std::size_t i) const { return entries_[i]; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.value.size();
        return n;
    }

    /// Same names and shapes, all zeros.
    ParamSet zeros_like() const {
        ParamSet z;
        for (const auto& e : entries_) z.entries_.push_back({e.name, Tensor<T>(e.value.shape())});
        return z;
    }

    /// Entries whose name starts with one of `prefixes`, in schema order.
    ParamSet subset(std::initializer_list<std::string_view> prefixes) const {
        ParamSet s;
        for (const auto& e : entries_)
            for (auto p : prefixes)
                if (e.name.starts_with(p)) {
                    s.entries_.push_back(e);
                    break;
                }
        return s;
    }

    bool same_schema(const ParamSet& other) const {
        if (size() != other.size()) return false;
        for (std::size_t i = 0; i < size(); ++i)
            if (entries_[i].name != other.entries_[i].name || entries_[i].value.shape() != other.entries_[i].value.shape())
                return false;
        return true;
    }

    template <typename U>
    ParamSet<U> cast() const {
        ParamSet<U> out;
        for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>());
        return out;
    }

    friend bool operator==(const ParamSet& a, const ParamSet& b) {
        if (a.size() != b.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a.entries_[i].name != b.entries_[i].name || !(a.entries_[i].value == b.entries_[i].value)) return false;
        return true;
    }

private:
    std::vector<NamedTensor<T>> entries_;
};

template <typename T>
struct ModelParams {
    ModelConfig config;
    ParamSet<T> tensors;
};

/// Momentum encoder state: an EMA copy of the encoder + embedding head only.
template <typename T>
struct MomentumParams {
    ModelConfig config;
    ParamSet<T> tracked;
    double delta = 0.999;
};

/// Names tracked by the momentum encoder.
inline constexpr std::string_view kEncoderPrefix = "enc.";
inline constexpr std::string_view kEmbedPrefix = "embed.";

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
Tensor<T> glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor<T> t(std::move(shape));
    for (T& v : t.data()) v = static_cast<T>(rng.uniform(-a, a));
    return t;
}

} // namespace detail

/// Glorot-uniform weights, zero biases. Tensor order defines the schema.
template <typename T>
ModelParams<T> init_model(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ModelParams<T> m{cfg, {}};
    auto& p = m.tensors;
    const std::size_t F = cfg.feature_dim;
    if (cfg.encoder == EncoderKind::Conv) {
        const std::size_t f1 = cfg.conv1_filters, f2 = cfg.conv2_filters;
        p.add("enc.conv1.k", detail::glorot<T>({f1, cfg.channels, 3, 3}, cfg.channels * 9, f1 * 9, rng));
        p.add("enc.conv2.k", detail::glorot<T>({f2, f1, 3, 3}, f1 * 9, f2 * 9, rng));
        p.add("enc.fc.W", detail::glorot<T>({cfg.flat_dim(), F}, cfg.flat_dim(), F, rng));
        p.add("enc.fc.b", Tensor<T>({F}));
    } else {
        const std::size_t H = cfg.mlp_hidden;
        p.add("enc.fc1.W", detail::glorot<T>({cfg.flat_dim(), H}, cfg.flat_dim(), H, rng));
        p.add("enc.fc1.b", Tensor<T>({H}));
        p.add("enc.fc2.W", detail::glorot<T>({H, F}, H, F, rng));
        p.add("enc.fc2.b", Tensor<T>({F}));
    }
    p.add("embed.W", detail::glorot<T>({F, cfg.embed_dim}, F, cfg.embed_dim, rng));
    p.add("embed.b", Tensor<T>({cfg.embed_dim}));
    p.add("cls.W", detail::glorot<T>({F, cfg.num_classes}, F, cfg.num_classes, rng));
    p.add("cls.b", Tensor<T>({cfg.num_classes}));
    p.add("aux.W", detail::glorot<T>({F, cfg.aux_classes}, F, cfg.aux_classes, rng));
    p.add("aux.b", Tensor<T>({cfg.aux_classes}));
    return m;
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

template <typename T>
struct EncoderCache {
    Tensor<T> input;
    // conv path
    Tensor<T> conv1, relu1, conv2, relu2;
    PoolResult<T> pool1, pool2;
    // shared: flattened input to the first dense layer, dense pre-activations
    Tensor<T> flat, dense1, dense2;
    Tensor<T> hidden; // mlp: relu(dense1)
};

template <typename T>
void check_batch(const ModelConfig& cfg, const Tensor<T>& x) {
    require_rank(x, 4, "model input");
    if (x.dim(1) != cfg.channels || x.dim(2) != cfg.image_side || x.dim(3) != cfg.image_side)
        throw ShapeError("model input: expected Bx" + std::to_string(cfg.channels) + "x" +
                         std::to_string(cfg.image_side) + "x" + std::to_string(cfg.image_side) + ", got " +
                         shape_str(x.shape()));
}

/// Encoder forward. Works on any ParamSet holding the "enc." tensors, so the
/// momentum copy runs through the same code.
template <typename T>
Tensor<T> forward_features(const ParamSet<T>& p, const ModelConfig& cfg, const Tensor<T>& x,
                           EncoderCache<T>* cache = nullptr) {
    check_batch(cfg, x);
    const std::size_t B = x.dim(0);
    EncoderCache<T> local;
    EncoderCache<T>& c = cache ? *cache : local;
    if (cfg.encoder == EncoderKind::Conv) {
        c.conv1 = conv2d_forward(x, p.get("enc.conv1.k"));
        c.relu1 = relu(c.conv1);
        c.pool1 = maxpool2_forward(c.relu1);
        c.conv2 = conv2d_forward(c.pool1.y, p.get("enc.conv2.k"));
        c.relu2 = relu(c.conv2);
        c.pool2 = maxpool2_forward(c.relu2);
        c.flat = c.pool2.y.reshaped({B, cfg.flat_dim()});
        c.dense1 = affine_forward(c.flat, p.get("enc.fc.W"), p.get("enc.fc.b"));
        Tensor<T> features = relu(c.dense1);
        if (cache) c.input = x;
        return features;
    }
    c.flat = x.reshaped({B, cfg.flat_dim()});
    c.dense1 = affine_forward(c.flat, p.get("enc.fc1.W"), p.get("enc.fc1.b"));
    c.hidden = relu(c.dense1);
    c.dense2 = affine_forward(c.hidden, p.get("enc.fc2.W"), p.get("enc.fc2.b"));
    return relu(c.dense2);
}

template <typename T>
void accumulate(ParamSet<T>& grads, std::string_view name, const Tensor<T>& g) {
    Tensor<T>& dst = grads.get(name);
    if (dst.shape() != g.shape()) throw ShapeError("gradient shape mismatch for " + std::string(name));
    auto d = dst.data();
    const auto s = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

/// Accumulates encoder parameter gradients into `grads`.
template <typename T>
void backward_features(const ParamSet<T>& p, const ModelConfig& cfg, const EncoderCache<T>& c,
                       const Tensor<T>& grad_features, ParamSet<T>& grads) {
    if (cfg.encoder == EncoderKind::Conv) {
        const Tensor<T> g_dense = relu_backward(c.dense1, grad_features);
        auto fc = affine_backward(c.flat, p.get("enc.fc.W"), g_dense);
        accumulate(grads, "enc.fc.W", fc.W);
        accumulate(grads, "enc.fc.b", fc.b);
        const Tensor<T> g_pool2 = std::move(fc.x).reshaped(c.pool2.y.shape());
        const Tensor<T> g_relu2 = maxpool2_backward(c.pool2, g_pool2);
        const Tensor<T> g_conv2 = relu_backward(c.conv2, g_relu2);
        auto cv2 = conv2d_backward(c.pool1.y, p.get("enc.conv2.k"), g_conv2);
        accumulate(grads, "enc.conv2.k", cv2.k);
        const Tensor<T> g_relu1 = maxpool2_backward(c.pool1, cv2.x);
        const Tensor<T> g_conv1 = relu_backward(c.conv1, g_relu1);
        auto cv1 = conv2d_backward(c.input, p.get("enc.conv1.k"), g_conv1, /*need_dx=*/false);
        accumulate(grads, "enc.conv1.k", cv1.k);
        return;
    }
    const Tensor<T> g2 = relu_backward(c.dense2, grad_features);
    auto fc2 = affine_backward(c.hidden, p.get("enc.fc2.W"), g2);
    accumulate(grads, "enc.fc2.W", fc2.W);
    accumulate(grads, "enc.fc2.b", fc2.b);
    const Tensor<T> g1 = relu_backward(c.dense1, fc2.x);
    auto fc1 = affine_backward(c.flat, p.get("enc.fc1.W"), g1, /*need_dx=*/false);
    accumulate(grads, "enc.fc1.W", fc1.W);
    accumulate(grads, "enc.fc1.b", fc1.b);
}

// ---------------------------------------------------------------------------
// Heads
// ---------------------------------------------------------------------------

template <typename T>
struct EmbedForward {
    Tensor<T> pre; // head output before normalization
    RowNormalized<T> normalized;
};

template <typename T>
EmbedForward<T> embed_head(const ParamSet<T>& p, const Tensor<T>& features) {
    EmbedForward<T> r;
    r.pre = affine_forward(features, p.get("embed.W"), p.get("embed.b"));
    r.normalized = l2_normalize_rows(r.pre);
    return r;
}

/// Returns the gradient w.r.t. features; accumulates head gradients.
template <typename T>
Tensor<T> embed_head_backward(const ParamSet<T>& p, const Tensor<T>& features, const EmbedForward<T>& fwd,
                              const Tensor<T>& grad_embedding, ParamSet<T>& grads) {
    const Tensor<T> g_pre = l2_normalize_rows_backward(fwd.normalized, grad_embedding);
    auto g = affine_backward(features, p.get("embed.W"), g_pre);
    accumulate(grads, "embed.W", g.W);
    accumulate(grads, "embed.b", g.b);
    return std::move(g.x);
}

/// Unit-norm B×embed_dim embeddings.
template <typename T>
Tensor<T> embed(const ModelParams<T>& m, const Tensor<T>& x) {
    return embed_head(m.tensors, forward_features(m.tensors, m.config, x)).normalized.u;
}

template <typename T>
Tensor<T> classify(const ModelParams<T>& m, const Tensor<T>& features) {
    return affine_forward(features, m.tensors.get("cls.W"), m.tensors.get("cls.b"));
}

template <typename T>
Tensor<T> aux_classify(const ModelParams<T>& m, const Tensor<T>& features) {
    return affine_forward(features, m.tensors.get("aux.W"), m.tensors.get("aux.b"));
}

/// Backward through a named single-affine head; returns the feature gradient.
template <typename T>
Tensor<T> head_backward(const ParamSet<T>& p, std::string_view head, const Tensor<T>& features,
                        const Tensor<T>& grad_logits, ParamSet<T>& grads) {
    const std::string w = std::string(head) + ".W", b = std::string(head) + ".b";
    auto g = affine_backward(features, p.get(w), grad_logits);
    accumulate(grads, w, g.W);
    accumulate(grads, b, g.b);
    return std::move(g.x);
}

// ---------------------------------------------------------------------------
// Momentum encoder
// ---------------------------------------------------------------------------

template <typename T>
MomentumParams<T> momentum_init(const ModelParams<T>& m, double delta = 0.999) {
    check_delta(delta);
    return MomentumParams<T>{m.config, m.tensors.subset({kEncoderPrefix, kEmbedPrefix}), delta};
}

/// θ_g ← δθ_g + (1−δ)θ_f per tracked tensor.
template <typename T>
void momentum_update(MomentumParams<T>& mom, const ModelParams<T>& m) {
    check_delta(mom.delta);
    std::vector<const Tensor<T>*> sources;
    for (const auto& e : m.tensors)
        if (e.name.starts_with(kEncoderPrefix) || e.name.starts_with(kEmbedPrefix)) sources.push_back(&e.value);
    if (sources.size() != mom.tracked.size()) throw ShapeError("momentum_update: schema mismatch");
    for (std::size_t i = 0; i < sources.size(); ++i) {
        const auto& e = mom.tracked[i];
        const Tensor<T>* src = m.tensors.find(e.name);
        if (src != sources[i] || src->shape() != e.value.shape())
            throw ShapeError("momentum_update: schema mismatch at " + e.name);
    }
    for (std::size_t i = 0; i < sources.size(); ++i)
        ema_step(mom.tracked[i].value, *sources[i], static_cast<T>(mom.delta));
}

template <typename T>
Tensor<T> momentum_embed(const MomentumParams<T>& mom, const ModelConfig& cfg, const Tensor<T>& x) {
    return embed_head(mom.tracked, forward_features(mom.tracked, cfg, x)).normalized.u;
}

} // namespace eisnet
