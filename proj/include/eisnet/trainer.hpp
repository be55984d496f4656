#pragma once

// Multi-task optimization: L = α·L_c + β·L_T' + γ·L_a, with a momentum
// encoder feeding a FIFO memory bank, plus evaluation and sweep drivers.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "eisnet/datagen.hpp"
#include "eisnet/jigsaw.hpp"
#include "eisnet/membank.hpp"
#include "eisnet/mining.hpp"
#include "eisnet/model.hpp"

namespace eisnet {

struct TrainConfig {
    double alpha = 1.0;
    double beta = 0.5;
    double gamma = 0.7;
    double margin = 2.0;
    std::size_t k = 256;
    std::size_t bank = 1024;
    double delta = 0.999;
    SelectorKind selector = SelectorKind::KHard;
    std::size_t epochs = 30;
    std::size_t batch = 64;
    double lr = 0.05;
    double lr_decay_fraction = 0.8;
    double p_shuffle = 0.6;
    std::uint64_t seed = 0;
    int held_out = 3; // -1 trains on every domain
    bool augment = true;
    EncoderKind encoder = EncoderKind::Conv;

    /// Throws DomainError naming the offending key.
    void validate() const;
    /// First epoch (0-based) trained at lr/10: ceil(fraction · epochs).
    std::size_t decay_epoch() const;
    Selector make_selector() const { return Selector(selector, k); }
    ModelConfig model_config(const Dataset& ds) const;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Loss weights of the two shipped presets.
TrainConfig pacs_preset();
TrainConfig vlcs_preset();

struct StepLosses {
    double cls = 0;     // L_c
    double triplet = 0; // L_T'
    double aux = 0;     // L_a
    double total = 0;   // α·L_c + β·L_T' + γ·L_a
    std::size_t cls_count = 0;
    std::size_t cls_correct = 0;
    std::size_t anchors = 0; // anchors that contributed to L_T'
};

struct StepLog {
    std::size_t epoch = 0;
    std::size_t step = 0;
    StepLosses losses;
};

struct EpochLog {
    std::size_t epoch = 0;
    double lr = 0;
    double cls = 0, triplet = 0, aux = 0, total = 0;
    double source_accuracy = 0; // running accuracy on unshuffled training images
};

struct MetricsLog {
    std::vector<EpochLog> epochs;
    std::vector<StepLog> steps;
    double target_accuracy = -1;      // held-out domain test split; -1 if none
    double source_test_accuracy = -1; // mean over source-domain test splits
    double wall_clock_seconds = 0;    // excluded from report payloads
};

/// Raised when a step produces a non-finite loss. Carries a state dump.
class TrainingAborted : public NumericError {
public:
    TrainingAborted(const std::string& what, std::string dump) : NumericError(what), dump_(std::move(dump)) {}
    const std::string& dump() const noexcept { return dump_; }

private:
    std::string dump_;
};

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

/// Stacks C×S×S images into a batch, mapping pixels from [0,1] to [-1,1].
template <typename T>
Tensor<T> stack_images(std::span<const Tensor<float>> images) {
    if (images.empty()) throw ShapeError("stack_images: empty batch");
    Shape shape = images[0].shape();
    shape.insert(shape.begin(), images.size());
    Tensor<T> x(shape);
    const std::size_t n = images[0].size();
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].shape() != images[0].shape()) throw ShapeError("stack_images: ragged batch");
        const auto src = images[i].data();
        T* dst = x.data().data() + i * n;
        for (std::size_t j = 0; j < n; ++j) dst[j] = T(2) * static_cast<T>(src[j]) - T(1);
    }
    return x;
}

template <typename T>
struct Objective {
    StepLosses losses;
    ParamSet<T> grads;
    Tensor<T> embeddings; // anchors; empty when β = 0
};

/// One forward over the encoder and all three heads, then the weighted
/// backward pass. Components with zero weight are neither computed nor
/// differentiated. L_c uses only images with order label 0.
template <typename T>
Objective<T> compute_objective(const ModelParams<T>& m, const Tensor<T>& x, std::span<const int> class_labels,
                               std::span<const int> order_labels, const std::vector<BankRecord<T>>& bank,
                               const TrainConfig& cfg, const Rng& mining_rng) {
    const std::size_t B = x.dim(0);
    if (class_labels.size() != B || order_labels.size() != B) throw ShapeError("compute_objective: label count mismatch");
    const T alpha = static_cast<T>(cfg.alpha), beta = static_cast<T>(cfg.beta), gamma = static_cast<T>(cfg.gamma);
    Objective<T> out{{}, m.tensors.zeros_like(), {}};
    EncoderCache<T> cache;
    const Tensor<T> features = forward_features(m.tensors, m.config, x, &cache);
    Tensor<T> grad_features(features.shape());
    const std::size_t Fd = features.dim(1);

    if (alpha > T(0)) {
        std::vector<std::size_t> rows;
        std::vector<int> targets;
        for (std::size_t i = 0; i < B; ++i)
            if (order_labels[i] == 0) {
                rows.push_back(i);
                targets.push_back(class_labels[i]);
            }
        if (!rows.empty()) {
            Tensor<T> sub({rows.size(), Fd});
            for (std::size_t r = 0; r < rows.size(); ++r) std::copy_n(features.row(rows[r]).begin(), Fd, sub.row(r).begin());
            const Tensor<T> logits = classify(m, sub);
            auto ce = softmax_cross_entropy(logits, targets);
            out.losses.cls = static_cast<double>(ce.loss);
            out.losses.cls_count = rows.size();
            for (std::size_t r = 0; r < rows.size(); ++r) {
                const auto z = logits.row(r);
                const auto best = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
                out.losses.cls_correct += (best == targets[r]);
            }
            for (T& g : ce.grad.data()) g *= alpha;
            const Tensor<T> gsub = head_backward(m.tensors, "cls", sub, ce.grad, out.grads);
            for (std::size_t r = 0; r < rows.size(); ++r) {
                auto dst = grad_features.row(rows[r]);
                const auto src = gsub.row(r);
                for (std::size_t j = 0; j < Fd; ++j) dst[j] += src[j];
            }
        }
    }

    if (gamma > T(0)) {
        const Tensor<T> logits = aux_classify(m, features);
        auto al = aux_loss(logits, order_labels);
        out.losses.aux = static_cast<double>(al.loss);
        for (T& g : al.grad.data()) g *= gamma;
        const Tensor<T> gf = head_backward(m.tensors, "aux", features, al.grad, out.grads);
        for (std::size_t i = 0; i < gf.size(); ++i) grad_features[i] += gf[i];
    }

    if (beta > T(0)) {
        const EmbedForward<T> ef = embed_head(m.tensors, features);
        auto mined = mine_batch(ef.normalized.u, class_labels, bank, Selector(cfg.selector, cfg.k),
                                static_cast<T>(cfg.margin), mining_rng);
        out.losses.triplet = static_cast<double>(mined.loss);
        out.losses.anchors = mined.contributing;
        if (mined.contributing > 0) {
            for (T& g : mined.grad.data()) g *= beta;
            const Tensor<T> gf = embed_head_backward(m.tensors, features, ef, mined.grad, out.grads);
            for (std::size_t i = 0; i < gf.size(); ++i) grad_features[i] += gf[i];
        }
        out.embeddings = ef.normalized.u;
    }

    out.losses.total = cfg.alpha * out.losses.cls + cfg.beta * out.losses.triplet + cfg.gamma * out.losses.aux;
    if (!std::isfinite(out.losses.total)) return out; // caller aborts with a dump
    backward_features(m.tensors, m.config, cache, grad_features, out.grads);
    return out;
}

/// Scalar objective only, for finite-difference checks.
template <typename T>
T objective_value(const ModelParams<T>& m, const Tensor<T>& x, std::span<const int> class_labels,
                  std::span<const int> order_labels, const std::vector<BankRecord<T>>& bank, const TrainConfig& cfg,
                  const Rng& mining_rng) {
    const std::size_t B = x.dim(0);
    const Tensor<T> features = forward_features(m.tensors, m.config, x);
    T total = 0;
    if (cfg.alpha > 0) {
        std::vector<std::size_t> rows;
        std::vector<int> targets;
        for (std::size_t i = 0; i < B; ++i)
            if (order_labels[i] == 0) {
                rows.push_back(i);
                targets.push_back(class_labels[i]);
            }
        if (!rows.empty()) {
            Tensor<T> sub({rows.size(), features.dim(1)});
            for (std::size_t r = 0; r < rows.size(); ++r)
                std::copy_n(features.row(rows[r]).begin(), features.dim(1), sub.row(r).begin());
            total += static_cast<T>(cfg.alpha) * softmax_cross_entropy(classify(m, sub), targets).loss;
        }
    }
    if (cfg.gamma > 0) total += static_cast<T>(cfg.gamma) * aux_loss(aux_classify(m, features), order_labels).loss;
    if (cfg.beta > 0) {
        const auto e = embed_head(m.tensors, features).normalized.u;
        total += static_cast<T>(cfg.beta) *
                 mine_batch(e, class_labels, bank, Selector(cfg.selector, cfg.k), static_cast<T>(cfg.margin), mining_rng).loss;
    }
    return total;
}

// ---------------------------------------------------------------------------
// Training state and step
// ---------------------------------------------------------------------------

template <typename T>
struct TrainState {
    ModelParams<T> params;
    MomentumParams<T> momentum;
    MemoryBank<T> bank;
};

template <typename T>
TrainState<T> init_state(const TrainConfig& cfg, const ModelConfig& mc) {
    Rng init = Rng(cfg.seed).child("init");
    ModelParams<T> params = init_model<T>(mc, init);
    MomentumParams<T> mom = momentum_init(params, cfg.delta);
    return TrainState<T>{std::move(params), std::move(mom), MemoryBank<T>(cfg.bank)};
}

struct Batch {
    std::vector<Tensor<float>> images;
    std::vector<int> labels;
};

template <typename T>
std::string state_dump(const TrainState<T>& s, const StepLosses& l) {
    std::ostringstream os;
    os << "losses: cls=" << l.cls << " triplet=" << l.triplet << " aux=" << l.aux << " total=" << l.total << '\n';
    os << "bank entries: " << s.bank.size() << '\n';
    for (const auto& e : s.params.tensors) {
        double n = 0;
        bool finite = true;
        for (T v : e.value.data()) {
            n += static_cast<double>(v) * static_cast<double>(v);
            finite = finite && std::isfinite(v);
        }
        os << e.name << ' ' << shape_str(e.value.shape()) << " norm=" << std::sqrt(n) << (finite ? "" : " NON-FINITE") << '\n';
    }
    return os.str();
}

/// Ordered per-iteration pipeline: jigsaw transform, shared forward, mining
/// against a bank snapshot, weighted backward + SGD, momentum update, then
/// momentum embeddings of the batch are pushed into the bank.
template <typename T>
StepLosses train_step(TrainState<T>& s, const Batch& batch, const TrainConfig& cfg, T lr, const Rng& step_rng,
                      const PermutationSet& perms) {
    std::vector<Tensor<float>> images = batch.images;
    std::vector<int> order(images.size(), 0);
    if (cfg.gamma > 0) order = make_jigsaw_batch(std::span<Tensor<float>>(images), perms, cfg.p_shuffle, step_rng.child("jigsaw"));
    const Tensor<T> x = stack_images<T>(images);

    const BankSnapshot<T> snap =
        cfg.beta > 0 ? s.bank.snapshot() : std::make_shared<const std::vector<BankRecord<T>>>();
    std::optional<Objective<T>> computed;
    try {
        computed.emplace(compute_objective(s.params, x, batch.labels, order, *snap, cfg, step_rng.child("mining")));
    } catch (const DomainError& e) {
        // A collapsed encoder yields zero embeddings; treat it like a diverged loss.
        throw TrainingAborted(e.what(), state_dump(s, StepLosses{}));
    }
    Objective<T>& obj = *computed;
    if (!std::isfinite(obj.losses.total))
        throw TrainingAborted("non-finite loss", state_dump(s, obj.losses));

    for (std::size_t i = 0; i < s.params.tensors.size(); ++i)
        sgd_step(s.params.tensors[i].value, obj.grads[i].value, lr);

    if (cfg.beta > 0) {
        momentum_update(s.momentum, s.params);
        try {
            s.bank.push_batch(momentum_embed(s.momentum, s.params.config, x), batch.labels);
        } catch (const DomainError& e) {
            throw TrainingAborted(e.what(), state_dump(s, obj.losses));
        }
    }
    return obj.losses;
}

// ---------------------------------------------------------------------------
// Training loop and evaluation
// ---------------------------------------------------------------------------

/// Indices (domain, sample) of the pooled training split of every source domain.
std::vector<std::pair<std::size_t, std::size_t>> source_pool(const Dataset& ds, int held_out);

/// Builds batch `b` of an epoch ordering, applying augmentation when enabled.
Batch make_batch(const Dataset& ds, const std::vector<std::pair<std::size_t, std::size_t>>& pool,
                 const std::vector<std::size_t>& order, std::size_t first, std::size_t count, bool augment,
                 const Rng& rng);

/// Seeded epoch ordering of the pooled training set.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

template <typename T>
double evaluate(const ModelParams<T>& m, std::span<const SampleRecord> split, std::size_t chunk = 200) {
    if (split.empty()) throw DomainError("evaluate: empty split");
    std::size_t correct = 0;
    for (std::size_t first = 0; first < split.size(); first += chunk) {
        const std::size_t n = std::min(chunk, split.size() - first);
        std::vector<Tensor<float>> imgs;
        for (std::size_t i = 0; i < n; ++i) imgs.push_back(split[first + i].image);
        const Tensor<T> logits = classify(m, forward_features(m.tensors, m.config, stack_images<T>(imgs)));
        for (std::size_t i = 0; i < n; ++i) {
            const auto z = logits.row(i);
            const auto best = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
            correct += (best == split[first + i].label);
        }
    }
    return static_cast<double>(correct) / static_cast<double>(split.size());
}

template <typename T>
struct TrainResult {
    TrainState<T> state;
    MetricsLog log;
};

using StepCallback = std::function<void(const StepLog&)>;

template <typename T>
TrainResult<T> train(const TrainConfig& cfg, const Dataset& ds, const PermutationSet& perms = default_permutation_set(),
                     const StepCallback& on_step = {}) {
    cfg.validate();
    if (cfg.held_out >= static_cast<int>(ds.num_domains())) throw DomainError("held_out must name an existing domain");
    const auto start = std::chrono::steady_clock::now();
    TrainResult<T> result{init_state<T>(cfg, cfg.model_config(ds)), {}};
    auto& s = result.state;
    const auto pool = source_pool(ds, cfg.held_out);
    if (pool.empty()) throw DomainError("train: no source samples");
    const Rng root(cfg.seed);
    const std::size_t decay = cfg.decay_epoch();
    std::size_t global_step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = epoch < decay ? cfg.lr : cfg.lr * 0.1;
        const auto order = epoch_order(pool.size(), cfg.seed, epoch);
        EpochLog el{epoch, lr, 0, 0, 0, 0, 0};
        std::size_t steps = 0, seen = 0, correct = 0;
        for (std::size_t first = 0; first < order.size(); first += cfg.batch, ++global_step) {
            const std::size_t n = std::min(cfg.batch, order.size() - first);
            const Rng step_rng = root.child("step", global_step);
            const Batch batch = make_batch(ds, pool, order, first, n, cfg.augment, step_rng.child("augment"));
            const StepLosses l = train_step(s, batch, cfg, static_cast<T>(lr), step_rng, perms);
            const StepLog sl{epoch, global_step, l};
            result.log.steps.push_back(sl);
            if (on_step) on_step(sl);
            el.cls += l.cls;
            el.triplet += l.triplet;
            el.aux += l.aux;
            el.total += l.total;
            seen += l.cls_count;
            correct += l.cls_correct;
            ++steps;
        }
        if (steps > 0) {
            el.cls /= static_cast<double>(steps);
            el.triplet /= static_cast<double>(steps);
            el.aux /= static_cast<double>(steps);
            el.total /= static_cast<double>(steps);
        }
        el.source_accuracy = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
        result.log.epochs.push_back(el);
    }
    if (cfg.held_out >= 0) result.log.target_accuracy = evaluate(s.params, ds.splits[static_cast<std::size_t>(cfg.held_out)].test);
    double acc = 0;
    std::size_t nsrc = 0;
    for (std::size_t d = 0; d < ds.num_domains(); ++d) {
        if (static_cast<int>(d) == cfg.held_out) continue;
        acc += evaluate(s.params, ds.splits[d].test);
        ++nsrc;
    }
    result.log.source_test_accuracy = nsrc ? acc / static_cast<double>(nsrc) : -1;
    result.log.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

// ---------------------------------------------------------------------------
// Leave-one-domain-out and ablations (32-bit training)
// ---------------------------------------------------------------------------

enum class Method { Baseline, Extrinsic, Intrinsic, Full };

std::string to_string(Method m);
/// Baseline: β=γ=0. Extrinsic: γ=0. Intrinsic: β=0. Full: unchanged.
TrainConfig apply_method(TrainConfig cfg, Method m);
const std::vector<Method>& all_methods();

struct MeanStd {
    double mean = 0;
    double stdev = 0; // sample standard deviation; 0 for a single value
};
MeanStd mean_std(std::span<const double> v);

/// accuracy[domain][seed]
struct MethodResult {
    std::string method;
    std::vector<std::vector<double>> accuracy;
    MeanStd domain_stat(std::size_t d) const;
    /// Mean over domains of per-domain means; stdev over per-seed domain averages.
    MeanStd average() const;
};

struct LooTable {
    std::vector<std::string> domains;
    std::vector<std::uint64_t> seeds;
    std::vector<MethodResult> rows;
};

/// Runs independent trainings on up to `jobs` threads; results keep input order.
std::vector<MetricsLog> run_all(const std::vector<TrainConfig>& configs, const Dataset& ds, const PermutationSet& perms,
                                std::size_t jobs);

LooTable leave_one_domain_out(const TrainConfig& base, const Dataset& ds, const std::vector<std::uint64_t>& seeds,
                              const std::vector<Method>& methods = all_methods(),
                              const PermutationSet& perms = default_permutation_set(), std::size_t jobs = 1);

enum class AblationAxis { K, Delta, Selector, BankSize };
std::string to_string(AblationAxis a);
AblationAxis parse_ablation_axis(std::string_view s);
/// Values used when none are given.
std::vector<std::string> default_axis_values(AblationAxis a);
/// Returns a copy of `base` with the axis set to `value`; throws DomainError on a bad value.
TrainConfig apply_axis_value(TrainConfig base, AblationAxis a, const std::string& value);

struct AblationRow {
    std::string value;
    std::vector<double> accuracy; // per seed
    MeanStd stat() const { return mean_std(accuracy); }
};

struct AblationTable {
    AblationAxis axis;
    std::string target_domain;
    std::vector<std::uint64_t> seeds;
    std::vector<AblationRow> rows;
};

/// One fixed-target run per value per seed on base.held_out.
AblationTable ablation_sweep(AblationAxis axis, const std::vector<std::string>& values, const TrainConfig& base,
                             const Dataset& ds, const std::vector<std::uint64_t>& seeds,
                             const PermutationSet& perms = default_permutation_set(), std::size_t jobs = 1);

// ---------------------------------------------------------------------------
// Embedding export
// ---------------------------------------------------------------------------

/// N×D embeddings of a split from the trained encoder.
Tensor<double> compute_embeddings(const ModelParams<float>& m, std::span<const SampleRecord> split);

/// Rows "dim_0,…,dim_{D-1},label,domain".
void export_embeddings(const ModelParams<float>& m, std::span<const SampleRecord> split, const std::filesystem::path& path);

/// Projection onto the top `dims` principal directions (power iteration with deflation).
Tensor<double> pca_project(const Tensor<double>& data, std::size_t dims = 2);

} // namespace eisnet
