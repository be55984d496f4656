#include "eisnet/trainer.hpp"

#include <atomic>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <thread>

namespace eisnet {

void TrainConfig::validate() const {
    const auto fail = [](const std::string& msg) { throw DomainError(msg); };
    if (!(alpha >= 0)) fail("alpha must be >= 0");
    if (!(beta >= 0)) fail("beta must be >= 0");
    if (!(gamma >= 0)) fail("gamma must be >= 0");
    if (!(alpha > 0 || beta > 0 || gamma > 0)) fail("alpha, beta, gamma: at least one must be > 0");
    if (!(margin > 0)) fail("margin must be > 0");
    if (k < 1) fail("k must be >= 1");
    if (!(delta >= 0 && delta < 1)) fail("delta must be in [0,1)");
    if (batch < 1) fail("batch must be >= 1");
    if (bank < batch) fail("bank must be >= batch");
    if (epochs < 1) fail("epochs must be >= 1");
    if (!(lr > 0)) fail("lr must be > 0");
    if (!(lr_decay_fraction > 0 && lr_decay_fraction <= 1)) fail("lr_decay_fraction must be in (0,1]");
    if (!(p_shuffle >= 0 && p_shuffle <= 1)) fail("p_shuffle must be in [0,1]");
    if (held_out < -1) fail("held_out must be -1 or a domain index");
}

std::size_t TrainConfig::decay_epoch() const {
    // Round before ceil so that 0.8 * 100 lands on 80, not 81.
    const double raw = lr_decay_fraction * static_cast<double>(epochs);
    return static_cast<std::size_t>(std::ceil(std::round(raw * 1e9) / 1e9));
}

ModelConfig TrainConfig::model_config(const Dataset& ds) const {
    ModelConfig mc;
    mc.image_side = ds.image_side;
    mc.num_classes = ds.num_classes;
    mc.encoder = encoder;
    return mc;
}

TrainConfig pacs_preset() {
    return TrainConfig{};
}

TrainConfig vlcs_preset() {
    TrainConfig c;
    c.alpha = 1.0;
    c.beta = 0.1;
    c.gamma = 0.05;
    return c;
}

std::vector<std::pair<std::size_t, std::size_t>> source_pool(const Dataset& ds, int held_out) {
    std::vector<std::pair<std::size_t, std::size_t>> pool;
    for (std::size_t d = 0; d < ds.num_domains(); ++d) {
        if (static_cast<int>(d) == held_out) continue;
        for (std::size_t i = 0; i < ds.splits[d].train.size(); ++i) pool.emplace_back(d, i);
    }
    return pool;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng(seed).child("epoch", epoch);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    return order;
}

Batch make_batch(const Dataset& ds, const std::vector<std::pair<std::size_t, std::size_t>>& pool,
                 const std::vector<std::size_t>& order, std::size_t first, std::size_t count, bool augment_images,
                 const Rng& rng) {
    Batch b;
    b.images.reserve(count);
    b.labels.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto [d, idx] = pool[order[first + i]];
        const SampleRecord& rec = ds.splits[d].train[idx];
        if (augment_images) {
            Rng r = rng.child(i);
            b.images.push_back(augment(rec.image, r));
        } else {
            b.images.push_back(rec.image);
        }
        b.labels.push_back(rec.label);
    }
    return b;
}

// ---------------------------------------------------------------------------

std::string to_string(Method m) {
    switch (m) {
    case Method::Baseline: return "baseline";
    case Method::Extrinsic: return "extrinsic";
    case Method::Intrinsic: return "intrinsic";
    case Method::Full: return "full";
    }
    return "full";
}

TrainConfig apply_method(TrainConfig cfg, Method m) {
    switch (m) {
    case Method::Baseline: cfg.beta = 0; cfg.gamma = 0; break;
    case Method::Extrinsic: cfg.gamma = 0; break;
    case Method::Intrinsic: cfg.beta = 0; break;
    case Method::Full: break;
    }
    return cfg;
}

const std::vector<Method>& all_methods() {
    static const std::vector<Method> m{Method::Baseline, Method::Extrinsic, Method::Intrinsic, Method::Full};
    return m;
}

MeanStd mean_std(std::span<const double> v) {
    MeanStd r;
    if (v.empty()) return r;
    for (double x : v) r.mean += x;
    r.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0;
        for (double x : v) ss += (x - r.mean) * (x - r.mean);
        r.stdev = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return r;
}

MeanStd MethodResult::domain_stat(std::size_t d) const {
    return mean_std(accuracy.at(d));
}

MeanStd MethodResult::average() const {
    MeanStd r;
    if (accuracy.empty()) return r;
    for (std::size_t d = 0; d < accuracy.size(); ++d) r.mean += domain_stat(d).mean;
    r.mean /= static_cast<double>(accuracy.size());
    std::vector<double> per_seed(accuracy[0].size(), 0.0);
    for (const auto& dom : accuracy)
        for (std::size_t s = 0; s < dom.size(); ++s) per_seed[s] += dom[s] / static_cast<double>(accuracy.size());
    r.stdev = mean_std(per_seed).stdev;
    return r;
}

std::vector<MetricsLog> run_all(const std::vector<TrainConfig>& configs, const Dataset& ds, const PermutationSet& perms,
                                std::size_t jobs) {
    std::vector<MetricsLog> logs(configs.size());
    std::vector<std::exception_ptr> errors(configs.size());
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next++; i < configs.size(); i = next++) {
            try {
                logs[i] = train<float>(configs[i], ds, perms).log;
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(jobs, configs.size()));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < n; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return logs;
}

LooTable leave_one_domain_out(const TrainConfig& base, const Dataset& ds, const std::vector<std::uint64_t>& seeds,
                              const std::vector<Method>& methods, const PermutationSet& perms, std::size_t jobs) {
    if (seeds.empty()) throw DomainError("leave_one_domain_out: at least one seed is required");
    const std::size_t D = ds.num_domains();
    std::vector<TrainConfig> configs;
    for (Method m : methods)
        for (std::size_t d = 0; d < D; ++d)
            for (auto seed : seeds) {
                TrainConfig c = apply_method(base, m);
                c.held_out = static_cast<int>(d);
                c.seed = seed;
                configs.push_back(c);
            }
    const auto logs = run_all(configs, ds, perms, jobs);
    LooTable table{ds.domain_names(), seeds, {}};
    std::size_t i = 0;
    for (Method m : methods) {
        MethodResult r{to_string(m), std::vector<std::vector<double>>(D)};
        for (std::size_t d = 0; d < D; ++d)
            for (std::size_t s = 0; s < seeds.size(); ++s) r.accuracy[d].push_back(logs[i++].target_accuracy);
        table.rows.push_back(std::move(r));
    }
    return table;
}

std::string to_string(AblationAxis a) {
    switch (a) {
    case AblationAxis::K: return "k";
    case AblationAxis::Delta: return "delta";
    case AblationAxis::Selector: return "selector";
    case AblationAxis::BankSize: return "bank_size";
    }
    return "k";
}

AblationAxis parse_ablation_axis(std::string_view s) {
    if (s == "k" || s == "K") return AblationAxis::K;
    if (s == "delta") return AblationAxis::Delta;
    if (s == "selector") return AblationAxis::Selector;
    if (s == "bank_size" || s == "bank-size" || s == "bank") return AblationAxis::BankSize;
    throw DomainError("axis must be one of k|delta|selector|bank_size, got " + std::string(s));
}

std::vector<std::string> default_axis_values(AblationAxis a) {
    switch (a) {
    case AblationAxis::K: return {"1", "8", "64", "128", "256"};
    case AblationAxis::Delta: return {"0", "0.5", "0.9", "0.99", "0.999"};
    case AblationAxis::Selector: return {"random", "semihard", "khard"};
    case AblationAxis::BankSize: return {"1024:256", "512:128", "256:64", "128:32"};
    }
    return {};
}

namespace {

std::size_t parse_count(const std::string& s, const char* what) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != s.size() || v == 0) throw DomainError(std::string(what) + ": cannot parse '" + s + "'");
    return static_cast<std::size_t>(v);
}

} // namespace

TrainConfig apply_axis_value(TrainConfig c, AblationAxis a, const std::string& value) {
    switch (a) {
    case AblationAxis::K: c.k = parse_count(value, "k"); break;
    case AblationAxis::Delta: {
        std::size_t pos = 0;
        double d = 0;
        try {
            d = std::stod(value, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || pos != value.size()) throw DomainError("delta: cannot parse '" + value + "'");
        c.delta = d;
        break;
    }
    case AblationAxis::Selector: c.selector = parse_selector_kind(value); break;
    case AblationAxis::BankSize: {
        const auto colon = value.find(':');
        if (colon == std::string::npos) throw DomainError("bank_size values are m:K pairs, got '" + value + "'");
        c.bank = parse_count(value.substr(0, colon), "bank");
        c.k = parse_count(value.substr(colon + 1), "k");
        break;
    }
    }
    c.validate();
    return c;
}

AblationTable ablation_sweep(AblationAxis axis, const std::vector<std::string>& values, const TrainConfig& base,
                             const Dataset& ds, const std::vector<std::uint64_t>& seeds, const PermutationSet& perms,
                             std::size_t jobs) {
    if (seeds.empty()) throw DomainError("ablation_sweep: at least one seed is required");
    if (base.held_out < 0 || base.held_out >= static_cast<int>(ds.num_domains()))
        throw DomainError("ablation_sweep: held_out must name a target domain");
    std::vector<TrainConfig> configs;
    for (const auto& v : values)
        for (auto seed : seeds) {
            TrainConfig c = apply_axis_value(base, axis, v);
            c.seed = seed;
            configs.push_back(c);
        }
    const auto logs = run_all(configs, ds, perms, jobs);
    AblationTable t{axis, ds.domains.at(static_cast<std::size_t>(base.held_out)).name, seeds, {}};
    std::size_t i = 0;
    for (const auto& v : values) {
        AblationRow row{v, {}};
        for (std::size_t s = 0; s < seeds.size(); ++s) row.accuracy.push_back(logs[i++].target_accuracy);
        t.rows.push_back(std::move(row));
    }
    return t;
}

// ---------------------------------------------------------------------------

Tensor<double> compute_embeddings(const ModelParams<float>& m, std::span<const SampleRecord> split) {
    if (split.empty()) throw DomainError("compute_embeddings: empty split");
    const std::size_t D = m.config.embed_dim;
    Tensor<double> out({split.size(), D});
    constexpr std::size_t chunk = 200;
    for (std::size_t first = 0; first < split.size(); first += chunk) {
        const std::size_t n = std::min(chunk, split.size() - first);
        std::vector<Tensor<float>> imgs;
        for (std::size_t i = 0; i < n; ++i) imgs.push_back(split[first + i].image);
        const Tensor<float> e = embed(m, stack_images<float>(imgs));
        for (std::size_t i = 0; i < n; ++i) std::copy_n(e.row(i).begin(), D, out.row(first + i).begin());
    }
    return out;
}

void export_embeddings(const ModelParams<float>& m, std::span<const SampleRecord> split, const std::filesystem::path& path) {
    const Tensor<double> e = compute_embeddings(m, split);
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    const std::size_t D = e.dim(1);
    for (std::size_t j = 0; j < D; ++j) os << "dim_" << j << ',';
    os << "label,domain\n";
    os << std::setprecision(9);
    for (std::size_t i = 0; i < split.size(); ++i) {
        for (std::size_t j = 0; j < D; ++j) os << static_cast<float>(e.at(i, j)) << ',';
        os << split[i].label << ',' << split[i].domain << '\n';
    }
}

Tensor<double> pca_project(const Tensor<double>& data, std::size_t dims) {
    require_rank(data, 2, "pca_project");
    const std::size_t N = data.dim(0), D = data.dim(1);
    if (dims == 0 || dims > D) throw DomainError("pca_project: dims must be in [1, D]");
    if (N < dims) throw DomainError("pca_project: fewer samples than projection dims");
    std::vector<double> mean(D, 0.0);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < D; ++j) mean[j] += data.at(i, j) / static_cast<double>(N);
    Tensor<double> centered = data;
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < D; ++j) centered.at(i, j) -= mean[j];
    std::vector<double> cov(D * D, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        const auto r = centered.row(i);
        for (std::size_t a = 0; a < D; ++a) {
            const double ra = r[a];
            for (std::size_t b = 0; b < D; ++b) cov[a * D + b] += ra * r[b];
        }
    }
    for (double& c : cov) c /= static_cast<double>(N);

    Rng rng(0x9ca);
    std::vector<std::vector<double>> components;
    for (std::size_t k = 0; k < dims; ++k) {
        std::vector<double> v(D), w(D);
        for (double& x : v) x = rng.normal();
        double lambda = 0;
        for (int it = 0; it < 1000; ++it) {
            for (std::size_t a = 0; a < D; ++a) {
                double s = 0;
                for (std::size_t b = 0; b < D; ++b) s += cov[a * D + b] * v[b];
                w[a] = s;
            }
            const double n = l2_norm(std::span<const double>(w));
            if (n == 0) break; // remaining variance is zero; any unit vector will do
            double diff = 0;
            for (std::size_t a = 0; a < D; ++a) {
                w[a] /= n;
                diff = std::max(diff, std::abs(w[a] - v[a]));
            }
            v.swap(w);
            lambda = n;
            if (diff < 1e-9) break;
        }
        const double vn = l2_norm(std::span<const double>(v));
        for (double& x : v) x /= vn;
        for (std::size_t a = 0; a < D; ++a)
            for (std::size_t b = 0; b < D; ++b) cov[a * D + b] -= lambda * v[a] * v[b];
        components.push_back(std::move(v));
    }
    Tensor<double> out({N, dims});
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t k = 0; k < dims; ++k) {
            double s = 0;
            const auto r = centered.row(i);
            for (std::size_t j = 0; j < D; ++j) s += r[j] * components[k][j];
            out.at(i, k) = s;
        }
    return out;
}

} // namespace eisnet
