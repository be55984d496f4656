#include "eisnet/commands.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "eisnet/checkpoint.hpp"
#include "eisnet/config.hpp"
#include "eisnet/report.hpp"
#include "eisnet/selftest.hpp"

namespace eisnet {

namespace {

struct MissingInput : Error {
    using Error::Error;
};
struct OutputFailure : Error {
    using Error::Error;
};

/// Flag storage for one subcommand. Values stay strings so the config layer
/// does the parsing and reports the offending key.
struct Flags {
    std::vector<std::pair<std::string, CLI::Option*>> config_opts;
    std::map<std::string, std::string> values;
    std::string config_file, out, data, perms, checkpoint, axis, values_list;
    bool pca = false;

    KeyValues key_values() const {
        KeyValues kv;
        for (const auto& [key, opt] : config_opts)
            if (opt->count() > 0) kv.emplace_back(key, values.at(key));
        return kv;
    }
};

void add_config_flags(CLI::App* sub, Flags& f) {
    static const std::vector<std::pair<std::string, std::string>> flags{
        {"preset", "weight preset: pacs (1, 0.5, 0.7) or vlcs (1, 0.1, 0.05)"},
        {"alpha", "classification loss weight"},
        {"beta", "triplet loss weight"},
        {"gamma", "jigsaw loss weight"},
        {"margin", "triplet margin"},
        {"k", "negatives per anchor"},
        {"bank", "memory bank capacity"},
        {"delta", "momentum coefficient in [0,1)"},
        {"selector", "random|semihard|khard"},
        {"epochs", "training epochs"},
        {"batch", "batch size"},
        {"lr", "initial learning rate"},
        {"lr-decay-fraction", "fraction of epochs before the x0.1 decay"},
        {"p-shuffle", "jigsaw shuffle probability"},
        {"seed", "master seed"},
        {"held-out", "target domain index, -1 for none"},
        {"augment", "training augmentation (true|false)"},
        {"encoder", "conv|mlp"},
        {"seeds", "number of seeds for loo/ablate, starting at --seed"},
        {"jobs", "parallel training runs"},
        {"domains", "synthetic domains"},
        {"classes", "synthetic classes"},
        {"train-per-domain", "training samples per domain"},
        {"test-per-domain", "test samples per domain"},
        {"image-side", "image side in pixels"},
        {"data-seed", "dataset generator seed"},
    };
    for (const auto& [name, help] : flags) {
        const std::string key = canonical_key(name);
        f.values[key];
        f.config_opts.emplace_back(key, sub->add_option("--" + name, f.values[key], help));
    }
    sub->add_option("--config", f.config_file, "flat key=value config file");
    sub->add_option("--out", f.out, "output root (default $EISNET_OUT or ./runs)");
}

ExperimentConfig resolve(const Flags& f) {
    const std::filesystem::path file = f.config_file;
    if (!f.config_file.empty() && !std::filesystem::exists(file))
        throw MissingInput("config file " + f.config_file + " does not exist");
    return load_config(f.config_file.empty() ? nullptr : &file, f.key_values());
}

Dataset obtain_dataset(const Flags& f, const ExperimentConfig& cfg) {
    if (f.data.empty()) return synth_dataset(cfg.data);
    if (!std::filesystem::exists(f.data)) throw MissingInput("dataset " + f.data + " does not exist");
    try {
        return load_dataset(f.data);
    } catch (const FormatError& e) {
        throw MissingInput(std::string("dataset unreadable: ") + e.what());
    }
}

PermutationSet obtain_perms(const Flags& f) {
    if (f.perms.empty()) return default_permutation_set();
    if (!std::filesystem::exists(f.perms)) throw MissingInput("permutation file " + f.perms + " does not exist");
    try {
        return load_permutation_set(f.perms);
    } catch (const FormatError& e) {
        throw MissingInput(std::string("permutation file unreadable: ") + e.what());
    }
}

std::filesystem::path prepare_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw OutputFailure("cannot create output directory " + dir.string() + ": " + ec.message());
    const auto probe = dir / ".write-test";
    {
        std::ofstream os(probe);
        if (!os) throw OutputFailure("output directory " + dir.string() + " is not writable");
    }
    std::filesystem::remove(probe, ec);
    return dir;
}

void emit(const std::filesystem::path& path, std::string_view text) {
    try {
        write_text(path, text);
    } catch (const FormatError& e) {
        throw OutputFailure(e.what());
    }
}

std::filesystem::path run_dir(const Flags& f, const RunManifest& m) {
    return prepare_dir(output_root(f.out) / (m.command + "-" + m.hash()));
}

std::string fmt_acc(double a) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", a);
    return buf;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const Flags& f) {
    const ExperimentConfig cfg = resolve(f);
    const Dataset ds = synth_dataset(cfg.data);
    const std::filesystem::path path = f.data.empty() ? output_root(f.out) / "dataset.bin" : std::filesystem::path(f.data);
    if (path.has_parent_path()) prepare_dir(path.parent_path());
    try {
        save_dataset(path, ds);
    } catch (const FormatError& e) {
        throw OutputFailure(e.what());
    }
    std::cout << "wrote " << path.string() << " (" << ds.num_domains() << " domains, fingerprint "
              << hex64(ds.fingerprint()) << ")\n";
    return kExitOk;
}

int cmd_gen_perms(const Flags& f) {
    const ExperimentConfig cfg = resolve(f);
    const PermutationSet set = generate_permutation_set(Rng(cfg.train.seed));
    const std::filesystem::path path =
        f.perms.empty() ? output_root(f.out) / ("permutations_seed" + std::to_string(cfg.train.seed) + ".txt")
                        : std::filesystem::path(f.perms);
    if (path.has_parent_path()) prepare_dir(path.parent_path());
    try {
        save_permutation_set(path, set);
    } catch (const FormatError& e) {
        throw OutputFailure(e.what());
    }
    std::cout << "wrote " << path.string() << " (31 orderings, min hamming " << set.min_hamming << ", fingerprint "
              << hex64(set.fingerprint()) << ")\n";
    return kExitOk;
}

int cmd_train(const Flags& f) {
    const ExperimentConfig cfg = resolve(f);
    const Dataset ds = obtain_dataset(f, cfg);
    const PermutationSet perms = obtain_perms(f);
    const RunManifest m = make_manifest("train", cfg, ds.fingerprint(), perms.fingerprint());
    const auto dir = run_dir(f, m);
    std::optional<TrainResult<float>> result;
    try {
        result.emplace(train<float>(cfg.train, ds, perms));
    } catch (const TrainingAborted& e) {
        emit(dir / "abort_dump.txt", e.dump());
        std::cerr << "training aborted: " << e.what() << "; state dump in " << (dir / "abort_dump.txt").string() << '\n';
        return kExitNumeric;
    }
    const TrainResult<float>& r = *result;
    emit(dir / "metrics.csv", metrics_csv(r.log.epochs));
    emit(dir / "steps.csv", steps_csv(r.log.steps));
    try {
        save_checkpoint(dir / "model.ckpt", r.state.params);
    } catch (const FormatError& e) {
        throw OutputFailure(e.what());
    }
    emit(dir / "summary.json", summary_json(m, train_payload_json(r.log), r.log.wall_clock_seconds));
    for (const auto& e : r.log.epochs)
        std::cout << "epoch " << e.epoch << " lr " << e.lr << " total " << e.total << " source acc "
                  << fmt_acc(e.source_accuracy) << '\n';
    if (r.log.target_accuracy >= 0)
        std::cout << "target (" << ds.domains[static_cast<std::size_t>(cfg.train.held_out)].name
                  << ") accuracy " << fmt_acc(r.log.target_accuracy) << '\n';
    std::cout << "source test accuracy " << fmt_acc(r.log.source_test_accuracy) << '\n' << "reports in " << dir.string() << '\n';
    return kExitOk;
}

ModelParams<float> obtain_checkpoint(const Flags& f) {
    if (f.checkpoint.empty()) throw MissingInput("--checkpoint is required");
    if (!std::filesystem::exists(f.checkpoint)) throw MissingInput("checkpoint " + f.checkpoint + " does not exist");
    try {
        return load_checkpoint(f.checkpoint);
    } catch (const FormatError& e) {
        throw MissingInput(std::string("checkpoint unreadable: ") + e.what());
    }
}

int cmd_eval(const Flags& f) {
    const ExperimentConfig cfg = resolve(f);
    const Dataset ds = obtain_dataset(f, cfg);
    const ModelParams<float> model = obtain_checkpoint(f);
    if (model.config.image_side != ds.image_side || model.config.num_classes != ds.num_classes)
        throw DomainError("checkpoint does not match the dataset geometry");
    const RunManifest m = make_manifest("eval", cfg, ds.fingerprint(), 0);
    const auto dir = run_dir(f, m);
    std::ostringstream csv;
    csv << "domain,accuracy\n";
    nlohmann::json payload = nlohmann::json::object();
    for (std::size_t d = 0; d < ds.num_domains(); ++d) {
        const double acc = evaluate(model, ds.splits[d].test);
        csv << ds.domains[d].name << ',' << format_double(acc) << '\n';
        payload[ds.domains[d].name] = acc;
        std::cout << ds.domains[d].name << ' ' << fmt_acc(acc) << '\n';
    }
    emit(dir / "eval.csv", csv.str());
    emit(dir / "summary.json", summary_json(m, payload.dump(), 0));
    return kExitOk;
}

int cmd_loo(const Flags& f) {
    const ExperimentConfig cfg = resolve(f);
    const Dataset ds = obtain_dataset(f, cfg);
    const PermutationSet perms = obtain_perms(f);
    const RunManifest m = make_manifest("loo", cfg, ds.fingerprint(), perms.fingerprint());
    const auto dir = run_dir(f, m);
    const auto t0 = std::chrono::steady_clock::now();
    LooTable t;
    try {
        t = leave_one_domain_out(cfg.train, ds, cfg.seed_list(), all_methods(), perms, cfg.jobs);
    } catch (const TrainingAborted& e) {
        emit(dir / "abort_dump.txt", e.dump());
        std::cerr << "training aborted: " << e.what() << '\n';
        return kExitNumeric;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const LooSummary s = summarize(t);
    emit(dir / "loo.csv", loo_summary_csv(s));
    emit(dir / "loo_runs.csv", loo_runs_csv(t));
    emit(dir / "summary.json", summary_json(m, loo_payload_json(t), secs));
    std::cout << "method";
    for (const auto& d : s.domains) std::cout << "  " << d;
    std::cout << "  avg\n";
    for (const auto& r : s.rows) {
        std::cout << r.method;
        for (const auto& p : r.per_domain) std::cout << "  " << fmt_acc(p.mean);
        std::cout << "  " << fmt_acc(r.average.mean) << '\n';
    }
    std::cout << "reports in " << dir.string() << '\n';
    return kExitOk;
}

std::vector<std::string> split_values(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto p = s.find(',', start);
        out.push_back(s.substr(start, p == std::string::npos ? std::string::npos : p - start));
        if (p == std::string::npos) break;
        start = p + 1;
    }
    return out;
}

int cmd_ablate(const Flags& f) {
    const ExperimentConfig cfg = resolve(f);
    if (f.axis.empty()) throw ConfigError("axis", "--axis is required (k|delta|selector|bank_size)");
    AblationAxis axis;
    try {
        axis = parse_ablation_axis(f.axis);
    } catch (const DomainError& e) {
        throw ConfigError("axis", e.what());
    }
    const auto values = f.values_list.empty() ? default_axis_values(axis) : split_values(f.values_list);
    for (const auto& v : values) {
        try {
            apply_axis_value(cfg.train, axis, v);
        } catch (const DomainError& e) {
            throw ConfigError("values", e.what());
        }
    }
    const Dataset ds = obtain_dataset(f, cfg);
    const PermutationSet perms = obtain_perms(f);
    ExperimentConfig keyed = cfg;
    RunManifest m = make_manifest("ablate", keyed, ds.fingerprint(), perms.fingerprint());
    m.config_text += "axis=" + to_string(axis) + "\nvalues=";
    for (std::size_t i = 0; i < values.size(); ++i) m.config_text += (i ? "," : "") + values[i];
    m.config_text += '\n';
    const auto dir = run_dir(f, m);
    const auto t0 = std::chrono::steady_clock::now();
    AblationTable t;
    try {
        t = ablation_sweep(axis, values, cfg.train, ds, cfg.seed_list(), perms, cfg.jobs);
    } catch (const TrainingAborted& e) {
        emit(dir / "abort_dump.txt", e.dump());
        std::cerr << "training aborted: " << e.what() << '\n';
        return kExitNumeric;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    emit(dir / "ablation.csv", ablation_csv(t));
    emit(dir / "summary.json", summary_json(m, ablation_payload_json(t), secs));
    std::cout << to_string(axis) << " on " << t.target_domain << '\n';
    for (const auto& r : t.rows) std::cout << r.value << "  " << fmt_acc(r.stat().mean) << " +- " << fmt_acc(r.stat().stdev) << '\n';
    std::cout << "reports in " << dir.string() << '\n';
    return kExitOk;
}

int cmd_export(const Flags& f) {
    const ExperimentConfig cfg = resolve(f);
    const Dataset ds = obtain_dataset(f, cfg);
    const ModelParams<float> model = obtain_checkpoint(f);
    if (model.config.image_side != ds.image_side) throw DomainError("checkpoint does not match the dataset geometry");
    const RunManifest m = make_manifest("export-embeddings", cfg, ds.fingerprint(), 0);
    const auto dir = run_dir(f, m);
    std::vector<SampleRecord> all;
    for (const auto& s : ds.splits) all.insert(all.end(), s.test.begin(), s.test.end());
    export_embeddings(model, all, dir / "embeddings.csv");
    if (f.pca) {
        const Tensor<double> p = pca_project(compute_embeddings(model, all), 2);
        std::ostringstream os;
        os << "pc_0,pc_1,label,domain\n";
        for (std::size_t i = 0; i < all.size(); ++i)
            os << format_double(p.at(i, 0)) << ',' << format_double(p.at(i, 1)) << ',' << all[i].label << ','
               << all[i].domain << '\n';
        emit(dir / "pca.csv", os.str());
    }
    std::cout << "wrote " << all.size() << " embeddings to " << (dir / "embeddings.csv").string() << '\n';
    return kExitOk;
}

int cmd_selftest(const Flags& f) {
    const ExperimentConfig cfg = resolve(f);
    const auto results = run_selftest(cfg.train.seed);
    std::cout << format_selftest_table(results);
    bool ok = true;
    for (const auto& r : results) ok = ok && r.passed;
    std::cout << (ok ? "all checks passed\n" : "some checks FAILED\n");
    return ok ? kExitOk : kExitFailure;
}

} // namespace

std::filesystem::path output_root(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("EISNET_OUT"); env && *env) return env;
    return "runs";
}

int run_command(int argc, const char* const* argv) {
    CLI::App app{"EISNet desk-scale domain generalization toolkit", "eisnet"};
    app.require_subcommand(1);
    app.set_version_flag("--version", EISNET_VERSION);

    struct Sub {
        const char* name;
        const char* help;
        int (*fn)(const Flags&);
    };
    const Sub subs[] = {
        {"gen-data", "render the synthetic multi-domain dataset", cmd_gen_data},
        {"gen-perms", "generate a 31-ordering jigsaw permutation set", cmd_gen_perms},
        {"train", "train one model and write metrics, steps and a checkpoint", cmd_train},
        {"eval", "evaluate a checkpoint on every domain's test split", cmd_eval},
        {"loo", "leave-one-domain-out over four methods and several seeds", cmd_loo},
        {"ablate", "sweep one axis (k, delta, selector, bank_size) on a fixed target", cmd_ablate},
        {"export-embeddings", "write test-split embeddings as CSV", cmd_export},
        {"selftest", "gradient checks and oracle suites", cmd_selftest},
    };
    std::vector<Flags> flags(std::size(subs));
    std::vector<CLI::App*> apps;
    for (std::size_t i = 0; i < std::size(subs); ++i) {
        CLI::App* sub = app.add_subcommand(subs[i].name, subs[i].help);
        Flags& f = flags[i];
        add_config_flags(sub, f);
        const std::string name = subs[i].name;
        if (name != "gen-perms" && name != "selftest")
            sub->add_option("--data", f.data, name == "gen-data" ? "output dataset file" : "dataset file (default: render inline)");
        if (name == "gen-perms" || name == "train" || name == "loo" || name == "ablate")
            sub->add_option("--perms", f.perms, name == "gen-perms" ? "output file" : "permutation set file");
        if (name == "eval" || name == "export-embeddings") sub->add_option("--checkpoint", f.checkpoint, "model checkpoint");
        if (name == "ablate") {
            sub->add_option("--axis", f.axis, "k|delta|selector|bank_size");
            sub->add_option("--values", f.values_list, "comma-separated axis values (bank_size: m:K)");
        }
        if (name == "export-embeddings") sub->add_flag("--pca", f.pca, "also write a 2-D PCA projection");
        apps.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    for (std::size_t i = 0; i < apps.size(); ++i) {
        if (!apps[i]->parsed()) continue;
        try {
            return subs[i].fn(flags[i]);
        } catch (const ConfigError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kExitUsage;
        } catch (const MissingInput& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kExitMissingInput;
        } catch (const OutputFailure& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kExitOutput;
        } catch (const TrainingAborted& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kExitNumeric;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kExitFailure;
        }
    }
    return kExitUsage;
}

} // namespace eisnet
