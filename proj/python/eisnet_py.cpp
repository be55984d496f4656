#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "eisnet/checkpoint.hpp"
#include "eisnet/commands.hpp"
#include "eisnet/config.hpp"
#include "eisnet/report.hpp"
#include "eisnet/selftest.hpp"
#include "eisnet/trainer.hpp"

namespace py = pybind11;
using namespace eisnet;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

// N×C×S×S images of one split.
FloatArray split_images(const std::vector<SampleRecord>& split) {
    if (split.empty()) return FloatArray(std::vector<py::ssize_t>{0});
    const auto& s0 = split[0].image.shape();
    FloatArray out({static_cast<py::ssize_t>(split.size()), static_cast<py::ssize_t>(s0[0]),
                    static_cast<py::ssize_t>(s0[1]), static_cast<py::ssize_t>(s0[2])});
    float* dst = out.mutable_data();
    for (const auto& r : split) dst = std::copy(r.image.data().begin(), r.image.data().end(), dst);
    return out;
}

std::vector<int> split_labels(const std::vector<SampleRecord>& split) {
    std::vector<int> l;
    for (const auto& r : split) l.push_back(r.label);
    return l;
}

std::vector<Tensor<float>> to_images(const FloatArray& a) {
    if (a.ndim() != 4) throw ShapeError("images must be N x C x S x S");
    const auto n = static_cast<std::size_t>(a.shape(0));
    const Shape shape{static_cast<std::size_t>(a.shape(1)), static_cast<std::size_t>(a.shape(2)),
                      static_cast<std::size_t>(a.shape(3))};
    std::vector<Tensor<float>> out;
    const std::size_t per = shape[0] * shape[1] * shape[2];
    for (std::size_t i = 0; i < n; ++i)
        out.emplace_back(shape, std::vector<float>(a.data() + i * per, a.data() + (i + 1) * per));
    return out;
}

template <typename T>
py::array_t<T> to_numpy(const Tensor<T>& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<T> out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

py::dict log_to_dict(const MetricsLog& log) {
    py::list epochs;
    for (const auto& e : log.epochs) {
        py::dict d;
        d["epoch"] = e.epoch;
        d["lr"] = e.lr;
        d["cls"] = e.cls;
        d["triplet"] = e.triplet;
        d["aux"] = e.aux;
        d["total"] = e.total;
        d["source_accuracy"] = e.source_accuracy;
        epochs.append(d);
    }
    py::list steps;
    for (const auto& s : log.steps)
        steps.append(py::make_tuple(s.step, s.losses.cls, s.losses.triplet, s.losses.aux, s.losses.total));
    py::dict out;
    out["epochs"] = epochs;
    out["steps"] = steps;
    out["target_accuracy"] = log.target_accuracy;
    out["source_test_accuracy"] = log.source_test_accuracy;
    out["wall_clock_seconds"] = log.wall_clock_seconds;
    return out;
}

} // namespace

PYBIND11_MODULE(_eisnet, m) {
    m.doc() = "Desk-scale EISNet: multi-task domain generalization on synthetic glyph domains";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);

    py::enum_<SelectorKind>(m, "SelectorKind")
        .value("random", SelectorKind::Random)
        .value("semihard", SelectorKind::SemiHard)
        .value("khard", SelectorKind::KHard);
    py::enum_<EncoderKind>(m, "EncoderKind").value("conv", EncoderKind::Conv).value("mlp", EncoderKind::Mlp);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("alpha", &TrainConfig::alpha)
        .def_readwrite("beta", &TrainConfig::beta)
        .def_readwrite("gamma", &TrainConfig::gamma)
        .def_readwrite("margin", &TrainConfig::margin)
        .def_readwrite("k", &TrainConfig::k)
        .def_readwrite("bank", &TrainConfig::bank)
        .def_readwrite("delta", &TrainConfig::delta)
        .def_readwrite("selector", &TrainConfig::selector)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch", &TrainConfig::batch)
        .def_readwrite("lr", &TrainConfig::lr)
        .def_readwrite("lr_decay_fraction", &TrainConfig::lr_decay_fraction)
        .def_readwrite("p_shuffle", &TrainConfig::p_shuffle)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("held_out", &TrainConfig::held_out)
        .def_readwrite("augment", &TrainConfig::augment)
        .def_readwrite("encoder", &TrainConfig::encoder)
        .def("validate", &TrainConfig::validate)
        .def("decay_epoch", &TrainConfig::decay_epoch);
    m.def("pacs_preset", &pacs_preset);
    m.def("vlcs_preset", &vlcs_preset);

    m.def(
        "resolve_config",
        [](const std::map<std::string, std::string>& file, const std::map<std::string, std::string>& flags) {
            const ExperimentConfig c =
                resolve_config(KeyValues(file.begin(), file.end()), KeyValues(flags.begin(), flags.end()));
            return py::make_tuple(c.train, to_config_text(c));
        },
        py::arg("file") = std::map<std::string, std::string>{}, py::arg("flags") = std::map<std::string, std::string>{},
        "Resolve defaults, preset, file keys and flag keys. Returns (TrainConfig, canonical text).");

    py::class_<SynthOptions>(m, "SynthOptions")
        .def(py::init<>())
        .def_readwrite("num_domains", &SynthOptions::num_domains)
        .def_readwrite("num_classes", &SynthOptions::num_classes)
        .def_readwrite("per_domain_train", &SynthOptions::per_domain_train)
        .def_readwrite("per_domain_test", &SynthOptions::per_domain_test)
        .def_readwrite("image_side", &SynthOptions::image_side)
        .def_readwrite("seed", &SynthOptions::seed);

    py::class_<Dataset>(m, "Dataset")
        .def_property_readonly("num_domains", &Dataset::num_domains)
        .def_readonly("num_classes", &Dataset::num_classes)
        .def_readonly("image_side", &Dataset::image_side)
        .def("domain_names", &Dataset::domain_names)
        .def("fingerprint", &Dataset::fingerprint)
        .def("train_images", [](const Dataset& d, std::size_t dom) { return split_images(d.splits.at(dom).train); })
        .def("train_labels", [](const Dataset& d, std::size_t dom) { return split_labels(d.splits.at(dom).train); })
        .def("test_images", [](const Dataset& d, std::size_t dom) { return split_images(d.splits.at(dom).test); })
        .def("test_labels", [](const Dataset& d, std::size_t dom) { return split_labels(d.splits.at(dom).test); });
    m.def("synth_dataset", [](const SynthOptions& o) { return synth_dataset(o); }, py::arg("options") = SynthOptions{});
    m.def("save_dataset", &save_dataset);
    m.def("load_dataset", &load_dataset);

    py::class_<ModelParams<float>>(m, "Model")
        .def("embed",
             [](const ModelParams<float>& p, const FloatArray& images) {
                 const auto imgs = to_images(images);
                 return to_numpy(embed(p, stack_images<float>(imgs)));
             })
        .def("logits",
             [](const ModelParams<float>& p, const FloatArray& images) {
                 const auto imgs = to_images(images);
                 return to_numpy(classify(p, forward_features(p.tensors, p.config, stack_images<float>(imgs))));
             })
        .def("evaluate", [](const ModelParams<float>& p, const Dataset& ds,
                            std::size_t domain) { return evaluate(p, ds.splits.at(domain).test); })
        .def("tensor_names", [](const ModelParams<float>& p) {
            std::vector<std::string> names;
            for (const auto& e : p.tensors) names.push_back(e.name);
            return names;
        });
    m.def("save_checkpoint", &save_checkpoint);
    m.def("load_checkpoint", &load_checkpoint);

    m.def(
        "train",
        [](const TrainConfig& cfg, const Dataset& ds) {
            TrainResult<float> r = [&] {
                py::gil_scoped_release release;
                return train<float>(cfg, ds);
            }();
            return py::make_tuple(std::move(r.state.params), log_to_dict(r.log));
        },
        "Train one model. Returns (Model, log dict).");

    m.def(
        "leave_one_domain_out",
        [](const TrainConfig& base, const Dataset& ds, const std::vector<std::uint64_t>& seeds, std::size_t jobs) {
            LooTable t;
            {
                py::gil_scoped_release release;
                t = leave_one_domain_out(base, ds, seeds, all_methods(), default_permutation_set(), jobs);
            }
            py::dict out;
            for (const auto& row : t.rows) out[py::str(row.method)] = row.accuracy;
            out["domains"] = t.domains;
            out["csv"] = loo_summary_csv(summarize(t));
            return out;
        },
        py::arg("base"), py::arg("dataset"), py::arg("seeds") = std::vector<std::uint64_t>{0, 1, 2},
        py::arg("jobs") = 1, "accuracy[method][domain][seed] plus the summary CSV text");

    m.def(
        "select_negatives",
        [](SelectorKind kind, std::size_t k, const DoubleArray& anchor, int label, double d_ap_sq,
           const DoubleArray& bank, const std::vector<int>& bank_labels, double margin, std::uint64_t seed) {
            if (bank.ndim() != 2 || static_cast<std::size_t>(bank.shape(0)) != bank_labels.size())
                throw ShapeError("bank must be N x D with N labels");
            const auto D = static_cast<std::size_t>(bank.shape(1));
            if (static_cast<std::size_t>(anchor.size()) != D) throw ShapeError("anchor dimension mismatch");
            std::vector<BankRecord<double>> records;
            for (std::size_t i = 0; i < bank_labels.size(); ++i)
                records.push_back({std::vector<double>(bank.data() + i * D, bank.data() + (i + 1) * D), bank_labels[i]});
            Rng rng(seed);
            return select_negatives(Selector(kind, k), std::span<const double>(anchor.data(), D), label, d_ap_sq,
                                    records, margin, rng)
                .indices;
        },
        py::arg("kind"), py::arg("k"), py::arg("anchor"), py::arg("label"), py::arg("d_ap_sq"), py::arg("bank"),
        py::arg("bank_labels"), py::arg("margin"), py::arg("seed") = 0);

    m.def("permutations", [] { return default_permutation_set().orderings; }, "The 31 jigsaw orderings, identity first.");
    m.def(
        "shuffle_image",
        [](const FloatArray& img, std::size_t ordering) {
            if (img.ndim() != 3) throw ShapeError("image must be C x S x S");
            const Shape shape{static_cast<std::size_t>(img.shape(0)), static_cast<std::size_t>(img.shape(1)),
                              static_cast<std::size_t>(img.shape(2))};
            const Tensor<float> t(shape, std::vector<float>(img.data(), img.data() + img.size()));
            return to_numpy(shuffle_image(t, default_permutation_set().orderings.at(ordering)));
        },
        py::arg("image"), py::arg("ordering"));

    m.def("selftest", [](std::uint64_t seed) {
        py::list out;
        for (const auto& r : run_selftest(seed)) out.append(py::make_tuple(r.name, r.passed, r.detail));
        return out;
    }, py::arg("seed") = 0);

    m.def(
        "run_command",
        [](std::vector<std::string> args) {
            args.insert(args.begin(), "eisnet");
            std::vector<const char*> argv;
            for (const auto& a : args) argv.push_back(a.c_str());
            return run_command(static_cast<int>(argv.size()), argv.data());
        },
        "Run one CLI command in-process; returns the exit code.");
}
