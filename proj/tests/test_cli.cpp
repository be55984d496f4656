#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "eisnet/commands.hpp"
#include "eisnet/config.hpp"
#include "eisnet/report.hpp"

using namespace eisnet;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
    args.insert(args.begin(), "eisnet");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_command(static_cast<int>(argv.size()), argv.data());
}

fs::path scratch(const std::string& name) {
    const fs::path p = output_root("") / name;
    fs::remove_all(p);
    return p;
}

// Tiny problem so every command finishes in seconds.
std::vector<std::string> tiny(std::vector<std::string> args) {
    for (const char* a : {"--train-per-domain", "16", "--test-per-domain", "8", "--image-side", "18", "--epochs", "1",
                          "--batch", "8", "--bank", "16", "--k", "4"})
        args.emplace_back(a);
    return args;
}

fs::path only_subdir(const fs::path& root, const std::string& prefix) {
    fs::path found;
    int n = 0;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && e.path().filename().string().rfind(prefix, 0) == 0) {
            found = e.path();
            ++n;
        }
    REQUIRE(n == 1);
    return found;
}

} // namespace

TEST_CASE("selftest passes") {
    CHECK(run({"selftest"}) == kExitOk);
}

TEST_CASE("usage errors exit 2") {
    CHECK(run({}) == kExitUsage);
    CHECK(run({"frobnicate"}) == kExitUsage);
    CHECK(run({"train", "--no-such-flag", "1"}) == kExitUsage);
    CHECK(run({"train", "--delta", "1.5"}) == kExitUsage);
    CHECK(run({"train", "--k", "0"}) == kExitUsage);
    CHECK(run({"ablate", "--axis", "lr"}) == kExitUsage);
    CHECK(run({"ablate", "--axis", "k", "--values", "8,zero"}) == kExitUsage);
}

TEST_CASE("missing inputs exit 3") {
    CHECK(run({"train", "--data", "/nonexistent/dataset.bin"}) == kExitMissingInput);
    CHECK(run({"eval", "--checkpoint", "/nonexistent/model.ckpt"}) == kExitMissingInput);
    CHECK(run({"train", "--config", "/nonexistent/cfg.txt"}) == kExitMissingInput);
    CHECK(run({"train", "--perms", "/nonexistent/perms.txt"}) == kExitMissingInput);
    const fs::path junk = scratch("junk");
    fs::create_directories(junk);
    write_text(junk / "bad.bin", "not a dataset");
    CHECK(run({"train", "--data", (junk / "bad.bin").string()}) == kExitMissingInput);
}

TEST_CASE("unwritable output exits 4") {
    CHECK(run(tiny({"train", "--out", "/proc/eisnet-cannot-write"})) == kExitOutput);
    CHECK(run({"gen-perms", "--perms", "/proc/eisnet-cannot-write/p.txt"}) == kExitOutput);
}

TEST_CASE("non-finite training exits 5 with a dump") {
    const fs::path out = scratch("nan");
    CHECK(run(tiny({"train", "--out", out.string(), "--lr", "1e10"})) == kExitNumeric);
    const fs::path dir = only_subdir(out, "train-");
    CHECK(fs::exists(dir / "abort_dump.txt"));
}

TEST_CASE("gen-data, train, eval and export round trip") {
    const fs::path out = scratch("pipeline");
    const std::string data = (out / "ds.bin").string();
    REQUIRE(run(tiny({"gen-data", "--data", data})) == kExitOk);
    REQUIRE(fs::exists(data));

    REQUIRE(run(tiny({"train", "--data", data, "--out", out.string()})) == kExitOk);
    const fs::path dir = only_subdir(out, "train-");
    for (const char* f : {"metrics.csv", "steps.csv", "model.ckpt", "summary.json"}) CHECK(fs::exists(dir / f));
    const auto epochs = parse_metrics_csv(read_text(dir / "metrics.csv"));
    CHECK(epochs.size() == 1);
    const auto steps = parse_steps_csv(read_text(dir / "steps.csv"));
    CHECK(steps.size() == 6); // 3 source domains x 16 samples / batch 8
    for (const auto& s : steps)
        CHECK(std::abs(s.losses.total - (1.0 * s.losses.cls + 0.5 * s.losses.triplet + 0.7 * s.losses.aux)) <= 1e-6);

    const std::string ckpt = (dir / "model.ckpt").string();
    CHECK(run(tiny({"eval", "--data", data, "--checkpoint", ckpt, "--out", out.string()})) == kExitOk);
    CHECK(fs::exists(only_subdir(out, "eval-") / "eval.csv"));
    CHECK(run(tiny({"export-embeddings", "--data", data, "--checkpoint", ckpt, "--pca", "--out", out.string()})) == kExitOk);
    const fs::path ex = only_subdir(out, "export-embeddings-");
    CHECK(fs::exists(ex / "embeddings.csv"));
    CHECK(fs::exists(ex / "pca.csv"));
}

TEST_CASE("config file and flag precedence through the CLI") {
    const fs::path out = scratch("precedence");
    fs::create_directories(out);
    write_text(out / "cfg.txt", "delta=0.9\nseed=3\n");
    REQUIRE(run(tiny({"train", "--config", (out / "cfg.txt").string(), "--delta", "0.999", "--out", out.string()})) == kExitOk);
    const auto summary = read_text(only_subdir(out, "train-") / "summary.json");
    CHECK(summary.find("delta=0.999") != std::string::npos);
    CHECK(summary.find("seed=3") != std::string::npos);
}

TEST_CASE("loo is byte-for-byte reproducible") {
    const fs::path a = scratch("loo_a"), b = scratch("loo_b");
    REQUIRE(run(tiny({"loo", "--seeds", "1", "--out", a.string()})) == kExitOk);
    REQUIRE(run(tiny({"loo", "--seeds", "1", "--jobs", "2", "--out", b.string()})) == kExitOk);
    const fs::path da = only_subdir(a, "loo-"), db = only_subdir(b, "loo-");
    // The jobs key does not enter the run hash.
    CHECK(da.filename() == db.filename());
    CHECK(read_text(da / "loo.csv") == read_text(db / "loo.csv"));
    CHECK(read_text(da / "loo_runs.csv") == read_text(db / "loo_runs.csv"));
    CHECK(summary_payload(read_text(da / "summary.json")) == summary_payload(read_text(db / "summary.json")));
    const auto s = parse_loo_summary_csv(read_text(da / "loo.csv"));
    CHECK(s.rows.size() == 4);
}

TEST_CASE("ablate writes one column per value") {
    const fs::path out = scratch("ablate");
    REQUIRE(run(tiny({"ablate", "--axis", "selector", "--seeds", "1", "--out", out.string()})) == kExitOk);
    const auto t = parse_ablation_csv(read_text(only_subdir(out, "ablate-") / "ablation.csv"), AblationAxis::Selector, "");
    REQUIRE(t.rows.size() == 3);
    CHECK(t.rows[0].value == "random");
    CHECK(t.rows[1].value == "semihard");
    CHECK(t.rows[2].value == "khard");
}

TEST_CASE("command-line binary runs") {
    const std::string cmd = std::string("\"") + EISNET_CLI + "\" --version > /dev/null";
    CHECK(std::system(cmd.c_str()) == 0);
    const std::string bad = std::string("\"") + EISNET_CLI + "\" train --delta 1.5 > /dev/null 2>&1";
    const int status = std::system(bad.c_str());
    CHECK(WEXITSTATUS(status) == kExitUsage);
}
