#include "eisnet/report.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace eisnet {

using nlohmann::json;

namespace {

std::vector<std::string> split(std::string_view line, char sep = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto p = line.find(sep, start);
        out.emplace_back(line.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
        if (p == std::string_view::npos) break;
        start = p + 1;
    }
    return out;
}

/// Header row plus data rows; rejects ragged rows.
struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

Csv parse_csv(std::string_view text, std::string_view what) {
    Csv csv;
    bool first = true;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        auto cells = split(line);
        if (first) {
            csv.header = std::move(cells);
            first = false;
        } else {
            if (cells.size() != csv.header.size())
                throw FormatError(std::string(what) + ": row has " + std::to_string(cells.size()) + " cells, header has " +
                                  std::to_string(csv.header.size()));
            csv.rows.push_back(std::move(cells));
        }
    }
    if (first) throw FormatError(std::string(what) + ": empty file");
    return csv;
}

void expect_header(const Csv& csv, const std::vector<std::string>& want, std::string_view what) {
    if (csv.header != want) throw FormatError(std::string(what) + ": unexpected header");
}

double num(const std::string& s, std::string_view what) {
    try {
        return parse_double(what, s);
    } catch (const ConfigError&) {
        throw FormatError(std::string(what) + ": bad number '" + s + "'");
    }
}

std::uint64_t whole(const std::string& s, std::string_view what) {
    try {
        return parse_uint(what, s);
    } catch (const ConfigError&) {
        throw FormatError(std::string(what) + ": bad integer '" + s + "'");
    }
}

std::string strip_jobs(const std::string& config_text) {
    std::istringstream is(config_text);
    std::string line, out;
    while (std::getline(is, line))
        if (line.rfind("jobs=", 0) != 0) out += line + '\n';
    return out;
}

json mean_std_json(const MeanStd& m) {
    return json{{"mean", m.mean}, {"std", m.stdev}};
}

} // namespace

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 15];
    return s;
}

std::string utc_timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string RunManifest::hash() const {
    std::uint64_t h = fnv1a("manifest");
    h = fnv1a(command, h);
    h = fnv1a(strip_jobs(config_text), h);
    h = fnv1a(&dataset_fingerprint, sizeof dataset_fingerprint, h);
    h = fnv1a(&permutation_fingerprint, sizeof permutation_fingerprint, h);
    h = fnv1a(version, h);
    return hex64(h);
}

RunManifest make_manifest(std::string command, const ExperimentConfig& cfg, std::uint64_t dataset_fp,
                          std::uint64_t perm_fp) {
    RunManifest m;
    m.command = std::move(command);
    m.config_text = to_config_text(cfg);
    m.dataset_fingerprint = dataset_fp;
    m.permutation_fingerprint = perm_fp;
    m.timestamp = utc_timestamp();
    return m;
}

// ---------------------------------------------------------------------------

std::string metrics_csv(const std::vector<EpochLog>& epochs) {
    std::ostringstream os;
    os << "epoch,lr,cls,triplet,aux,total,source_accuracy\n";
    for (const auto& e : epochs)
        os << e.epoch << ',' << format_double(e.lr) << ',' << format_double(e.cls) << ',' << format_double(e.triplet)
           << ',' << format_double(e.aux) << ',' << format_double(e.total) << ',' << format_double(e.source_accuracy)
           << '\n';
    return os.str();
}

std::vector<EpochLog> parse_metrics_csv(std::string_view text) {
    const Csv csv = parse_csv(text, "metrics csv");
    expect_header(csv, {"epoch", "lr", "cls", "triplet", "aux", "total", "source_accuracy"}, "metrics csv");
    std::vector<EpochLog> out;
    for (const auto& r : csv.rows) {
        EpochLog e;
        e.epoch = whole(r[0], "metrics csv");
        e.lr = num(r[1], "metrics csv");
        e.cls = num(r[2], "metrics csv");
        e.triplet = num(r[3], "metrics csv");
        e.aux = num(r[4], "metrics csv");
        e.total = num(r[5], "metrics csv");
        e.source_accuracy = num(r[6], "metrics csv");
        out.push_back(e);
    }
    return out;
}

std::string steps_csv(const std::vector<StepLog>& steps) {
    std::ostringstream os;
    os << "step,epoch,cls,triplet,aux,total,cls_count,cls_correct,anchors\n";
    for (const auto& s : steps) {
        const auto& l = s.losses;
        os << s.step << ',' << s.epoch << ',' << format_double(l.cls) << ',' << format_double(l.triplet) << ','
           << format_double(l.aux) << ',' << format_double(l.total) << ',' << l.cls_count << ',' << l.cls_correct << ','
           << l.anchors << '\n';
    }
    return os.str();
}

std::vector<StepLog> parse_steps_csv(std::string_view text) {
    const Csv csv = parse_csv(text, "steps csv");
    expect_header(csv, {"step", "epoch", "cls", "triplet", "aux", "total", "cls_count", "cls_correct", "anchors"},
                  "steps csv");
    std::vector<StepLog> out;
    for (const auto& r : csv.rows) {
        StepLog s;
        s.step = whole(r[0], "steps csv");
        s.epoch = whole(r[1], "steps csv");
        s.losses.cls = num(r[2], "steps csv");
        s.losses.triplet = num(r[3], "steps csv");
        s.losses.aux = num(r[4], "steps csv");
        s.losses.total = num(r[5], "steps csv");
        s.losses.cls_count = whole(r[6], "steps csv");
        s.losses.cls_correct = whole(r[7], "steps csv");
        s.losses.anchors = whole(r[8], "steps csv");
        out.push_back(s);
    }
    return out;
}

// ---------------------------------------------------------------------------

std::string loo_runs_csv(const LooTable& t) {
    std::ostringstream os;
    os << "method,domain,seed,target_accuracy\n";
    for (const auto& row : t.rows)
        for (std::size_t d = 0; d < row.accuracy.size(); ++d)
            for (std::size_t s = 0; s < row.accuracy[d].size(); ++s)
                os << row.method << ',' << t.domains.at(d) << ',' << t.seeds.at(s) << ','
                   << format_double(row.accuracy[d][s]) << '\n';
    return os.str();
}

LooTable parse_loo_runs_csv(std::string_view text) {
    const Csv csv = parse_csv(text, "loo runs csv");
    expect_header(csv, {"method", "domain", "seed", "target_accuracy"}, "loo runs csv");
    LooTable t;
    const auto index_of = [](auto& vec, const auto& v) {
        const auto it = std::find(vec.begin(), vec.end(), v);
        if (it != vec.end()) return static_cast<std::size_t>(it - vec.begin());
        vec.push_back(v);
        return vec.size() - 1;
    };
    for (const auto& r : csv.rows) {
        std::vector<std::string> methods;
        for (const auto& row : t.rows) methods.push_back(row.method);
        const std::size_t m = index_of(methods, r[0]);
        if (m == t.rows.size()) t.rows.push_back({r[0], {}});
        const std::size_t d = index_of(t.domains, r[1]);
        const std::size_t s = index_of(t.seeds, whole(r[2], "loo runs csv"));
        auto& acc = t.rows[m].accuracy;
        if (acc.size() <= d) acc.resize(d + 1);
        if (acc[d].size() != s) throw FormatError("loo runs csv: rows are not in method, domain, seed order");
        acc[d].push_back(num(r[3], "loo runs csv"));
    }
    for (const auto& row : t.rows) {
        if (row.accuracy.size() != t.domains.size()) throw FormatError("loo runs csv: missing domains");
        for (const auto& a : row.accuracy)
            if (a.size() != t.seeds.size()) throw FormatError("loo runs csv: missing seeds");
    }
    return t;
}

LooSummary summarize(const LooTable& t) {
    LooSummary s{t.domains, {}};
    for (const auto& row : t.rows) {
        LooSummaryRow r{row.method, {}, row.average()};
        for (std::size_t d = 0; d < row.accuracy.size(); ++d) r.per_domain.push_back(row.domain_stat(d));
        s.rows.push_back(std::move(r));
    }
    return s;
}

std::string loo_summary_csv(const LooSummary& s) {
    std::ostringstream os;
    os << "method";
    for (const auto& d : s.domains) os << ',' << d << "_mean," << d << "_std";
    os << ",avg_mean,avg_std\n";
    for (const auto& r : s.rows) {
        os << r.method;
        for (const auto& m : r.per_domain) os << ',' << format_double(m.mean) << ',' << format_double(m.stdev);
        os << ',' << format_double(r.average.mean) << ',' << format_double(r.average.stdev) << '\n';
    }
    return os.str();
}

LooSummary parse_loo_summary_csv(std::string_view text) {
    const Csv csv = parse_csv(text, "loo summary csv");
    const auto& h = csv.header;
    if (h.size() < 3 || h.size() % 2 != 1 || h[0] != "method" || h[h.size() - 2] != "avg_mean" || h.back() != "avg_std")
        throw FormatError("loo summary csv: unexpected header");
    LooSummary s;
    for (std::size_t c = 1; c + 2 < h.size(); c += 2) {
        const std::string& a = h[c];
        if (a.size() < 6 || a.substr(a.size() - 5) != "_mean") throw FormatError("loo summary csv: bad column " + a);
        const std::string name = a.substr(0, a.size() - 5);
        if (h[c + 1] != name + "_std") throw FormatError("loo summary csv: bad column " + h[c + 1]);
        s.domains.push_back(name);
    }
    for (const auto& r : csv.rows) {
        LooSummaryRow row{r[0], {}, {}};
        for (std::size_t d = 0; d < s.domains.size(); ++d)
            row.per_domain.push_back({num(r[1 + 2 * d], "loo summary csv"), num(r[2 + 2 * d], "loo summary csv")});
        row.average = {num(r[r.size() - 2], "loo summary csv"), num(r.back(), "loo summary csv")};
        s.rows.push_back(std::move(row));
    }
    return s;
}

// ---------------------------------------------------------------------------

std::string ablation_csv(const AblationTable& t) {
    std::ostringstream os;
    os << "row";
    for (const auto& r : t.rows) os << ',' << r.value;
    os << '\n';
    for (std::size_t s = 0; s < t.seeds.size(); ++s) {
        os << "seed=" << t.seeds[s];
        for (const auto& r : t.rows) os << ',' << format_double(r.accuracy.at(s));
        os << '\n';
    }
    os << "mean";
    for (const auto& r : t.rows) os << ',' << format_double(r.stat().mean);
    os << "\nstd";
    for (const auto& r : t.rows) os << ',' << format_double(r.stat().stdev);
    os << '\n';
    return os.str();
}

AblationTable parse_ablation_csv(std::string_view text, AblationAxis axis, std::string target_domain) {
    const Csv csv = parse_csv(text, "ablation csv");
    if (csv.header.empty() || csv.header[0] != "row") throw FormatError("ablation csv: unexpected header");
    AblationTable t{axis, std::move(target_domain), {}, {}};
    for (std::size_t c = 1; c < csv.header.size(); ++c) t.rows.push_back({csv.header[c], {}});
    for (const auto& r : csv.rows) {
        if (r[0] == "mean" || r[0] == "std") continue; // derived
        if (r[0].rfind("seed=", 0) != 0) throw FormatError("ablation csv: bad row label " + r[0]);
        t.seeds.push_back(whole(r[0].substr(5), "ablation csv"));
        for (std::size_t c = 1; c < r.size(); ++c) t.rows[c - 1].accuracy.push_back(num(r[c], "ablation csv"));
    }
    return t;
}

// ---------------------------------------------------------------------------

std::string summary_json(const RunManifest& m, const std::string& payload_json, double wall_clock_seconds) {
    json doc;
    doc["manifest"] = {{"command", m.command},
                       {"config", m.config_text},
                       {"dataset_fingerprint", hex64(m.dataset_fingerprint)},
                       {"permutation_fingerprint", hex64(m.permutation_fingerprint)},
                       {"version", m.version},
                       {"hash", m.hash()},
                       {"timestamp", m.timestamp}};
    doc["payload"] = json::parse(payload_json);
    doc["timing"] = {{"wall_clock_seconds", wall_clock_seconds}};
    return doc.dump(2) + '\n';
}

std::string summary_payload(std::string_view summary_text) {
    const json doc = json::parse(summary_text);
    if (!doc.contains("payload")) throw FormatError("summary has no payload");
    return doc["payload"].dump(2);
}

std::string train_payload_json(const MetricsLog& log) {
    json p;
    p["target_accuracy"] = log.target_accuracy;
    p["source_test_accuracy"] = log.source_test_accuracy;
    p["epochs"] = log.epochs.size();
    if (!log.epochs.empty()) {
        const auto& e = log.epochs.back();
        p["final_epoch"] = {{"cls", e.cls}, {"triplet", e.triplet}, {"aux", e.aux}, {"total", e.total},
                            {"source_accuracy", e.source_accuracy}};
    }
    return p.dump();
}

std::string loo_payload_json(const LooTable& t) {
    json p;
    p["domains"] = t.domains;
    p["seeds"] = t.seeds;
    json rows = json::array();
    for (const auto& row : t.rows) {
        json r;
        r["method"] = row.method;
        r["accuracy"] = row.accuracy;
        json per = json::object();
        for (std::size_t d = 0; d < row.accuracy.size(); ++d) per[t.domains[d]] = mean_std_json(row.domain_stat(d));
        r["per_domain"] = per;
        r["average"] = mean_std_json(row.average());
        rows.push_back(r);
    }
    p["methods"] = rows;
    return p.dump();
}

std::string ablation_payload_json(const AblationTable& t) {
    json p;
    p["axis"] = to_string(t.axis);
    p["target_domain"] = t.target_domain;
    p["seeds"] = t.seeds;
    json rows = json::array();
    for (const auto& r : t.rows)
        rows.push_back({{"value", r.value}, {"accuracy", r.accuracy}, {"summary", mean_std_json(r.stat())}});
    p["rows"] = rows;
    return p.dump();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot write " + path.string());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!os) throw FormatError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot read " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

} // namespace eisnet
