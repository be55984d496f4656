#include "eisnet/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace eisnet {

std::vector<std::uint64_t> ExperimentConfig::seed_list() const {
    std::vector<std::uint64_t> out;
    for (std::size_t i = 0; i < seeds; ++i) out.push_back(train.seed + i);
    return out;
}

std::string format_double(double v) {
    if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

double parse_double(std::string_view key, std::string_view text) {
    double v = 0;
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || r.ec != std::errc() || r.ptr != text.data() + text.size() || !std::isfinite(v))
        throw ConfigError(std::string(key), "cannot parse '" + std::string(text) + "' as a number");
    return v;
}

std::uint64_t parse_uint(std::string_view key, std::string_view text) {
    std::uint64_t v = 0;
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || r.ec != std::errc() || r.ptr != text.data() + text.size())
        throw ConfigError(std::string(key), "cannot parse '" + std::string(text) + "' as a non-negative integer");
    return v;
}

int parse_int(std::string_view key, std::string_view text) {
    int v = 0;
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || r.ec != std::errc() || r.ptr != text.data() + text.size())
        throw ConfigError(std::string(key), "cannot parse '" + std::string(text) + "' as an integer");
    return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
    if (text == "1" || text == "true" || text == "on" || text == "yes") return true;
    if (text == "0" || text == "false" || text == "off" || text == "no") return false;
    throw ConfigError(std::string(key), "cannot parse '" + std::string(text) + "' as a boolean");
}

std::string canonical_key(std::string_view key) {
    std::string k(key);
    std::replace(k.begin(), k.end(), '-', '_');
    return k;
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys{
        "preset", "alpha", "beta", "gamma", "margin", "k", "bank", "delta", "selector", "epochs", "batch", "lr",
        "lr_decay_fraction", "p_shuffle", "seed", "held_out", "augment", "encoder", "seeds", "jobs", "domains",
        "classes", "train_per_domain", "test_per_domain", "image_side", "data_seed"};
    return keys;
}

namespace {

std::string_view trim(std::string_view s) {
    const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
    while (!s.empty() && ws(s.front())) s.remove_prefix(1);
    while (!s.empty() && ws(s.back())) s.remove_suffix(1);
    return s;
}

std::size_t positive(std::string_view key, std::string_view v) {
    const auto n = parse_uint(key, v);
    if (n == 0) throw ConfigError(std::string(key), "must be >= 1");
    return static_cast<std::size_t>(n);
}

void apply_preset(ExperimentConfig& cfg, std::string_view name) {
    TrainConfig p;
    if (name == "pacs")
        p = pacs_preset();
    else if (name == "vlcs")
        p = vlcs_preset();
    else
        throw ConfigError("preset", "must be pacs or vlcs, got '" + std::string(name) + "'");
    cfg.train.alpha = p.alpha;
    cfg.train.beta = p.beta;
    cfg.train.gamma = p.gamma;
    cfg.preset = std::string(name);
}

} // namespace

KeyValues parse_key_values(std::string_view text, std::string_view source) {
    KeyValues out;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw FormatError(std::string(source) + ":" + std::to_string(line_no) + ": expected key=value");
        out.emplace_back(canonical_key(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
    }
    return out;
}

void set_key(ExperimentConfig& cfg, std::string_view raw_key, std::string_view v) {
    const std::string key = canonical_key(raw_key);
    TrainConfig& t = cfg.train;
    SynthOptions& d = cfg.data;
    try {
        if (key == "preset") apply_preset(cfg, v);
        else if (key == "alpha") t.alpha = parse_double(key, v);
        else if (key == "beta") t.beta = parse_double(key, v);
        else if (key == "gamma") t.gamma = parse_double(key, v);
        else if (key == "margin") t.margin = parse_double(key, v);
        else if (key == "k") t.k = parse_uint(key, v);
        else if (key == "bank") t.bank = parse_uint(key, v);
        else if (key == "delta") t.delta = parse_double(key, v);
        else if (key == "selector") t.selector = parse_selector_kind(v);
        else if (key == "epochs") t.epochs = parse_uint(key, v);
        else if (key == "batch") t.batch = parse_uint(key, v);
        else if (key == "lr") t.lr = parse_double(key, v);
        else if (key == "lr_decay_fraction") t.lr_decay_fraction = parse_double(key, v);
        else if (key == "p_shuffle") t.p_shuffle = parse_double(key, v);
        else if (key == "seed") t.seed = parse_uint(key, v);
        else if (key == "held_out") t.held_out = parse_int(key, v);
        else if (key == "augment") t.augment = parse_bool(key, v);
        else if (key == "encoder") t.encoder = parse_encoder_kind(v);
        else if (key == "seeds") cfg.seeds = positive(key, v);
        else if (key == "jobs") cfg.jobs = positive(key, v);
        else if (key == "domains") d.num_domains = positive(key, v);
        else if (key == "classes") d.num_classes = positive(key, v);
        else if (key == "train_per_domain") d.per_domain_train = positive(key, v);
        else if (key == "test_per_domain") d.per_domain_test = positive(key, v);
        else if (key == "image_side") d.image_side = positive(key, v);
        else if (key == "data_seed") d.seed = parse_uint(key, v);
        else throw ConfigError(key, "unknown key");
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(key, e.what());
    }
}

void validate(const ExperimentConfig& cfg) {
    try {
        cfg.train.validate();
    } catch (const DomainError& e) {
        // Messages lead with the offending field name.
        const std::string msg = e.what();
        const auto end = msg.find_first_not_of("abcdefghijklmnopqrstuvwxyz_");
        throw ConfigError(msg.substr(0, end), msg);
    }
    const auto& d = cfg.data;
    if (d.num_domains < 2 || d.num_domains > default_domain_specs().size())
        throw ConfigError("domains", "must be in [2," + std::to_string(default_domain_specs().size()) + "]");
    if (d.num_classes > 5) throw ConfigError("classes", "must be in [1,5]");
    try {
        ModelConfig mc;
        mc.image_side = d.image_side;
        mc.num_classes = d.num_classes;
        mc.encoder = cfg.train.encoder;
        mc.validate();
    } catch (const DomainError& e) {
        throw ConfigError("image_side", e.what());
    }
    if (cfg.train.held_out >= static_cast<int>(d.num_domains))
        throw ConfigError("held_out", "must be -1 or below the domain count " + std::to_string(d.num_domains));
}

ExperimentConfig resolve_config(const KeyValues& file_keys, const KeyValues& flag_keys) {
    ExperimentConfig cfg;
    const auto find_preset = [](const KeyValues& kv) -> const std::string* {
        const std::string* hit = nullptr;
        for (const auto& [k, v] : kv)
            if (canonical_key(k) == "preset") hit = &v;
        return hit;
    };
    const std::string* preset = find_preset(flag_keys);
    if (!preset) preset = find_preset(file_keys);
    apply_preset(cfg, preset ? *preset : "pacs");
    for (const auto* kv : {&file_keys, &flag_keys})
        for (const auto& [k, v] : *kv)
            if (canonical_key(k) != "preset") set_key(cfg, k, v);
    validate(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path* file, const KeyValues& flag_keys) {
    KeyValues file_keys;
    if (file) {
        std::ifstream is(*file);
        if (!is) throw FormatError("cannot read config file " + file->string());
        std::ostringstream ss;
        ss << is.rdbuf();
        file_keys = parse_key_values(ss.str(), file->string());
    }
    return resolve_config(file_keys, flag_keys);
}

std::string to_config_text(const ExperimentConfig& cfg) {
    const TrainConfig& t = cfg.train;
    const SynthOptions& d = cfg.data;
    std::ostringstream os;
    os << "preset=" << cfg.preset << '\n'
       << "alpha=" << format_double(t.alpha) << '\n'
       << "beta=" << format_double(t.beta) << '\n'
       << "gamma=" << format_double(t.gamma) << '\n'
       << "margin=" << format_double(t.margin) << '\n'
       << "k=" << t.k << '\n'
       << "bank=" << t.bank << '\n'
       << "delta=" << format_double(t.delta) << '\n'
       << "selector=" << to_string(t.selector) << '\n'
       << "epochs=" << t.epochs << '\n'
       << "batch=" << t.batch << '\n'
       << "lr=" << format_double(t.lr) << '\n'
       << "lr_decay_fraction=" << format_double(t.lr_decay_fraction) << '\n'
       << "p_shuffle=" << format_double(t.p_shuffle) << '\n'
       << "seed=" << t.seed << '\n'
       << "held_out=" << t.held_out << '\n'
       << "augment=" << (t.augment ? "true" : "false") << '\n'
       << "encoder=" << to_string(t.encoder) << '\n'
       << "seeds=" << cfg.seeds << '\n'
       << "jobs=" << cfg.jobs << '\n'
       << "domains=" << d.num_domains << '\n'
       << "classes=" << d.num_classes << '\n'
       << "train_per_domain=" << d.per_domain_train << '\n'
       << "test_per_domain=" << d.per_domain_test << '\n'
       << "image_side=" << d.image_side << '\n'
       << "data_seed=" << d.seed << '\n';
    return os.str();
}

} // namespace eisnet
