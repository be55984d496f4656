#include "eisnet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace eisnet {

namespace {

constexpr char kMagic[8] = {'E', 'I', 'S', 'N', 'E', 'T', 'C', 'K'};

void put_u32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("checkpoint truncated");
    return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_string(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is, std::uint32_t limit) {
    const std::uint32_t n = get_u32(is);
    if (n > limit) throw FormatError("checkpoint string too long");
    std::string s(n, '\0');
    if (!is.read(s.data(), n)) throw FormatError("checkpoint truncated");
    return s;
}

std::string config_block(const ModelConfig& c) {
    std::ostringstream os;
    os << "image_side=" << c.image_side << '\n'
       << "channels=" << c.channels << '\n'
       << "num_classes=" << c.num_classes << '\n'
       << "feature_dim=" << c.feature_dim << '\n'
       << "embed_dim=" << c.embed_dim << '\n'
       << "aux_classes=" << c.aux_classes << '\n'
       << "encoder=" << to_string(c.encoder) << '\n'
       << "conv1_filters=" << c.conv1_filters << '\n'
       << "conv2_filters=" << c.conv2_filters << '\n'
       << "mlp_hidden=" << c.mlp_hidden << '\n';
    return os.str();
}

ModelConfig parse_config_block(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("checkpoint config: bad line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    const auto num = [&](const char* key) -> std::size_t {
        const auto it = kv.find(key);
        if (it == kv.end()) throw FormatError(std::string("checkpoint config: missing ") + key);
        return std::stoull(it->second);
    };
    ModelConfig c;
    c.image_side = num("image_side");
    c.channels = num("channels");
    c.num_classes = num("num_classes");
    c.feature_dim = num("feature_dim");
    c.embed_dim = num("embed_dim");
    c.aux_classes = num("aux_classes");
    c.conv1_filters = num("conv1_filters");
    c.conv2_filters = num("conv2_filters");
    c.mlp_hidden = num("mlp_hidden");
    const auto it = kv.find("encoder");
    if (it == kv.end()) throw FormatError("checkpoint config: missing encoder");
    c.encoder = parse_encoder_kind(it->second);
    return c;
}

} // namespace

void write_checkpoint(std::ostream& os, const ModelParams<float>& m) {
    os.write(kMagic, 8);
    put_u32(os, kCheckpointSchemaVersion);
    put_string(os, config_block(m.config));
    put_u32(os, static_cast<std::uint32_t>(m.tensors.size()));
    for (const auto& e : m.tensors) {
        put_string(os, e.name);
        put_u32(os, static_cast<std::uint32_t>(e.value.rank()));
        for (auto d : e.value.shape()) put_u32(os, static_cast<std::uint32_t>(d));
        for (float v : e.value.data()) {
            std::uint32_t u;
            std::memcpy(&u, &v, 4);
            put_u32(os, u);
        }
    }
}

ModelParams<float> read_checkpoint(std::istream& is) {
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw FormatError("not an eisnet checkpoint");
    const std::uint32_t version = get_u32(is);
    if (version != kCheckpointSchemaVersion)
        throw FormatError("unsupported checkpoint schema version " + std::to_string(version));
    ModelParams<float> m;
    m.config = parse_config_block(get_string(is, 1 << 16));
    try {
        m.config.validate();
    } catch (const DomainError& e) {
        throw FormatError(std::string("checkpoint config invalid: ") + e.what());
    }
    // The stored schema must be exactly the one the config produces.
    Rng scratch(0);
    const ParamSet<float> expected = init_model<float>(m.config, scratch).tensors;
    const std::uint32_t count = get_u32(is);
    if (count != expected.size()) throw FormatError("checkpoint tensor count does not match its config");
    for (std::uint32_t t = 0; t < count; ++t) {
        std::string name = get_string(is, 256);
        const std::uint32_t rank = get_u32(is);
        if (rank > 8) throw FormatError("checkpoint tensor rank too large");
        Shape shape(rank);
        for (auto& d : shape) d = get_u32(is);
        if (name != expected[t].name || shape != expected[t].value.shape())
            throw FormatError("checkpoint tensor " + name + " " + shape_str(shape) + " does not match schema entry " +
                              expected[t].name + " " + shape_str(expected[t].value.shape()));
        std::vector<float> data(shape_volume(shape));
        for (float& v : data) {
            const std::uint32_t u = get_u32(is);
            std::memcpy(&v, &u, 4);
        }
        m.tensors.add(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
    }
    return m;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot write " + path.string());
    write_checkpoint(os, m);
    if (!os) throw FormatError("write failed for " + path.string());
}

ModelParams<float> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot read " + path.string());
    return read_checkpoint(is);
}

} // namespace eisnet
