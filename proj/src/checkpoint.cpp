#include "swarmnav/checkpoint.hpp"

#include "swarmnav/error.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace swarmnav {

static_assert(std::endian::native == std::endian::little,
              "parameter files are written in host byte order, which must be little-endian");

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'W', 'N', 'V', 'C', 'K', 'P', 'T'};
constexpr char kExportMagic[8] = {'S', 'W', 'N', 'V', 'E', 'X', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::string& path) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw CheckpointError(path + ": truncated file");
    return value;
}

void append_rows(std::vector<double>& out, const Eigen::Ref<const Eigen::MatrixXd>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
}

template <class M>
std::size_t take_rows(const std::vector<double>& in, std::size_t at, M&& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = in[at++];
    return at;
}

}  // namespace

std::vector<double> to_file_order(const Network& net) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(net.params().size()));
    const auto& d = net.dims();
    if (d.encoder == EncoderKind::Lstm) {
        const auto w = net.lstm();
        const Eigen::Index n = d.hidden;
        for (int g = 0; g < 4; ++g) {
            append_rows(out, w.W.middleRows(g * n, n));
            append_rows(out, w.U.middleRows(g * n, n));
            append_rows(out, w.b.segment(g * n, n));
        }
    }
    const auto m = net.mlp();
    append_rows(out, m.W1);
    append_rows(out, m.b1);
    append_rows(out, m.W2);
    append_rows(out, m.b2);
    append_rows(out, m.W3);
    append_rows(out, m.b3);
    if (d.log_std) append_rows(out, net.log_std());
    return out;
}

void from_file_order(Network& net, const std::vector<double>& values) {
    if (static_cast<Eigen::Index>(values.size()) != net.params().size()) {
        throw CheckpointError("parameter count " + std::to_string(values.size()) +
                              " does not match architecture (" + describe(net.dims()) + ", " +
                              std::to_string(net.params().size()) + " parameters)");
    }
    const auto& d = net.dims();
    std::size_t at = 0;
    if (d.encoder == EncoderKind::Lstm) {
        const Eigen::Index n = d.hidden;
        for (int g = 0; g < 4; ++g) {
            at = take_rows(values, at, net.lstm_W().middleRows(g * n, n));
            at = take_rows(values, at, net.lstm_U().middleRows(g * n, n));
            at = take_rows(values, at, net.lstm_b().segment(g * n, n));
        }
    }
    at = take_rows(values, at, net.W1());
    at = take_rows(values, at, net.b1());
    at = take_rows(values, at, net.W2());
    at = take_rows(values, at, net.b2());
    at = take_rows(values, at, net.W3());
    at = take_rows(values, at, net.b3());
    if (d.log_std) {
        auto ls = net.log_std();
        for (Eigen::Index k = 0; k < ls.size(); ++k) ls[k] = values[at++];
    }
}

void write_parameters(const std::string& path, const std::vector<StoredNetwork>& nets,
                      Precision precision) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(path + ": cannot open for writing");
    const bool single = precision == Precision::Single;
    out.write(single ? kExportMagic : kCheckpointMagic, 8);
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, single ? 4 : 8);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(nets.size()));
    for (const auto& s : nets) {
        const auto& d = s.net.dims();
        put<std::uint32_t>(out, static_cast<std::uint32_t>(s.role));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(d.encoder));
        for (int v : {d.hidden, d.input, d.layer1, d.layer2, d.outputs, d.grid_radial, d.grid_angular}) {
            put<std::uint32_t>(out, static_cast<std::uint32_t>(v));
        }
        put<std::uint32_t>(out, d.log_std ? 1u : 0u);
        const auto values = to_file_order(s.net);
        put<std::uint64_t>(out, values.size());
        for (double v : values) {
            if (single) {
                put<float>(out, static_cast<float>(v));
            } else {
                put<double>(out, v);
            }
        }
    }
    const bool with_optimizer =
        !single && !nets.empty() &&
        std::all_of(nets.begin(), nets.end(), [](const StoredNetwork& s) { return s.adam.has_value(); });
    put<std::uint32_t>(out, with_optimizer ? 1u : 0u);
    if (with_optimizer) {
        for (const auto& s : nets) {
            put<std::int64_t>(out, s.adam->step);
            for (Eigen::Index k = 0; k < s.adam->m.size(); ++k) put<double>(out, s.adam->m[k]);
            for (Eigen::Index k = 0; k < s.adam->v.size(); ++k) put<double>(out, s.adam->v[k]);
        }
    }
    if (!out) throw CheckpointError(path + ": write failed");
}

std::vector<StoredNetwork> read_parameters(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(path + ": cannot open");
    char magic[8];
    in.read(magic, 8);
    if (!in) throw CheckpointError(path + ": truncated file");
    const bool is_export = std::memcmp(magic, kExportMagic, 8) == 0;
    if (!is_export && std::memcmp(magic, kCheckpointMagic, 8) != 0) {
        throw CheckpointError(path + ": not a parameter file (bad magic)");
    }
    const auto version = get<std::uint32_t>(in, path);
    if (version != kVersion) {
        throw CheckpointError(path + ": unsupported format version " + std::to_string(version));
    }
    const auto scalar = get<std::uint32_t>(in, path);
    if (scalar != 4 && scalar != 8) throw CheckpointError(path + ": bad scalar size");
    const auto count = get<std::uint32_t>(in, path);
    if (count > 16) throw CheckpointError(path + ": implausible network count");

    std::vector<StoredNetwork> nets;
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto role = get<std::uint32_t>(in, path);
        const auto encoder = get<std::uint32_t>(in, path);
        if (role > 1 || encoder > 1) throw CheckpointError(path + ": bad network header");
        NetworkDims d;
        d.encoder = static_cast<EncoderKind>(encoder);
        for (int* field : {&d.hidden, &d.input, &d.layer1, &d.layer2, &d.outputs, &d.grid_radial,
                           &d.grid_angular}) {
            const auto v = get<std::uint32_t>(in, path);
            if (v == 0 || v > 100000) throw CheckpointError(path + ": bad dimension in header");
            *field = static_cast<int>(v);
        }
        d.log_std = get<std::uint32_t>(in, path) != 0;
        const auto n_values = get<std::uint64_t>(in, path);
        Network net(d);
        if (n_values != static_cast<std::uint64_t>(net.params().size())) {
            throw CheckpointError(path + ": header declares " + std::to_string(n_values) +
                                  " parameters but " + describe(d) + " needs " +
                                  std::to_string(net.params().size()));
        }
        std::vector<double> values(n_values);
        for (auto& v : values) v = scalar == 4 ? double(get<float>(in, path)) : get<double>(in, path);
        from_file_order(net, values);
        nets.push_back({static_cast<NetworkRole>(role), std::move(net), std::nullopt});
    }
    const auto with_optimizer = get<std::uint32_t>(in, path);
    if (with_optimizer) {
        for (auto& s : nets) {
            AdamState st(s.net.params().size());
            st.step = get<std::int64_t>(in, path);
            for (Eigen::Index k = 0; k < st.m.size(); ++k) st.m[k] = get<double>(in, path);
            for (Eigen::Index k = 0; k < st.v.size(); ++k) st.v[k] = get<double>(in, path);
            s.adam = std::move(st);
        }
    }
    if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError(path + ": trailing bytes");
    return nets;
}

void write_manifest(const std::string& path, const nlohmann::json& manifest) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw CheckpointError(path + ": cannot open for writing");
    out << manifest.dump(2) << '\n';
}

nlohmann::json read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CheckpointError(path + ": manifest not found");
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(path + ": " + e.what());
    }
}

nlohmann::json dims_to_json(const NetworkDims& d) {
    return {{"encoder", to_string(d.encoder)}, {"hidden", d.hidden},       {"input", d.input},
            {"layer1", d.layer1},              {"layer2", d.layer2},       {"outputs", d.outputs},
            {"grid_radial", d.grid_radial},    {"grid_angular", d.grid_angular},
            {"log_std", d.log_std}};
}

NetworkDims dims_from_json(const nlohmann::json& j) {
    try {
        NetworkDims d;
        d.encoder = encoder_from_string(j.at("encoder").get<std::string>());
        d.hidden = j.at("hidden").get<int>();
        d.input = j.at("input").get<int>();
        d.layer1 = j.at("layer1").get<int>();
        d.layer2 = j.at("layer2").get<int>();
        d.outputs = j.at("outputs").get<int>();
        d.grid_radial = j.at("grid_radial").get<int>();
        d.grid_angular = j.at("grid_angular").get<int>();
        d.log_std = j.at("log_std").get<bool>();
        return d;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("manifest dims: ") + e.what());
    }
}

const StoredNetwork& find_role(const std::vector<StoredNetwork>& nets, NetworkRole role) {
    for (const auto& s : nets)
        if (s.role == role) return s;
    throw CheckpointError(role == NetworkRole::Policy ? "no policy network in file"
                                                      : "no value network in file");
}

}  // namespace swarmnav
