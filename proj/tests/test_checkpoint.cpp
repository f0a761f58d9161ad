#include "swarmnav/checkpoint.hpp"
#include "swarmnav/error.hpp"
#include "swarmnav/rng.hpp"
#include "swarmnav/sim.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace swarmnav;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / ("swarmnav_test_" + name);
}

Network random_net(const NetworkDims& d, std::uint64_t seed) {
    Network n(d);
    Rng rng(seed);
    initialize(n, rng);
    for (Eigen::Index k = 0; k < n.params().size(); ++k) n.params()[k] += rng.uniform(-0.1, 0.1);
    return n;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(FileOrder, GateBlocksRowMajor) {
    NetworkDims d = NetworkDims::policy(EncoderKind::Lstm, 2);
    d.layer1 = 3;
    d.layer2 = 3;
    Network net(d);
    net.params().setZero();
    auto W = net.lstm_W();
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 3; ++c) W(r, c) = 100 * r + c;
    auto U = net.lstm_U();
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 2; ++c) U(r, c) = -(100 * r + c) - 1;
    net.lstm_b() = Eigen::VectorXd::LinSpaced(8, 1000, 1007);
    const auto f = to_file_order(net);
    // W_i (2x3) row-major, then U_i (2x2), then b_i (2), then W_f ...
    const std::vector<double> head{0, 1, 2, 100, 101, 102, -1, -2, -101, -102, 1000, 1001,
                                   200, 201, 202, 300, 301, 302};
    for (std::size_t k = 0; k < head.size(); ++k) EXPECT_EQ(f[k], head[k]) << k;
    EXPECT_EQ(f.size(), std::size_t(net.params().size()));

    Network back(d);
    from_file_order(back, f);
    EXPECT_EQ(back.params(), net.params());
}

TEST(Checkpoint, DoubleRoundTripIsExact) {
    const auto path = temp_file("ckpt.bin");
    std::vector<StoredNetwork> nets;
    nets.push_back({NetworkRole::Policy, random_net(NetworkDims::policy(), 1), std::nullopt});
    AdamState adam(ParamLayout(NetworkDims::value()).size);
    adam.m.setConstant(0.25);
    adam.v.setConstant(1e-7);
    adam.step = 42;
    nets.push_back({NetworkRole::Value, random_net(NetworkDims::value(), 2), adam});
    nets[0].adam = AdamState(nets[0].net.params().size());
    write_parameters(path.string(), nets, Precision::Double);
    const auto back = read_parameters(path.string());
    fs::remove(path);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(find_role(back, NetworkRole::Policy).net.params(), nets[0].net.params());
    const auto& v = find_role(back, NetworkRole::Value);
    EXPECT_EQ(v.net.params(), nets[1].net.params());
    ASSERT_TRUE(v.adam.has_value());
    EXPECT_EQ(v.adam->step, 42);
    EXPECT_EQ(v.adam->m, adam.m);
    EXPECT_EQ(v.adam->v, adam.v);
    EXPECT_EQ(v.net.dims(), NetworkDims::value());
}

TEST(Checkpoint, SingleExportRoundTrip) {
    const auto path = temp_file("export.bin");
    for (EncoderKind enc : {EncoderKind::Lstm, EncoderKind::Occupancy}) {
        const Network net = random_net(NetworkDims::policy(enc), 3);
        write_parameters(path.string(), {{NetworkRole::Policy, net, std::nullopt}}, Precision::Single);
        const auto back = read_parameters(path.string());
        ASSERT_EQ(back.size(), 1u);
        EXPECT_FALSE(back[0].adam.has_value());
        const Eigen::VectorXd rounded = net.params().cast<float>().cast<double>();
        EXPECT_EQ(back[0].net.params(), rounded);
        EXPECT_EQ(fs::file_size(path), 20u + 40u + 8u + 4u * std::size_t(net.params().size()) + 4u);
        const auto bytes = slurp(path);
        EXPECT_EQ(std::string(bytes.data(), 8), "SWNVEXPT");
    }
    fs::remove(path);
}

TEST(Checkpoint, ExportForwardMatchesWithinSinglePrecision) {
    const auto path = temp_file("export_fwd.bin");
    Rng rng(9);
    for (EncoderKind enc : {EncoderKind::Lstm, EncoderKind::Occupancy}) {
        const Network net = random_net(NetworkDims::policy(enc), 5);
        write_parameters(path.string(), {{NetworkRole::Policy, net, std::nullopt}}, Precision::Single);
        const auto back = read_parameters(path.string());
        EXPECT_EQ(back[0].net.dims(), net.dims());
        for (int trial = 0; trial < 50; ++trial) {
            EgoObservation obs;
            obs.bearing_to_destination = rng.uniform(-3.0, 3.0);
            const int n = int(rng.uniform(0.0, 6.0));
            for (int k = 0; k < n; ++k) {
                obs.neighbors.push_back({rng.uniform(0.5, 40.0), rng.uniform(-3.1, 3.1), rng.uniform(-3.1, 3.1)});
            }
            const Eigen::Vector2d a = policy_forward(net, obs, {});
            const Eigen::Vector2d b = policy_forward(back[0].net, obs, {});
            EXPECT_LE((a - b).norm(), 1e-5 * std::max(a.norm(), 1e-3)) << "trial " << trial;
        }
    }
    fs::remove(path);
}

TEST(Checkpoint, CorruptFilesRejected) {
    const auto path = temp_file("bad.bin");
    const Network net = random_net(NetworkDims::policy(EncoderKind::Lstm, 4), 4);
    write_parameters(path.string(), {{NetworkRole::Policy, net, std::nullopt}}, Precision::Double);
    auto bytes = slurp(path);

    auto write_bytes = [&](const std::vector<char>& b) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(b.data(), std::streamsize(b.size()));
    };
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    write_bytes(bad_magic);
    EXPECT_THROW(read_parameters(path.string()), CheckpointError);

    auto bad_version = bytes;
    bad_version[8] = 9;
    write_bytes(bad_version);
    EXPECT_THROW(read_parameters(path.string()), CheckpointError);

    auto truncated = bytes;
    truncated.resize(truncated.size() / 2);
    write_bytes(truncated);
    EXPECT_THROW(read_parameters(path.string()), CheckpointError);

    auto trailing = bytes;
    trailing.push_back('z');
    write_bytes(trailing);
    EXPECT_THROW(read_parameters(path.string()), CheckpointError);

    fs::remove(path);
    EXPECT_THROW(read_parameters(path.string()), CheckpointError);
}

TEST(Manifest, DimsRoundTrip) {
    for (const NetworkDims& d : {NetworkDims::policy(), NetworkDims::value(EncoderKind::Occupancy, 17)}) {
        EXPECT_EQ(dims_from_json(dims_to_json(d)), d);
    }
    const auto path = temp_file("manifest.json");
    nlohmann::json m = {{"policy", dims_to_json(NetworkDims::policy())}, {"seed", 12}};
    write_manifest(path.string(), m);
    EXPECT_EQ(read_manifest(path.string()), m);
    fs::remove(path);
}

TEST(FindRole, MissingRoleThrows) {
    std::vector<StoredNetwork> nets;
    nets.push_back({NetworkRole::Policy, Network(NetworkDims::policy(EncoderKind::Lstm, 2)), std::nullopt});
    EXPECT_NO_THROW(find_role(nets, NetworkRole::Policy));
    EXPECT_THROW(find_role(nets, NetworkRole::Value), CheckpointError);
}
