#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "geomatch/gradcheck.hpp"
#include "geomatch/matchnet.hpp"
#include "oracles.hpp"

using namespace geomatch;
using namespace geomatch::matchnet;

namespace {

NetConfig tiny_config() {
    NetConfig cfg;
    cfg.image_size = 8;
    cfg.in_channels = 1;
    cfg.feature_channels = {2, 2};
    cfg.head_conv1_channels = 2;
    cfg.head_conv2_channels = 2;
    cfg.head_init_scale = 0.05;
    return cfg;
}

Image random_image(int size, int channels, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(size, size, channels);
    for (double& v : img.data) v = u(rng);
    return img;
}

double tensor_sum(const Tensor& t) {
    double acc = 0.0;
    for (double v : t.v) acc += v;
    return acc;
}

}  // namespace

TEST_SUITE("matchnet") {

TEST_CASE("l2_normalize basics") {
    Tensor t(1, 2, 3);
    t.at(0, 0, 0) = 3.0;
    t.at(0, 0, 1) = 4.0;
    t.at(0, 0, 2) = 0.0;
    // second location stays all-zero
    const Tensor n = l2_normalize(t);
    CHECK(n.at(0, 0, 0) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(n.at(0, 0, 1) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(n.at(0, 0, 2) == 0.0);
    CHECK(n.at(0, 1, 0) == 0.0);
    CHECK(n.at(0, 1, 1) == 0.0);
}

TEST_CASE("l2_normalize norm scan over random maps") {
    std::mt19937_64 rng(101);
    std::normal_distribution<double> g(0.0, 2.0);
    Tensor t(5, 7, 11);
    for (double& v : t.v) v = g(rng);
    const Tensor n = l2_normalize(t);
    for (int y = 0; y < t.h; ++y) {
        for (int x = 0; x < t.w; ++x) {
            double sq = 0.0;
            for (int c = 0; c < t.c; ++c) sq += n.at(y, x, c) * n.at(y, x, c);
            const double norm = std::sqrt(sq);
            CHECK((norm == 0.0 || (norm >= 1.0 - 1e-6 && norm <= 1.0 + 1e-6)));
        }
    }
}

TEST_CASE("correlate self-similarity and loop oracle") {
    std::mt19937_64 rng(103);
    std::normal_distribution<double> g(0.0, 1.0);
    Tensor f(3, 3, 4);
    for (double& v : f.v) v = g(rng);
    const Tensor fn = l2_normalize(f);

    const Tensor self = correlate(fn, fn);
    for (int y = 0; y < 3; ++y) {
        for (int x = 0; x < 3; ++x) {
            CHECK(self.at(y, x, y * 3 + x) == doctest::Approx(1.0).epsilon(1e-12));
        }
    }

    Tensor fb(3, 3, 4);
    for (double& v : fb.v) v = g(rng);
    const Tensor fbn = l2_normalize(fb);
    const Tensor vol = correlate(fn, fbn);
    for (int y = 0; y < 3; ++y) {
        for (int x = 0; x < 3; ++x) {
            for (int k = 0; k < 9; ++k) {
                CHECK(vol.at(y, x, k) >= -1.0 - 1e-12);
                CHECK(vol.at(y, x, k) <= 1.0 + 1e-12);
                double want = 0.0;
                for (int c = 0; c < 4; ++c) {
                    want += fbn.at(y, x, c) * fn.at(k / 3, k % 3, c);
                }
                CHECK(vol.at(y, x, k) == doctest::Approx(want).epsilon(1e-12));
            }
        }
    }

    // Orthogonal maps correlate to zero.
    Tensor ea(2, 2, 2), eb(2, 2, 2);
    for (int i = 0; i < 4; ++i) {
        ea.v[i * 2] = 1.0;
        eb.v[i * 2 + 1] = 1.0;
    }
    const Tensor z = correlate(ea, eb);
    for (double v : z.v) CHECK(v == 0.0);

    CHECK_THROWS_AS(correlate(Tensor(2, 2, 2), Tensor(2, 2, 3)), std::invalid_argument);
}

TEST_CASE("extract_features: zero image gives zero map, calls are deterministic") {
    const NetConfig cfg = tiny_config();
    const ModelParams params = ModelParams::init(cfg, 5);

    const Image zero(8, 8, 1);
    const Tensor f = extract_features(zero, params);
    for (double v : f.v) CHECK(v == 0.0);

    const Image img = random_image(8, 1, 7);
    const Tensor a = extract_features(img, params);
    const Tensor b = extract_features(img, params);
    REQUIRE(a.v.size() == b.v.size());
    for (size_t i = 0; i < a.v.size(); ++i) CHECK(a.v[i] == b.v[i]);

    CHECK_THROWS_AS(extract_features(Image(9, 9, 1), params), std::invalid_argument);
    CHECK_THROWS_AS(extract_features(Image(8, 8, 3), params), std::invalid_argument);
}

TEST_CASE("zero-initialized heads return the identity composite") {
    NetConfig cfg = tiny_config();
    cfg.head_init_scale = 0.0;
    const ModelParams params = ModelParams::init(cfg, 1);

    const auto t = estimate_transform(random_image(8, 1, 11), random_image(8, 1, 13), params);
    CHECK(t.affine.a11 == 1.0);
    CHECK(t.affine.a12 == 0.0);
    CHECK(t.affine.tx == 0.0);
    CHECK(t.affine.a21 == 0.0);
    CHECK(t.affine.a22 == 1.0);
    CHECK(t.affine.ty == 0.0);
    for (double o : t.tps.offsets) CHECK(o == 0.0);
}

TEST_CASE("estimate_transform is bitwise deterministic") {
    const ModelParams params = ModelParams::init(tiny_config(), 17);
    const Image a = random_image(8, 1, 19), b = random_image(8, 1, 23);
    const auto t1 = estimate_transform(a, b, params);
    const auto t2 = estimate_transform(a, b, params);
    CHECK(t1.affine.as_array() == t2.affine.as_array());
    CHECK(t1.tps.offsets == t2.tps.offsets);
}

// Frozen outputs for a fixed seed and input, recorded at first release.
TEST_CASE("extract_features and regress golden values") {
    const ModelParams params = ModelParams::init(tiny_config(), 42);
    const Image img = random_image(8, 1, 99);

    const Tensor f = extract_features(img, params);
    const auto est = estimate_transform(img, random_image(8, 1, 100), params);

    char feat_sum[32], aff0[32], tps0[32];
    std::snprintf(feat_sum, sizeof(feat_sum), "%.13e", tensor_sum(f));
    std::snprintf(aff0, sizeof(aff0), "%.13e", est.affine.tx);
    std::snprintf(tps0, sizeof(tps0), "%.13e", est.tps.offsets[0]);
    CHECK(std::string(feat_sum) == "8.8975143802864e+00");
    CHECK(std::string(aff0) == "-1.1886931811109e-02");
    CHECK(std::string(tps0) == "-8.2012033558geom");
}

TEST_CASE("backward: zero upstream gradient gives zero parameter gradients") {
    const ModelParams params = ModelParams::init(tiny_config(), 29);
    const auto trace = forward_pair(random_image(8, 1, 31), random_image(8, 1, 37), params, false);

    ModelParams grad = ModelParams::zeros_like(params);
    backward(trace, params, {}, grad);
    grad.visit([](const std::string&, std::vector<double>& v) {
        for (double x : v) CHECK(x == 0.0);
    });
}

TEST_CASE("backward without a recorded forward is a state error") {
    const ModelParams params = ModelParams::init(tiny_config(), 41);
    ForwardTrace empty;
    ModelParams grad = ModelParams::zeros_like(params);
    CHECK_THROWS_AS(backward(empty, params, {}, grad), std::logic_error);
}

TEST_CASE("batch gradient equals the sum of per-pair gradients") {
    const ModelParams params = ModelParams::init(tiny_config(), 43);
    const auto t1 = forward_pair(random_image(8, 1, 47), random_image(8, 1, 53), params, false);
    const auto t2 = forward_pair(random_image(8, 1, 59), random_image(8, 1, 61), params, false);

    std::array<double, 24> d{};
    for (int i = 0; i < 24; ++i) d[i] = 0.01 * (i + 1);

    ModelParams joint = ModelParams::zeros_like(params);
    backward(t1, params, d, joint);
    backward(t2, params, d, joint);

    ModelParams g1 = ModelParams::zeros_like(params);
    ModelParams g2 = ModelParams::zeros_like(params);
    backward(t1, params, d, g1);
    backward(t2, params, d, g2);

    std::vector<const std::vector<double>*> a1, a2, aj;
    g1.visit([&](const std::string&, const std::vector<double>& v) { a1.push_back(&v); });
    g2.visit([&](const std::string&, const std::vector<double>& v) { a2.push_back(&v); });
    joint.visit([&](const std::string&, const std::vector<double>& v) { aj.push_back(&v); });
    for (size_t s = 0; s < aj.size(); ++s) {
        for (size_t i = 0; i < aj[s]->size(); ++i) {
            CHECK((*aj[s])[i] == (*a1[s])[i] + (*a2[s])[i]);
        }
    }
}

TEST_CASE("network gradients match finite differences (heads)") {
    gradcheck::Options opts;
    opts.seed = 67;
    opts.draws = 3;
    const auto r = gradcheck::check_network_gradients(opts);
    CHECK(r.failures == 0);
    CHECK(r.checks == 3);
    CHECK(r.worst_rel_err <= 1e-4);
}

TEST_CASE("network gradients match finite differences (features unfrozen)") {
    gradcheck::Options opts;
    opts.seed = 71;
    opts.draws = 2;
    opts.check_features = true;
    const auto r = gradcheck::check_network_gradients(opts);
    CHECK(r.failures == 0);
}

TEST_CASE("checkpoint round trip preserves parameters") {
    const std::string dir = oracles::temp_dir("ckpt");
    const std::string path = dir + "/model.ckpt";

    const ModelParams params = ModelParams::init(tiny_config(), 73);
    save_checkpoint(path, params, {{"seed", 73}});

    nlohmann::json meta;
    const ModelParams loaded = load_checkpoint(path, &meta);
    CHECK(meta.at("seed") == 73);
    CHECK(loaded.config == params.config);

    std::vector<const std::vector<double>*> a, b;
    params.visit([&](const std::string&, const std::vector<double>& v) { a.push_back(&v); });
    loaded.visit([&](const std::string&, const std::vector<double>& v) { b.push_back(&v); });
    REQUIRE(a.size() == b.size());
    for (size_t s = 0; s < a.size(); ++s) {
        REQUIRE(a[s]->size() == b[s]->size());
        for (size_t i = 0; i < a[s]->size(); ++i) {
            // Stored as float32.
            CHECK(static_cast<double>(static_cast<float>((*a[s])[i])) == (*b[s])[i]);
        }
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint loader rejects unknown versions and garbage") {
    const std::string dir = oracles::temp_dir("ckpt_bad");
    const std::string path = dir + "/model.ckpt";
    const ModelParams params = ModelParams::init(tiny_config(), 79);
    save_checkpoint(path, params, {});

    // Bump the version field (bytes 4..7).
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(4);
        const char v2[4] = {2, 0, 0, 0};
        f.write(v2, 4);
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("version"),
                         std::runtime_error);

    const std::string not_ckpt = dir + "/plain.txt";
    std::ofstream(not_ckpt) << "hello";
    CHECK_THROWS_AS(load_checkpoint(not_ckpt), std::runtime_error);
    CHECK_THROWS_AS(load_checkpoint(dir + "/missing.ckpt"), std::runtime_error);
    std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
