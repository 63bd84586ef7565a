#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "geomatch/datakit.hpp"
#include "geomatch/util.hpp"
#include "oracles.hpp"

using namespace geomatch;
using namespace geomatch::datakit;
using geometry::CompositeTransform;
using geometry::PointSet;
using geometry::Vec2;

namespace {

PairRecord labeled_record(std::mt19937_64& rng, int keypoints = 4) {
    std::uniform_real_distribution<double> u(0.05, 0.95);
    PairRecord r;
    r.source = "a.png";
    r.target = "b.png";
    r.category = "cat0";
    r.labeled = true;
    PointSet ks, kt;
    for (int i = 0; i < keypoints; ++i) {
        ks.push_back({quantize_unit_coord(u(rng)), quantize_unit_coord(u(rng))});
        kt.push_back({quantize_unit_coord(u(rng)), quantize_unit_coord(u(rng))});
    }
    r.keypoints_source = ks;
    r.keypoints_target = kt;
    return r;
}

bool records_equal(const PairRecord& a, const PairRecord& b) {
    if (a.source != b.source || a.target != b.target || a.category != b.category ||
        a.labeled != b.labeled || a.flipped != b.flipped) {
        return false;
    }
    auto points_eq = [](const std::optional<PointSet>& x, const std::optional<PointSet>& y) {
        if (x.has_value() != y.has_value()) return false;
        if (!x) return true;
        if (x->size() != y->size()) return false;
        for (size_t i = 0; i < x->size(); ++i) {
            if ((*x)[i].x != (*y)[i].x || (*x)[i].y != (*y)[i].y) return false;
        }
        return true;
    };
    if (!points_eq(a.keypoints_source, b.keypoints_source)) return false;
    if (!points_eq(a.keypoints_target, b.keypoints_target)) return false;
    if (a.gt_transform.has_value() != b.gt_transform.has_value()) return false;
    if (a.gt_transform) {
        if (a.gt_transform->affine.as_array() != b.gt_transform->affine.as_array()) return false;
        if (a.gt_transform->tps.offsets != b.gt_transform->tps.offsets) return false;
    }
    return true;
}

}  // namespace

TEST_SUITE("datakit") {

TEST_CASE("keypoint flip is an exact involution on the quantized lattice") {
    CHECK(1.0 - quantize_unit_coord(0.2) == quantize_unit_coord(0.8));

    std::mt19937_64 rng(201);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double q = quantize_unit_coord(u(rng));
        const double once = 1.0 - q;
        CHECK(1.0 - once == q);  // bit-exact
    }
}

TEST_CASE("flip_record example and involution") {
    std::mt19937_64 rng(203);
    PairRecord r = labeled_record(rng);
    (*r.keypoints_source)[0] = {quantize_unit_coord(0.2), quantize_unit_coord(0.7)};

    std::uniform_real_distribution<double> u(-0.2, 0.2);
    CompositeTransform gt;
    gt.affine = {1 + u(rng), u(rng), u(rng), u(rng), 1 + u(rng), u(rng)};
    for (double& o : gt.tps.offsets) o = u(rng);
    r.gt_transform = gt;

    const PairRecord f = flip_record(r);
    CHECK(f.flipped);
    CHECK((*f.keypoints_source)[0].x == quantize_unit_coord(0.8));
    CHECK((*f.keypoints_source)[0].y == quantize_unit_coord(0.7));

    const PairRecord ff = flip_record(f);
    CHECK(records_equal(ff, r));
}

TEST_CASE("flipped gt transform is the exact mirror conjugation") {
    std::mt19937_64 rng(207);
    std::uniform_real_distribution<double> u(-0.25, 0.25);
    for (int draw = 0; draw < 20; ++draw) {
        CompositeTransform t;
        t.affine = {1 + u(rng), u(rng), u(rng), u(rng), 1 + u(rng), u(rng)};
        for (double& o : t.tps.offsets) o = u(rng);

        PairRecord r;
        r.source = "s";
        r.target = "t";
        r.category = "c";
        r.gt_transform = t;
        const CompositeTransform ft = *flip_record(r).gt_transform;

        const auto solved = geometry::composite_solve(t);
        const auto fsolved = geometry::composite_solve(ft);
        std::uniform_real_distribution<double> pu(-0.9, 0.9);
        for (int k = 0; k < 10; ++k) {
            const Vec2 p{pu(rng), pu(rng)};
            const Vec2 want = geometry::composite_apply(solved, Vec2{-p.x, p.y});
            const Vec2 got = geometry::composite_apply(fsolved, p);
            CHECK(got.x == doctest::Approx(-want.x).epsilon(1e-9));
            CHECK(got.y == doctest::Approx(want.y).epsilon(1e-9));
        }
    }
}

TEST_CASE("image hflip is a bit-exact involution for odd and even widths") {
    std::mt19937_64 rng(211);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int w : {6, 7}) {
        Image img(w, 5, 3);
        for (double& v : img.data) v = u(rng);
        const Image ff = hflip(hflip(img));
        for (size_t i = 0; i < img.data.size(); ++i) CHECK(ff.data[i] == img.data[i]);
    }
}

TEST_CASE("flip_augment sizes and repetitions") {
    std::mt19937_64 rng(213);
    std::vector<PairRecord> records;
    for (int i = 0; i < 700; ++i) {
        PairRecord r = labeled_record(rng);
        r.source = "img" + std::to_string(i) + "_a.png";
        r.target = "img" + std::to_string(i) + "_b.png";
        records.push_back(r);
    }
    const auto grown = flip_augment(records, 2.57, 31);
    // 700 * 2.57 = 1799 appended copies.
    CHECK(std::llabs(static_cast<long long>(grown.size()) - 2499) <= 1);
    for (size_t i = 700; i < grown.size(); ++i) CHECK(grown[i].flipped);

    const auto same = flip_augment(records, 2.57, 31);
    REQUIRE(same.size() == grown.size());
    for (size_t i = 0; i < same.size(); ++i) CHECK(records_equal(same[i], grown[i]));

    CHECK(flip_augment({}, 2.0, 1).empty());
    CHECK_THROWS_AS(flip_augment(records, -1.0, 1), std::invalid_argument);
}

TEST_CASE("synth_pair: determinism and keypoint consistency") {
    std::mt19937_64 base_rng(217);
    const Image base = make_base_image(32, 1, base_rng);

    SynthOptions opts;
    opts.family = TransformFamily::composite;
    opts.strength = 0.35;
    opts.keypoints = 20;

    // 50 pairs x 20 keypoints = 1000 transfer checks.
    for (int draw = 0; draw < 50; ++draw) {
        std::mt19937_64 rng(mix_seed(219, draw));
        const SynthPair sp = synth_pair(base, opts, rng);
        REQUIRE(sp.kp_source.size() == 20);
        const auto solved = geometry::composite_solve(sp.gt);
        for (size_t k = 0; k < sp.kp_source.size(); ++k) {
            const Vec2 t = sp.kp_target[k];
            const Vec2 mapped = geometry::composite_apply(
                solved, Vec2{unit_to_norm(t.x), unit_to_norm(t.y)});
            const double ex = norm_to_unit(mapped.x) - sp.kp_source[k].x;
            const double ey = norm_to_unit(mapped.y) - sp.kp_source[k].y;
            CHECK(std::hypot(ex, ey) <= 1e-6);
            CHECK(sp.kp_source[k].x >= 0.0);
            CHECK(sp.kp_source[k].x <= 1.0);
        }
    }

    std::mt19937_64 r1(7), r2(7);
    const SynthPair a = synth_pair(base, opts, r1);
    const SynthPair b = synth_pair(base, opts, r2);
    CHECK(a.gt.affine.as_array() == b.gt.affine.as_array());
    CHECK(a.gt.tps.offsets == b.gt.tps.offsets);
    CHECK(a.target.data == b.target.data);
}

TEST_CASE("synth_pair at vanishing strength approaches the identity") {
    std::mt19937_64 rng(223);
    const Image base = make_base_image(24, 0, rng);
    SynthOptions opts;
    opts.strength = 1e-9;
    opts.keypoints = 3;
    std::mt19937_64 prng(5);
    const SynthPair sp = synth_pair(base, opts, prng);

    for (double v : sp.gt.tps.offsets) CHECK(std::abs(v) <= 1e-9);
    CHECK(sp.gt.affine.a11 == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(std::abs(sp.gt.affine.tx) <= 1e-9);
    // Interior pixels of the target match the source.
    for (int y = 4; y < 20; ++y) {
        for (int x = 4; x < 20; ++x) {
            CHECK(sp.target.at(x, y, 0) == doctest::Approx(sp.source.at(x, y, 0)).epsilon(1e-6));
        }
    }
    CHECK_THROWS_AS(synth_pair(base, SynthOptions{TransformFamily::affine, 0.0, 3, 0.0}, prng),
                    std::invalid_argument);
}

TEST_CASE("build_unlabeled: caps, stripping, deny list") {
    std::map<std::string, std::vector<std::string>> images;
    images["cat0"] = {"c0_0.png", "c0_1.png", "c0_2.png"};
    images["cat1"] = {"c1_0.png", "c1_1.png", "c1_2.png", "c1_3.png", "c1_4.png"};

    std::mt19937_64 rng(229);
    std::vector<PairRecord> labeled{labeled_record(rng), labeled_record(rng)};
    labeled[1].gt_transform = CompositeTransform::identity();

    const UnlabeledBuild build = build_unlabeled(images, 100, labeled, {}, 3);
    CHECK(build.per_category.at("cat0") == 6);  // 3 images -> 6 ordered pairs
    CHECK(build.per_category.at("cat1") == 20);
    CHECK(build.capped_total == 26);
    CHECK(build.stripped_total == 2);
    CHECK(build.records.size() == 28);

    // Cap enforcement.
    const UnlabeledBuild capped = build_unlabeled(images, 4, labeled, {}, 3);
    for (const auto& [cat, count] : capped.per_category) CHECK(count <= 4);

    // Stripped labeled records: present by refs, unlabeled, no correspondence.
    int stripped_found = 0;
    for (const auto& r : capped.records) {
        CHECK(!r.labeled);
        CHECK(!r.keypoints_source);
        CHECK(!r.keypoints_target);
        CHECK(!r.gt_transform);
        if (r.source == labeled[0].source && r.target == labeled[0].target) ++stripped_found;
    }
    CHECK(stripped_found >= 1);

    // Deny list removes specific ordered pairs.
    const UnlabeledBuild denied =
        build_unlabeled(images, 100, {}, {{"c0_0.png", "c0_1.png"}}, 3);
    CHECK(denied.per_category.at("cat0") == 5);
    for (const auto& r : denied.records) {
        CHECK(!(r.source == "c0_0.png" && r.target == "c0_1.png"));
    }

    // Determinism.
    const UnlabeledBuild again = build_unlabeled(images, 4, labeled, {}, 3);
    REQUIRE(again.records.size() == capped.records.size());
    for (size_t i = 0; i < again.records.size(); ++i) {
        CHECK(records_equal(again.records[i], capped.records[i]));
    }

    CHECK_THROWS_AS(build_unlabeled({}, 100, labeled, {}, 3), std::invalid_argument);
    CHECK_THROWS_AS(build_unlabeled(images, 0, labeled, {}, 3), std::invalid_argument);
}

TEST_CASE("manifest save/load round trip") {
    const std::string dir = oracles::temp_dir("manifest");
    // Images must exist for load_manifest.
    std::mt19937_64 rng(233);
    save_image(make_base_image(16, 0, rng), dir + "/a.png");
    save_image(make_base_image(16, 1, rng), dir + "/b.png");

    Manifest m;
    m.seed_provenance = "unit test";
    m.metadata["note"] = "round trip";
    PairRecord r = labeled_record(rng);
    m.pairs.push_back(r);
    PairRecord u;
    u.source = "a.png";
    u.target = "b.png";
    u.category = "cat1";
    m.pairs.push_back(u);

    const std::string path = dir + "/manifest.json";
    save_manifest(m, path);
    const Manifest loaded = load_manifest(path);

    CHECK(loaded.seed_provenance == m.seed_provenance);
    CHECK(loaded.metadata.at("note") == "round trip");
    REQUIRE(loaded.pairs.size() == 2);
    CHECK(records_equal(loaded.pairs[0], m.pairs[0]));
    CHECK(records_equal(loaded.pairs[1], m.pairs[1]));

    // Empty pair list is a valid manifest.
    Manifest empty;
    save_manifest(empty, dir + "/empty.json");
    CHECK(load_manifest(dir + "/empty.json").pairs.empty());

    std::filesystem::remove_all(dir);
}

TEST_CASE("manifest validation failures") {
    const std::string dir = oracles::temp_dir("manifest_bad");
    std::mt19937_64 rng(239);
    save_image(make_base_image(16, 0, rng), dir + "/a.png");
    save_image(make_base_image(16, 0, rng), dir + "/b.png");

    // Keypoint out of [0,1] names the record index.
    Manifest m;
    PairRecord r = labeled_record(rng);
    (*r.keypoints_source)[0].x = 1.2;
    m.pairs.push_back(r);
    CHECK_THROWS_WITH_AS(save_manifest(m, dir + "/bad.json"), doctest::Contains("pair 0"),
                         std::runtime_error);

    // Unknown fields are rejected.
    std::ofstream(dir + "/unknown.json")
        << R"({"format":"geomatch-manifest","version":1,"pairs":[],"surprise":1})";
    CHECK_THROWS_WITH_AS(load_manifest(dir + "/unknown.json"), doctest::Contains("surprise"),
                         std::runtime_error);

    // Malformed JSON.
    std::ofstream(dir + "/broken.json") << "{not json";
    CHECK_THROWS_AS(load_manifest(dir + "/broken.json"), std::runtime_error);

    // Missing image file.
    Manifest missing;
    PairRecord mr;
    mr.source = "a.png";
    mr.target = "nope.png";
    mr.category = "c";
    missing.pairs.push_back(mr);
    save_manifest(missing, dir + "/missing.json");
    CHECK_THROWS_WITH_AS(load_manifest(dir + "/missing.json"), doctest::Contains("missing image"),
                         std::runtime_error);

    // Unlabeled records must not carry keypoints.
    Manifest stray;
    PairRecord sr = labeled_record(rng);
    sr.labeled = false;
    stray.pairs.push_back(sr);
    CHECK_THROWS_AS(save_manifest(stray, dir + "/stray.json"), std::runtime_error);

    std::filesystem::remove_all(dir);
}

TEST_CASE("synth_dataset writes a loadable dataset") {
    const std::string dir = oracles::temp_dir("synthset");
    SynthDatasetConfig cfg;
    cfg.num_pairs = 6;
    cfg.image_size = 16;
    cfg.categories = 3;
    cfg.seed = 11;
    cfg.synth.keypoints = 4;
    cfg.synth.strength = 0.3;

    const Manifest m = synth_dataset(dir, cfg);
    CHECK(m.pairs.size() == 6);

    const Manifest loaded = load_manifest(dir + "/manifest.json");
    REQUIRE(loaded.pairs.size() == 6);
    CHECK(loaded.metadata.at("synth").at("seed") == 11);
    for (const auto& r : loaded.pairs) {
        CHECK(r.labeled);
        CHECK(r.gt_transform.has_value());
    }

    const auto pairs = load_pairs(loaded, dir + "/manifest.json", 16, 3);
    REQUIRE(pairs.size() == 6);
    CHECK(pairs[0].source.width == 16);
    CHECK(pairs[0].source.channels == 3);
    CHECK(pairs[0].kp_source_norm.size() == 4);
    // Unit -> normalized conversion.
    CHECK(pairs[0].kp_source_norm[0].x ==
          doctest::Approx(2.0 * (*loaded.pairs[0].keypoints_source)[0].x - 1.0).epsilon(1e-15));

    // Same seed regenerates the identical dataset.
    const std::string dir2 = oracles::temp_dir("synthset2");
    const Manifest m2 = synth_dataset(dir2, cfg);
    REQUIRE(m2.pairs.size() == m.pairs.size());
    for (size_t i = 0; i < m.pairs.size(); ++i) CHECK(records_equal(m.pairs[i], m2.pairs[i]));

    std::filesystem::remove_all(dir);
    std::filesystem::remove_all(dir2);
}

TEST_CASE("load_pairs applies the flip flag to images") {
    const std::string dir = oracles::temp_dir("flipload");
    std::mt19937_64 rng(241);
    const Image base = make_base_image(16, 0, rng);
    save_image(base, dir + "/a.png");
    save_image(base, dir + "/b.png");

    Manifest m;
    PairRecord r;
    r.source = "a.png";
    r.target = "b.png";
    r.category = "c";
    m.pairs.push_back(r);
    m.pairs.push_back(flip_record(r));
    save_manifest(m, dir + "/m.json");

    const auto pairs = load_pairs(load_manifest(dir + "/m.json"), dir + "/m.json", 16, 3);
    REQUIRE(pairs.size() == 2);
    const Image& plain = pairs[0].source;
    const Image& flipped = pairs[1].source;
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
            for (int c = 0; c < 3; ++c) {
                CHECK(flipped.at(x, y, c) == doctest::Approx(plain.at(15 - x, y, c)).epsilon(1e-12));
            }
        }
    }
    std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
