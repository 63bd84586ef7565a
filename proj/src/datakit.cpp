#include "geomatch/datakit.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "geomatch/util.hpp"

namespace geomatch::datakit {

namespace fs = std::filesystem;
using geometry::CompositeTransform;
using geometry::PointSet;
using geometry::Vec2;

double quantize_unit_coord(double v) {
    if (!std::isfinite(v)) throw std::invalid_argument("keypoint coordinate must be finite");
    constexpr double kScale = 4294967296.0;  // 2^32
    return std::round(v * kScale) / kScale;
}

PointSet unit_to_norm(const PointSet& pts) {
    PointSet out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back({unit_to_norm(p.x), unit_to_norm(p.y)});
    return out;
}

PointSet norm_to_unit(const PointSet& pts) {
    PointSet out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back({norm_to_unit(p.x), norm_to_unit(p.y)});
    return out;
}

// --- Manifest serialization -------------------------------------------------------

namespace {

void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key())) {
            throw std::runtime_error(where + ": unknown field '" + item.key() + "'");
        }
    }
}

nlohmann::json points_to_json(const PointSet& pts) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : pts) arr.push_back({p.x, p.y});
    return arr;
}

PointSet points_from_json(const nlohmann::json& arr, const std::string& where) {
    if (!arr.is_array()) throw std::runtime_error(where + ": keypoints must be an array");
    PointSet pts;
    for (const auto& e : arr) {
        if (!e.is_array() || e.size() != 2) {
            throw std::runtime_error(where + ": keypoint entries must be [x, y]");
        }
        pts.push_back({quantize_unit_coord(e[0].get<double>()),
                       quantize_unit_coord(e[1].get<double>())});
    }
    return pts;
}

nlohmann::json transform_to_json(const CompositeTransform& t) {
    return {{"affine", t.affine.as_array()}, {"tps", t.tps.offsets}};
}

CompositeTransform transform_from_json(const nlohmann::json& j, const std::string& where) {
    reject_unknown_keys(j, {"affine", "tps"}, where + ".gt_transform");
    const auto aff = j.at("affine").get<std::vector<double>>();
    const auto tps = j.at("tps").get<std::vector<double>>();
    if (aff.size() != 6 || tps.size() != 18) {
        throw std::runtime_error(where + ": gt_transform needs 6 affine + 18 tps values");
    }
    CompositeTransform t;
    t.affine = geometry::AffineParams::from_array({aff[0], aff[1], aff[2], aff[3], aff[4], aff[5]});
    std::copy(tps.begin(), tps.end(), t.tps.offsets.begin());
    return t;
}

nlohmann::json pair_to_json(const PairRecord& r) {
    nlohmann::json j{{"source", r.source},
                     {"target", r.target},
                     {"category", r.category},
                     {"labeled", r.labeled}};
    if (r.flipped) j["flipped"] = true;
    if (r.keypoints_source) j["keypoints_source"] = points_to_json(*r.keypoints_source);
    if (r.keypoints_target) j["keypoints_target"] = points_to_json(*r.keypoints_target);
    if (r.gt_transform) j["gt_transform"] = transform_to_json(*r.gt_transform);
    return j;
}

PairRecord pair_from_json(const nlohmann::json& j, const std::string& where) {
    reject_unknown_keys(j,
                        {"source", "target", "category", "labeled", "flipped",
                         "keypoints_source", "keypoints_target", "gt_transform"},
                        where);
    PairRecord r;
    r.source = j.at("source").get<std::string>();
    r.target = j.at("target").get<std::string>();
    r.category = j.at("category").get<std::string>();
    r.labeled = j.at("labeled").get<bool>();
    r.flipped = j.value("flipped", false);
    if (j.contains("keypoints_source")) r.keypoints_source = points_from_json(j["keypoints_source"], where);
    if (j.contains("keypoints_target")) r.keypoints_target = points_from_json(j["keypoints_target"], where);
    if (j.contains("gt_transform")) r.gt_transform = transform_from_json(j["gt_transform"], where);
    return r;
}

void validate_record(const PairRecord& r, const std::string& where) {
    if (r.source.empty() || r.target.empty()) {
        throw std::runtime_error(where + ": image references must be nonempty");
    }
    if (r.category.empty()) throw std::runtime_error(where + ": category must be nonempty");

    if (r.labeled) {
        if (!r.keypoints_source || !r.keypoints_target) {
            throw std::runtime_error(where + ": labeled record is missing keypoints");
        }
        if (r.keypoints_source->empty() ||
            r.keypoints_source->size() != r.keypoints_target->size()) {
            throw std::runtime_error(where + ": keypoint sets must be matched and nonempty");
        }
        auto check_range = [&where](const PointSet& pts, const char* name) {
            for (const auto& p : pts) {
                if (p.x < 0.0 || p.x > 1.0 || p.y < 0.0 || p.y > 1.0) {
                    throw std::runtime_error(where + ": " + name + " coordinate out of [0,1]");
                }
            }
        };
        check_range(*r.keypoints_source, "keypoints_source");
        check_range(*r.keypoints_target, "keypoints_target");
    } else if (r.keypoints_source || r.keypoints_target) {
        throw std::runtime_error(where + ": unlabeled record must not carry keypoints");
    }

    if (r.gt_transform && r.labeled) {
        // Synthetic pairs: the stored transform must reproduce the keypoint
        // correspondence (target frame -> source frame).
        const auto solved = geometry::composite_solve(*r.gt_transform);
        for (size_t k = 0; k < r.keypoints_target->size(); ++k) {
            const Vec2 t = (*r.keypoints_target)[k];
            const Vec2 s = (*r.keypoints_source)[k];
            const Vec2 mapped =
                geometry::composite_apply(solved, Vec2{unit_to_norm(t.x), unit_to_norm(t.y)});
            const double ex = norm_to_unit(mapped.x) - s.x;
            const double ey = norm_to_unit(mapped.y) - s.y;
            if (std::hypot(ex, ey) > 1e-6) {
                throw std::runtime_error(where + ": keypoints inconsistent with gt_transform");
            }
        }
    }
}

}  // namespace

void validate_manifest(const Manifest& m) {
    if (m.coordinates != "unit") {
        throw std::runtime_error("manifest: unsupported coordinate convention '" + m.coordinates + "'");
    }
    for (size_t i = 0; i < m.pairs.size(); ++i) {
        validate_record(m.pairs[i], "pair " + std::to_string(i));
    }
}

void save_manifest(const Manifest& m, const std::string& path) {
    validate_manifest(m);
    nlohmann::json j{{"format", "geomatch-manifest"},
                     {"version", 1},
                     {"image_root", m.image_root},
                     {"coordinates", m.coordinates},
                     {"seed_provenance", m.seed_provenance},
                     {"metadata", m.metadata},
                     {"pairs", nlohmann::json::array()}};
    for (const auto& r : m.pairs) j["pairs"].push_back(pair_to_json(r));

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("failed to write manifest: " + path);
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);

    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed manifest JSON in " + path + ": " + e.what());
    }
    reject_unknown_keys(
        j, {"format", "version", "image_root", "coordinates", "seed_provenance", "metadata", "pairs"},
        "manifest");
    if (j.value("format", "") != "geomatch-manifest") {
        throw std::runtime_error("not a geomatch manifest: " + path);
    }
    if (j.value("version", 0) != 1) {
        throw std::runtime_error("unknown manifest version in " + path);
    }

    Manifest m;
    m.image_root = j.value("image_root", ".");
    m.coordinates = j.value("coordinates", "unit");
    m.seed_provenance = j.value("seed_provenance", "");
    if (j.contains("metadata")) m.metadata = j["metadata"];
    const auto& pairs = j.at("pairs");
    if (!pairs.is_array()) throw std::runtime_error("manifest: 'pairs' must be an array");
    for (size_t i = 0; i < pairs.size(); ++i) {
        m.pairs.push_back(pair_from_json(pairs[i], "pair " + std::to_string(i)));
    }
    validate_manifest(m);

    const fs::path root = fs::path(path).parent_path() / m.image_root;
    for (size_t i = 0; i < m.pairs.size(); ++i) {
        for (const std::string& ref : {m.pairs[i].source, m.pairs[i].target}) {
            if (!fs::exists(root / ref)) {
                throw std::runtime_error("pair " + std::to_string(i) + ": missing image file " +
                                         (root / ref).string());
            }
        }
    }
    return m;
}

// --- Synthetic pairs ------------------------------------------------------------

TransformFamily family_from_string(const std::string& s) {
    if (s == "affine") return TransformFamily::affine;
    if (s == "tps") return TransformFamily::tps;
    if (s == "composite") return TransformFamily::composite;
    throw std::invalid_argument("unknown transform family: " + s);
}

std::string to_string(TransformFamily f) {
    switch (f) {
        case TransformFamily::affine: return "affine";
        case TransformFamily::tps: return "tps";
        case TransformFamily::composite: return "composite";
    }
    return "composite";
}

geometry::CompositeTransform sample_transform(TransformFamily family, double strength,
                                              std::mt19937_64& rng) {
    if (!(strength > 0.0)) throw std::invalid_argument("transform strength must be positive");
    std::uniform_real_distribution<double> u(-1.0, 1.0);

    CompositeTransform t;
    if (family != TransformFamily::tps) {
        const double angle = 0.30 * strength * u(rng);
        const double log_scale = 0.18 * strength * u(rng);
        const double shear = 0.15 * strength * u(rng);
        const double tx = 0.35 * strength * u(rng);
        const double ty = 0.35 * strength * u(rng);
        const double s = std::exp(log_scale);
        const double c = std::cos(angle), sn = std::sin(angle);
        t.affine = {s * c, s * (c * shear - sn), tx, s * sn, s * (sn * shear + c), ty};
    }
    if (family != TransformFamily::affine) {
        const double reach = 0.35 * strength * (family == TransformFamily::composite ? 0.8 : 1.0);
        const auto& controls = geometry::tps_control_points();
        for (int i = 0; i < geometry::kTpsControlCount; ++i) {
            // Keep displaced controls inside the frame.
            const double lx = std::max(-reach, -1.0 - controls[i].x);
            const double hx = std::min(reach, 1.0 - controls[i].x);
            const double ly = std::max(-reach, -1.0 - controls[i].y);
            const double hy = std::min(reach, 1.0 - controls[i].y);
            std::uniform_real_distribution<double> ux(lx, hx), uy(ly, hy);
            t.tps.offsets[i] = ux(rng);
            t.tps.offsets[9 + i] = uy(rng);
        }
    }
    return t;
}

Image jitter_image(const Image& img, double amount, std::mt19937_64& rng) {
    if (amount <= 0.0) return img;
    std::uniform_real_distribution<double> ug(1.0 - 0.35 * amount, 1.0 + 0.35 * amount);
    std::uniform_real_distribution<double> ub(-0.15 * amount, 0.15 * amount);
    std::normal_distribution<double> noise(0.0, 0.06 * amount);

    std::vector<double> gain(img.channels), bias(img.channels);
    for (int c = 0; c < img.channels; ++c) {
        gain[c] = ug(rng);
        bias[c] = ub(rng);
    }
    Image out = img;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                const double v = img.at(x, y, c) * gain[c] + bias[c] + noise(rng);
                out.at(x, y, c) = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return out;
}

SynthPair synth_pair(const Image& base, const SynthOptions& opts, std::mt19937_64& rng) {
    if (base.empty()) throw std::invalid_argument("synth_pair requires a nonempty base image");
    if (!(opts.strength > 0.0)) throw std::invalid_argument("synth strength must be positive");
    if (opts.keypoints < 1) throw std::invalid_argument("synth_pair needs at least one keypoint");

    SynthPair sp;
    sp.source = base;
    sp.gt = sample_transform(opts.family, opts.strength, rng);

    Image warped = geometry::warp_image(base, sp.gt, base.width, base.height);
    sp.target = opts.jitter > 0.0 ? jitter_image(warped, opts.jitter, rng) : std::move(warped);

    // Keypoints are sampled in the target frame and transferred through the
    // ground-truth map (which runs target -> source); both ends must land in
    // frame or the draw is rejected.
    const auto solved = geometry::composite_solve(sp.gt);
    std::uniform_real_distribution<double> ku(0.08, 0.92);
    for (int k = 0; k < opts.keypoints; ++k) {
        int rejects = 0;
        while (true) {
            const double txu = quantize_unit_coord(ku(rng));
            const double tyu = quantize_unit_coord(ku(rng));
            const Vec2 src_n =
                geometry::composite_apply(solved, Vec2{unit_to_norm(txu), unit_to_norm(tyu)});
            const double sxu = norm_to_unit(src_n.x);
            const double syu = norm_to_unit(src_n.y);
            if (sxu >= 0.02 && sxu <= 0.98 && syu >= 0.02 && syu <= 0.98) {
                sp.kp_target.push_back({txu, tyu});
                sp.kp_source.push_back({quantize_unit_coord(sxu), quantize_unit_coord(syu)});
                break;
            }
            if (++rejects >= 100) {
                throw std::runtime_error("synth_pair: keypoint placement rejected 100 times "
                                         "(transform strength too large)");
            }
        }
    }
    return sp;
}

// --- Procedural base images --------------------------------------------------------

namespace {

struct Rgb {
    double r, g, b;
};

Rgb random_color(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.15, 0.95);
    return {u(rng), u(rng), u(rng)};
}

}  // namespace

Image make_base_image(int size, int category_id, std::mt19937_64& rng) {
    if (size < 8) throw std::invalid_argument("base image size must be >= 8");

    // Category-stable style: palette, shape archetype and anchor layout come
    // from the category id, not from the instance rng.
    std::mt19937_64 cat_rng(mix_seed(0x67656f6dULL, static_cast<uint64_t>(category_id)));
    const Rgb bg_a = random_color(cat_rng);
    const Rgb bg_b = random_color(cat_rng);
    const int archetype = category_id % 3;
    const int n_shapes = 3 + static_cast<int>(cat_rng() % 3);
    std::uniform_real_distribution<double> anchor_u(0.2, 0.8);
    std::vector<Vec2> anchors(n_shapes);
    std::vector<double> base_radius(n_shapes);
    std::vector<Rgb> base_color(n_shapes);
    std::uniform_real_distribution<double> radius_u(0.08, 0.18);
    for (int i = 0; i < n_shapes; ++i) {
        anchors[i] = {anchor_u(cat_rng), anchor_u(cat_rng)};
        base_radius[i] = radius_u(cat_rng);
        base_color[i] = random_color(cat_rng);
    }
    std::uniform_real_distribution<double> freq_u(4.0, 9.0);
    const double tex_fx = freq_u(cat_rng), tex_fy = freq_u(cat_rng);

    // Instance variation.
    std::uniform_real_distribution<double> jit(-0.06, 0.06);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_real_distribution<double> rscale(0.85, 1.15);
    const double grad_angle = u01(rng) * 6.283185307179586;
    const double gx = std::cos(grad_angle), gy = std::sin(grad_angle);
    const double tex_phase = u01(rng) * 6.283185307179586;

    struct Shape {
        Vec2 center;
        double radius;
        double aspect;
        double angle;
        Rgb color;
    };
    std::vector<Shape> shapes(n_shapes);
    for (int i = 0; i < n_shapes; ++i) {
        shapes[i].center = {anchors[i].x + jit(rng), anchors[i].y + jit(rng)};
        shapes[i].radius = base_radius[i] * rscale(rng);
        shapes[i].aspect = 0.6 + 0.8 * u01(rng);
        shapes[i].angle = u01(rng) * 3.141592653589793;
        shapes[i].color = {std::clamp(base_color[i].r + 0.12 * jit(rng) / 0.06, 0.05, 1.0),
                           std::clamp(base_color[i].g + 0.12 * jit(rng) / 0.06, 0.05, 1.0),
                           std::clamp(base_color[i].b + 0.12 * jit(rng) / 0.06, 0.05, 1.0)};
    }

    Image img(size, size, 3);
    const double soft = 1.5 / size;
    for (int y = 0; y < size; ++y) {
        const double fy = (y + 0.5) / size;
        for (int x = 0; x < size; ++x) {
            const double fx = (x + 0.5) / size;
            const double tgrad = std::clamp(0.5 + 0.5 * (gx * (fx - 0.5) + gy * (fy - 0.5)) * 2.0, 0.0, 1.0);
            const double tex = 0.06 * std::sin(tex_fx * fx * 6.2831853 + tex_phase) *
                               std::cos(tex_fy * fy * 6.2831853);
            Rgb px{bg_a.r + tgrad * (bg_b.r - bg_a.r) + tex,
                   bg_a.g + tgrad * (bg_b.g - bg_a.g) + tex,
                   bg_a.b + tgrad * (bg_b.b - bg_a.b) + tex};

            for (const Shape& s : shapes) {
                const double dx0 = fx - s.center.x;
                const double dy0 = fy - s.center.y;
                const double ca = std::cos(s.angle), sa = std::sin(s.angle);
                const double dx = (ca * dx0 + sa * dy0) / s.radius;
                const double dy = (-sa * dx0 + ca * dy0) / (s.radius * s.aspect);
                double d;
                if (archetype == 0) {
                    d = std::sqrt(dx * dx + dy * dy);
                } else if (archetype == 1) {
                    d = std::max(std::abs(dx), std::abs(dy));
                } else {
                    d = std::abs(std::sqrt(dx * dx + dy * dy) - 0.7) / 0.3;
                }
                const double alpha = std::clamp((1.0 - d) / (soft / s.radius + 1e-9), 0.0, 1.0);
                if (alpha > 0.0) {
                    px.r += alpha * (s.color.r - px.r);
                    px.g += alpha * (s.color.g - px.g);
                    px.b += alpha * (s.color.b - px.b);
                }
            }
            img.at(x, y, 0) = std::clamp(px.r, 0.0, 1.0);
            img.at(x, y, 1) = std::clamp(px.g, 0.0, 1.0);
            img.at(x, y, 2) = std::clamp(px.b, 0.0, 1.0);
        }
    }
    return img;
}

// --- Augmentation ------------------------------------------------------------------

namespace {

// Horizontal mirror in normalized coordinates: F(x,y) = (-x, y).
// Conjugating a composite transform by F keeps it exactly representable:
// the affine block flips signs and the TPS controls permute columns.
CompositeTransform flip_transform(const CompositeTransform& t) {
    CompositeTransform out;
    out.affine = {t.affine.a11, -t.affine.a12, -t.affine.tx,
                  -t.affine.a21, t.affine.a22, t.affine.ty};
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            const int from = r * 3 + c;
            const int to = r * 3 + (2 - c);
            out.tps.offsets[to] = -t.tps.offsets[from];
            out.tps.offsets[9 + to] = t.tps.offsets[9 + from];
        }
    }
    return out;
}

PointSet flip_points(const PointSet& pts) {
    PointSet out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back({1.0 - p.x, p.y});
    return out;
}

}  // namespace

PairRecord flip_record(const PairRecord& rec) {
    PairRecord out = rec;
    out.flipped = !rec.flipped;
    if (rec.keypoints_source) out.keypoints_source = flip_points(*rec.keypoints_source);
    if (rec.keypoints_target) out.keypoints_target = flip_points(*rec.keypoints_target);
    if (rec.gt_transform) out.gt_transform = flip_transform(*rec.gt_transform);
    return out;
}

std::vector<PairRecord> flip_augment(const std::vector<PairRecord>& records, double ratio,
                                     uint64_t seed) {
    if (ratio < 0.0) throw std::invalid_argument("flip ratio must be nonnegative");
    std::vector<PairRecord> out = records;
    if (records.empty()) return out;

    const long long extra = std::llround(ratio * static_cast<double>(records.size()));
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<size_t> pick(0, records.size() - 1);
    out.reserve(records.size() + extra);
    for (long long i = 0; i < extra; ++i) {
        out.push_back(flip_record(records[pick(rng)]));
    }
    return out;
}

UnlabeledBuild build_unlabeled(
    const std::map<std::string, std::vector<std::string>>& images_by_category, int cap,
    const std::vector<PairRecord>& labeled,
    const std::vector<std::pair<std::string, std::string>>& deny, uint64_t seed) {
    if (cap < 1) throw std::invalid_argument("per-category cap must be >= 1");
    if (images_by_category.empty()) throw std::invalid_argument("category list must be nonempty");

    const std::set<std::pair<std::string, std::string>> denied(deny.begin(), deny.end());
    UnlabeledBuild out;
    std::mt19937_64 rng(seed);

    for (const auto& [category, images] : images_by_category) {
        std::vector<std::pair<int, int>> candidates;
        for (size_t i = 0; i < images.size(); ++i) {
            for (size_t j = 0; j < images.size(); ++j) {
                if (i == j) continue;
                if (denied.count({images[i], images[j]})) continue;
                candidates.push_back({static_cast<int>(i), static_cast<int>(j)});
            }
        }
        std::shuffle(candidates.begin(), candidates.end(), rng);
        const int take = std::min<int>(cap, static_cast<int>(candidates.size()));
        for (int k = 0; k < take; ++k) {
            PairRecord r;
            r.source = images[candidates[k].first];
            r.target = images[candidates[k].second];
            r.category = category;
            r.labeled = false;
            out.records.push_back(std::move(r));
        }
        out.per_category[category] = take;
        out.capped_total += take;
    }

    for (const PairRecord& r : labeled) {
        PairRecord stripped = r;
        stripped.labeled = false;
        stripped.keypoints_source.reset();
        stripped.keypoints_target.reset();
        stripped.gt_transform.reset();
        out.records.push_back(std::move(stripped));
    }
    out.stripped_total = static_cast<int>(labeled.size());
    return out;
}

// --- Loading ------------------------------------------------------------------------

std::vector<LoadedPair> load_pairs(const Manifest& m, const std::string& manifest_path,
                                   int image_size, int channels) {
    if (channels != 1 && channels != 3) throw std::invalid_argument("channels must be 1 or 3");
    const fs::path root = fs::path(manifest_path).parent_path() / m.image_root;

    std::map<std::string, Image> cache;
    auto fetch = [&](const std::string& ref, bool flip) {
        auto it = cache.find(ref);
        if (it == cache.end()) {
            it = cache.emplace(ref, load_image((root / ref).string())).first;
        }
        Image img = flip ? hflip(it->second) : it->second;
        img = channels == 3 ? to_rgb(img) : to_gray(img);
        return resize_bilinear(img, image_size, image_size);
    };

    std::vector<LoadedPair> out;
    out.reserve(m.pairs.size());
    for (const auto& rec : m.pairs) {
        LoadedPair lp;
        lp.record = rec;
        lp.source = fetch(rec.source, rec.flipped);
        lp.target = fetch(rec.target, rec.flipped);
        if (rec.keypoints_source) lp.kp_source_norm = unit_to_norm(*rec.keypoints_source);
        if (rec.keypoints_target) lp.kp_target_norm = unit_to_norm(*rec.keypoints_target);
        out.push_back(std::move(lp));
    }
    return out;
}

// --- Dataset generation ----------------------------------------------------------------

Manifest synth_dataset(const std::string& out_dir, const SynthDatasetConfig& cfg) {
    if (cfg.num_pairs < 1) throw std::invalid_argument("num_pairs must be >= 1");
    if (cfg.categories < 1) throw std::invalid_argument("categories must be >= 1");

    const fs::path dir(out_dir);
    fs::create_directories(dir / "images");

    Manifest m;
    m.image_root = ".";
    m.seed_provenance = "synth seed " + std::to_string(cfg.seed);
    m.metadata["synth"] = {{"num_pairs", cfg.num_pairs},
                           {"image_size", cfg.image_size},
                           {"categories", cfg.categories},
                           {"family", to_string(cfg.synth.family)},
                           {"strength", cfg.synth.strength},
                           {"jitter", cfg.synth.jitter},
                           {"keypoints", cfg.synth.keypoints},
                           {"seed", cfg.seed}};

    char name[64];
    for (int i = 0; i < cfg.num_pairs; ++i) {
        const int category = i % cfg.categories;
        std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<uint64_t>(i)));
        const Image base = make_base_image(cfg.image_size, category, rng);
        const SynthPair sp = synth_pair(base, cfg.synth, rng);

        std::snprintf(name, sizeof(name), "images/pair%05d_src.png", i);
        const std::string src_ref = name;
        std::snprintf(name, sizeof(name), "images/pair%05d_tgt.png", i);
        const std::string tgt_ref = name;
        save_image(sp.source, (dir / src_ref).string());
        save_image(sp.target, (dir / tgt_ref).string());

        PairRecord rec;
        rec.source = src_ref;
        rec.target = tgt_ref;
        rec.category = "cat" + std::to_string(category);
        rec.labeled = true;
        rec.keypoints_source = sp.kp_source;
        rec.keypoints_target = sp.kp_target;
        rec.gt_transform = sp.gt;
        m.pairs.push_back(std::move(rec));
    }

    save_manifest(m, (dir / "manifest.json").string());
    return m;
}

}  // namespace geomatch::datakit
