#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "geomatch/geometry.hpp"
#include "geomatch/image.hpp"

namespace geomatch::datakit {

/// Keypoint coordinates live in [0,1]^2 image-fraction space and are
/// quantized to multiples of 2^-32. On that lattice the horizontal flip
/// x -> 1-x is exact in double arithmetic, which makes flip augmentation an
/// exact involution; the quantization error (~2.3e-10) is far below every
/// evaluation tolerance.
double quantize_unit_coord(double v);

inline double unit_to_norm(double v) { return 2.0 * v - 1.0; }
inline double norm_to_unit(double v) { return (v + 1.0) / 2.0; }
geometry::PointSet unit_to_norm(const geometry::PointSet& pts);
geometry::PointSet norm_to_unit(const geometry::PointSet& pts);

/// One image pair. Keypoints and the ground-truth transform are present for
/// labeled/synthetic pairs only; gt_transform maps the target frame into the
/// source frame (the direction rendered by warp_image). `flipped` marks a
/// record whose images must be mirrored horizontally at load time; its
/// keypoints and transform are stored already mirrored.
struct PairRecord {
    std::string source;
    std::string target;
    std::string category;
    bool labeled = false;
    bool flipped = false;
    std::optional<geometry::PointSet> keypoints_source;  // [0,1]^2
    std::optional<geometry::PointSet> keypoints_target;  // [0,1]^2
    std::optional<geometry::CompositeTransform> gt_transform;
};

struct Manifest {
    std::string image_root = ".";
    std::string coordinates = "unit";
    std::string seed_provenance;
    nlohmann::json metadata = nlohmann::json::object();
    std::vector<PairRecord> pairs;
};

/// JSON round trip. Loading schema-validates (unknown fields rejected,
/// labeled records need matched in-range keypoints, gt transforms must agree
/// with the keypoints to 1e-6) and verifies every referenced image exists
/// under image_root (resolved relative to the manifest file).
Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& m, const std::string& path);

/// Structural validation without touching the filesystem.
void validate_manifest(const Manifest& m);

// --- Synthetic pairs ---------------------------------------------------------

enum class TransformFamily { affine, tps, composite };

TransformFamily family_from_string(const std::string& s);
std::string to_string(TransformFamily f);

struct SynthOptions {
    TransformFamily family = TransformFamily::composite;
    double strength = 0.3;   // scales every sampled parameter range
    int keypoints = 10;
    double jitter = 0.0;     // photometric gain/bias/noise on the target
};

/// In-memory synthetic pair: target = jitter(warp(source, gt)), keypoints
/// sampled in the target frame and transferred exactly through gt.
struct SynthPair {
    Image source;
    Image target;
    geometry::PointSet kp_source;  // [0,1]^2, quantized
    geometry::PointSet kp_target;
    geometry::CompositeTransform gt;  // target frame -> source frame
};

/// Draws a transform of the family with parameter ranges scaled by strength.
/// TPS control displacements are sampled inside ranges clamped so every
/// displaced control stays within [-1,1]^2.
geometry::CompositeTransform sample_transform(TransformFamily family, double strength,
                                              std::mt19937_64& rng);

SynthPair synth_pair(const Image& base, const SynthOptions& opts, std::mt19937_64& rng);

/// Procedural category-structured test image: category picks the palette and
/// shape layout, the rng the per-instance variation.
Image make_base_image(int size, int category_id, std::mt19937_64& rng);

/// Photometric perturbation: per-channel gain/bias plus pixel noise.
Image jitter_image(const Image& img, double amount, std::mt19937_64& rng);

// --- Augmentation and pair-set construction ------------------------------------

/// Mirrors one record: toggles `flipped`, maps keypoint x -> 1-x (exact on
/// the quantized lattice) and conjugates gt_transform by the horizontal
/// mirror (exact sign flips and a control permutation). Applying it twice
/// restores the record bit for bit.
PairRecord flip_record(const PairRecord& rec);

/// Appends llround(ratio * n) horizontally flipped copies of records drawn
/// uniformly with replacement (repetitions permitted).
std::vector<PairRecord> flip_augment(const std::vector<PairRecord>& records, double ratio,
                                     uint64_t seed);

struct UnlabeledBuild {
    std::vector<PairRecord> records;
    std::map<std::string, int> per_category;
    int capped_total = 0;
    int stripped_total = 0;
};

/// Same-category ordered pairs, at most `cap` per category (seeded sample),
/// minus the deny list (test/validation pairs), plus every labeled record
/// with its correspondence information removed.
UnlabeledBuild build_unlabeled(const std::map<std::string, std::vector<std::string>>& images_by_category,
                               int cap, const std::vector<PairRecord>& labeled,
                               const std::vector<std::pair<std::string, std::string>>& deny,
                               uint64_t seed);

// --- Loading for training/evaluation ----------------------------------------------

/// A record with pixels loaded, flips applied, and keypoints converted to
/// network coordinates ([-1,1]^2).
struct LoadedPair {
    PairRecord record;
    Image source;
    Image target;
    geometry::PointSet kp_source_norm;
    geometry::PointSet kp_target_norm;
};

/// Loads every pair, resizing to image_size x image_size and converting to
/// the requested channel count.
std::vector<LoadedPair> load_pairs(const Manifest& m, const std::string& manifest_path,
                                   int image_size, int channels);

// --- Dataset generation (CLI `synth`) ---------------------------------------------

struct SynthDatasetConfig {
    int num_pairs = 100;
    int image_size = 64;
    int categories = 3;
    SynthOptions synth;
    uint64_t seed = 0;
};

/// Writes images/ and manifest.json under out_dir; returns the manifest.
Manifest synth_dataset(const std::string& out_dir, const SynthDatasetConfig& cfg);

}  // namespace geomatch::datakit
