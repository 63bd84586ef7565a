#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "geomatch/datakit.hpp"
#include "geomatch/matchnet.hpp"

namespace geomatch {

/// Configuration problems (bad mode/dataset combinations, invalid flags).
/// The CLI maps these to exit code 2, runtime failures to 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace geomatch

namespace geomatch::optimize {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update on a flat parameter array. step is the
/// 1-based update count after this call.
void adam_update(std::span<double> w, std::span<const double> g, std::span<double> m,
                 std::span<double> v, long step, const AdamConfig& cfg);

/// Moment accumulators laid out parallel to ModelParams::visit order.
struct AdamState {
    std::vector<std::vector<double>> m, v;
    long step = 0;

    static AdamState init(const matchnet::ModelParams& params);
};

/// Updates every parameter array from a same-shaped gradient accumulator.
void adam_step(matchnet::ModelParams& params, const matchnet::ModelParams& grads,
               AdamState& state, const AdamConfig& cfg);

// --- Training ---------------------------------------------------------------------

enum class TrainMode { self_supervised, supervised, unsupervised, semi_supervised };

TrainMode mode_from_string(const std::string& s);
std::string to_string(TrainMode m);

struct TrainConfig {
    TrainMode mode = TrainMode::supervised;
    double learning_rate = 1e-3;
    int batch_size = 16;
    double beta = 1.0;
    int epochs = 1;
    uint64_t seed = 0;
    bool freeze_features = true;
    bool symmetric_cycle = false;
    int grid_rows = 20;
    int grid_cols = 20;
    int threads = 1;
    AdamConfig adam;  // adam.lr is overwritten by learning_rate

    void validate() const;
    nlohmann::json to_json() const;
};

struct StepRecord {
    long step = 0;
    int epoch = 0;
    double loss = 0.0;
    int labeled_pairs = 0;
    int unlabeled_pairs = 0;
};

struct TrainLog {
    std::vector<StepRecord> steps;
    std::vector<double> epoch_val_pck;  // populated when a validator is given
    uint64_t seed = 0;
    nlohmann::json config_echo;
    double wall_seconds = 0.0;
};

struct BatchItem {
    int index = 0;
    bool labeled = true;
};

/// One epoch of batches over the union of both datasets: a seeded
/// deterministic shuffle chunked into batch_size groups (final partial batch
/// kept). Every pair appears exactly once per epoch.
std::vector<std::vector<BatchItem>> epoch_batches(int n_labeled, int n_unlabeled, int batch_size,
                                                  uint64_t seed, int epoch);

using Dataset = std::vector<datakit::LoadedPair>;
using Validator = std::function<double(const matchnet::ModelParams&)>;
using LogSink = std::function<void(const nlohmann::json&)>;
using EpochHook = std::function<void(int epoch, const matchnet::ModelParams&)>;

/// Runs the configured training regime:
///   self  — grid loss against the stored ground-truth transform (synthetic),
///   sup   — keypoint loss on labeled pairs,
///   unsup — cycle loss on unlabeled pairs (both directions evaluated),
///   semi  — keypoint loss + beta * cycle loss on mixed batches.
/// Batch losses are plain sums per Eq-style reduction; one Adam step per
/// batch. Deterministic for a fixed (seed, config, data) in single-threaded
/// mode; with beta == 0 the semi mode drops unlabeled pairs at scheduling
/// time and reproduces the supervised run bit for bit. Non-finite losses
/// abort with a diagnostic.
TrainLog train(matchnet::ModelParams& model, const Dataset* labeled, const Dataset* unlabeled,
               const Dataset* synthetic, const TrainConfig& cfg, const Validator& validator = {},
               const LogSink& sink = {}, const EpochHook& epoch_hook = {});

}  // namespace geomatch::optimize
