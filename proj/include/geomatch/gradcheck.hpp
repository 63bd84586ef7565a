#pragma once

#include <cstdint>
#include <string>

namespace geomatch::gradcheck {

struct Options {
    uint64_t seed = 7;
    int draws = 100;
    double tol_transform = 1e-5;  // loss gradients w.r.t. the 24 transform parameters
    double tol_network = 1e-4;    // combined loss w.r.t. trainable weights, miniature net
    double fd_step = 1e-6;
    bool check_features = false;  // also exercise an unfrozen feature extractor
};

struct Result {
    int checks = 0;
    int failures = 0;
    double worst_rel_err = 0.0;
    std::string worst_case;

    bool ok() const { return failures == 0 && checks > 0; }
    void merge(const Result& other);
};

/// Analytic gradients of the grid, keypoint and cycle losses against central
/// finite differences over seeded random transforms. Draws with any
/// per-point residual too close to zero are resampled (the Euclidean norm is
/// not differentiable there).
Result check_transform_gradients(const Options& opts);

/// Combined objective (keypoint + beta * cycle) w.r.t. every trainable
/// weight of a miniature network (8x8 inputs, 2-channel features). The
/// inter-stage warp is held fixed during differencing, matching the training
/// objective's stop-gradient.
Result check_network_gradients(const Options& opts);

Result check_all(const Options& opts);

}  // namespace geomatch::gradcheck
