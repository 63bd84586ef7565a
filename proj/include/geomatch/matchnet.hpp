#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "geomatch/geometry.hpp"
#include "geomatch/image.hpp"

namespace geomatch::matchnet {

/// Spatial tensor, row-major with channels interleaved: (y*w + x)*c + ch.
struct Tensor {
    int h = 0, w = 0, c = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int h_, int w_, int c_) : h(h_), w(w_), c(c_), v(static_cast<size_t>(h_) * w_ * c_, 0.0) {}

    const double& at(int y, int x, int ch) const {
        return v[(static_cast<size_t>(y) * w + x) * c + ch];
    }
    double& at(int y, int x, int ch) { return v[(static_cast<size_t>(y) * w + x) * c + ch]; }
    size_t size() const { return v.size(); }
    bool empty() const { return v.empty(); }
};

struct ConvShape {
    int in_c = 0, out_c = 0, kernel = 0, stride = 1, pad = 0;
    int out_size(int in_size) const { return (in_size + 2 * pad - kernel) / stride + 1; }
};

/// Convolution parameters. Weight layout is [ky][kx][in][out] so the inner
/// accumulation runs over contiguous output channels.
struct ConvParams {
    ConvShape shape;
    std::vector<double> weight;
    std::vector<double> bias;
};

struct FcParams {
    int in_dim = 0, out_dim = 0;
    std::vector<double> weight;  // [out][in]
    std::vector<double> bias;
};

/// Regression head: conv(7x7) -> ReLU -> conv(5x5) -> ReLU -> fully connected.
struct HeadParams {
    ConvParams conv1, conv2;
    FcParams fc;
};

/// Architecture configuration. The paper-scale backbone is replaced by a
/// small conv stack; every dimension here is a default, not a contract.
struct NetConfig {
    int image_size = 64;
    int in_channels = 3;
    std::vector<int> feature_channels = {16, 32, 64};  // 3x3 convs, stride 2, ReLU
    int head_conv1_channels = 128;
    int head_conv2_channels = 64;
    double head_init_scale = 1e-3;  // stddev of head conv/fc weights; 0 = exact identity start

    int feature_map_size() const;
    nlohmann::json to_json() const;
    static NetConfig from_json(const nlohmann::json& j);
    bool operator==(const NetConfig&) const = default;
};

struct ModelParams {
    NetConfig config;
    std::vector<ConvParams> features;
    HeadParams affine_head, tps_head;

    /// Seeded initialization: He-style random feature convs, head weights
    /// drawn at head_init_scale, affine fc bias set to the identity
    /// transform and tps fc bias to zero.
    static ModelParams init(const NetConfig& cfg, uint64_t seed);

    /// Same shapes, all values zero. Used as a gradient accumulator.
    static ModelParams zeros_like(const ModelParams& other);

    /// Fixed-order traversal of every parameter array; the order defines the
    /// checkpoint layout and the Adam state layout.
    void visit(const std::function<void(const std::string&, std::vector<double>&)>& fn);
    void visit(const std::function<void(const std::string&, const std::vector<double>&)>& fn) const;
};

// --- Stages -------------------------------------------------------------------

struct FeatureTrace {
    Tensor input;                // image as tensor
    std::vector<Tensor> acts;    // post-ReLU activation per conv
    Tensor normalized;
};

struct StageTrace {
    Tensor corr;        // head input volume
    Tensor act1, act2;  // post-ReLU head activations
    std::vector<double> fc_in;
};

/// Conv stack output (pre-normalization). Image dims must match the
/// configured input size.
Tensor extract_features(const Image& img, const ModelParams& params, FeatureTrace* trace = nullptr);

/// Per-location L2 normalization; all-zero vectors pass through unchanged.
Tensor l2_normalize(const Tensor& f);

/// Correlation volume on fb's spatial grid: entry (i,j,k) is the dot product
/// of fb at (i,j) with fa at flattened location k = ky*w + kx.
Tensor correlate(const Tensor& fa, const Tensor& fb);

/// Runs a regression head on a correlation volume; returns the raw parameter
/// vector (6 for the affine head, 18 for the TPS head).
std::vector<double> regress(const Tensor& corr, const HeadParams& head, StageTrace* trace = nullptr);

// --- Full model ------------------------------------------------------------------

/// Activations recorded by forward_pair, consumed by backward.
struct ForwardTrace {
    geometry::CompositeTransform transform;
    StageTrace affine_stage, tps_stage;
    bool features_traced = false;
    FeatureTrace src_feat, tgt_feat, warped_feat;
    Tensor f_src_n, f_tgt_n, f_warped_n;
};

/// Two-stage estimation: the affine head runs on correlate(f_src, f_tgt),
/// the source is warped by that affine, and the TPS head runs on
/// correlate(f_warped, f_tgt). The returned transform maps points in the
/// TARGET frame to points in the SOURCE frame.
geometry::CompositeTransform estimate_transform(const Image& src, const Image& tgt,
                                                const ModelParams& params);

/// estimate_transform that also records activations for backward.
/// trace_features additionally records the conv stack (needed only when the
/// feature extractor is trainable).
ForwardTrace forward_pair(const Image& src, const Image& tgt, const ModelParams& params,
                          bool trace_features = false);

/// forward_pair with the stage-2 input image supplied by the caller instead
/// of being rendered from the stage-1 affine. Training treats that warp as a
/// stop-gradient, so finite-difference checks evaluate the objective through
/// this entry point with the warped image held fixed.
ForwardTrace forward_pair_with_warp(const Image& src, const Image& tgt, const Image& warped,
                                    const ModelParams& params, bool trace_features = false);

/// Reverse pass: routes d(loss)/d(transform params) — layout as in
/// objective::LossValue — through the regression heads (and, when the trace
/// carries feature activations, through correlation into the conv stack).
/// Gradients accumulate into grad. No gradient crosses the inter-stage warp.
void backward(const ForwardTrace& trace, const ModelParams& params,
              const std::array<double, geometry::kCompositeParamCount>& dparams,
              ModelParams& grad);

// --- Checkpoints -------------------------------------------------------------------

/// Binary container: magic "GEOM", u32 version, u32-length JSON metadata
/// (architecture, config echo), entry table (name, shape, offset), then
/// little-endian float32 data. Loaders reject unknown versions.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     const nlohmann::json& metadata);
ModelParams load_checkpoint(const std::string& path, nlohmann::json* metadata = nullptr);

}  // namespace geomatch::matchnet
