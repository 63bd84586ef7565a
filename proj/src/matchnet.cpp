#include "geomatch/matchnet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace geomatch::matchnet {

using geometry::AffineParams;
using geometry::CompositeTransform;
using geometry::kCompositeParamCount;

// --- Config ---------------------------------------------------------------------

int NetConfig::feature_map_size() const {
    int s = image_size;
    for (size_t i = 0; i < feature_channels.size(); ++i) {
        if (s % 2 != 0) throw std::invalid_argument("image size not divisible by the feature stride");
        s = (s - 1) / 2 + 1;
    }
    return s;
}

nlohmann::json NetConfig::to_json() const {
    return {{"image_size", image_size},
            {"in_channels", in_channels},
            {"feature_channels", feature_channels},
            {"head_conv1_channels", head_conv1_channels},
            {"head_conv2_channels", head_conv2_channels},
            {"head_init_scale", head_init_scale}};
}

NetConfig NetConfig::from_json(const nlohmann::json& j) {
    NetConfig cfg;
    cfg.image_size = j.at("image_size").get<int>();
    cfg.in_channels = j.at("in_channels").get<int>();
    cfg.feature_channels = j.at("feature_channels").get<std::vector<int>>();
    cfg.head_conv1_channels = j.at("head_conv1_channels").get<int>();
    cfg.head_conv2_channels = j.at("head_conv2_channels").get<int>();
    cfg.head_init_scale = j.at("head_init_scale").get<double>();
    return cfg;
}

// --- Parameter construction --------------------------------------------------------

namespace {

ConvParams make_conv(int in_c, int out_c, int kernel, int stride, int pad) {
    ConvParams p;
    p.shape = {in_c, out_c, kernel, stride, pad};
    p.weight.assign(static_cast<size_t>(kernel) * kernel * in_c * out_c, 0.0);
    p.bias.assign(out_c, 0.0);
    return p;
}

// Pad that keeps at least one valid output position for small inputs; zero
// (valid convolution) once the input is large enough.
int head_pad(int kernel, int in_size) {
    if (in_size >= kernel) return 0;
    return (kernel - in_size + 1) / 2;
}

struct HeadShapes {
    ConvShape conv1, conv2;
    int fc_in = 0;
};

HeadShapes head_shapes(const NetConfig& cfg) {
    const int fs = cfg.feature_map_size();
    const int corr_c = fs * fs;
    HeadShapes s;
    s.conv1 = {corr_c, cfg.head_conv1_channels, 7, 1, head_pad(7, fs)};
    const int o1 = s.conv1.out_size(fs);
    if (o1 < 1) throw std::invalid_argument("feature map too small for the regression head");
    s.conv2 = {cfg.head_conv1_channels, cfg.head_conv2_channels, 5, 1, head_pad(5, o1)};
    const int o2 = s.conv2.out_size(o1);
    if (o2 < 1) throw std::invalid_argument("feature map too small for the regression head");
    s.fc_in = o2 * o2 * cfg.head_conv2_channels;
    return s;
}

HeadParams make_head(const NetConfig& cfg, int out_dim) {
    const HeadShapes s = head_shapes(cfg);
    HeadParams h;
    h.conv1 = make_conv(s.conv1.in_c, s.conv1.out_c, 7, 1, s.conv1.pad);
    h.conv2 = make_conv(s.conv2.in_c, s.conv2.out_c, 5, 1, s.conv2.pad);
    h.fc.in_dim = s.fc_in;
    h.fc.out_dim = out_dim;
    h.fc.weight.assign(static_cast<size_t>(out_dim) * s.fc_in, 0.0);
    h.fc.bias.assign(out_dim, 0.0);
    return h;
}

void fill_normal(std::vector<double>& values, double stddev, std::mt19937_64& rng) {
    if (stddev <= 0.0) return;
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : values) v = dist(rng);
}

}  // namespace

ModelParams ModelParams::init(const NetConfig& cfg, uint64_t seed) {
    ModelParams p;
    p.config = cfg;

    std::mt19937_64 rng(seed);
    int in_c = cfg.in_channels;
    for (int out_c : cfg.feature_channels) {
        ConvParams conv = make_conv(in_c, out_c, 3, 2, 1);
        const double fan_in = 9.0 * in_c;
        fill_normal(conv.weight, std::sqrt(2.0 / fan_in), rng);
        p.features.push_back(std::move(conv));
        in_c = out_c;
    }

    p.affine_head = make_head(cfg, geometry::kAffineParamCount);
    p.tps_head = make_head(cfg, geometry::kTpsParamCount);
    fill_normal(p.affine_head.conv1.weight, cfg.head_init_scale, rng);
    fill_normal(p.affine_head.conv2.weight, cfg.head_init_scale, rng);
    fill_normal(p.affine_head.fc.weight, cfg.head_init_scale, rng);
    fill_normal(p.tps_head.conv1.weight, cfg.head_init_scale, rng);
    fill_normal(p.tps_head.conv2.weight, cfg.head_init_scale, rng);
    fill_normal(p.tps_head.fc.weight, cfg.head_init_scale, rng);

    // Identity start: zero head weights map any input to the identity warp.
    const auto id = AffineParams::identity().as_array();
    std::copy(id.begin(), id.end(), p.affine_head.fc.bias.begin());
    return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& other) {
    ModelParams z = other;
    z.visit([](const std::string&, std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); });
    return z;
}

void ModelParams::visit(const std::function<void(const std::string&, std::vector<double>&)>& fn) {
    for (size_t i = 0; i < features.size(); ++i) {
        const std::string base = "features." + std::to_string(i);
        fn(base + ".weight", features[i].weight);
        fn(base + ".bias", features[i].bias);
    }
    auto visit_head = [&fn](const std::string& base, HeadParams& h) {
        fn(base + ".conv1.weight", h.conv1.weight);
        fn(base + ".conv1.bias", h.conv1.bias);
        fn(base + ".conv2.weight", h.conv2.weight);
        fn(base + ".conv2.bias", h.conv2.bias);
        fn(base + ".fc.weight", h.fc.weight);
        fn(base + ".fc.bias", h.fc.bias);
    };
    visit_head("affine_head", affine_head);
    visit_head("tps_head", tps_head);
}

void ModelParams::visit(
    const std::function<void(const std::string&, const std::vector<double>&)>& fn) const {
    const_cast<ModelParams*>(this)->visit(
        [&fn](const std::string& name, std::vector<double>& v) { fn(name, v); });
}

// --- Primitive layers -----------------------------------------------------------------

namespace {

Tensor conv_forward(const Tensor& in, const ConvParams& p) {
    const ConvShape& s = p.shape;
    if (in.c != s.in_c) throw std::invalid_argument("conv input channel mismatch");
    const int oh = s.out_size(in.h);
    const int ow = s.out_size(in.w);
    Tensor out(oh, ow, s.out_c);

    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            double* acc = &out.at(oy, ox, 0);
            for (int o = 0; o < s.out_c; ++o) acc[o] = p.bias[o];
            for (int ky = 0; ky < s.kernel; ++ky) {
                const int iy = oy * s.stride - s.pad + ky;
                if (iy < 0 || iy >= in.h) continue;
                for (int kx = 0; kx < s.kernel; ++kx) {
                    const int ix = ox * s.stride - s.pad + kx;
                    if (ix < 0 || ix >= in.w) continue;
                    const double* in_px = &in.at(iy, ix, 0);
                    const double* w_base =
                        &p.weight[(static_cast<size_t>(ky) * s.kernel + kx) * s.in_c * s.out_c];
                    for (int i = 0; i < s.in_c; ++i) {
                        const double v = in_px[i];
                        if (v == 0.0) continue;
                        const double* w = w_base + static_cast<size_t>(i) * s.out_c;
                        for (int o = 0; o < s.out_c; ++o) acc[o] += v * w[o];
                    }
                }
            }
        }
    }
    return out;
}

void conv_backward(const Tensor& in, const ConvParams& p, const Tensor& dout, ConvParams& grad,
                   Tensor* din) {
    const ConvShape& s = p.shape;
    for (int oy = 0; oy < dout.h; ++oy) {
        for (int ox = 0; ox < dout.w; ++ox) {
            const double* dacc = &dout.at(oy, ox, 0);
            for (int o = 0; o < s.out_c; ++o) grad.bias[o] += dacc[o];
            for (int ky = 0; ky < s.kernel; ++ky) {
                const int iy = oy * s.stride - s.pad + ky;
                if (iy < 0 || iy >= in.h) continue;
                for (int kx = 0; kx < s.kernel; ++kx) {
                    const int ix = ox * s.stride - s.pad + kx;
                    if (ix < 0 || ix >= in.w) continue;
                    const double* in_px = &in.at(iy, ix, 0);
                    const size_t w_off =
                        (static_cast<size_t>(ky) * s.kernel + kx) * s.in_c * s.out_c;
                    double* dw_base = &grad.weight[w_off];
                    const double* w_base = &p.weight[w_off];
                    double* din_px = din ? &din->at(iy, ix, 0) : nullptr;
                    for (int i = 0; i < s.in_c; ++i) {
                        const double v = in_px[i];
                        double* dw = dw_base + static_cast<size_t>(i) * s.out_c;
                        const double* w = w_base + static_cast<size_t>(i) * s.out_c;
                        double din_acc = 0.0;
                        for (int o = 0; o < s.out_c; ++o) {
                            dw[o] += v * dacc[o];
                            din_acc += w[o] * dacc[o];
                        }
                        if (din_px) din_px[i] += din_acc;
                    }
                }
            }
        }
    }
}

Tensor relu(const Tensor& t) {
    Tensor out = t;
    for (double& v : out.v) v = v > 0.0 ? v : 0.0;
    return out;
}

// act is the post-ReLU tensor; positive entries pass gradient through.
void relu_backward_inplace(const Tensor& act, Tensor& dact) {
    for (size_t i = 0; i < act.v.size(); ++i) {
        if (act.v[i] <= 0.0) dact.v[i] = 0.0;
    }
}

std::vector<double> fc_forward(const std::vector<double>& in, const FcParams& p) {
    if (static_cast<int>(in.size()) != p.in_dim) throw std::invalid_argument("fc input size mismatch");
    std::vector<double> out(p.out_dim);
    for (int o = 0; o < p.out_dim; ++o) {
        double acc = p.bias[o];
        const double* w = &p.weight[static_cast<size_t>(o) * p.in_dim];
        for (int i = 0; i < p.in_dim; ++i) acc += w[i] * in[i];
        out[o] = acc;
    }
    return out;
}

void fc_backward(const std::vector<double>& in, const FcParams& p, const double* dout,
                 FcParams& grad, std::vector<double>& din) {
    din.assign(p.in_dim, 0.0);
    for (int o = 0; o < p.out_dim; ++o) {
        const double d = dout[o];
        grad.bias[o] += d;
        double* dw = &grad.weight[static_cast<size_t>(o) * p.in_dim];
        const double* w = &p.weight[static_cast<size_t>(o) * p.in_dim];
        for (int i = 0; i < p.in_dim; ++i) {
            dw[i] += d * in[i];
            din[i] += d * w[i];
        }
    }
}

Tensor image_to_tensor(const Image& img) {
    Tensor t(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) t.at(y, x, c) = img.at(x, y, c);
        }
    }
    return t;
}

}  // namespace

// --- Spec operations ----------------------------------------------------------------

Tensor extract_features(const Image& img, const ModelParams& params, FeatureTrace* trace) {
    if (img.empty()) throw std::invalid_argument("extract_features requires a nonempty image");
    if (img.channels != params.config.in_channels) {
        throw std::invalid_argument("extract_features channel mismatch");
    }
    const int stride_total = 1 << params.config.feature_channels.size();
    if (img.width % stride_total != 0 || img.height % stride_total != 0) {
        throw std::invalid_argument("image dims must be divisible by the total feature stride");
    }

    Tensor x = image_to_tensor(img);
    if (trace) trace->input = x;
    for (const ConvParams& conv : params.features) {
        Tensor act = relu(conv_forward(x, conv));
        if (trace) trace->acts.push_back(act);
        x = std::move(act);
    }
    return x;
}

Tensor l2_normalize(const Tensor& f) {
    Tensor out = f;
    for (int y = 0; y < f.h; ++y) {
        for (int x = 0; x < f.w; ++x) {
            double* px = &out.at(y, x, 0);
            double sq = 0.0;
            for (int c = 0; c < f.c; ++c) sq += px[c] * px[c];
            if (sq <= 0.0) continue;  // zero vectors pass through
            const double inv = 1.0 / std::sqrt(sq);
            for (int c = 0; c < f.c; ++c) px[c] *= inv;
        }
    }
    return out;
}

Tensor correlate(const Tensor& fa, const Tensor& fb) {
    if (fa.h != fb.h || fa.w != fb.w || fa.c != fb.c) {
        throw std::invalid_argument("correlate requires same-shape feature maps");
    }
    const int locations = fa.h * fa.w;
    Tensor vol(fb.h, fb.w, locations);
    for (int y = 0; y < fb.h; ++y) {
        for (int x = 0; x < fb.w; ++x) {
            const double* b = &fb.at(y, x, 0);
            double* out = &vol.at(y, x, 0);
            for (int k = 0; k < locations; ++k) {
                const double* a = &fa.v[static_cast<size_t>(k) * fa.c];
                double acc = 0.0;
                for (int c = 0; c < fa.c; ++c) acc += b[c] * a[c];
                out[k] = acc;
            }
        }
    }
    return vol;
}

std::vector<double> regress(const Tensor& corr, const HeadParams& head, StageTrace* trace) {
    if (corr.c != head.conv1.shape.in_c) {
        throw std::invalid_argument("correlation volume does not match the head input");
    }
    Tensor a1 = relu(conv_forward(corr, head.conv1));
    Tensor a2 = relu(conv_forward(a1, head.conv2));
    std::vector<double> flat = a2.v;
    std::vector<double> out = fc_forward(flat, head.fc);
    if (trace) {
        trace->corr = corr;
        trace->act1 = std::move(a1);
        trace->act2 = std::move(a2);
        trace->fc_in = std::move(flat);
    }
    return out;
}

// --- Full model -----------------------------------------------------------------------

namespace {

void check_input(const Image& img, const NetConfig& cfg, const char* which) {
    if (img.width != cfg.image_size || img.height != cfg.image_size) {
        throw std::invalid_argument(std::string(which) + " image does not match the configured input size");
    }
}

}  // namespace

namespace {

ForwardTrace forward_impl(const Image& src, const Image& tgt, const Image* fixed_warp,
                          const ModelParams& params, bool trace_features) {
    check_input(src, params.config, "source");
    check_input(tgt, params.config, "target");

    ForwardTrace t;
    t.features_traced = trace_features;
    FeatureTrace* src_ft = trace_features ? &t.src_feat : nullptr;
    FeatureTrace* tgt_ft = trace_features ? &t.tgt_feat : nullptr;
    FeatureTrace* warp_ft = trace_features ? &t.warped_feat : nullptr;

    t.f_src_n = l2_normalize(extract_features(src, params, src_ft));
    t.f_tgt_n = l2_normalize(extract_features(tgt, params, tgt_ft));

    const Tensor corr1 = correlate(t.f_src_n, t.f_tgt_n);
    const std::vector<double> aff = regress(corr1, params.affine_head, &t.affine_stage);
    t.transform.affine = AffineParams::from_array({aff[0], aff[1], aff[2], aff[3], aff[4], aff[5]});

    // Stage 2 sees the source pre-warped by the stage-1 affine; the
    // resampling is a stop-gradient.
    Image warped_local;
    const Image* warped = fixed_warp;
    if (!warped) {
        const CompositeTransform affine_only{t.transform.affine, geometry::TpsParams::identity()};
        warped_local = geometry::warp_image(src, affine_only, src.width, src.height);
        warped = &warped_local;
    } else {
        check_input(*warped, params.config, "warped");
    }

    t.f_warped_n = l2_normalize(extract_features(*warped, params, warp_ft));
    const Tensor corr2 = correlate(t.f_warped_n, t.f_tgt_n);
    const std::vector<double> tps = regress(corr2, params.tps_head, &t.tps_stage);
    std::copy(tps.begin(), tps.end(), t.transform.tps.offsets.begin());
    return t;
}

}  // namespace

ForwardTrace forward_pair(const Image& src, const Image& tgt, const ModelParams& params,
                          bool trace_features) {
    return forward_impl(src, tgt, nullptr, params, trace_features);
}

ForwardTrace forward_pair_with_warp(const Image& src, const Image& tgt, const Image& warped,
                                    const ModelParams& params, bool trace_features) {
    return forward_impl(src, tgt, &warped, params, trace_features);
}

geometry::CompositeTransform estimate_transform(const Image& src, const Image& tgt,
                                                const ModelParams& params) {
    return forward_pair(src, tgt, params, false).transform;
}

namespace {

// VJP through one regression head; returns d(loss)/d(corr volume) when
// requested.
void head_backward(const StageTrace& stage, const HeadParams& head, const double* dout,
                   HeadParams& grad, Tensor* dcorr) {
    if (stage.corr.empty()) throw std::logic_error("backward called without a recorded forward");

    std::vector<double> dflat;
    fc_backward(stage.fc_in, head.fc, dout, grad.fc, dflat);

    Tensor dact2(stage.act2.h, stage.act2.w, stage.act2.c);
    dact2.v = std::move(dflat);
    relu_backward_inplace(stage.act2, dact2);

    Tensor dact1(stage.act1.h, stage.act1.w, stage.act1.c);
    conv_backward(stage.act1, head.conv2, dact2, grad.conv2, &dact1);
    relu_backward_inplace(stage.act1, dact1);

    if (dcorr) *dcorr = Tensor(stage.corr.h, stage.corr.w, stage.corr.c);
    conv_backward(stage.corr, head.conv1, dact1, grad.conv1, dcorr);
}

// d(loss)/d(volume) -> gradients on both normalized feature maps.
void correlate_backward(const Tensor& fa, const Tensor& fb, const Tensor& dvol, Tensor& dfa,
                        Tensor& dfb) {
    const int locations = fa.h * fa.w;
    for (int y = 0; y < fb.h; ++y) {
        for (int x = 0; x < fb.w; ++x) {
            const double* d = &dvol.at(y, x, 0);
            const double* b = &fb.at(y, x, 0);
            double* db = &dfb.at(y, x, 0);
            for (int k = 0; k < locations; ++k) {
                const double dk = d[k];
                if (dk == 0.0) continue;
                const double* a = &fa.v[static_cast<size_t>(k) * fa.c];
                double* da = &dfa.v[static_cast<size_t>(k) * fa.c];
                for (int c = 0; c < fa.c; ++c) {
                    db[c] += dk * a[c];
                    da[c] += dk * b[c];
                }
            }
        }
    }
}

// VJP of per-location normalization. raw is the pre-normalization tensor,
// normed its unit-norm image.
Tensor l2_normalize_backward(const Tensor& raw, const Tensor& normed, const Tensor& dnormed) {
    Tensor draw(raw.h, raw.w, raw.c);
    for (int y = 0; y < raw.h; ++y) {
        for (int x = 0; x < raw.w; ++x) {
            const double* r = &raw.at(y, x, 0);
            const double* n = &normed.at(y, x, 0);
            const double* dn = &dnormed.at(y, x, 0);
            double* dr = &draw.at(y, x, 0);
            double sq = 0.0;
            for (int c = 0; c < raw.c; ++c) sq += r[c] * r[c];
            if (sq <= 0.0) continue;  // zero vector: gradient stays zero
            const double inv = 1.0 / std::sqrt(sq);
            double dot = 0.0;
            for (int c = 0; c < raw.c; ++c) dot += n[c] * dn[c];
            for (int c = 0; c < raw.c; ++c) dr[c] = inv * (dn[c] - n[c] * dot);
        }
    }
    return draw;
}

// Backward through the conv stack of one feature extraction.
void features_backward(const FeatureTrace& ft, const ModelParams& params, const Tensor& dout,
                       ModelParams& grad) {
    Tensor d = dout;
    for (int i = static_cast<int>(params.features.size()) - 1; i >= 0; --i) {
        relu_backward_inplace(ft.acts[i], d);
        const Tensor& input = i == 0 ? ft.input : ft.acts[i - 1];
        Tensor dinput;
        Tensor* dinput_ptr = nullptr;
        if (i > 0) {
            dinput = Tensor(input.h, input.w, input.c);
            dinput_ptr = &dinput;
        }
        conv_backward(input, params.features[i], d, grad.features[i], dinput_ptr);
        if (i > 0) d = std::move(dinput);
    }
}

}  // namespace

void backward(const ForwardTrace& trace, const ModelParams& params,
              const std::array<double, kCompositeParamCount>& dparams, ModelParams& grad) {
    const bool need_features = trace.features_traced;

    Tensor dcorr1, dcorr2;
    head_backward(trace.affine_stage, params.affine_head, dparams.data(), grad.affine_head,
                  need_features ? &dcorr1 : nullptr);
    head_backward(trace.tps_stage, params.tps_head,
                  dparams.data() + geometry::kAffineParamCount, grad.tps_head,
                  need_features ? &dcorr2 : nullptr);
    if (!need_features) return;

    Tensor df_src(trace.f_src_n.h, trace.f_src_n.w, trace.f_src_n.c);
    Tensor df_tgt(trace.f_tgt_n.h, trace.f_tgt_n.w, trace.f_tgt_n.c);
    Tensor df_warp(trace.f_warped_n.h, trace.f_warped_n.w, trace.f_warped_n.c);
    correlate_backward(trace.f_src_n, trace.f_tgt_n, dcorr1, df_src, df_tgt);
    correlate_backward(trace.f_warped_n, trace.f_tgt_n, dcorr2, df_warp, df_tgt);

    const Tensor draw_src =
        l2_normalize_backward(trace.src_feat.acts.back(), trace.f_src_n, df_src);
    const Tensor draw_tgt =
        l2_normalize_backward(trace.tgt_feat.acts.back(), trace.f_tgt_n, df_tgt);
    const Tensor draw_warp =
        l2_normalize_backward(trace.warped_feat.acts.back(), trace.f_warped_n, df_warp);

    features_backward(trace.src_feat, params, draw_src, grad);
    features_backward(trace.tgt_feat, params, draw_tgt, grad);
    features_backward(trace.warped_feat, params, draw_warp, grad);
}

// --- Checkpoints -----------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'G', 'E', 'O', 'M'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, uint64_t v) {
    write_u32(out, static_cast<uint32_t>(v));
    write_u32(out, static_cast<uint32_t>(v >> 32));
}

uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("truncated checkpoint");
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

uint64_t read_u64(std::istream& in) {
    const uint64_t lo = read_u32(in);
    const uint64_t hi = read_u32(in);
    return lo | hi << 32;
}

void write_f32(std::ostream& out, float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_u32(out, bits);
}

float read_f32(std::istream& in) {
    const uint32_t bits = read_u32(in);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const nlohmann::json& metadata) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);

    nlohmann::json meta = metadata;
    meta["architecture"] = params.config.to_json();
    const std::string meta_str = meta.dump();

    out.write(kMagic, 4);
    write_u32(out, kVersion);
    write_u32(out, static_cast<uint32_t>(meta_str.size()));
    out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

    struct Entry {
        std::string name;
        const std::vector<double>* values;
    };
    std::vector<Entry> entries;
    params.visit([&entries](const std::string& name, const std::vector<double>& v) {
        entries.push_back({name, &v});
    });

    write_u32(out, static_cast<uint32_t>(entries.size()));
    uint64_t offset = 0;
    for (const Entry& e : entries) {
        write_u32(out, static_cast<uint32_t>(e.name.size()));
        out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        write_u32(out, 1);  // stored flat; shapes derive from the architecture
        write_u32(out, static_cast<uint32_t>(e.values->size()));
        write_u64(out, offset);
        offset += e.values->size() * 4;
    }
    write_u64(out, offset);
    for (const Entry& e : entries) {
        for (double v : *e.values) write_f32(out, static_cast<float>(v));
    }
    if (!out) throw std::runtime_error("failed to write checkpoint: " + path);
}

ModelParams load_checkpoint(const std::string& path, nlohmann::json* metadata) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("not a model checkpoint: " + path);
    }
    const uint32_t version = read_u32(in);
    if (version != kVersion) {
        throw std::runtime_error("unknown checkpoint version " + std::to_string(version));
    }

    const uint32_t meta_len = read_u32(in);
    std::string meta_str(meta_len, '\0');
    in.read(meta_str.data(), meta_len);
    if (!in) throw std::runtime_error("truncated checkpoint");
    const nlohmann::json meta = nlohmann::json::parse(meta_str);
    if (metadata) *metadata = meta;

    ModelParams params = ModelParams::init(NetConfig::from_json(meta.at("architecture")), 0);

    struct Entry {
        std::string name;
        uint32_t count = 0;
        uint64_t offset = 0;
    };
    const uint32_t n_entries = read_u32(in);
    std::vector<Entry> entries(n_entries);
    for (Entry& e : entries) {
        const uint32_t name_len = read_u32(in);
        e.name.resize(name_len);
        in.read(e.name.data(), name_len);
        const uint32_t ndim = read_u32(in);
        uint64_t total = 1;
        for (uint32_t d = 0; d < ndim; ++d) total *= read_u32(in);
        e.count = static_cast<uint32_t>(total);
        e.offset = read_u64(in);
    }
    read_u64(in);  // data section length
    const std::streampos data_start = in.tellg();

    size_t loaded = 0;
    params.visit([&](const std::string& name, std::vector<double>& values) {
        for (const Entry& e : entries) {
            if (e.name != name) continue;
            if (e.count != values.size()) {
                throw std::runtime_error("checkpoint entry shape mismatch for " + name);
            }
            in.seekg(data_start + static_cast<std::streamoff>(e.offset));
            for (double& v : values) v = read_f32(in);
            ++loaded;
            return;
        }
        throw std::runtime_error("checkpoint is missing entry " + name);
    });
    if (loaded != entries.size()) {
        throw std::runtime_error("checkpoint carries unknown entries");
    }
    return params;
}

}  // namespace geomatch::matchnet
