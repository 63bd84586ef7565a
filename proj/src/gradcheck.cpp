#include "geomatch/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "geomatch/matchnet.hpp"
#include "geomatch/objective.hpp"
#include "geomatch/util.hpp"

namespace geomatch::gradcheck {

using geometry::CompositeTransform;
using geometry::Grid;
using geometry::PointSet;
using geometry::Vec2;

void Result::merge(const Result& other) {
    checks += other.checks;
    failures += other.failures;
    if (other.worst_rel_err > worst_rel_err) {
        worst_rel_err = other.worst_rel_err;
        worst_case = other.worst_case;
    }
}

namespace {

double rel_err(const std::vector<double>& analytic, const std::vector<double>& fd) {
    double diff = 0.0, ref = 0.0;
    for (size_t i = 0; i < analytic.size(); ++i) {
        diff += (analytic[i] - fd[i]) * (analytic[i] - fd[i]);
        ref += fd[i] * fd[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-12);
}

void record(Result& r, double err, double tol, const std::string& label) {
    ++r.checks;
    if (err > r.worst_rel_err) {
        r.worst_rel_err = err;
        r.worst_case = label;
    }
    if (!(err <= tol)) ++r.failures;
}

// Central differences of a scalar functional over an explicit parameter
// vector.
std::vector<double> fd_gradient(const std::function<double()>& eval, std::vector<double*> params,
                                double h) {
    std::vector<double> g(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        const double saved = *params[i];
        *params[i] = saved + h;
        const double fp = eval();
        *params[i] = saved - h;
        const double fm = eval();
        *params[i] = saved;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

std::vector<double*> composite_param_ptrs(CompositeTransform& t) {
    return {&t.affine.a11, &t.affine.a12, &t.affine.tx,
            &t.affine.a21, &t.affine.a22, &t.affine.ty,
            &t.tps.offsets[0],  &t.tps.offsets[1],  &t.tps.offsets[2],  &t.tps.offsets[3],
            &t.tps.offsets[4],  &t.tps.offsets[5],  &t.tps.offsets[6],  &t.tps.offsets[7],
            &t.tps.offsets[8],  &t.tps.offsets[9],  &t.tps.offsets[10], &t.tps.offsets[11],
            &t.tps.offsets[12], &t.tps.offsets[13], &t.tps.offsets[14], &t.tps.offsets[15],
            &t.tps.offsets[16], &t.tps.offsets[17]};
}

CompositeTransform random_transform(std::mt19937_64& rng, double spread) {
    std::uniform_real_distribution<double> u(-spread, spread);
    CompositeTransform t;
    t.affine = {1.0 + u(rng), u(rng), u(rng), u(rng), 1.0 + u(rng), u(rng)};
    for (double& o : t.tps.offsets) o = u(rng);
    return t;
}

PointSet random_points(std::mt19937_64& rng, int n, double extent = 0.9) {
    std::uniform_real_distribution<double> u(-extent, extent);
    PointSet pts;
    pts.reserve(n);
    for (int i = 0; i < n; ++i) pts.push_back({u(rng), u(rng)});
    return pts;
}

double min_residual_grid(const CompositeTransform& pred, const CompositeTransform& ref,
                         const Grid& grid) {
    const auto sp = geometry::composite_solve(pred);
    const auto sr = geometry::composite_solve(ref);
    double lo = 1e300;
    for (const Vec2& g : grid.points) {
        const Vec2 a = geometry::composite_apply(sp, g);
        const Vec2 b = geometry::composite_apply(sr, g);
        lo = std::min(lo, std::hypot(a.x - b.x, a.y - b.y));
    }
    return lo;
}

double min_residual_cycle(const CompositeTransform& ab, const CompositeTransform& ba,
                          const Grid& grid) {
    const auto sab = geometry::composite_solve(ab);
    const auto sba = geometry::composite_solve(ba);
    double lo = 1e300;
    for (const Vec2& g : grid.points) {
        const Vec2 end = geometry::composite_apply(sab, geometry::composite_apply(sba, g));
        lo = std::min(lo, std::hypot(end.x - g.x, end.y - g.y));
    }
    return lo;
}

}  // namespace

Result check_transform_gradients(const Options& opts) {
    Result result;
    const Grid grid = geometry::make_grid(5, 5);

    for (int draw = 0; draw < opts.draws; ++draw) {
        std::mt19937_64 rng(mix_seed(opts.seed, static_cast<uint64_t>(draw)));
        const std::string tag = " draw " + std::to_string(draw);

        // Grid loss.
        {
            CompositeTransform pred, ref;
            for (int tries = 0;; ++tries) {
                pred = random_transform(rng, 0.25);
                ref = random_transform(rng, 0.25);
                if (min_residual_grid(pred, ref, grid) > 1e-3) break;
                if (tries > 100) throw std::runtime_error("gradcheck: rejection sampling stuck");
            }
            const auto loss = objective::grid_loss(pred, ref, grid);
            const auto fd = fd_gradient(
                [&] { return objective::grid_loss(pred, ref, grid).value; },
                composite_param_ptrs(pred), opts.fd_step);
            record(result, rel_err(loss.grad, fd), opts.tol_transform, "grid_loss" + tag);
        }

        // Keypoint loss.
        {
            CompositeTransform pred = random_transform(rng, 0.25);
            const PointSet pb = random_points(rng, 8);
            PointSet pa = random_points(rng, 8);
            // Keep residuals bounded away from zero.
            const auto solved = geometry::composite_solve(pred);
            for (size_t j = 0; j < pa.size(); ++j) {
                const Vec2 mapped = geometry::composite_apply(solved, pb[j]);
                if (std::hypot(mapped.x - pa[j].x, mapped.y - pa[j].y) < 1e-2) {
                    pa[j].x += 0.1;
                    pa[j].y -= 0.1;
                }
            }
            const auto loss = objective::keypoint_loss(pred, pb, pa);
            const auto fd = fd_gradient(
                [&] { return objective::keypoint_loss(pred, pb, pa).value; },
                composite_param_ptrs(pred), opts.fd_step);
            record(result, rel_err(loss.grad, fd), opts.tol_transform, "keypoint_loss" + tag);
        }

        // Cycle loss, both parameter sets.
        {
            CompositeTransform ab, ba;
            for (int tries = 0;; ++tries) {
                ab = random_transform(rng, 0.2);
                ba = random_transform(rng, 0.2);
                if (min_residual_cycle(ab, ba, grid) > 1e-3) break;
                if (tries > 100) throw std::runtime_error("gradcheck: rejection sampling stuck");
            }
            const auto loss = objective::cycle_loss(ab, ba, grid);
            auto ptrs = composite_param_ptrs(ab);
            const auto ptrs_ba = composite_param_ptrs(ba);
            ptrs.insert(ptrs.end(), ptrs_ba.begin(), ptrs_ba.end());
            const auto fd = fd_gradient(
                [&] { return objective::cycle_loss(ab, ba, grid).value; }, ptrs, opts.fd_step);
            record(result, rel_err(loss.grad, fd), opts.tol_transform, "cycle_loss" + tag);
        }
    }
    return result;
}

namespace {

Image random_image(int size, int channels, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(size, size, channels);
    for (double& v : img.data) v = u(rng);
    return img;
}

}  // namespace

Result check_network_gradients(const Options& opts) {
    Result result;

    matchnet::NetConfig cfg;
    cfg.image_size = 8;
    cfg.in_channels = 1;
    cfg.feature_channels = {2, 2};
    cfg.head_conv1_channels = 2;
    cfg.head_conv2_channels = 2;
    cfg.head_init_scale = 0.2;

    const Grid grid = geometry::make_grid(4, 4);
    const objective::LossWeights weights{1.0};

    // Fewer draws than the transform suite: each draw differences every
    // trainable weight.
    const int draws = std::max(1, opts.draws);
    for (int draw = 0; draw < draws; ++draw) {
        std::mt19937_64 rng(mix_seed(opts.seed ^ 0xabcdef, static_cast<uint64_t>(draw)));

        matchnet::ModelParams params = matchnet::ModelParams::init(cfg, rng());
        // Push the heads away from the identity so residuals are healthy.
        std::uniform_real_distribution<double> bias_u(-0.25, 0.25);
        for (double& b : params.affine_head.fc.bias) b += bias_u(rng);
        for (double& b : params.tps_head.fc.bias) b += bias_u(rng);

        const Image la = random_image(8, 1, rng);
        const Image lb = random_image(8, 1, rng);
        const Image ua = random_image(8, 1, rng);
        const Image ub = random_image(8, 1, rng);
        PointSet kp_b = random_points(rng, 5, 0.8);
        PointSet kp_a = random_points(rng, 5, 0.8);

        // The inter-stage warps are rendered once from the unperturbed model
        // and held fixed: training stops gradients at the resampling, so the
        // differentiable objective treats them as constants.
        auto render_warp = [&params](const Image& s, const Image& t) {
            const auto est = matchnet::estimate_transform(s, t, params);
            const CompositeTransform affine_only{est.affine, geometry::TpsParams::identity()};
            return geometry::warp_image(s, affine_only, s.width, s.height);
        };
        const Image warp_l = render_warp(la, lb);
        const Image warp_u_ba = render_warp(ua, ub);
        const Image warp_u_ab = render_warp(ub, ua);

        const bool with_features = opts.check_features;

        auto eval_total = [&]() {
            const auto tl = matchnet::forward_pair_with_warp(la, lb, warp_l, params, false);
            const auto tba = matchnet::forward_pair_with_warp(ua, ub, warp_u_ba, params, false);
            const auto tab = matchnet::forward_pair_with_warp(ub, ua, warp_u_ab, params, false);
            const auto ls = objective::keypoint_loss(tl.transform, kp_b, kp_a);
            const auto lus = objective::cycle_loss(tab.transform, tba.transform, grid);
            return objective::combined_loss({ls}, {lus}, weights).value;
        };

        // Analytic gradient via the backward pass.
        matchnet::ModelParams grad = matchnet::ModelParams::zeros_like(params);
        {
            const auto tl = matchnet::forward_pair_with_warp(la, lb, warp_l, params, with_features);
            const auto tba = matchnet::forward_pair_with_warp(ua, ub, warp_u_ba, params, with_features);
            const auto tab = matchnet::forward_pair_with_warp(ub, ua, warp_u_ab, params, with_features);
            const auto ls = objective::keypoint_loss(tl.transform, kp_b, kp_a);
            const auto lus = objective::cycle_loss(tab.transform, tba.transform, grid);

            std::array<double, geometry::kCompositeParamCount> d{};
            std::copy(ls.grad.begin(), ls.grad.end(), d.begin());
            matchnet::backward(tl, params, d, grad);
            for (int k = 0; k < geometry::kCompositeParamCount; ++k) {
                d[k] = weights.beta * lus.grad[k];
            }
            matchnet::backward(tab, params, d, grad);
            for (int k = 0; k < geometry::kCompositeParamCount; ++k) {
                d[k] = weights.beta * lus.grad[geometry::kCompositeParamCount + k];
            }
            matchnet::backward(tba, params, d, grad);
        }

        // Flatten trainable entries (heads; features too when requested).
        std::vector<double> analytic;
        std::vector<double*> ptrs;
        {
            std::vector<std::pair<std::string, std::vector<double>*>> param_arrays;
            params.visit([&](const std::string& name, std::vector<double>& v) {
                param_arrays.push_back({name, &v});
            });
            std::vector<const std::vector<double>*> grad_arrays;
            grad.visit([&](const std::string&, const std::vector<double>& v) {
                grad_arrays.push_back(&v);
            });
            for (size_t a = 0; a < param_arrays.size(); ++a) {
                const bool is_feature = param_arrays[a].first.rfind("features.", 0) == 0;
                if (is_feature && !with_features) continue;
                for (size_t i = 0; i < param_arrays[a].second->size(); ++i) {
                    ptrs.push_back(&(*param_arrays[a].second)[i]);
                    analytic.push_back((*grad_arrays[a])[i]);
                }
            }
        }

        const auto fd = fd_gradient(eval_total, ptrs, opts.fd_step);
        record(result, rel_err(analytic, fd), opts.tol_network,
               "network draw " + std::to_string(draw));
    }
    return result;
}

Result check_all(const Options& opts) {
    Result r = check_transform_gradients(opts);
    r.merge(check_network_gradients(opts));
    return r;
}

}  // namespace geomatch::gradcheck
