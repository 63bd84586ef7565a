#include "geomatch/objective.hpp"

#include <cmath>
#include <stdexcept>

namespace geomatch::objective {

using geometry::CompositeTransform;
using geometry::Grid;
using geometry::kCompositeParamCount;
using geometry::PointJacobian;
using geometry::PointSet;
using geometry::SolvedComposite;
using geometry::Vec2;

namespace {

// Residual length below which the direction is treated as the zero
// subgradient.
constexpr double kZeroResidual = 1e-300;

// Accumulates d||r||/d(params) = (r/||r||)^T * J into grad.
void accumulate_direction(const PointJacobian& jac, const Vec2& residual, double norm,
                          double scale, std::vector<double>& grad, size_t offset) {
    if (norm < kZeroResidual) return;
    const double ux = residual.x / norm;
    const double uy = residual.y / norm;
    for (int k = 0; k < kCompositeParamCount; ++k) {
        grad[offset + k] += scale * (ux * jac.x[k] + uy * jac.y[k]);
    }
}

}  // namespace

LossValue grid_loss(const CompositeTransform& pred, const CompositeTransform& reference,
                    const Grid& grid) {
    if (grid.points.empty()) throw std::invalid_argument("grid_loss requires a nonempty grid");

    const SolvedComposite sp = geometry::composite_solve(pred);
    const SolvedComposite sr = geometry::composite_solve(reference);
    const double inv_n = 1.0 / static_cast<double>(grid.points.size());

    LossValue out;
    out.grad.assign(kCompositeParamCount, 0.0);
    for (const Vec2& g : grid.points) {
        const Vec2 a = geometry::composite_apply(sp, g);
        const Vec2 b = geometry::composite_apply(sr, g);
        const Vec2 r{a.x - b.x, a.y - b.y};
        const double norm = std::hypot(r.x, r.y);
        out.value += inv_n * norm;
        accumulate_direction(geometry::composite_point_jacobian(sp, g), r, norm, inv_n,
                             out.grad, 0);
    }
    return out;
}

LossValue keypoint_loss(const CompositeTransform& pred_ba, const PointSet& points_b,
                        const PointSet& points_a) {
    if (points_b.empty() || points_b.size() != points_a.size()) {
        throw std::invalid_argument("keypoint_loss requires matched nonempty point sets");
    }

    const SolvedComposite sp = geometry::composite_solve(pred_ba);
    const double inv_m = 1.0 / static_cast<double>(points_b.size());

    LossValue out;
    out.grad.assign(kCompositeParamCount, 0.0);
    for (size_t j = 0; j < points_b.size(); ++j) {
        const Vec2 mapped = geometry::composite_apply(sp, points_b[j]);
        const Vec2 r{mapped.x - points_a[j].x, mapped.y - points_a[j].y};
        const double norm = std::hypot(r.x, r.y);
        out.value += inv_m * norm;
        accumulate_direction(geometry::composite_point_jacobian(sp, points_b[j]), r, norm,
                             inv_m, out.grad, 0);
    }
    return out;
}

LossValue cycle_loss(const CompositeTransform& pred_ab, const CompositeTransform& pred_ba,
                     const Grid& grid) {
    if (grid.points.empty()) throw std::invalid_argument("cycle_loss requires a nonempty grid");

    const SolvedComposite sab = geometry::composite_solve(pred_ab);
    const SolvedComposite sba = geometry::composite_solve(pred_ba);
    const double inv_n = 1.0 / static_cast<double>(grid.points.size());

    LossValue out;
    out.grad.assign(2 * kCompositeParamCount, 0.0);
    for (const Vec2& g : grid.points) {
        const Vec2 mid = geometry::composite_apply(sba, g);
        const Vec2 end = geometry::composite_apply(sab, mid);
        const Vec2 r{end.x - g.x, end.y - g.y};
        const double norm = std::hypot(r.x, r.y);
        out.value += inv_n * norm;
        if (norm < kZeroResidual) continue;

        // Outer transform: direct jacobian at the midpoint.
        accumulate_direction(geometry::composite_point_jacobian(sab, mid), r, norm, inv_n,
                             out.grad, 0);

        // Inner transform: chain through the outer spatial derivative.
        const geometry::Mat2 s = geometry::composite_spatial_jacobian(sab, mid);
        PointJacobian inner = geometry::composite_point_jacobian(sba, g);
        PointJacobian chained;
        for (int k = 0; k < kCompositeParamCount; ++k) {
            chained.x[k] = s.xx * inner.x[k] + s.xy * inner.y[k];
            chained.y[k] = s.yx * inner.x[k] + s.yy * inner.y[k];
        }
        accumulate_direction(chained, r, norm, inv_n, out.grad, kCompositeParamCount);
    }
    return out;
}

LossValue combined_loss(const std::vector<LossValue>& labeled_terms,
                        const std::vector<LossValue>& unlabeled_terms,
                        const LossWeights& weights) {
    if (labeled_terms.empty() && unlabeled_terms.empty()) {
        throw std::invalid_argument("combined_loss requires at least one term");
    }
    if (weights.beta < 0.0) throw std::invalid_argument("beta must be nonnegative");

    LossValue out;
    for (const auto& t : labeled_terms) {
        out.value += t.value;
        out.grad.insert(out.grad.end(), t.grad.begin(), t.grad.end());
    }
    for (const auto& t : unlabeled_terms) {
        out.value += weights.beta * t.value;
        for (double g : t.grad) out.grad.push_back(weights.beta * g);
    }
    return out;
}

}  // namespace geomatch::objective
