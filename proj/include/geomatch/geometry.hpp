#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "geomatch/image.hpp"

namespace geomatch::geometry {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

/// Ordered list of 2-D points. All transform math works in normalized
/// [-1,1]^2 coordinates; points may leave that square after mapping.
using PointSet = std::vector<Vec2>;

/// Row-major 2x2 matrix [[xx,xy],[yx,yy]].
struct Mat2 {
    double xx = 1.0, xy = 0.0;
    double yx = 0.0, yy = 1.0;
};

/// 6-parameter map p' = A*p + t. Parameter order everywhere (jacobians,
/// regressor outputs, checkpoints) is (a11, a12, tx, a21, a22, ty).
struct AffineParams {
    double a11 = 1.0, a12 = 0.0, tx = 0.0;
    double a21 = 0.0, a22 = 1.0, ty = 0.0;

    static AffineParams identity() { return {}; }
    static AffineParams from_array(const std::array<double, 6>& v) {
        return {v[0], v[1], v[2], v[3], v[4], v[5]};
    }
    std::array<double, 6> as_array() const { return {a11, a12, tx, a21, a22, ty}; }
    bool finite() const;
};

inline constexpr int kTpsControlCount = 9;
inline constexpr int kTpsParamCount = 18;
inline constexpr int kAffineParamCount = 6;
inline constexpr int kCompositeParamCount = kAffineParamCount + kTpsParamCount;

/// Thin-plate spline parameters: displacement offsets of the fixed 3x3
/// control grid spanning [-1,1]^2. offsets[0..8] are x displacements in
/// row-major control order, offsets[9..17] the y displacements. The zero
/// vector is the identity map.
struct TpsParams {
    std::array<double, kTpsParamCount> offsets{};

    static TpsParams identity() { return {}; }
    bool is_zero() const;
    bool finite() const;
};

/// Solved interpolation form of TpsParams: per output coordinate an affine
/// part (a0 + a1*x + a2*y) plus kernel weights on the 9 controls.
struct TpsCoefficients {
    std::array<double, 3> ax{0.0, 1.0, 0.0};
    std::array<double, 3> ay{0.0, 0.0, 1.0};
    std::array<double, kTpsControlCount> wx{};
    std::array<double, kTpsControlCount> wy{};
};

/// Estimated warp: affine applied first, then the TPS on the affine output.
struct CompositeTransform {
    AffineParams affine;
    TpsParams tps;

    static CompositeTransform identity() { return {}; }
};

/// Regular lattice over [-1,1]^2, row-major with x varying fastest.
struct Grid {
    int rows = 0;
    int cols = 0;
    PointSet points;
};

// --- Affine ---------------------------------------------------------------

Vec2 affine_apply(const AffineParams& params, const Vec2& p);
PointSet affine_apply(const AffineParams& params, const PointSet& pts);

/// Jacobian of affine_apply w.r.t. the 6 parameters. Rows alternate
/// (x_0, y_0, x_1, y_1, ...); the map is linear in the parameters so the
/// result does not depend on them.
std::vector<std::array<double, kAffineParamCount>> affine_jacobian(const PointSet& pts);

/// Linear part of the map (d output / d input).
Mat2 affine_linear(const AffineParams& params);

/// compose(a, b) applies b first: apply(compose(a,b), p) == apply(a, apply(b, p)).
AffineParams affine_compose(const AffineParams& a, const AffineParams& b);
AffineParams affine_inverse(const AffineParams& a);

// --- Thin-plate spline ------------------------------------------------------

/// The fixed 3x3 control sources, row-major over [-1,1]^2.
const std::array<Vec2, kTpsControlCount>& tps_control_points();

/// TPS kernel U(r) = r^2 log(r^2) evaluated on the squared radius; U(0) = 0.
double tps_kernel_r2(double r2);

/// Exact-interpolation solve (no regularization) through the 9 control
/// correspondences source -> source + offset. Zero offsets return the exact
/// identity coefficients.
TpsCoefficients tps_solve(const TpsParams& offsets);

Vec2 tps_apply(const TpsCoefficients& coeffs, const Vec2& p);
PointSet tps_apply(const TpsCoefficients& coeffs, const PointSet& pts);

/// Interpolation weights h_j(p): the solved map satisfies
/// x'(p) = sum_j h_j(p) * target_x_j (same weights for y). They are the
/// jacobian blocks of tps_apply(tps_solve(.)) w.r.t. the offsets and do not
/// depend on the offsets themselves. sum_j h_j(p) == 1 for every p.
std::array<double, kTpsControlCount> tps_point_weights(const Vec2& p);

/// Jacobian w.r.t. the 18 offsets, rows alternating (x_0, y_0, ...).
/// Column j < 9 affects only x rows, column 9+j only y rows, both with
/// weight h_j(p).
std::vector<std::array<double, kTpsParamCount>> tps_jacobian(const PointSet& pts);

/// Spatial derivative d tps(p) / d p.
Mat2 tps_spatial_jacobian(const TpsCoefficients& coeffs, const Vec2& p);

// --- Composite ---------------------------------------------------------------

/// CompositeTransform with the TPS solve cached; use for repeated evaluation.
struct SolvedComposite {
    AffineParams affine;
    TpsCoefficients tps;
};

SolvedComposite composite_solve(const CompositeTransform& t);
Vec2 composite_apply(const SolvedComposite& t, const Vec2& p);
PointSet composite_apply(const CompositeTransform& t, const PointSet& pts);

/// One jacobian row pair per point: d(x',y')/d(a11,a12,tx,a21,a22,ty,
/// tps offsets 0..17).
struct PointJacobian {
    std::array<double, kCompositeParamCount> x{};
    std::array<double, kCompositeParamCount> y{};
};

PointJacobian composite_point_jacobian(const SolvedComposite& t, const Vec2& p);
Mat2 composite_spatial_jacobian(const SolvedComposite& t, const Vec2& p);

// --- Grids and warping -------------------------------------------------------

/// rows x cols lattice over [-1,1]^2; corner coordinates are exactly +-1.
Grid make_grid(int rows, int cols);

/// Inverse warp: each output pixel center (normalized coords of the output
/// frame) samples src at composite_apply(t, center) with bilinear
/// interpolation; samples outside src are zero. t therefore maps the output
/// frame into the source frame.
Image warp_image(const Image& src, const CompositeTransform& t, int out_w, int out_h);

/// Bilinear fetch at normalized coords with zero padding outside [-1,1]^2.
/// Sample positions within 1e-9 of a pixel center snap to it exactly.
void sample_bilinear(const Image& src, const Vec2& p, double* out);

}  // namespace geomatch::geometry
