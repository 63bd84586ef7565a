#include "geomatch/geometry.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace geomatch::geometry {

namespace {

bool finite2(const Vec2& p) { return std::isfinite(p.x) && std::isfinite(p.y); }

void require_finite(const PointSet& pts) {
    for (const auto& p : pts) {
        if (!finite2(p)) throw std::invalid_argument("point set contains non-finite values");
    }
}

}  // namespace

bool AffineParams::finite() const {
    for (double v : as_array()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

bool TpsParams::is_zero() const {
    for (double v : offsets) {
        if (v != 0.0) return false;
    }
    return true;
}

bool TpsParams::finite() const {
    for (double v : offsets) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

// --- Affine -----------------------------------------------------------------

Vec2 affine_apply(const AffineParams& params, const Vec2& p) {
    return {params.a11 * p.x + params.a12 * p.y + params.tx,
            params.a21 * p.x + params.a22 * p.y + params.ty};
}

PointSet affine_apply(const AffineParams& params, const PointSet& pts) {
    if (!params.finite()) throw std::invalid_argument("affine parameters must be finite");
    require_finite(pts);
    PointSet out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back(affine_apply(params, p));
    return out;
}

std::vector<std::array<double, kAffineParamCount>> affine_jacobian(const PointSet& pts) {
    require_finite(pts);
    std::vector<std::array<double, kAffineParamCount>> rows;
    rows.reserve(pts.size() * 2);
    for (const auto& p : pts) {
        rows.push_back({p.x, p.y, 1.0, 0.0, 0.0, 0.0});
        rows.push_back({0.0, 0.0, 0.0, p.x, p.y, 1.0});
    }
    return rows;
}

Mat2 affine_linear(const AffineParams& params) {
    return {params.a11, params.a12, params.a21, params.a22};
}

AffineParams affine_compose(const AffineParams& a, const AffineParams& b) {
    AffineParams c;
    c.a11 = a.a11 * b.a11 + a.a12 * b.a21;
    c.a12 = a.a11 * b.a12 + a.a12 * b.a22;
    c.a21 = a.a21 * b.a11 + a.a22 * b.a21;
    c.a22 = a.a21 * b.a12 + a.a22 * b.a22;
    c.tx = a.a11 * b.tx + a.a12 * b.ty + a.tx;
    c.ty = a.a21 * b.tx + a.a22 * b.ty + a.ty;
    return c;
}

AffineParams affine_inverse(const AffineParams& a) {
    const double det = a.a11 * a.a22 - a.a12 * a.a21;
    if (det == 0.0 || !std::isfinite(det)) {
        throw std::invalid_argument("affine map is not invertible");
    }
    AffineParams inv;
    inv.a11 = a.a22 / det;
    inv.a12 = -a.a12 / det;
    inv.a21 = -a.a21 / det;
    inv.a22 = a.a11 / det;
    inv.tx = -(inv.a11 * a.tx + inv.a12 * a.ty);
    inv.ty = -(inv.a21 * a.tx + inv.a22 * a.ty);
    return inv;
}

// --- Thin-plate spline --------------------------------------------------------

const std::array<Vec2, kTpsControlCount>& tps_control_points() {
    static const std::array<Vec2, kTpsControlCount> controls = [] {
        std::array<Vec2, kTpsControlCount> c;
        int k = 0;
        for (int r = 0; r < 3; ++r) {
            for (int col = 0; col < 3; ++col) {
                c[k++] = {static_cast<double>(col - 1), static_cast<double>(r - 1)};
            }
        }
        return c;
    }();
    return controls;
}

double tps_kernel_r2(double r2) {
    if (r2 <= 0.0) return 0.0;
    return r2 * std::log(r2);
}

namespace {

// The interpolation system [[K, P],[P^T, 0]] for the fixed 3x3 source grid.
// solution(target) = SolveMatrix * target per output coordinate, where the
// first 9 solution entries are kernel weights and the last 3 the affine part
// (a0, a1, a2). The system matrix is constant, so its inverse block is
// computed once.
struct TpsSystem {
    Eigen::Matrix<double, 12, 9> solve_matrix;

    TpsSystem() {
        const auto& c = tps_control_points();
        Eigen::Matrix<double, 12, 12> L = Eigen::Matrix<double, 12, 12>::Zero();
        for (int i = 0; i < 9; ++i) {
            for (int j = 0; j < 9; ++j) {
                const double dx = c[i].x - c[j].x;
                const double dy = c[i].y - c[j].y;
                L(i, j) = tps_kernel_r2(dx * dx + dy * dy);
            }
            L(i, 9) = 1.0;
            L(i, 10) = c[i].x;
            L(i, 11) = c[i].y;
            L(9, i) = 1.0;
            L(10, i) = c[i].x;
            L(11, i) = c[i].y;
        }
        Eigen::FullPivLU<Eigen::Matrix<double, 12, 12>> lu(L);
        if (!lu.isInvertible()) {
            throw std::runtime_error("TPS control system is singular");
        }
        solve_matrix = lu.inverse().leftCols<9>();
    }
};

const TpsSystem& tps_system() {
    static const TpsSystem system;
    return system;
}

}  // namespace

TpsCoefficients tps_solve(const TpsParams& offsets) {
    if (!offsets.finite()) throw std::invalid_argument("TPS offsets must be finite");
    TpsCoefficients out;
    if (offsets.is_zero()) return out;  // exact identity

    const auto& c = tps_control_points();
    Eigen::Matrix<double, 9, 1> tx, ty;
    for (int i = 0; i < 9; ++i) {
        tx(i) = c[i].x + offsets.offsets[i];
        ty(i) = c[i].y + offsets.offsets[9 + i];
    }
    const Eigen::Matrix<double, 12, 1> sx = tps_system().solve_matrix * tx;
    const Eigen::Matrix<double, 12, 1> sy = tps_system().solve_matrix * ty;
    for (int i = 0; i < 9; ++i) {
        out.wx[i] = sx(i);
        out.wy[i] = sy(i);
    }
    out.ax = {sx(9), sx(10), sx(11)};
    out.ay = {sy(9), sy(10), sy(11)};
    return out;
}

Vec2 tps_apply(const TpsCoefficients& coeffs, const Vec2& p) {
    const auto& c = tps_control_points();
    double x = coeffs.ax[0] + coeffs.ax[1] * p.x + coeffs.ax[2] * p.y;
    double y = coeffs.ay[0] + coeffs.ay[1] * p.x + coeffs.ay[2] * p.y;
    for (int i = 0; i < kTpsControlCount; ++i) {
        const double dx = p.x - c[i].x;
        const double dy = p.y - c[i].y;
        const double u = tps_kernel_r2(dx * dx + dy * dy);
        x += coeffs.wx[i] * u;
        y += coeffs.wy[i] * u;
    }
    return {x, y};
}

PointSet tps_apply(const TpsCoefficients& coeffs, const PointSet& pts) {
    require_finite(pts);
    PointSet out;
    out.reserve(pts.size());
    for (const auto& p : pts) {
        Vec2 q = tps_apply(coeffs, p);
        if (!finite2(q)) throw std::invalid_argument("TPS evaluation produced non-finite values");
        out.push_back(q);
    }
    return out;
}

std::array<double, kTpsControlCount> tps_point_weights(const Vec2& p) {
    const auto& c = tps_control_points();
    std::array<double, 12> phi;
    for (int i = 0; i < 9; ++i) {
        const double dx = p.x - c[i].x;
        const double dy = p.y - c[i].y;
        phi[i] = tps_kernel_r2(dx * dx + dy * dy);
    }
    phi[9] = 1.0;
    phi[10] = p.x;
    phi[11] = p.y;

    const auto& M = tps_system().solve_matrix;
    std::array<double, kTpsControlCount> h{};
    for (int j = 0; j < 9; ++j) {
        double acc = 0.0;
        for (int k = 0; k < 12; ++k) acc += phi[k] * M(k, j);
        h[j] = acc;
    }
    return h;
}

std::vector<std::array<double, kTpsParamCount>> tps_jacobian(const PointSet& pts) {
    if (pts.empty()) throw std::invalid_argument("tps_jacobian requires a nonempty point set");
    require_finite(pts);
    std::vector<std::array<double, kTpsParamCount>> rows;
    rows.reserve(pts.size() * 2);
    for (const auto& p : pts) {
        const auto h = tps_point_weights(p);
        std::array<double, kTpsParamCount> rx{}, ry{};
        for (int j = 0; j < 9; ++j) {
            rx[j] = h[j];
            ry[9 + j] = h[j];
        }
        rows.push_back(rx);
        rows.push_back(ry);
    }
    return rows;
}

Mat2 tps_spatial_jacobian(const TpsCoefficients& coeffs, const Vec2& p) {
    const auto& c = tps_control_points();
    Mat2 j{coeffs.ax[1], coeffs.ax[2], coeffs.ay[1], coeffs.ay[2]};
    for (int i = 0; i < kTpsControlCount; ++i) {
        const double dx = p.x - c[i].x;
        const double dy = p.y - c[i].y;
        const double r2 = dx * dx + dy * dy;
        if (r2 <= 0.0) continue;  // kernel gradient vanishes at a control point
        const double g = 2.0 * (std::log(r2) + 1.0);
        j.xx += coeffs.wx[i] * g * dx;
        j.xy += coeffs.wx[i] * g * dy;
        j.yx += coeffs.wy[i] * g * dx;
        j.yy += coeffs.wy[i] * g * dy;
    }
    return j;
}

// --- Composite -----------------------------------------------------------------

SolvedComposite composite_solve(const CompositeTransform& t) {
    if (!t.affine.finite()) throw std::invalid_argument("affine parameters must be finite");
    return {t.affine, tps_solve(t.tps)};
}

Vec2 composite_apply(const SolvedComposite& t, const Vec2& p) {
    return tps_apply(t.tps, affine_apply(t.affine, p));
}

PointSet composite_apply(const CompositeTransform& t, const PointSet& pts) {
    const SolvedComposite solved = composite_solve(t);
    require_finite(pts);
    PointSet out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back(composite_apply(solved, p));
    return out;
}

PointJacobian composite_point_jacobian(const SolvedComposite& t, const Vec2& p) {
    const Vec2 q = affine_apply(t.affine, p);
    const Mat2 s = tps_spatial_jacobian(t.tps, q);
    const auto h = tps_point_weights(q);

    PointJacobian jac;
    // Affine block: chain the TPS spatial derivative at q through the affine
    // parameter jacobian [[px,py,1,0,0,0],[0,0,0,px,py,1]].
    jac.x[0] = s.xx * p.x;
    jac.x[1] = s.xx * p.y;
    jac.x[2] = s.xx;
    jac.x[3] = s.xy * p.x;
    jac.x[4] = s.xy * p.y;
    jac.x[5] = s.xy;
    jac.y[0] = s.yx * p.x;
    jac.y[1] = s.yx * p.y;
    jac.y[2] = s.yx;
    jac.y[3] = s.yy * p.x;
    jac.y[4] = s.yy * p.y;
    jac.y[5] = s.yy;
    // TPS block: x offsets drive x output only, y offsets y output only.
    for (int j = 0; j < 9; ++j) {
        jac.x[kAffineParamCount + j] = h[j];
        jac.y[kAffineParamCount + 9 + j] = h[j];
    }
    return jac;
}

Mat2 composite_spatial_jacobian(const SolvedComposite& t, const Vec2& p) {
    const Vec2 q = affine_apply(t.affine, p);
    const Mat2 s = tps_spatial_jacobian(t.tps, q);
    const Mat2 a = affine_linear(t.affine);
    return {s.xx * a.xx + s.xy * a.yx, s.xx * a.xy + s.xy * a.yy,
            s.yx * a.xx + s.yy * a.yx, s.yx * a.xy + s.yy * a.yy};
}

// --- Grids and warping -----------------------------------------------------------

Grid make_grid(int rows, int cols) {
    if (rows < 2 || cols < 2) throw std::invalid_argument("grid dimensions must be >= 2");
    Grid g;
    g.rows = rows;
    g.cols = cols;
    g.points.reserve(static_cast<size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r) {
        // (2r - (rows-1)) / (rows-1) puts the extremes exactly at +-1.
        const double y = static_cast<double>(2 * r - (rows - 1)) / (rows - 1);
        for (int c = 0; c < cols; ++c) {
            const double x = static_cast<double>(2 * c - (cols - 1)) / (cols - 1);
            g.points.push_back({x, y});
        }
    }
    return g;
}

namespace {

constexpr double kSampleSnap = 1e-9;

double snap_to_integer(double v) {
    const double r = std::round(v);
    return std::abs(v - r) < kSampleSnap ? r : v;
}

}  // namespace

void sample_bilinear(const Image& src, const Vec2& p, double* out) {
    // Normalized [-1,1] to pixel coordinates; pixel centers at integer indices.
    const double ux = snap_to_integer((p.x + 1.0) * 0.5 * src.width - 0.5);
    const double uy = snap_to_integer((p.y + 1.0) * 0.5 * src.height - 0.5);

    const int x0 = static_cast<int>(std::floor(ux));
    const int y0 = static_cast<int>(std::floor(uy));
    const double fx = ux - x0;
    const double fy = uy - y0;

    auto tap = [&](int x, int y, int c) -> double {
        if (x < 0 || x >= src.width || y < 0 || y >= src.height) return 0.0;
        return src.at(x, y, c);
    };

    for (int c = 0; c < src.channels; ++c) {
        const double v00 = tap(x0, y0, c);
        const double v10 = tap(x0 + 1, y0, c);
        const double v01 = tap(x0, y0 + 1, c);
        const double v11 = tap(x0 + 1, y0 + 1, c);
        // Incremental lerp keeps exact pixel hits and constant images exact.
        const double r0 = v00 + fx * (v10 - v00);
        const double r1 = v01 + fx * (v11 - v01);
        out[c] = r0 + fy * (r1 - r0);
    }
}

Image warp_image(const Image& src, const CompositeTransform& t, int out_w, int out_h) {
    if (src.empty()) throw std::invalid_argument("warp_image requires a nonempty source image");
    if (out_w <= 0 || out_h <= 0) throw std::invalid_argument("warp_image output size must be positive");

    const SolvedComposite solved = composite_solve(t);
    Image out(out_w, out_h, src.channels);
    std::vector<double> px(src.channels);
    for (int y = 0; y < out_h; ++y) {
        const double ny = static_cast<double>(2 * y + 1 - out_h) / out_h;
        for (int x = 0; x < out_w; ++x) {
            const double nx = static_cast<double>(2 * x + 1 - out_w) / out_w;
            const Vec2 s = composite_apply(solved, Vec2{nx, ny});
            sample_bilinear(src, s, px.data());
            for (int c = 0; c < src.channels; ++c) out.at(x, y, c) = px[c];
        }
    }
    return out;
}

}  // namespace geomatch::geometry
