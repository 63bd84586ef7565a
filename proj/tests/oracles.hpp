#pragma once

// Test-only oracles: independent implementations used to pin expected values
// (finite differences, dense solves, loop re-implementations). Nothing here
// may call into the code paths it checks.

#include <array>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace oracles {

// Central finite difference of a scalar function of one scalar slot.
inline double central_diff(const std::function<double(double)>& f, double x, double h = 1e-6) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Dense Gaussian elimination with partial pivoting (independent of Eigen).
inline std::vector<double> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b) {
    const size_t n = a.size();
    for (size_t col = 0; col < n; ++col) {
        size_t pivot = col;
        for (size_t r = col + 1; r < n; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        }
        if (std::abs(a[pivot][col]) < 1e-14) throw std::runtime_error("oracle solve: singular");
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (size_t r = col + 1; r < n; ++r) {
            const double f = a[r][col] / a[col][col];
            for (size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (size_t i = n; i-- > 0;) {
        double acc = b[i];
        for (size_t c = i + 1; c < n; ++c) acc -= a[i][c] * x[c];
        x[i] = acc / a[i][i];
    }
    return x;
}

// Direct TPS interpolation oracle: solves the 12x12 side-condition system for
// one output dimension and evaluates at a probe point. Kernel r^2 log(r^2).
inline double tps_direct_eval(const std::array<double, 9>& control_x,
                              const std::array<double, 9>& control_y,
                              const std::array<double, 9>& targets, double px, double py) {
    auto kern = [](double dx, double dy) {
        const double r2 = dx * dx + dy * dy;
        return r2 > 0.0 ? r2 * std::log(r2) : 0.0;
    };
    std::vector<std::vector<double>> a(12, std::vector<double>(12, 0.0));
    std::vector<double> b(12, 0.0);
    for (int i = 0; i < 9; ++i) {
        for (int j = 0; j < 9; ++j) {
            a[i][j] = kern(control_x[i] - control_x[j], control_y[i] - control_y[j]);
        }
        a[i][9] = a[9][i] = 1.0;
        a[i][10] = a[10][i] = control_x[i];
        a[i][11] = a[11][i] = control_y[i];
        b[i] = targets[i];
    }
    const auto s = solve_dense(a, b);
    double val = s[9] + s[10] * px + s[11] * py;
    for (int i = 0; i < 9; ++i) val += s[i] * kern(px - control_x[i], py - control_y[i]);
    return val;
}

// Scratch directory for filesystem-touching tests.
inline std::string temp_dir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    const auto dir = std::filesystem::temp_directory_path() /
                     ("geomatch_test_" + tag + "_" + std::to_string(rng()));
    std::filesystem::create_directories(dir);
    return dir.string();
}

}  // namespace oracles
