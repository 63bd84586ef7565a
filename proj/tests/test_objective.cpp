#include "doctest.h"

#include <cmath>
#include <random>

#include "geomatch/objective.hpp"
#include "oracles.hpp"

using namespace geomatch;
using namespace geomatch::geometry;
using namespace geomatch::objective;

namespace {

CompositeTransform random_composite(std::mt19937_64& rng, double spread = 0.25) {
    std::uniform_real_distribution<double> u(-spread, spread);
    CompositeTransform t;
    t.affine = {1.0 + u(rng), u(rng), u(rng), u(rng), 1.0 + u(rng), u(rng)};
    for (double& o : t.tps.offsets) o = u(rng);
    return t;
}

// Independent value oracle: plain loop over points, no gradient machinery.
double loop_grid_loss(const CompositeTransform& pred, const CompositeTransform& gt,
                      const Grid& grid) {
    const auto sp = composite_solve(pred);
    const auto sg = composite_solve(gt);
    double acc = 0.0;
    for (const Vec2& g : grid.points) {
        const Vec2 a = composite_apply(sp, g);
        const Vec2 b = composite_apply(sg, g);
        acc += std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y));
    }
    return acc / static_cast<double>(grid.points.size());
}

std::vector<double*> param_ptrs(CompositeTransform& t) {
    std::vector<double*> p{&t.affine.a11, &t.affine.a12, &t.affine.tx,
                           &t.affine.a21, &t.affine.a22, &t.affine.ty};
    for (double& o : t.tps.offsets) p.push_back(&o);
    return p;
}

void check_grad_fd(const std::vector<double>& analytic, std::vector<double*> ptrs,
                   const std::function<double()>& eval, double tol) {
    REQUIRE(analytic.size() == ptrs.size());
    double diff = 0.0, ref = 0.0;
    for (size_t k = 0; k < ptrs.size(); ++k) {
        const double saved = *ptrs[k];
        *ptrs[k] = saved + 1e-6;
        const double fp = eval();
        *ptrs[k] = saved - 1e-6;
        const double fm = eval();
        *ptrs[k] = saved;
        const double fd = (fp - fm) / 2e-6;
        diff += (analytic[k] - fd) * (analytic[k] - fd);
        ref += fd * fd;
    }
    CHECK(std::sqrt(diff) <= tol * std::max(std::sqrt(ref), 1e-12));
}

}  // namespace

TEST_SUITE("objective") {

TEST_CASE("grid_loss of coincident transforms is exactly zero") {
    std::mt19937_64 rng(61);
    const Grid grid = make_grid(6, 6);
    for (int draw = 0; draw < 100; ++draw) {
        const CompositeTransform t = random_composite(rng);
        const LossValue l = grid_loss(t, t, grid);
        CHECK(l.value == 0.0);
        for (double g : l.grad) CHECK(g == 0.0);
    }
}

TEST_CASE("grid_loss of a uniform translation is the displacement") {
    CompositeTransform pred;
    pred.affine.tx = 0.1;
    const Grid grid = make_grid(7, 5);
    const LossValue l = grid_loss(pred, CompositeTransform::identity(), grid);
    CHECK(std::abs(l.value - 0.1) <= 1e-12);
}

TEST_CASE("grid_loss matches the loop oracle and finite differences") {
    std::mt19937_64 rng(67);
    const Grid grid = make_grid(5, 5);
    for (int draw = 0; draw < 10; ++draw) {
        CompositeTransform pred = random_composite(rng);
        const CompositeTransform gt = random_composite(rng);
        const LossValue l = grid_loss(pred, gt, grid);
        CHECK(l.value == doctest::Approx(loop_grid_loss(pred, gt, grid)).epsilon(1e-12));
        REQUIRE(l.grad.size() == 24);
        check_grad_fd(l.grad, param_ptrs(pred),
                      [&] { return grid_loss(pred, gt, grid).value; }, 1e-5);
    }
    CHECK_THROWS_AS(grid_loss(random_composite(rng), random_composite(rng), Grid{}),
                    std::invalid_argument);
}

TEST_CASE("keypoint_loss closed forms") {
    // A transform mapping each p_b exactly onto p_a gives zero.
    std::mt19937_64 rng(71);
    CompositeTransform pred = random_composite(rng);
    const auto solved = composite_solve(pred);
    PointSet pb, pa;
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    for (int i = 0; i < 6; ++i) {
        const Vec2 b{u(rng), u(rng)};
        pb.push_back(b);
        pa.push_back(composite_apply(solved, b));
    }
    CHECK(keypoint_loss(pred, pb, pa).value == 0.0);

    // Identity prediction with a uniform target offset.
    PointSet pa_off;
    for (const Vec2& b : pb) pa_off.push_back({b.x + 0.05, b.y});
    const LossValue l = keypoint_loss(CompositeTransform::identity(), pb, pa_off);
    CHECK(std::abs(l.value - 0.05) <= 1e-12);
}

TEST_CASE("keypoint_loss matches loop oracle and finite differences") {
    std::mt19937_64 rng(73);
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    for (int draw = 0; draw < 10; ++draw) {
        CompositeTransform pred = random_composite(rng);
        PointSet pb, pa;
        for (int i = 0; i < 7; ++i) {
            pb.push_back({u(rng), u(rng)});
            pa.push_back({u(rng), u(rng)});
        }
        const LossValue l = keypoint_loss(pred, pb, pa);

        const auto solved = composite_solve(pred);
        double want = 0.0;
        for (size_t i = 0; i < pb.size(); ++i) {
            const Vec2 m = composite_apply(solved, pb[i]);
            want += std::hypot(m.x - pa[i].x, m.y - pa[i].y);
        }
        want /= static_cast<double>(pb.size());
        CHECK(l.value == doctest::Approx(want).epsilon(1e-12));
        check_grad_fd(l.grad, param_ptrs(pred),
                      [&] { return keypoint_loss(pred, pb, pa).value; }, 1e-5);
    }

    CHECK_THROWS_AS(keypoint_loss(CompositeTransform::identity(), PointSet{}, PointSet{}),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        keypoint_loss(CompositeTransform::identity(), PointSet{{0, 0}}, PointSet{{0, 0}, {1, 1}}),
        std::invalid_argument);
}

TEST_CASE("cycle_loss closed forms") {
    const Grid grid = make_grid(5, 5);
    CHECK(cycle_loss(CompositeTransform::identity(), CompositeTransform::identity(), grid).value ==
          0.0);

    CompositeTransform fwd, bwd;
    fwd.affine.tx = -0.1;
    bwd.affine.tx = 0.1;
    CHECK(cycle_loss(fwd, bwd, grid).value == 0.0);  // exact inverse pair

    CompositeTransform both;
    both.affine.tx = 0.1;
    const LossValue l = cycle_loss(both, both, grid);
    CHECK(std::abs(l.value - 0.2) <= 1e-12);  // displacements add
}

TEST_CASE("cycle_loss of an affine and its inverse vanishes") {
    std::mt19937_64 rng(79);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    const Grid grid = make_grid(4, 4);
    for (int draw = 0; draw < 100; ++draw) {
        CompositeTransform t;
        t.affine = {1 + u(rng), u(rng), u(rng), u(rng), 1 + u(rng), u(rng)};
        CompositeTransform inv;
        inv.affine = affine_inverse(t.affine);
        CHECK(cycle_loss(t, inv, grid).value <= 1e-9);
    }
}

TEST_CASE("cycle_loss gradient covers both parameter sets") {
    std::mt19937_64 rng(83);
    const Grid grid = make_grid(4, 4);
    for (int draw = 0; draw < 8; ++draw) {
        CompositeTransform ab = random_composite(rng, 0.2);
        CompositeTransform ba = random_composite(rng, 0.2);
        const LossValue l = cycle_loss(ab, ba, grid);
        REQUIRE(l.grad.size() == 48);

        auto ptrs = param_ptrs(ab);
        auto ba_ptrs = param_ptrs(ba);
        ptrs.insert(ptrs.end(), ba_ptrs.begin(), ba_ptrs.end());
        check_grad_fd(l.grad, ptrs, [&] { return cycle_loss(ab, ba, grid).value; }, 1e-5);
    }
    CHECK_THROWS_AS(cycle_loss(CompositeTransform::identity(), CompositeTransform::identity(),
                               Grid{}),
                    std::invalid_argument);
}

TEST_CASE("combined_loss arithmetic and beta linearity") {
    LossValue a;
    a.value = 0.2;
    a.grad = {1.0, 2.0};
    LossValue b;
    b.value = 0.3;
    b.grad = {3.0};

    const LossValue at_beta1 = combined_loss({a}, {b}, LossWeights{1.0});
    CHECK(at_beta1.value == doctest::Approx(0.5).epsilon(1e-15));
    REQUIRE(at_beta1.grad.size() == 3);
    CHECK(at_beta1.grad[0] == 1.0);
    CHECK(at_beta1.grad[2] == 3.0);

    const LossValue at_beta0 = combined_loss({a}, {b}, LossWeights{0.0});
    CHECK(at_beta0.value == a.value);
    CHECK(at_beta0.grad[2] == 0.0);

    // value(beta) = value(0) + beta * (value(1) - value(0))
    std::mt19937_64 rng(89);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int draw = 0; draw < 20; ++draw) {
        LossValue s{u(rng), {u(rng)}};
        LossValue t{u(rng), {u(rng)}};
        const double beta = 2.0 * u(rng);
        const double v0 = combined_loss({s}, {t}, LossWeights{0.0}).value;
        const double v1 = combined_loss({s}, {t}, LossWeights{1.0}).value;
        const double vb = combined_loss({s}, {t}, LossWeights{beta}).value;
        CHECK(vb == doctest::Approx(v0 + beta * (v1 - v0)).epsilon(1e-12));
    }

    // Hand-summed oracle at beta = 2.
    const LossValue two = combined_loss({a, b}, {a}, LossWeights{2.0});
    CHECK(two.value == doctest::Approx(0.2 + 0.3 + 2.0 * 0.2).epsilon(1e-15));

    CHECK_THROWS_AS(combined_loss({}, {}, LossWeights{1.0}), std::invalid_argument);
    CHECK_THROWS_AS(combined_loss({a}, {}, LossWeights{-0.5}), std::invalid_argument);
}

TEST_CASE("losses are nonnegative with zero exactly at zero residuals") {
    std::mt19937_64 rng(97);
    const Grid grid = make_grid(4, 4);
    for (int draw = 0; draw < 20; ++draw) {
        const CompositeTransform a = random_composite(rng);
        const CompositeTransform b = random_composite(rng);
        CHECK(grid_loss(a, b, grid).value >= 0.0);
        CHECK(cycle_loss(a, b, grid).value >= 0.0);
    }
}

}  // TEST_SUITE
