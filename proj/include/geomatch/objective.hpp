#pragma once

#include <vector>

#include "geomatch/geometry.hpp"

namespace geomatch::objective {

/// Loss value plus partials w.r.t. each predicted parameter set involved.
/// Parameter layout per transform is (a11, a12, tx, a21, a22, ty, tps
/// offsets 0..17), 24 entries. Losses over a single predicted transform carry
/// a 24-entry grad; the cycle loss carries 48 entries, the A->B block first,
/// then B->A.
struct LossValue {
    double value = 0.0;
    std::vector<double> grad;
};

struct LossWeights {
    double beta = 1.0;
};

/// Mean Euclidean displacement between the grid mapped by the predicted and
/// reference transforms: (1/N) * sum_i || T_pred(g_i) - T_ref(g_i) ||.
/// Gradient is w.r.t. the predicted parameters only.
LossValue grid_loss(const geometry::CompositeTransform& pred,
                    const geometry::CompositeTransform& reference,
                    const geometry::Grid& grid);

/// Mean transfer error of ground-truth correspondences:
/// (1/M) * sum_j || T_pred(p_b_j) - p_a_j ||, with pred mapping the B frame
/// into the A frame.
LossValue keypoint_loss(const geometry::CompositeTransform& pred_ba,
                        const geometry::PointSet& points_b,
                        const geometry::PointSet& points_a);

/// Self-consistent grid loss: (1/N) * sum_i || T_ab(T_ba(g_i)) - g_i ||, the
/// grid living in the B frame. Gradient covers both parameter sets (chain
/// rule through T_ab for the inner transform).
LossValue cycle_loss(const geometry::CompositeTransform& pred_ab,
                     const geometry::CompositeTransform& pred_ba,
                     const geometry::Grid& grid);

/// Combined objective: sum of supervised terms plus beta times the sum of
/// unsupervised terms (plain sums, no averaging over pairs). The gradient is
/// the concatenation of each contributing term's gradient in argument order,
/// labeled terms first, unsupervised gradients scaled by beta.
LossValue combined_loss(const std::vector<LossValue>& labeled_terms,
                        const std::vector<LossValue>& unlabeled_terms,
                        const LossWeights& weights);

}  // namespace geomatch::objective
