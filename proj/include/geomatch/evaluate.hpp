#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "geomatch/datakit.hpp"
#include "geomatch/matchnet.hpp"

namespace geomatch::evaluate {

struct CategoryPck {
    std::string category;
    long correct = 0;
    long total = 0;

    double fraction() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
};

/// Per-category keypoint transfer accuracy. Counts pool keypoints across a
/// category's pairs; the mean is the unweighted average over the categories
/// present.
struct PckReport {
    double alpha = 0.1;
    std::vector<CategoryPck> categories;  // sorted by category name
    double mean_pck = 0.0;
};

/// Counts source keypoints whose projection into the target frame lands
/// within alpha (closed threshold) of the annotated target keypoint.
/// Keypoints are in [0,1]^2 and the distance is measured there; pred maps
/// source-frame points into the target frame, i.e. estimate(I_tgt, I_src).
std::pair<long, long> pck_pair(const geometry::CompositeTransform& pred,
                               const geometry::PointSet& kp_src,
                               const geometry::PointSet& kp_tgt, double alpha);

/// Runs the model over every (labeled) pair in the PCK direction and
/// aggregates per-category counts. Order-independent and deterministic;
/// pairs may be evaluated in parallel.
PckReport evaluate_dataset(const matchnet::ModelParams& model,
                           const std::vector<datakit::LoadedPair>& pairs, double alpha,
                           int threads = 1);

nlohmann::json report_to_json(const PckReport& report);
PckReport report_from_json(const nlohmann::json& j);

/// Aligned-column table, categories as columns and one row per named report
/// (methods as rows when comparing checkpoints).
std::string report_table(const std::vector<std::pair<std::string, PckReport>>& rows);

}  // namespace geomatch::evaluate
