#include "geomatch/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "geomatch/util.hpp"

namespace geomatch::evaluate {

using datakit::LoadedPair;
using geometry::Vec2;

std::pair<long, long> pck_pair(const geometry::CompositeTransform& pred,
                               const geometry::PointSet& kp_src,
                               const geometry::PointSet& kp_tgt, double alpha) {
    if (kp_src.empty() || kp_src.size() != kp_tgt.size()) {
        throw std::invalid_argument("pck_pair requires matched nonempty keypoint sets");
    }
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
        throw std::invalid_argument("pck_pair requires a finite nonnegative alpha");
    }

    const auto solved = geometry::composite_solve(pred);
    long correct = 0;
    for (size_t j = 0; j < kp_src.size(); ++j) {
        const Vec2 src_n{datakit::unit_to_norm(kp_src[j].x), datakit::unit_to_norm(kp_src[j].y)};
        const Vec2 proj = geometry::composite_apply(solved, src_n);
        // Distance in [0,1] space: half the [-1,1]-space distance.
        const double dx = datakit::norm_to_unit(proj.x) - kp_tgt[j].x;
        const double dy = datakit::norm_to_unit(proj.y) - kp_tgt[j].y;
        if (std::hypot(dx, dy) <= alpha) ++correct;
    }
    return {correct, static_cast<long>(kp_src.size())};
}

PckReport evaluate_dataset(const matchnet::ModelParams& model,
                           const std::vector<LoadedPair>& pairs, double alpha, int threads) {
    for (size_t i = 0; i < pairs.size(); ++i) {
        if (!pairs[i].record.labeled || pairs[i].kp_source_norm.empty()) {
            throw std::invalid_argument("evaluate_dataset: pair " + std::to_string(i) + " (" +
                                        pairs[i].record.source + ") is unlabeled");
        }
    }

    std::vector<std::pair<long, long>> results(pairs.size());
    parallel_for(static_cast<int>(pairs.size()), threads, [&](int i) {
        const LoadedPair& lp = pairs[i];
        // PCK projects source keypoints onto the target image, so the
        // estimate runs with the roles swapped.
        const auto pred = matchnet::estimate_transform(lp.target, lp.source, model);
        results[i] = pck_pair(pred, *lp.record.keypoints_source, *lp.record.keypoints_target, alpha);
    });

    std::map<std::string, CategoryPck> by_category;
    for (size_t i = 0; i < pairs.size(); ++i) {
        CategoryPck& c = by_category[pairs[i].record.category];
        c.category = pairs[i].record.category;
        c.correct += results[i].first;
        c.total += results[i].second;
    }

    PckReport report;
    report.alpha = alpha;
    double sum = 0.0;
    for (const auto& [name, counts] : by_category) {
        report.categories.push_back(counts);
        sum += counts.fraction();
    }
    report.mean_pck = by_category.empty() ? 0.0 : sum / static_cast<double>(by_category.size());
    return report;
}

nlohmann::json report_to_json(const PckReport& report) {
    nlohmann::json cats = nlohmann::json::array();
    for (const auto& c : report.categories) {
        cats.push_back({{"category", c.category},
                        {"correct", c.correct},
                        {"total", c.total},
                        {"pck", c.fraction()}});
    }
    return {{"alpha", report.alpha}, {"categories", cats}, {"mean_pck", report.mean_pck}};
}

PckReport report_from_json(const nlohmann::json& j) {
    PckReport r;
    r.alpha = j.at("alpha").get<double>();
    r.mean_pck = j.at("mean_pck").get<double>();
    for (const auto& c : j.at("categories")) {
        r.categories.push_back(
            {c.at("category").get<std::string>(), c.at("correct").get<long>(), c.at("total").get<long>()});
    }
    return r;
}

std::string report_table(const std::vector<std::pair<std::string, PckReport>>& rows) {
    if (rows.empty()) return "";

    // Union of category names across rows, sorted; mean appended last.
    std::vector<std::string> cats;
    for (const auto& [name, rep] : rows) {
        for (const auto& c : rep.categories) {
            if (std::find(cats.begin(), cats.end(), c.category) == cats.end()) {
                cats.push_back(c.category);
            }
        }
    }
    std::sort(cats.begin(), cats.end());

    size_t name_w = 6;
    for (const auto& [name, rep] : rows) name_w = std::max(name_w, name.size());

    std::ostringstream out;
    out << std::left;
    out.width(static_cast<std::streamsize>(name_w + 2));
    out << "method";
    for (const auto& c : cats) {
        out.width(std::max<std::streamsize>(7, static_cast<std::streamsize>(c.size() + 2)));
        out << c;
    }
    out << "mean\n";

    for (const auto& [name, rep] : rows) {
        out.width(static_cast<std::streamsize>(name_w + 2));
        out << name;
        for (const auto& c : cats) {
            std::string cell = "-";
            for (const auto& rc : rep.categories) {
                if (rc.category == c) {
                    char buf[16];
                    std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * rc.fraction());
                    cell = buf;
                    break;
                }
            }
            out.width(std::max<std::streamsize>(7, static_cast<std::streamsize>(c.size() + 2)));
            out << cell;
        }
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * rep.mean_pck);
        out << buf << "\n";
    }
    return out.str();
}

}  // namespace geomatch::evaluate
