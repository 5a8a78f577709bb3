#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "dq3d/geometry.hpp"
#include "dq3d/matching_loss.hpp"

namespace dq3d {

struct EvalConfig {
    std::vector<double> thresholds = {0.5, 1.0, 2.0, 4.0};  // meters, ascending
    int num_classes = 3;
};

// Frame-tagged flat views of predictions and ground truth, pooled across a
// whole sequence so ranking is global.
struct EvalDetection {
    int frame = 0;
    int class_id = 0;
    double score = 0.0;
    Point3D center;
};

struct EvalGt {
    int frame = 0;
    int class_id = 0;
    Point3D center;
};

struct ApValue {
    bool defined = false;  // false when the class has no ground truth
    double ap = 0.0;
};

// Greedy score-ranked matching against per-frame ground truth on top-down
// center distance, then 101-point interpolated area under precision-recall.
inline ApValue center_distance_ap(const std::vector<EvalDetection>& dets, const std::vector<EvalGt>& gts,
                                  int class_id, double threshold) {
    size_t gt_count = 0;
    int max_frame = 0;
    for (const auto& g : gts) {
        max_frame = std::max(max_frame, g.frame);
        if (g.class_id == class_id) ++gt_count;
    }
    for (const auto& d : dets) max_frame = std::max(max_frame, d.frame);
    ApValue out;
    if (gt_count == 0) return out;
    out.defined = true;

    std::vector<std::vector<const EvalGt*>> by_frame(static_cast<size_t>(max_frame) + 1);
    for (const auto& g : gts)
        if (g.class_id == class_id) by_frame[static_cast<size_t>(g.frame)].push_back(&g);
    std::vector<std::vector<char>> consumed(by_frame.size());
    for (size_t f = 0; f < by_frame.size(); ++f) consumed[f].assign(by_frame[f].size(), 0);

    std::vector<size_t> order;
    for (size_t i = 0; i < dets.size(); ++i)
        if (dets[i].class_id == class_id) order.push_back(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return dets[a].score > dets[b].score; });

    std::vector<double> precision, recall;
    size_t tp = 0;
    for (size_t k = 0; k < order.size(); ++k) {
        const auto& d = dets[order[k]];
        auto& frame_gts = by_frame[static_cast<size_t>(d.frame)];
        int best = -1;
        double best_dist = threshold;
        for (size_t g = 0; g < frame_gts.size(); ++g) {
            if (consumed[static_cast<size_t>(d.frame)][g]) continue;
            const double dist = bev_distance(d.center, frame_gts[g]->center);
            if (dist <= best_dist) {
                best_dist = dist;
                best = static_cast<int>(g);
            }
        }
        if (best >= 0) {
            consumed[static_cast<size_t>(d.frame)][static_cast<size_t>(best)] = 1;
            ++tp;
        }
        precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
        recall.push_back(static_cast<double>(tp) / static_cast<double>(gt_count));
    }

    // Monotone envelope from the right, then sample 101 recall levels.
    std::vector<double> envelope(precision.size());
    double running = 0.0;
    for (size_t k = precision.size(); k-- > 0;) {
        running = std::max(running, precision[k]);
        envelope[k] = running;
    }
    double ap = 0.0;
    for (int level = 0; level <= 100; ++level) {
        const double r = static_cast<double>(level) / 100.0;
        double best = 0.0;
        for (size_t k = 0; k < recall.size(); ++k)
            if (recall[k] >= r) {
                best = envelope[k];
                break;
            }
        ap += best;
    }
    out.ap = ap / 101.0;
    return out;
}

struct ApResult {
    std::vector<std::vector<ApValue>> table;  // [class][threshold]
    double map = 0.0;
    bool map_defined = false;  // false when every cell is undefined

    const ApValue& at(int class_id, size_t threshold_index) const {
        return table[static_cast<size_t>(class_id)][threshold_index];
    }
};

// Mean over every (class, threshold) cell whose AP is defined.
inline ApResult mean_ap(const std::vector<EvalDetection>& dets, const std::vector<EvalGt>& gts,
                        const EvalConfig& cfg) {
    ApResult out;
    out.table.resize(static_cast<size_t>(cfg.num_classes));
    double sum = 0.0;
    size_t defined = 0;
    for (int c = 0; c < cfg.num_classes; ++c) {
        for (double threshold : cfg.thresholds) {
            const auto ap = center_distance_ap(dets, gts, c, threshold);
            out.table[static_cast<size_t>(c)].push_back(ap);
            if (ap.defined) {
                sum += ap.ap;
                ++defined;
            }
        }
    }
    if (defined > 0) {
        out.map = sum / static_cast<double>(defined);
        out.map_defined = true;
    }
    return out;
}

}  // namespace dq3d
