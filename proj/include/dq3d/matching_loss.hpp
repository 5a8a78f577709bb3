#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dq3d/decoder.hpp"
#include "dq3d/errors.hpp"
#include "dq3d/geometry.hpp"
#include "dq3d/netcore.hpp"

namespace dq3d {

struct GtBox {
    Point3D center;
    double width = 1.0, length = 1.0, height = 1.0;
    double yaw = 0.0;
    double vx = 0.0, vy = 0.0;
    int class_id = 0;
};

// Injective map: every ground-truth column matched to a distinct prediction row.
struct Assignment {
    std::vector<int> pred_for_gt;
    double total_cost = 0.0;
};

namespace detail {
// Among equal-cost optima, rewrite toward the assignment whose row indices
// are lexicographically smallest column by column. Both rewrites strictly
// decrease that vector, so the loop reaches a fixpoint.
inline void canonicalize_assignment(const DenseMatrix& cost, std::vector<int>& pred_for_gt) {
    const size_t m = cost.rows, n = cost.cols;
    bool changed = true;
    while (changed) {
        changed = false;
        std::vector<char> used(m, 0);
        for (int r : pred_for_gt) used[static_cast<size_t>(r)] = 1;
        for (size_t g = 0; g < n; ++g) {
            const int r = pred_for_gt[g];
            for (int r2 = 0; r2 < r; ++r2)
                if (!used[static_cast<size_t>(r2)] &&
                    cost.at(static_cast<size_t>(r2), g) == cost.at(static_cast<size_t>(r), g)) {
                    used[static_cast<size_t>(r)] = 0;
                    used[static_cast<size_t>(r2)] = 1;
                    pred_for_gt[g] = r2;
                    changed = true;
                    break;
                }
        }
        for (size_t g1 = 0; g1 + 1 < n; ++g1)
            for (size_t g2 = g1 + 1; g2 < n; ++g2) {
                const size_t r1 = static_cast<size_t>(pred_for_gt[g1]);
                const size_t r2 = static_cast<size_t>(pred_for_gt[g2]);
                if (r2 < r1 &&
                    cost.at(r1, g1) + cost.at(r2, g2) == cost.at(r2, g1) + cost.at(r1, g2)) {
                    std::swap(pred_for_gt[g1], pred_for_gt[g2]);
                    changed = true;
                }
            }
    }
}
}  // namespace detail

// Minimum-cost injective matching of every ground-truth column to a
// prediction row (shortest augmenting path with potentials), followed by a
// tie canonicalization so equal-cost optima resolve to low row indices.
inline Assignment hungarian(const DenseMatrix& cost) {
    const size_t m = cost.rows;  // predictions
    const size_t n = cost.cols;  // ground truths
    if (m < n)
        throw InfeasibleShape("predictions " + std::to_string(m) + " < ground truths " + std::to_string(n));
    Assignment out;
    if (n == 0) return out;

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<size_t> p(m + 1, 0), way(m + 1, 0);
    for (size_t i = 1; i <= n; ++i) {
        p[0] = i;
        size_t j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const size_t i0 = p[j0];
            size_t j1 = 0;
            double delta = inf;
            for (size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost.at(j - 1, i0 - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    out.pred_for_gt.assign(n, -1);
    for (size_t j = 1; j <= m; ++j)
        if (p[j] != 0) out.pred_for_gt[p[j] - 1] = static_cast<int>(j - 1);
    detail::canonicalize_assignment(cost, out.pred_for_gt);
    for (size_t g = 0; g < n; ++g) out.total_cost += cost.at(static_cast<size_t>(out.pred_for_gt[g]), g);
    return out;
}

inline constexpr double kProbClamp = 1e-7;

struct FocalResult {
    double loss = 0.0;
    DenseMatrix grad_logits;  // same shape as the probability matrix
};

// Focal loss over a (rows, classes) probability matrix. targets[r] is the
// positive class for row r, or -1 for a row with no positive. The gradient
// is with respect to the pre-sigmoid logits, derived analytically; both the
// value and the gradient are functions of the clamped probability alone.
inline FocalResult focal_loss(const DenseMatrix& probs, const std::vector<int>& targets, double gamma) {
    if (targets.size() != probs.rows) throw DimensionMismatch("focal_loss: target count != rows");
    FocalResult out;
    out.grad_logits = DenseMatrix(probs.rows, probs.cols);
    for (size_t r = 0; r < probs.rows; ++r)
        for (size_t c = 0; c < probs.cols; ++c) {
            const double p = std::clamp(probs.at(r, c), kProbClamp, 1.0 - kProbClamp);
            if (targets[r] == static_cast<int>(c)) {
                out.loss += -std::pow(1.0 - p, gamma) * std::log(p);
                out.grad_logits.at(r, c) =
                    gamma * p * std::pow(1.0 - p, gamma) * std::log(p) - std::pow(1.0 - p, gamma + 1.0);
            } else {
                out.loss += -std::pow(p, gamma) * std::log(1.0 - p);
                out.grad_logits.at(r, c) =
                    std::pow(p, gamma + 1.0) - gamma * std::pow(p, gamma) * (1.0 - p) * std::log(1.0 - p);
            }
        }
    return out;
}

// Focal cost of predicting probability p for a positive label; the
// classification part of a matching-cost entry.
inline double focal_positive_cost(double p, double gamma) {
    const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    return -std::pow(1.0 - pc, gamma) * std::log(pc);
}

struct L1Result {
    double loss = 0.0;
    std::vector<double> grad;
};

// Sum of absolute differences; subgradient at zero taken as zero.
inline L1Result l1_loss(const std::vector<double>& pred, const std::vector<double>& gt) {
    if (pred.size() != gt.size()) throw DimensionMismatch("l1_loss: width mismatch");
    L1Result out;
    out.grad.resize(pred.size(), 0.0);
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - gt[i];
        out.loss += std::abs(d);
        out.grad[i] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    }
    return out;
}

// Shared 10-wide regression coordinates: center, size, yaw as (sin, cos),
// ground-plane velocity. The angle pair avoids the wraparound at +-pi.
inline std::vector<double> regression_vector(const Detection& d) {
    return {d.center.x, d.center.y, d.center.z, d.width, d.length,
            d.height,   std::sin(d.yaw), std::cos(d.yaw), d.vx, d.vy};
}

inline std::vector<double> regression_vector(const GtBox& g) {
    return {g.center.x, g.center.y, g.center.z, g.width, g.length,
            g.height,   std::sin(g.yaw), std::cos(g.yaw), g.vx, g.vy};
}

struct LossConfig {
    double lambda_cls = 2.0;
    double gamma = 2.0;
};

struct LossReport {
    double cls_loss = 0.0;
    double reg_loss = 0.0;
    double total = 0.0;
    DenseMatrix grad_logits;           // (predictions, classes)
    DenseMatrix grad_reg;              // (predictions, 10); zero for unmatched rows
    std::vector<int> matched_pred;     // per ground truth, -1 if unmatched
};

// Hungarian assignment on a classification + box cost, then focal loss over
// every prediction row and L1 over the matched pairs. When predictions are
// scarcer than objects, each prediction is still matched to a distinct
// object and the leftover objects go unmatched.
inline LossReport detection_loss(const DetectionSet& preds, const std::vector<GtBox>& gts,
                                 const LossConfig& cfg) {
    LossReport report;
    const size_t m = preds.size();
    const size_t n = gts.size();
    report.matched_pred.assign(n, -1);
    if (m == 0) return report;
    const size_t num_classes = preds[0].class_scores.size();
    report.grad_reg = DenseMatrix(m, 10);

    std::vector<std::vector<double>> pred_reg(m);
    for (size_t i = 0; i < m; ++i) pred_reg[i] = regression_vector(preds[i]);

    if (n > 0) {
        DenseMatrix cost(m, n);
        for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < n; ++j) {
                const auto gt_reg = regression_vector(gts[j]);
                cost.at(i, j) =
                    cfg.lambda_cls *
                        focal_positive_cost(preds[i].class_scores[static_cast<size_t>(gts[j].class_id)],
                                            cfg.gamma) +
                    l1_loss(pred_reg[i], gt_reg).loss;
            }
        if (m >= n) {
            report.matched_pred = hungarian(cost).pred_for_gt;
        } else {
            const auto flipped = hungarian(transpose(cost));
            for (size_t i = 0; i < m; ++i) report.matched_pred[static_cast<size_t>(flipped.pred_for_gt[i])] =
                static_cast<int>(i);
        }
    }

    std::vector<int> targets(m, -1);
    for (size_t j = 0; j < n; ++j)
        if (report.matched_pred[j] >= 0) targets[static_cast<size_t>(report.matched_pred[j])] =
            gts[j].class_id;

    DenseMatrix probs(m, num_classes);
    for (size_t i = 0; i < m; ++i)
        for (size_t c = 0; c < num_classes; ++c) probs.at(i, c) = preds[i].class_scores[c];
    auto focal = focal_loss(probs, targets, cfg.gamma);
    report.cls_loss = focal.loss;
    report.grad_logits = std::move(focal.grad_logits);

    for (size_t j = 0; j < n; ++j) {
        const int i = report.matched_pred[j];
        if (i < 0) continue;
        const auto l1 = l1_loss(pred_reg[static_cast<size_t>(i)], regression_vector(gts[j]));
        report.reg_loss += l1.loss;
        for (size_t c = 0; c < 10; ++c) report.grad_reg.at(static_cast<size_t>(i), c) = l1.grad[c];
    }

    report.total = cfg.lambda_cls * report.cls_loss + report.reg_loss;
    return report;
}

}  // namespace dq3d
