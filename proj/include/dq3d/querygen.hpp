#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "dq3d/encoding.hpp"
#include "dq3d/errors.hpp"
#include "dq3d/geometry.hpp"
#include "dq3d/netcore.hpp"

namespace dq3d {

struct Box2D {
    int camera_index = 0;
    double u_min = 0.0, v_min = 0.0;
    double u_max = 0.0, v_max = 0.0;
    double score = 0.0;
    int class_id = 0;
};

inline double box_iou(const Box2D& a, const Box2D& b) {
    const double iw = std::min(a.u_max, b.u_max) - std::max(a.u_min, b.u_min);
    const double ih = std::min(a.v_max, b.v_max) - std::max(a.v_min, b.v_min);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double area_a = (a.u_max - a.u_min) * (a.v_max - a.v_min);
    const double area_b = (b.u_max - b.u_min) * (b.v_max - b.v_min);
    return inter / (area_a + area_b - inter);
}

// Score-threshold then greedy same-camera NMS. Safe to call on already
// filtered boxes; the result is unchanged.
inline std::vector<Box2D> filter_boxes(std::vector<Box2D> boxes, double score_threshold, double nms_iou) {
    boxes.erase(std::remove_if(boxes.begin(), boxes.end(),
                               [&](const Box2D& b) { return b.score < score_threshold; }),
                boxes.end());
    std::vector<size_t> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (boxes[a].score != boxes[b].score) return boxes[a].score > boxes[b].score;
        return a < b;
    });
    std::vector<bool> keep(boxes.size(), true);
    for (size_t i = 0; i < order.size(); ++i) {
        if (!keep[order[i]]) continue;
        for (size_t j = i + 1; j < order.size(); ++j) {
            if (!keep[order[j]]) continue;
            if (boxes[order[i]].camera_index != boxes[order[j]].camera_index) continue;
            if (box_iou(boxes[order[i]], boxes[order[j]]) > nms_iou) keep[order[j]] = false;
        }
    }
    std::vector<Box2D> out;
    for (size_t i = 0; i < boxes.size(); ++i)
        if (keep[i]) out.push_back(boxes[i]);
    return out;
}

// Grid of per-pixel depths; background cells carry valid = false.
struct DepthMap {
    int camera_index = 0;
    int width = 0;
    int height = 0;
    std::vector<double> depth;  // row-major, height x width
    std::vector<uint8_t> valid;

    DepthMap() = default;
    DepthMap(int cam, int w, int h)
        : camera_index(cam), width(w), height(h), depth(static_cast<size_t>(w) * h, 0.0),
          valid(static_cast<size_t>(w) * h, 0) {}

    size_t idx(int x, int y) const { return static_cast<size_t>(y) * width + x; }

    // Value of the cell containing the continuous pixel. Depth is
    // discontinuous at object silhouettes, so no interpolation here.
    bool lookup(double u, double v, double& out) const {
        const int x = std::clamp(static_cast<int>(std::floor(u)), 0, width - 1);
        const int y = std::clamp(static_cast<int>(std::floor(v)), 0, height - 1);
        if (!valid[idx(x, y)]) return false;
        out = depth[idx(x, y)];
        return true;
    }
};

// Stride-reduced feature grid; node (gx, gy) sits at image pixel
// ((gx + 0.5) * stride, (gy + 0.5) * stride).
struct FeatureMap {
    int camera_index = 0;
    int grid_width = 0;
    int grid_height = 0;
    int stride = 16;
    int image_width = 0;
    int image_height = 0;
    size_t channels = 0;
    std::vector<double> values;  // (gy, gx, c)

    FeatureMap() = default;
    FeatureMap(int cam, int img_w, int img_h, int stride_, size_t c)
        : camera_index(cam), grid_width(img_w / stride_), grid_height(img_h / stride_), stride(stride_),
          image_width(img_w), image_height(img_h), channels(c),
          values(static_cast<size_t>(grid_width) * grid_height * c, 0.0) {}

    double* node(int gx, int gy) {
        return values.data() + (static_cast<size_t>(gy) * grid_width + gx) * channels;
    }
    const double* node(int gx, int gy) const {
        return values.data() + (static_cast<size_t>(gy) * grid_width + gx) * channels;
    }
};

enum class QuerySource { DepthGuided, Temporal };

struct Query {
    std::vector<double> q_pos;
    std::vector<double> q_sem;
    Point3D p_ref;
    QuerySource source = QuerySource::DepthGuided;
    double score = 0.0;  // generating box (or stored detection) score
};

struct QuerygenConfig {
    int n_points = 4;
    int depth_layers = 3;
    double delta_d = 0.5;
    double score_threshold = 0.05;
    double nms_iou = 0.7;
    size_t max_queries = 900;
};

// Box center first, then n-1 uniform interior points.
inline std::vector<Pixel> sample_box_points(const Box2D& box, int n, Rng& rng) {
    const double area = (box.u_max - box.u_min) * (box.v_max - box.v_min);
    if (!(area >= 1.0)) throw DegenerateBox("area " + std::to_string(area) + " px^2");
    std::vector<Pixel> out;
    out.reserve(static_cast<size_t>(n));
    out.push_back({box.camera_index, 0.5 * (box.u_min + box.u_max), 0.5 * (box.v_min + box.v_max)});
    for (int i = 1; i < n; ++i)
        out.push_back({box.camera_index, rng.uniform(box.u_min, box.u_max), rng.uniform(box.v_min, box.v_max)});
    return out;
}

// [d, d+dd, ...] cut off at d_max; never empty when d_surface <= d_max.
inline std::vector<double> depth_layers(double d_surface, double delta_d, int layers, double d_max = 80.0) {
    std::vector<double> out;
    for (int i = 0; i < layers; ++i) {
        const double d = d_surface + static_cast<double>(i) * delta_d;
        if (d > d_max) break;
        out.push_back(d);
    }
    return out;
}

// Bilinear read of the feature grid at a continuous image pixel.
inline std::vector<double> sample_semantic(const FeatureMap& fmap, const Pixel& pixel) {
    if (pixel.u < 0.0 || pixel.u >= fmap.image_width || pixel.v < 0.0 || pixel.v >= fmap.image_height)
        throw OutOfFrame("pixel (" + std::to_string(pixel.u) + ", " + std::to_string(pixel.v) + ")");
    const double gx = pixel.u / fmap.stride - 0.5;
    const double gy = pixel.v / fmap.stride - 0.5;
    const int x0 = std::clamp(static_cast<int>(std::floor(gx)), 0, fmap.grid_width - 1);
    const int y0 = std::clamp(static_cast<int>(std::floor(gy)), 0, fmap.grid_height - 1);
    const int x1 = std::min(x0 + 1, fmap.grid_width - 1);
    const int y1 = std::min(y0 + 1, fmap.grid_height - 1);
    const double fx = std::clamp(gx - x0, 0.0, 1.0);
    const double fy = std::clamp(gy - y0, 0.0, 1.0);
    const double w00 = (1 - fx) * (1 - fy), w10 = fx * (1 - fy), w01 = (1 - fx) * fy, w11 = fx * fy;
    const double* n00 = fmap.node(x0, y0);
    const double* n10 = fmap.node(x1, y0);
    const double* n01 = fmap.node(x0, y1);
    const double* n11 = fmap.node(x1, y1);
    std::vector<double> out(fmap.channels);
    for (size_t c = 0; c < fmap.channels; ++c)
        out[c] = w00 * n00[c] + w10 * n10[c] + w01 * n01[c] + w11 * n11[c];
    return out;
}

namespace detail {
struct QueryDraft {
    Query q;
    int camera_index = 0;
    size_t box_seq = 0;  // position in the post-filter, post-sort box list
    size_t sample_idx = 0;
};
}  // namespace detail

// Depth-guided query generation: sampled in-box pixels, layered depths off
// the depth map, position embedding of the unprojected point, bilinear
// semantic feature at the pixel.
inline std::vector<Query> generate_queries(const std::vector<Box2D>& boxes,
                                           const std::vector<DepthMap>& depths,
                                           const std::vector<FeatureMap>& features,
                                           const std::vector<CameraModel>& rig, const QuerygenConfig& cfg,
                                           const RoiBounds& roi, const MlpWeights& pe_weights, uint64_t seed,
                                           const DepthRange& range = DepthRange{}) {
    std::vector<Box2D> kept = filter_boxes(boxes, cfg.score_threshold, cfg.nms_iou);
    std::stable_sort(kept.begin(), kept.end(), [](const Box2D& a, const Box2D& b) {
        if (a.camera_index != b.camera_index) return a.camera_index < b.camera_index;
        return a.score > b.score;
    });

    Rng rng(derive_seed(seed, 0x5147));  // one stream, consumed in box order
    std::vector<detail::QueryDraft> drafts;
    for (size_t bi = 0; bi < kept.size(); ++bi) {
        Box2D box = kept[bi];
        const auto& cam = rig[static_cast<size_t>(box.camera_index)];
        box.u_min = std::max(box.u_min, 0.0);
        box.v_min = std::max(box.v_min, 0.0);
        box.u_max = std::min(box.u_max, static_cast<double>(cam.width));
        box.v_max = std::min(box.v_max, static_cast<double>(cam.height));
        if ((box.u_max - box.u_min) * (box.v_max - box.v_min) < 1.0) continue;

        const auto& dmap = depths[static_cast<size_t>(box.camera_index)];
        const auto& fmap = features[static_cast<size_t>(box.camera_index)];
        const auto pixels = sample_box_points(box, cfg.n_points, rng);
        size_t sample_idx = 0;
        for (const auto& px : pixels) {
            double d_surface = 0.0;
            if (!dmap.lookup(px.u, px.v, d_surface)) continue;  // background pixel
            std::vector<double> sem;
            try {
                sem = sample_semantic(fmap, px);
            } catch (const OutOfFrame&) {
                continue;  // clipped box edge can sit exactly on the frame border
            }
            for (const double d : depth_layers(d_surface, cfg.delta_d, cfg.depth_layers, range.d_max)) {
                Point3D p_ref;
                try {
                    p_ref = unproject(cam, px, d, range);
                } catch (const DepthOutOfRange&) {
                    continue;
                }
                detail::QueryDraft draft;
                draft.q.p_ref = p_ref;
                draft.q.q_pos = pe3d(normalize_point(p_ref, roi).p, pe_weights);
                draft.q.q_sem = sem;
                draft.q.source = QuerySource::DepthGuided;
                draft.q.score = box.score;
                draft.camera_index = box.camera_index;
                draft.box_seq = bi;
                draft.sample_idx = sample_idx++;
                drafts.push_back(std::move(draft));
            }
        }
    }

    if (drafts.size() > cfg.max_queries) {
        // Retain by descending box score, then restore the merge order below.
        std::stable_sort(drafts.begin(), drafts.end(),
                         [](const detail::QueryDraft& a, const detail::QueryDraft& b) {
                             if (a.q.score != b.q.score) return a.q.score > b.q.score;
                             if (a.box_seq != b.box_seq) return a.box_seq < b.box_seq;
                             return a.sample_idx < b.sample_idx;
                         });
        drafts.resize(cfg.max_queries);
    }
    std::stable_sort(drafts.begin(), drafts.end(),
                     [](const detail::QueryDraft& a, const detail::QueryDraft& b) {
                         if (a.camera_index != b.camera_index) return a.camera_index < b.camera_index;
                         if (a.q.score != b.q.score) return a.q.score > b.q.score;
                         if (a.box_seq != b.box_seq) return a.box_seq < b.box_seq;
                         return a.sample_idx < b.sample_idx;
                     });

    std::vector<Query> out;
    out.reserve(drafts.size());
    for (auto& d : drafts) out.push_back(std::move(d.q));
    return out;
}

}  // namespace dq3d
