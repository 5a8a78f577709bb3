#pragma once

#include <algorithm>
#include <deque>
#include <numeric>
#include <vector>

#include "dq3d/decoder.hpp"
#include "dq3d/encoding.hpp"
#include "dq3d/errors.hpp"
#include "dq3d/geometry.hpp"
#include "dq3d/netcore.hpp"
#include "dq3d/querygen.hpp"

namespace dq3d {

// One remembered detection. The reference point stays in the coordinates of
// the frame that produced it; alignment happens on read.
struct MemoryEntry {
    double timestamp = 0.0;
    std::vector<double> q_sem;
    Point3D p_ref;
    double vx = 0.0, vy = 0.0;
    EgoPose ego_pose;
    double score = 0.0;
};

// Bounded ring: at most max_frames frames, each at most max_per_frame
// entries, ordered oldest to newest.
struct MemoryQueue {
    size_t max_frames = 4;
    size_t max_per_frame = 64;
    std::deque<std::vector<MemoryEntry>> frames;

    size_t size() const {
        size_t n = 0;
        for (const auto& f : frames) n += f.size();
        return n;
    }
};

// Motion-conditioned updates; both consume [embedding, vx, vy, dt].
struct MotionMlps {
    MlpWeights position;
    MlpWeights semantic;

    MotionMlps() = default;
    explicit MotionMlps(size_t dim) : position(dim + 3, dim + 3, dim), semantic(dim + 3, dim + 3, dim) {}

    void init(Rng& rng) {
        position.init(rng);
        semantic.init(rng);
    }
};

// Keeps the top-K detections by classification score (ties keep the earlier
// detection); an empty frame is still pushed and counts toward the bound.
inline void push_frame(MemoryQueue& queue, const DetectionSet& detections, const DenseMatrix& embeddings,
                       const EgoPose& pose, double t) {
    if (embeddings.rows != detections.size())
        throw DimensionMismatch("push_frame: embedding rows != detection count");
    std::vector<size_t> order(detections.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return detection_score(detections[a]) > detection_score(detections[b]);
    });
    if (order.size() > queue.max_per_frame) order.resize(queue.max_per_frame);

    std::vector<MemoryEntry> frame;
    frame.reserve(order.size());
    for (size_t i : order) {
        MemoryEntry e;
        e.timestamp = t;
        e.q_sem = embeddings.row(i);
        e.p_ref = detections[i].center;
        e.vx = detections[i].vx;
        e.vy = detections[i].vy;
        e.ego_pose = pose;
        e.score = detection_score(detections[i]);
        frame.push_back(std::move(e));
    }
    queue.frames.push_back(std::move(frame));
    while (queue.frames.size() > queue.max_frames) queue.frames.pop_front();
}

namespace detail {
inline DenseMatrix motion_input(const std::vector<double>& embedding, double vx, double vy, double dt) {
    DenseMatrix x(1, embedding.size() + 3);
    for (size_t c = 0; c < embedding.size(); ++c) x.at(0, c) = embedding[c];
    x.at(0, embedding.size()) = vx;
    x.at(0, embedding.size() + 1) = vy;
    x.at(0, embedding.size() + 2) = dt;
    return x;
}
}  // namespace detail

// Rigid alignment of the stored point into the current frame, then
// motion-conditioned embedding updates. The position embedding keeps its
// aligned value as a residual base; the semantic embedding is replaced.
// Coordinates are touched only by the rigid transform.
inline Query align(const MemoryEntry& entry, const EgoPose& pose_now, double t_now, const MotionMlps& mlps,
                   const MlpWeights& pe_weights, const RoiBounds& roi) {
    const double dt = t_now - entry.timestamp;
    Query q;
    q.p_ref = ego_align(entry.p_ref, entry.ego_pose, pose_now);
    q.q_pos = pe3d(normalize_point(q.p_ref, roi).p, pe_weights);
    const auto pos_delta = mlp_forward(detail::motion_input(q.q_pos, entry.vx, entry.vy, dt), mlps.position);
    for (size_t c = 0; c < q.q_pos.size(); ++c) q.q_pos[c] += pos_delta.at(0, c);
    q.q_sem = mlp_forward(detail::motion_input(entry.q_sem, entry.vx, entry.vy, dt), mlps.semantic).row(0);
    q.source = QuerySource::Temporal;
    q.score = entry.score;
    return q;
}

// All stored entries aligned to the current frame, newest frame first and
// score-descending within a frame.
inline std::vector<Query> temporal_queries(const MemoryQueue& queue, const EgoPose& pose_now, double t_now,
                                           const MotionMlps& mlps, const MlpWeights& pe_weights,
                                           const RoiBounds& roi) {
    std::vector<Query> out;
    for (auto it = queue.frames.rbegin(); it != queue.frames.rend(); ++it)
        for (const auto& entry : *it) out.push_back(align(entry, pose_now, t_now, mlps, pe_weights, roi));
    return out;
}

}  // namespace dq3d
