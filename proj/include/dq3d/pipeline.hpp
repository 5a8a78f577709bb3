#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dq3d/decoder.hpp"
#include "dq3d/encoding.hpp"
#include "dq3d/errors.hpp"
#include "dq3d/geometry.hpp"
#include "dq3d/matching_loss.hpp"
#include "dq3d/metrics.hpp"
#include "dq3d/netcore.hpp"
#include "dq3d/querygen.hpp"
#include "dq3d/simworld.hpp"
#include "dq3d/temporal.hpp"

namespace dq3d {

struct PipelineConfig {
    size_t embed_dim = 64;
    int num_classes = 3;
    size_t decoder_layers = 6;
    size_t memory_frames = 4;
    size_t memory_per_frame = 64;
    double lambda_cls = 2.0;
    double gamma = 2.0;
    QuerygenConfig querygen;
    RoiBounds roi;
    DepthRange depth_range;
    NoiseConfig noise;
    std::vector<double> ap_thresholds = {0.5, 1.0, 2.0, 4.0};
    uint64_t weights_seed = 7;
    bool oracle_head = false;    // detections read reference points directly, decoder skipped
    bool fixed_queries = false;  // uniform ROI anchors instead of depth-guided ones
    size_t fixed_query_count = 900;
    int stride = 16;

    void validate() const {
        if (embed_dim == 0 || embed_dim % 4 != 0)
            throw ConfigError("embed_dim", "must be a positive multiple of 4");
        if (num_classes < 1) throw ConfigError("num_classes", "must be >= 1");
        if (memory_frames < 1) throw ConfigError("memory_frames", "must be >= 1");
        if (memory_per_frame < 1) throw ConfigError("memory_per_frame", "must be >= 1");
        if (lambda_cls < 0.0) throw ConfigError("lambda_cls", "must be >= 0");
        if (gamma < 0.0) throw ConfigError("gamma", "must be >= 0");
        if (querygen.n_points < 1) throw ConfigError("n_points", "must be >= 1");
        if (querygen.depth_layers < 1) throw ConfigError("depth_layers", "must be >= 1");
        if (querygen.delta_d <= 0.0) throw ConfigError("delta_d", "must be positive");
        if (querygen.max_queries < 1) throw ConfigError("max_queries", "must be >= 1");
        if (fixed_query_count < 1) throw ConfigError("fixed_query_count", "must be >= 1");
        if (stride < 1) throw ConfigError("stride", "must be >= 1");
        if (ap_thresholds.empty()) throw ConfigError("ap_thresholds", "must not be empty");
        for (size_t i = 0; i < ap_thresholds.size(); ++i) {
            if (ap_thresholds[i] <= 0.0) throw ConfigError("ap_thresholds", "must be positive");
            if (i > 0 && ap_thresholds[i] <= ap_thresholds[i - 1])
                throw ConfigError("ap_thresholds", "must be strictly ascending");
        }
        if (!(depth_range.d_min > 0.0 && depth_range.d_min < depth_range.d_max))
            throw ConfigError("depth_range", "need 0 < d_min < d_max");
        roi.validate();
    }
};

struct ModelWeights {
    MlpWeights pe;  // position encoder, shared by queries and image tokens
    MotionMlps motion;
    DecoderWeights decoder;
};

inline ModelWeights make_model(const PipelineConfig& cfg) {
    ModelWeights m;
    Rng pe_rng(derive_seed(cfg.weights_seed, 11));
    m.pe = make_pe3d_weights(cfg.embed_dim, pe_rng);
    m.motion = MotionMlps(cfg.embed_dim);
    Rng motion_rng(derive_seed(cfg.weights_seed, 12));
    m.motion.init(motion_rng);
    m.decoder = DecoderWeights(cfg.embed_dim, cfg.decoder_layers, static_cast<size_t>(cfg.num_classes));
    Rng decoder_rng(derive_seed(cfg.weights_seed, 13));
    m.decoder.init(decoder_rng);
    return m;
}

inline uint64_t model_checksum(const ModelWeights& m) {
    WeightChecksum sum;
    sum.feed(m.pe);
    sum.feed(m.motion.position);
    sum.feed(m.motion.semantic);
    for (const auto& layer : m.decoder.layers) {
        sum.feed(layer.hybrid.w_q);
        sum.feed(layer.hybrid.w_k);
        sum.feed(layer.hybrid.w_v);
        sum.feed(layer.hybrid_out);
        sum.feed(layer.cross.w_q);
        sum.feed(layer.cross.w_k);
        sum.feed(layer.cross.w_v);
        sum.feed(layer.cross_out);
        sum.feed(layer.ffn);
        sum.feed(layer.norm1);
        sum.feed(layer.norm2);
        sum.feed(layer.norm3);
    }
    sum.feed(m.decoder.head.cls);
    sum.feed(m.decoder.head.reg);
    return sum.hash;
}

// Uniform ROI anchors, generated once from the weight seed so both ablation
// arms share every random draw that matters.
inline std::vector<Query> make_fixed_queries(const PipelineConfig& cfg, const ModelWeights& model) {
    Rng rng(derive_seed(cfg.weights_seed, 21));
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim));
    std::vector<Query> out;
    out.reserve(cfg.fixed_query_count);
    for (size_t i = 0; i < cfg.fixed_query_count; ++i) {
        Query q;
        q.p_ref = {rng.uniform(cfg.roi.x_min, cfg.roi.x_max), rng.uniform(cfg.roi.y_min, cfg.roi.y_max),
                   rng.uniform(cfg.roi.z_min, cfg.roi.z_max)};
        q.q_pos = pe3d(normalize_point(q.p_ref, cfg.roi).p, model.pe);
        q.q_sem.resize(cfg.embed_dim);
        for (auto& v : q.q_sem) v = rng.uniform(-bound, bound);
        q.source = QuerySource::DepthGuided;
        q.score = 1.0;
        out.push_back(std::move(q));
    }
    return out;
}

struct FrameReport {
    int frame_index = 0;
    double timestamp = 0.0;
    size_t depth_query_count = 0;
    size_t temporal_query_count = 0;
    DetectionSet detections;
    LossReport loss;
    double timing_ms = 0.0;  // in-memory diagnostic; never serialized
    std::vector<Point3D> ref_points;
    std::vector<GtBox> gts;
};

struct PipelineState {
    PipelineConfig cfg;
    ModelWeights model;
    MemoryQueue memory;
    std::vector<Query> fixed_query_cache;

    explicit PipelineState(const PipelineConfig& config) : cfg(config), model(make_model(config)) {
        cfg.validate();
        memory.max_frames = cfg.memory_frames;
        memory.max_per_frame = cfg.memory_per_frame;
        if (cfg.fixed_queries) fixed_query_cache = make_fixed_queries(cfg, model);
    }
};

namespace detail {
inline ObbEgo gt_obb(const GtBox& gt) {
    ObbEgo box;
    box.center = gt.center;
    box.half_w = gt.width / 2.0;
    box.half_l = gt.length / 2.0;
    box.half_h = gt.height / 2.0;
    box.cos_yaw = std::cos(gt.yaw);
    box.sin_yaw = std::sin(gt.yaw);
    return box;
}

// Oracle readout: every query whose reference point sits inside a ground
// truth box becomes a full-confidence detection at that point. No decoding,
// no learned head; isolates query placement quality.
inline void oracle_detections(const std::vector<Query>& q_dep, const std::vector<GtBox>& gts,
                              int num_classes, DetectionSet& dets, DenseMatrix& embeddings) {
    std::vector<ObbEgo> boxes;
    boxes.reserve(gts.size());
    for (const auto& gt : gts) boxes.push_back(gt_obb(gt));

    std::vector<size_t> picked;
    for (size_t i = 0; i < q_dep.size(); ++i) {
        int owner = -1;
        double best = std::numeric_limits<double>::infinity();
        for (size_t g = 0; g < gts.size(); ++g) {
            if (!point_in_obb(q_dep[i].p_ref, boxes[g])) continue;
            const double d = distance(q_dep[i].p_ref, gts[g].center);
            if (d < best) {
                best = d;
                owner = static_cast<int>(g);
            }
        }
        if (owner < 0) continue;
        const auto& gt = gts[static_cast<size_t>(owner)];
        Detection det;
        det.class_scores.assign(static_cast<size_t>(num_classes), 0.0);
        det.class_scores[static_cast<size_t>(gt.class_id)] = 1.0;
        det.center = q_dep[i].p_ref;
        det.width = gt.width;
        det.length = gt.length;
        det.height = gt.height;
        det.yaw = gt.yaw;
        det.vx = gt.vx;
        det.vy = gt.vy;
        dets.push_back(std::move(det));
        picked.push_back(i);
    }
    embeddings = DenseMatrix(picked.size(), q_dep.empty() ? 0 : q_dep[0].q_sem.size());
    for (size_t r = 0; r < picked.size(); ++r) embeddings.set_row(r, q_dep[picked[r]].q_sem);
}
}  // namespace detail

inline FrameReport run_frame(PipelineState& state, const Scene& scene, int frame_index) {
    const auto t_start = std::chrono::steady_clock::now();
    const auto& cfg = state.cfg;
    const auto& frame = scene.frames[static_cast<size_t>(frame_index)];

    std::vector<DepthMap> depths;
    std::vector<FeatureMap> features;
    std::vector<Box2D> boxes;
    for (int cam = 0; cam < static_cast<int>(scene.rig.size()); ++cam) {
        depths.push_back(render_depth(scene, frame_index, cam, cfg.noise, scene.seed, cfg.depth_range));
        features.push_back(synth_features(scene, frame_index, cam, cfg.embed_dim, scene.seed, cfg.stride));
        auto cam_boxes = detect_2d_stub(scene, frame_index, cam, cfg.noise, scene.seed,
                                        cfg.querygen.score_threshold, cfg.querygen.nms_iou);
        boxes.insert(boxes.end(), cam_boxes.begin(), cam_boxes.end());
    }

    std::vector<Query> q_dep;
    if (cfg.fixed_queries) {
        q_dep = state.fixed_query_cache;
    } else {
        q_dep = generate_queries(boxes, depths, features, scene.rig, cfg.querygen, cfg.roi, state.model.pe,
                                 derive_seed(scene.seed, 1000 + static_cast<uint64_t>(frame_index)),
                                 cfg.depth_range);
    }
    const std::vector<Query> q_temp = temporal_queries(state.memory, frame.ego, frame.timestamp,
                                                       state.model.motion, state.model.pe, cfg.roi);

    FrameReport report;
    report.frame_index = frame_index;
    report.timestamp = frame.timestamp;
    report.depth_query_count = q_dep.size();
    report.temporal_query_count = q_temp.size();
    report.gts = gt_boxes(scene, frame_index, cfg.roi);
    report.ref_points.reserve(q_dep.size());
    for (const auto& q : q_dep) report.ref_points.push_back(q.p_ref);

    DenseMatrix embeddings;
    if (cfg.oracle_head) {
        detail::oracle_detections(q_dep, report.gts, cfg.num_classes, report.detections, embeddings);
    } else if (!q_dep.empty()) {
        const double canonical_depth = 0.5 * (cfg.depth_range.d_min + cfg.depth_range.d_max);
        const ImageTokens tokens =
            make_image_tokens(features, scene.rig, cfg.roi, state.model.pe, canonical_depth, cfg.depth_range);
        embeddings = decode(q_dep, q_temp, tokens, state.model.decoder);
        for (size_t i = 0; i < q_dep.size(); ++i)
            report.detections.push_back(
                head(embeddings.row(i), q_dep[i].p_ref, state.model.decoder.head, cfg.roi));
    }

    report.loss = detection_loss(report.detections, report.gts, {cfg.lambda_cls, cfg.gamma});
    push_frame(state.memory, report.detections, embeddings, frame.ego, frame.timestamp);

    report.timing_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

struct SequenceReport {
    std::vector<FrameReport> frames;
    ApResult ap;
    double mean_ref_distance = 0.0;  // top-down, reference point to nearest gt center
    size_t ref_distance_count = 0;
    uint64_t weight_checksum = 0;
};

inline SequenceReport run_sequence(const Scene& scene, const PipelineConfig& cfg) {
    PipelineState state(cfg);
    SequenceReport report;
    report.weight_checksum = model_checksum(state.model);

    std::vector<EvalDetection> eval_dets;
    std::vector<EvalGt> eval_gts;
    double dist_sum = 0.0;
    for (int f = 0; f < static_cast<int>(scene.frames.size()); ++f) {
        FrameReport frame = run_frame(state, scene, f);
        for (const auto& det : frame.detections)
            eval_dets.push_back({f, detection_class(det), detection_score(det), det.center});
        for (const auto& gt : frame.gts) eval_gts.push_back({f, gt.class_id, gt.center});
        if (!frame.gts.empty()) {
            for (const auto& p : frame.ref_points) {
                double best = std::numeric_limits<double>::infinity();
                for (const auto& gt : frame.gts) best = std::min(best, bev_distance(p, gt.center));
                dist_sum += best;
                ++report.ref_distance_count;
            }
        }
        report.frames.push_back(std::move(frame));
    }
    if (report.ref_distance_count > 0)
        report.mean_ref_distance = dist_sum / static_cast<double>(report.ref_distance_count);

    EvalConfig eval_cfg;
    eval_cfg.thresholds = cfg.ap_thresholds;
    eval_cfg.num_classes = cfg.num_classes;
    report.ap = mean_ap(eval_dets, eval_gts, eval_cfg);
    return report;
}

struct AblationReport {
    SequenceReport fixed_arm;
    SequenceReport depth_guided_arm;
};

// Same scene, same weights; only the query source differs between arms.
inline AblationReport run_ablation(const Scene& scene, const PipelineConfig& cfg) {
    AblationReport out;
    PipelineConfig fixed_cfg = cfg;
    fixed_cfg.fixed_queries = true;
    PipelineConfig dqg_cfg = cfg;
    dqg_cfg.fixed_queries = false;
    out.fixed_arm = run_sequence(scene, fixed_cfg);
    out.depth_guided_arm = run_sequence(scene, dqg_cfg);
    return out;
}

}  // namespace dq3d
