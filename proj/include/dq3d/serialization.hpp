#pragma once

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dq3d/errors.hpp"
#include "dq3d/metrics.hpp"
#include "dq3d/pipeline.hpp"
#include "dq3d/simworld.hpp"

namespace dq3d {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

namespace detail {

inline void check_schema(const json& j, const std::string& expected) {
    if (!j.is_object()) throw SchemaError("top level must be an object");
    if (!j.contains("schema") || j.at("schema") != expected)
        throw SchemaError("expected schema '" + expected + "'");
    if (!j.contains("schema_version") || !j.at("schema_version").is_number_integer())
        throw SchemaError("missing schema_version");
    if (j.at("schema_version").get<int>() != kSchemaVersion)
        throw SchemaError("unsupported schema_version " + j.at("schema_version").dump());
}

inline json point_json(const Point3D& p) { return json::array({p.x, p.y, p.z}); }

inline Point3D point_from(const json& j) {
    if (!j.is_array() || j.size() != 3) throw SchemaError("point must be a 3-array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

// Rejects keys outside the allowed set so config typos surface by name.
inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (allowed.find(it.key()) == allowed.end())
            throw ConfigError(where + "." + it.key(), "unknown key");
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(key, "wrong type");
    }
}

}  // namespace detail

// ---------------------------------------------------------------- scene ---

inline json scene_to_json(const Scene& scene) {
    json rig = json::array();
    for (const auto& cam : scene.rig) {
        json r9 = json::array(), t3 = json::array();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) r9.push_back(cam.R.at(r, c));
        for (int r = 0; r < 3; ++r) t3.push_back(cam.T.at(r, 3));
        rig.push_back({{"fx", cam.fx},
                       {"fy", cam.fy},
                       {"cx", cam.cx},
                       {"cy", cam.cy},
                       {"width", cam.width},
                       {"height", cam.height},
                       {"rotation", r9},
                       {"translation", t3}});
    }
    json objects = json::array();
    for (const auto& o : scene.objects)
        objects.push_back({{"id", o.id},
                           {"class_id", o.class_id},
                           {"center0", detail::point_json(o.center0)},
                           {"size", json::array({o.width, o.length, o.height})},
                           {"yaw", o.yaw},
                           {"velocity", json::array({o.vx, o.vy})}});
    json frames = json::array();
    for (const auto& f : scene.frames) {
        json t16 = json::array();
        for (double v : f.ego.transform.m) t16.push_back(v);
        frames.push_back({{"timestamp", f.timestamp}, {"ego", t16}});
    }
    return {{"schema", "dq3d-scene"}, {"schema_version", kSchemaVersion}, {"seed", scene.seed},
            {"dt", scene.dt},         {"rig", rig},                       {"objects", objects},
            {"frames", frames}};
}

inline Scene scene_from_json(const json& j) {
    detail::check_schema(j, "dq3d-scene");
    Scene scene;
    try {
        scene.seed = j.at("seed").get<uint64_t>();
        scene.dt = j.at("dt").get<double>();
        for (const auto& c : j.at("rig")) {
            CameraModel cam;
            cam.fx = c.at("fx").get<double>();
            cam.fy = c.at("fy").get<double>();
            cam.cx = c.at("cx").get<double>();
            cam.cy = c.at("cy").get<double>();
            cam.width = c.at("width").get<int>();
            cam.height = c.at("height").get<int>();
            const auto& r9 = c.at("rotation");
            if (!r9.is_array() || r9.size() != 9) throw SchemaError("rotation must be a 9-array");
            for (int r = 0; r < 3; ++r)
                for (int col = 0; col < 3; ++col)
                    cam.R.at(r, col) = r9[static_cast<size_t>(r * 3 + col)].get<double>();
            const auto& t3 = c.at("translation");
            if (!t3.is_array() || t3.size() != 3) throw SchemaError("translation must be a 3-array");
            for (int r = 0; r < 3; ++r) cam.T.at(r, 3) = t3[static_cast<size_t>(r)].get<double>();
            cam.validate();
            scene.rig.push_back(cam);
        }
        for (const auto& o : j.at("objects")) {
            SceneObject obj;
            obj.id = o.at("id").get<int>();
            obj.class_id = o.at("class_id").get<int>();
            obj.center0 = detail::point_from(o.at("center0"));
            const auto& size = o.at("size");
            obj.width = size[0].get<double>();
            obj.length = size[1].get<double>();
            obj.height = size[2].get<double>();
            if (!(obj.width > 0 && obj.length > 0 && obj.height > 0))
                throw SchemaError("object sizes must be positive");
            obj.yaw = o.at("yaw").get<double>();
            obj.vx = o.at("velocity")[0].get<double>();
            obj.vy = o.at("velocity")[1].get<double>();
            scene.objects.push_back(obj);
        }
        double prev_t = -std::numeric_limits<double>::infinity();
        for (const auto& f : j.at("frames")) {
            SceneFrame frame;
            frame.timestamp = f.at("timestamp").get<double>();
            if (frame.timestamp <= prev_t) throw SchemaError("timestamps must be strictly increasing");
            prev_t = frame.timestamp;
            const auto& t16 = f.at("ego");
            if (!t16.is_array() || t16.size() != 16) throw SchemaError("ego must be a 16-array");
            for (size_t i = 0; i < 16; ++i) frame.ego.transform.m[i] = t16[i].get<double>();
            frame.ego.timestamp = frame.timestamp;
            frame.ego.validate();
            scene.frames.push_back(frame);
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("scene: ") + e.what());
    }
    if (scene.frames.empty()) throw SchemaError("scene has no frames");
    return scene;
}

// --------------------------------------------------------------- config ---

inline json pipeline_config_to_json(const PipelineConfig& cfg) {
    return {{"embed_dim", cfg.embed_dim},
            {"num_classes", cfg.num_classes},
            {"decoder_layers", cfg.decoder_layers},
            {"memory_frames", cfg.memory_frames},
            {"memory_per_frame", cfg.memory_per_frame},
            {"lambda_cls", cfg.lambda_cls},
            {"gamma", cfg.gamma},
            {"n_points", cfg.querygen.n_points},
            {"depth_layers", cfg.querygen.depth_layers},
            {"delta_d", cfg.querygen.delta_d},
            {"score_threshold", cfg.querygen.score_threshold},
            {"nms_iou", cfg.querygen.nms_iou},
            {"max_queries", cfg.querygen.max_queries},
            {"ap_thresholds", cfg.ap_thresholds},
            {"weights_seed", cfg.weights_seed},
            {"oracle_head", cfg.oracle_head},
            {"fixed_queries", cfg.fixed_queries},
            {"fixed_query_count", cfg.fixed_query_count},
            {"stride", cfg.stride},
            {"roi", json::array({cfg.roi.x_min, cfg.roi.x_max, cfg.roi.y_min, cfg.roi.y_max, cfg.roi.z_min,
                                 cfg.roi.z_max})},
            {"depth_range", json::array({cfg.depth_range.d_min, cfg.depth_range.d_max})},
            {"noise",
             {{"depth_rel_sigma", cfg.noise.depth_rel_sigma},
              {"box_jitter_px", cfg.noise.box_jitter_px},
              {"drop_prob", cfg.noise.drop_prob},
              {"score_sigma", cfg.noise.score_sigma}}}};
}

namespace detail {
inline RoiBounds roi_from(const json& a) {
    if (!a.is_array() || a.size() != 6) throw ConfigError("roi", "must be a 6-array");
    RoiBounds roi;
    roi.x_min = a[0].get<double>();
    roi.x_max = a[1].get<double>();
    roi.y_min = a[2].get<double>();
    roi.y_max = a[3].get<double>();
    roi.z_min = a[4].get<double>();
    roi.z_max = a[5].get<double>();
    return roi;
}

inline NoiseConfig noise_from(const json& j) {
    check_keys(j, {"depth_rel_sigma", "box_jitter_px", "drop_prob", "score_sigma"}, "noise");
    NoiseConfig n;
    n.depth_rel_sigma = get_or(j, "depth_rel_sigma", 0.0);
    n.box_jitter_px = get_or(j, "box_jitter_px", 0.0);
    n.drop_prob = get_or(j, "drop_prob", 0.0);
    n.score_sigma = get_or(j, "score_sigma", 0.0);
    return n;
}
}  // namespace detail

inline PipelineConfig pipeline_config_from_json(const json& j) {
    detail::check_keys(j, {"embed_dim",      "num_classes",     "decoder_layers", "memory_frames",
                           "memory_per_frame", "lambda_cls",    "gamma",          "n_points",
                           "depth_layers",   "delta_d",         "score_threshold", "nms_iou",
                           "max_queries",    "ap_thresholds",   "weights_seed",   "oracle_head",
                           "fixed_queries",  "fixed_query_count", "stride",       "roi",
                           "depth_range",    "noise"},
                       "pipeline");
    PipelineConfig cfg;
    cfg.embed_dim = detail::get_or<size_t>(j, "embed_dim", cfg.embed_dim);
    cfg.num_classes = detail::get_or<int>(j, "num_classes", cfg.num_classes);
    cfg.decoder_layers = detail::get_or<size_t>(j, "decoder_layers", cfg.decoder_layers);
    cfg.memory_frames = detail::get_or<size_t>(j, "memory_frames", cfg.memory_frames);
    cfg.memory_per_frame = detail::get_or<size_t>(j, "memory_per_frame", cfg.memory_per_frame);
    cfg.lambda_cls = detail::get_or<double>(j, "lambda_cls", cfg.lambda_cls);
    cfg.gamma = detail::get_or<double>(j, "gamma", cfg.gamma);
    cfg.querygen.n_points = detail::get_or<int>(j, "n_points", cfg.querygen.n_points);
    cfg.querygen.depth_layers = detail::get_or<int>(j, "depth_layers", cfg.querygen.depth_layers);
    cfg.querygen.delta_d = detail::get_or<double>(j, "delta_d", cfg.querygen.delta_d);
    cfg.querygen.score_threshold = detail::get_or<double>(j, "score_threshold", cfg.querygen.score_threshold);
    cfg.querygen.nms_iou = detail::get_or<double>(j, "nms_iou", cfg.querygen.nms_iou);
    cfg.querygen.max_queries = detail::get_or<size_t>(j, "max_queries", cfg.querygen.max_queries);
    cfg.ap_thresholds = detail::get_or<std::vector<double>>(j, "ap_thresholds", cfg.ap_thresholds);
    cfg.weights_seed = detail::get_or<uint64_t>(j, "weights_seed", cfg.weights_seed);
    cfg.oracle_head = detail::get_or<bool>(j, "oracle_head", cfg.oracle_head);
    cfg.fixed_queries = detail::get_or<bool>(j, "fixed_queries", cfg.fixed_queries);
    cfg.fixed_query_count = detail::get_or<size_t>(j, "fixed_query_count", cfg.fixed_query_count);
    cfg.stride = detail::get_or<int>(j, "stride", cfg.stride);
    if (j.contains("roi")) cfg.roi = detail::roi_from(j.at("roi"));
    if (j.contains("depth_range")) {
        const auto& d = j.at("depth_range");
        if (!d.is_array() || d.size() != 2) throw ConfigError("depth_range", "must be a 2-array");
        cfg.depth_range.d_min = d[0].get<double>();
        cfg.depth_range.d_max = d[1].get<double>();
    }
    if (j.contains("noise")) cfg.noise = detail::noise_from(j.at("noise"));
    cfg.validate();
    return cfg;
}

inline json sim_config_to_json(const SimConfig& cfg) {
    return {{"num_objects_min", cfg.num_objects_min},
            {"num_objects_max", cfg.num_objects_max},
            {"frame_count", cfg.frame_count},
            {"dt", cfg.dt},
            {"image_width", cfg.image_width},
            {"image_height", cfg.image_height},
            {"stride", cfg.stride},
            {"hfov_deg", cfg.hfov_deg},
            {"cam_radius", cfg.cam_radius},
            {"cam_height", cfg.cam_height},
            {"placement_extent", cfg.placement_extent},
            {"placement_min_range", cfg.placement_min_range},
            {"ego_speed_min", cfg.ego_speed_min},
            {"ego_speed_max", cfg.ego_speed_max},
            {"ego_yaw_rate_max", cfg.ego_yaw_rate_max}};
}

inline SimConfig sim_config_from_json(const json& j) {
    detail::check_keys(j, {"num_objects_min", "num_objects_max", "frame_count", "dt", "image_width",
                           "image_height", "stride", "hfov_deg", "cam_radius", "cam_height",
                           "placement_extent", "placement_min_range", "ego_speed_min", "ego_speed_max",
                           "ego_yaw_rate_max"},
                       "sim");
    SimConfig cfg;
    cfg.num_objects_min = detail::get_or<int>(j, "num_objects_min", cfg.num_objects_min);
    cfg.num_objects_max = detail::get_or<int>(j, "num_objects_max", cfg.num_objects_max);
    cfg.frame_count = detail::get_or<int>(j, "frame_count", cfg.frame_count);
    cfg.dt = detail::get_or<double>(j, "dt", cfg.dt);
    cfg.image_width = detail::get_or<int>(j, "image_width", cfg.image_width);
    cfg.image_height = detail::get_or<int>(j, "image_height", cfg.image_height);
    cfg.stride = detail::get_or<int>(j, "stride", cfg.stride);
    cfg.hfov_deg = detail::get_or<double>(j, "hfov_deg", cfg.hfov_deg);
    cfg.cam_radius = detail::get_or<double>(j, "cam_radius", cfg.cam_radius);
    cfg.cam_height = detail::get_or<double>(j, "cam_height", cfg.cam_height);
    cfg.placement_extent = detail::get_or<double>(j, "placement_extent", cfg.placement_extent);
    cfg.placement_min_range = detail::get_or<double>(j, "placement_min_range", cfg.placement_min_range);
    cfg.ego_speed_min = detail::get_or<double>(j, "ego_speed_min", cfg.ego_speed_min);
    cfg.ego_speed_max = detail::get_or<double>(j, "ego_speed_max", cfg.ego_speed_max);
    cfg.ego_yaw_rate_max = detail::get_or<double>(j, "ego_yaw_rate_max", cfg.ego_yaw_rate_max);
    return cfg;
}

struct RunConfig {
    SimConfig sim;
    PipelineConfig pipeline;
    uint64_t scene_seed = 1;
};

inline json run_config_to_json(const RunConfig& cfg) {
    return {{"schema", "dq3d-config"},
            {"schema_version", kSchemaVersion},
            {"scene_seed", cfg.scene_seed},
            {"sim", sim_config_to_json(cfg.sim)},
            {"pipeline", pipeline_config_to_json(cfg.pipeline)}};
}

inline RunConfig run_config_from_json(const json& j) {
    detail::check_schema(j, "dq3d-config");
    detail::check_keys(j, {"schema", "schema_version", "scene_seed", "sim", "pipeline"}, "config");
    RunConfig cfg;
    cfg.scene_seed = detail::get_or<uint64_t>(j, "scene_seed", cfg.scene_seed);
    if (j.contains("sim")) cfg.sim = sim_config_from_json(j.at("sim"));
    if (j.contains("pipeline")) cfg.pipeline = pipeline_config_from_json(j.at("pipeline"));
    // The simulator and the pipeline agree on the detection region by
    // construction; the file states it once, under pipeline.
    cfg.sim.roi = cfg.pipeline.roi;
    cfg.sim.depth_range = cfg.pipeline.depth_range;
    cfg.sim.validate();
    return cfg;
}

// --------------------------------------------------------------- report ---

inline json detection_to_json(const Detection& d) {
    return {{"class_scores", d.class_scores},
            {"center", detail::point_json(d.center)},
            {"size", json::array({d.width, d.length, d.height})},
            {"yaw", d.yaw},
            {"velocity", json::array({d.vx, d.vy})}};
}

inline json gt_to_json(const GtBox& g) {
    return {{"class_id", g.class_id},
            {"center", detail::point_json(g.center)},
            {"size", json::array({g.width, g.length, g.height})},
            {"yaw", g.yaw},
            {"velocity", json::array({g.vx, g.vy})}};
}

inline json ap_to_json(const ApResult& ap, const std::vector<double>& thresholds) {
    json table = json::array();
    for (size_t c = 0; c < ap.table.size(); ++c)
        for (size_t t = 0; t < ap.table[c].size(); ++t)
            table.push_back({{"class_id", c},
                             {"threshold", thresholds[t]},
                             {"defined", ap.table[c][t].defined},
                             {"ap", ap.table[c][t].ap}});
    return {{"map", ap.map}, {"map_defined", ap.map_defined}, {"table", table}};
}

// Timing is deliberately absent: report bytes must be a pure function of
// (scene, config). Timings go to stderr at the CLI layer instead.
inline json report_to_json(const SequenceReport& report, const PipelineConfig& cfg) {
    json frames = json::array();
    for (const auto& f : report.frames) {
        json dets = json::array();
        for (const auto& d : f.detections) dets.push_back(detection_to_json(d));
        json gts = json::array();
        for (const auto& g : f.gts) gts.push_back(gt_to_json(g));
        json refs = json::array();
        for (const auto& p : f.ref_points) refs.push_back(detail::point_json(p));
        frames.push_back({{"frame_index", f.frame_index},
                          {"timestamp", f.timestamp},
                          {"depth_query_count", f.depth_query_count},
                          {"temporal_query_count", f.temporal_query_count},
                          {"detections", dets},
                          {"gts", gts},
                          {"ref_points", refs},
                          {"loss",
                           {{"cls", f.loss.cls_loss}, {"reg", f.loss.reg_loss}, {"total", f.loss.total}}}});
    }
    char checksum[17];
    std::snprintf(checksum, sizeof(checksum), "%016llx",
                  static_cast<unsigned long long>(report.weight_checksum));
    return {{"schema", "dq3d-report"},
            {"schema_version", kSchemaVersion},
            {"config", pipeline_config_to_json(cfg)},
            {"weight_checksum", checksum},
            {"mean_ref_distance", report.mean_ref_distance},
            {"ref_distance_count", report.ref_distance_count},
            {"ap", ap_to_json(report.ap, cfg.ap_thresholds)},
            {"frames", frames}};
}

// ------------------------------------------------------------- file I/O ---

inline json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
    return j;
}

inline void save_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileError("cannot open " + path + " for writing");
    out << text;
    if (!out) throw FileError("write failed for " + path);
}

inline std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

// ------------------------------------------------------------------ CSV ---

inline std::string class_label(int class_id) {
    const auto& classes = default_classes();
    if (class_id >= 0 && static_cast<size_t>(class_id) < classes.size())
        return classes[static_cast<size_t>(class_id)].name;
    return "class" + std::to_string(class_id);
}

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

inline std::string ap_table_csv(const ApResult& ap, const std::vector<double>& thresholds) {
    std::ostringstream out;
    out << "class,threshold_m,defined,ap\n";
    for (size_t c = 0; c < ap.table.size(); ++c)
        for (size_t t = 0; t < ap.table[c].size(); ++t) {
            const auto& cell = ap.table[c][t];
            out << class_label(static_cast<int>(c)) << ',' << format_double(thresholds[t]) << ','
                << (cell.defined ? 1 : 0) << ',' << format_double(cell.ap) << '\n';
        }
    out << "mAP,," << (ap.map_defined ? 1 : 0) << ',' << format_double(ap.map) << '\n';
    return out.str();
}

inline std::string ablation_csv(const AblationReport& report) {
    std::ostringstream out;
    out << "arm,map,mean_ref_distance_m,ref_count,weight_checksum\n";
    const auto row = [&](const char* name, const SequenceReport& r) {
        char checksum[17];
        std::snprintf(checksum, sizeof(checksum), "%016llx",
                      static_cast<unsigned long long>(r.weight_checksum));
        out << name << ',' << format_double(r.ap.map) << ',' << format_double(r.mean_ref_distance) << ','
            << r.ref_distance_count << ',' << checksum << '\n';
    };
    row("fixed", report.fixed_arm);
    row("depth_guided", report.depth_guided_arm);
    return out.str();
}

// ------------------------------------------------------------------ SVG ---

// Top-down plot of one frame: detection region outline, ground-truth centers
// as square markers, query reference points as dots.
inline std::string bev_svg(const std::vector<Point3D>& ref_points, const std::vector<GtBox>& gts,
                           const RoiBounds& roi, int frame_index) {
    const double margin = 20.0, plot = 600.0;
    const auto px = [&](double x) { return margin + (x - roi.x_min) / (roi.x_max - roi.x_min) * plot; };
    const auto py = [&](double y) { return margin + (roi.y_max - y) / (roi.y_max - roi.y_min) * plot; };
    const auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", v);
        return std::string(buf);
    };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" "
           "viewBox=\"0 0 640 640\">\n";
    svg << "<rect width=\"640\" height=\"640\" fill=\"white\"/>\n";
    svg << "<rect class=\"roi\" x=\"" << num(margin) << "\" y=\"" << num(margin) << "\" width=\""
        << num(plot) << "\" height=\"" << num(plot) << "\" fill=\"none\" stroke=\"#333333\"/>\n";
    svg << "<text x=\"" << num(margin) << "\" y=\"15\" font-family=\"monospace\" font-size=\"12\">frame "
        << frame_index << ": " << gts.size() << " objects, " << ref_points.size()
        << " reference points</text>\n";
    for (const auto& p : ref_points)
        svg << "<circle class=\"ref\" cx=\"" << num(px(p.x)) << "\" cy=\"" << num(py(p.y))
            << "\" r=\"2\" fill=\"#1f77b4\" fill-opacity=\"0.6\"/>\n";
    for (const auto& g : gts)
        svg << "<rect class=\"gt\" x=\"" << num(px(g.center.x) - 4.0) << "\" y=\""
            << num(py(g.center.y) - 4.0)
            << "\" width=\"8\" height=\"8\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\"/>\n";
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace dq3d
