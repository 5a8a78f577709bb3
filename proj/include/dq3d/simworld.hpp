#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dq3d/errors.hpp"
#include "dq3d/geometry.hpp"
#include "dq3d/matching_loss.hpp"
#include "dq3d/netcore.hpp"
#include "dq3d/querygen.hpp"

namespace dq3d {

struct ClassSpec {
    std::string name;
    double w_min, w_max;
    double l_min, l_max;
    double h_min, h_max;
    double speed_max;  // m/s
};

inline const std::vector<ClassSpec>& default_classes() {
    static const std::vector<ClassSpec> classes = {
        {"car", 1.8, 2.2, 4.2, 5.0, 1.5, 1.8, 10.0},
        {"truck", 2.4, 2.9, 6.5, 9.0, 2.8, 3.5, 8.0},
        {"pedestrian", 0.5, 0.8, 0.5, 0.8, 1.6, 1.9, 1.5},
    };
    return classes;
}

struct NoiseConfig {
    double depth_rel_sigma = 0.0;  // multiplicative depth error
    double box_jitter_px = 0.0;
    double drop_prob = 0.0;
    double score_sigma = 0.0;
};

struct SimConfig {
    int num_objects_min = 8;
    int num_objects_max = 15;
    int frame_count = 10;
    double dt = 0.5;
    int image_width = 800;
    int image_height = 320;
    int stride = 16;
    double hfov_deg = 70.0;
    double cam_radius = 1.0;
    double cam_height = 1.6;
    double placement_extent = 40.0;  // |x|,|y| bound for initial centers
    double placement_min_range = 6.0;
    double ego_speed_min = 3.0, ego_speed_max = 8.0;
    double ego_yaw_rate_max = 0.08;  // rad/s
    RoiBounds roi;
    DepthRange depth_range;

    void validate() const {
        if (num_objects_min < 0 || num_objects_max < num_objects_min)
            throw ConfigError("num_objects", "bad object count range");
        if (frame_count < 1) throw ConfigError("frame_count", "must be >= 1");
        if (dt <= 0.0) throw ConfigError("dt", "must be positive");
        if (image_width < stride || image_height < stride || stride < 1)
            throw ConfigError("image", "image must cover at least one stride cell");
        if (image_width % stride != 0 || image_height % stride != 0)
            throw ConfigError("stride", "image dimensions must be stride multiples");
        if (hfov_deg <= 10.0 || hfov_deg >= 170.0) throw ConfigError("hfov_deg", "out of range");
        roi.validate();
    }
};

// Constant-velocity rigid box; length runs along the heading, width across
// it. center0 is the world-frame position at t = 0.
struct SceneObject {
    int id = 0;
    int class_id = 0;
    Point3D center0;
    double width = 1.0, length = 1.0, height = 1.0;
    double yaw = 0.0;
    double vx = 0.0, vy = 0.0;

    Point3D center_at(double t) const { return {center0.x + vx * t, center0.y + vy * t, center0.z}; }
};

struct SceneFrame {
    double timestamp = 0.0;
    EgoPose ego;
};

struct Scene {
    uint64_t seed = 0;
    double dt = 0.5;
    std::vector<CameraModel> rig;
    std::vector<SceneObject> objects;
    std::vector<SceneFrame> frames;
};

// Six cameras on a ring, yawed 60 degrees apart, all pitched level. Camera
// axes: x right across the image, y down, z out along the view direction.
inline std::vector<CameraModel> make_rig(int image_width, int image_height, double hfov_deg,
                                         double radius, double height) {
    const double half_fov = hfov_deg * kPi / 360.0;
    const double f = (image_width / 2.0) / std::tan(half_fov);
    std::vector<CameraModel> rig;
    for (int i = 0; i < 6; ++i) {
        const double theta = i * (kPi / 3.0);
        const double c = std::cos(theta), s = std::sin(theta);
        CameraModel cam;
        cam.fx = f;
        cam.fy = f;
        cam.cx = image_width / 2.0;
        cam.cy = image_height / 2.0;
        cam.width = image_width;
        cam.height = image_height;
        cam.R = make_rotation({s, 0, c, -c, 0, s, 0, -1, 0});
        cam.T = make_translation(c * radius, s * radius, height);
        cam.validate();
        rig.push_back(cam);
    }
    return rig;
}

inline double ego_heading(const EgoPose& pose) {
    return std::atan2(pose.transform.at(1, 0), pose.transform.at(0, 0));
}

inline double wrap_angle(double a) {
    while (a > kPi) a -= 2.0 * kPi;
    while (a <= -kPi) a += 2.0 * kPi;
    return a;
}

// Closed-form unicycle pose: constant speed and yaw rate from the seed, so
// any frame's pose is an exact function of its timestamp.
inline EgoPose ego_pose_at(double speed, double yaw_rate, double t) {
    EgoPose pose;
    pose.timestamp = t;
    const double psi = yaw_rate * t;
    double x, y;
    if (std::abs(yaw_rate) > 1e-9) {
        x = (speed / yaw_rate) * std::sin(psi);
        y = (speed / yaw_rate) * (1.0 - std::cos(psi));
    } else {
        x = speed * t;
        y = 0.0;
    }
    pose.transform = rotation_z(psi);
    pose.transform.at(0, 3) = x;
    pose.transform.at(1, 3) = y;
    return pose;
}

inline double bev_diag(const SceneObject& o) { return std::hypot(o.width, o.length); }

inline Scene generate_scene(const SimConfig& cfg, uint64_t seed) {
    cfg.validate();
    Scene scene;
    scene.seed = seed;
    scene.dt = cfg.dt;
    scene.rig = make_rig(cfg.image_width, cfg.image_height, cfg.hfov_deg, cfg.cam_radius, cfg.cam_height);

    Rng ego_rng(derive_seed(seed, 1));
    const double speed = ego_rng.uniform(cfg.ego_speed_min, cfg.ego_speed_max);
    const double yaw_rate = ego_rng.uniform(-cfg.ego_yaw_rate_max, cfg.ego_yaw_rate_max);
    for (int i = 0; i < cfg.frame_count; ++i) {
        SceneFrame frame;
        frame.timestamp = i * cfg.dt;
        frame.ego = ego_pose_at(speed, yaw_rate, frame.timestamp);
        frame.ego.validate();
        scene.frames.push_back(frame);
    }

    Rng obj_rng(derive_seed(seed, 2));
    const auto& classes = default_classes();
    const int count =
        cfg.num_objects_min +
        static_cast<int>(obj_rng.uniform_index(static_cast<uint64_t>(cfg.num_objects_max - cfg.num_objects_min + 1)));
    for (int id = 0; id < count; ++id) {
        SceneObject obj;
        obj.id = id;
        obj.class_id = static_cast<int>(obj_rng.uniform_index(classes.size()));
        const auto& spec = classes[static_cast<size_t>(obj.class_id)];
        obj.width = obj_rng.uniform(spec.w_min, spec.w_max);
        obj.length = obj_rng.uniform(spec.l_min, spec.l_max);
        obj.height = obj_rng.uniform(spec.h_min, spec.h_max);
        const double heading = obj_rng.uniform(-kPi, kPi);
        const double obj_speed = obj_rng.uniform(0.0, spec.speed_max);
        obj.yaw = heading;
        obj.vx = obj_speed * std::cos(heading);
        obj.vy = obj_speed * std::sin(heading);
        obj.center0.z = obj.height / 2.0;

        bool placed = false;
        for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
            obj.center0.x = obj_rng.uniform(-cfg.placement_extent, cfg.placement_extent);
            obj.center0.y = obj_rng.uniform(-cfg.placement_extent, cfg.placement_extent);
            if (std::hypot(obj.center0.x, obj.center0.y) < cfg.placement_min_range) continue;
            placed = true;
            for (const auto& other : scene.objects) {
                const double min_sep = 0.5 * (bev_diag(obj) + bev_diag(other)) + 0.5;
                if (bev_distance(obj.center0, other.center0) < min_sep) {
                    placed = false;
                    break;
                }
            }
        }
        if (!placed) throw PlacementFailure("object " + std::to_string(id) + " after 200 attempts");
        scene.objects.push_back(obj);
    }
    return scene;
}

// Oriented box in the ego frame of one moment.
struct ObbEgo {
    Point3D center;
    double half_w = 0.5, half_l = 0.5, half_h = 0.5;
    double cos_yaw = 1.0, sin_yaw = 0.0;
};

inline ObbEgo object_in_ego(const SceneObject& obj, const EgoPose& pose, double t) {
    ObbEgo box;
    box.center = pose.transform.inverse_rigid().apply_point(obj.center_at(t));
    box.half_w = obj.width / 2.0;
    box.half_l = obj.length / 2.0;
    box.half_h = obj.height / 2.0;
    const double yaw = wrap_angle(obj.yaw - ego_heading(pose));
    box.cos_yaw = std::cos(yaw);
    box.sin_yaw = std::sin(yaw);
    return box;
}

inline std::array<Point3D, 8> obb_corners(const ObbEgo& box) {
    std::array<Point3D, 8> out;
    int idx = 0;
    for (int sl = -1; sl <= 1; sl += 2)
        for (int sw = -1; sw <= 1; sw += 2)
            for (int sh = -1; sh <= 1; sh += 2) {
                const double lx = sl * box.half_l, ly = sw * box.half_w;
                out[static_cast<size_t>(idx++)] = {
                    box.center.x + lx * box.cos_yaw - ly * box.sin_yaw,
                    box.center.y + lx * box.sin_yaw + ly * box.cos_yaw,
                    box.center.z + sh * box.half_h,
                };
            }
    return out;
}

inline bool point_in_obb(const Point3D& p, const ObbEgo& box, double slack = 0.0) {
    const double dx = p.x - box.center.x, dy = p.y - box.center.y, dz = p.z - box.center.z;
    const double lx = dx * box.cos_yaw + dy * box.sin_yaw;
    const double ly = -dx * box.sin_yaw + dy * box.cos_yaw;
    return std::abs(lx) <= box.half_l + slack && std::abs(ly) <= box.half_w + slack &&
           std::abs(dz) <= box.half_h + slack;
}

// Nearest entry distance of the ray origin + t*dir into the box (slab test);
// nullopt when the ray misses or the box is behind the origin.
inline std::optional<double> ray_obb_entry(const Point3D& origin, const Point3D& dir, const ObbEgo& box) {
    const double dx = origin.x - box.center.x, dy = origin.y - box.center.y;
    const double o[3] = {dx * box.cos_yaw + dy * box.sin_yaw, -dx * box.sin_yaw + dy * box.cos_yaw,
                         origin.z - box.center.z};
    const double d[3] = {dir.x * box.cos_yaw + dir.y * box.sin_yaw,
                         -dir.x * box.sin_yaw + dir.y * box.cos_yaw, dir.z};
    const double half[3] = {box.half_l, box.half_w, box.half_h};
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-12) {
            if (std::abs(o[a]) > half[a]) return std::nullopt;
            continue;
        }
        double t1 = (-half[a] - o[a]) / d[a];
        double t2 = (half[a] - o[a]) / d[a];
        if (t1 > t2) std::swap(t1, t2);
        t_near = std::max(t_near, t1);
        t_far = std::min(t_far, t2);
    }
    if (t_near > t_far || t_near <= 0.0) return std::nullopt;
    return t_near;
}

namespace detail {
// Direction with unit depth along the optical axis, so the ray parameter of
// a hit IS the camera-frame depth of the hit point.
inline Point3D pixel_ray_direction(const CameraModel& cam, double u, double v) {
    const std::array<double, 4> cam_dir = {(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0, 0.0};
    const auto r = cam.R.apply(cam_dir);
    return {r[0], r[1], r[2]};
}

inline Point3D camera_position(const CameraModel& cam) {
    return {cam.T.at(0, 3), cam.T.at(1, 3), cam.T.at(2, 3)};
}

struct HullRect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open pixel bounds
    bool valid = false;
};

// Pixel bounding box of the projected corners; invalid when any corner is
// behind the camera (silhouettes straddling the image plane are skipped,
// acceptable for a stub).
inline HullRect projected_hull(const CameraModel& cam, const std::array<Point3D, 8>& corners) {
    HullRect rect;
    double u0 = 1e18, v0 = 1e18, u1 = -1e18, v1 = -1e18;
    for (const auto& c : corners) {
        Projection proj;
        try {
            proj = project(cam, c);
        } catch (const BehindCamera&) {
            return rect;
        }
        u0 = std::min(u0, proj.pixel.u);
        v0 = std::min(v0, proj.pixel.v);
        u1 = std::max(u1, proj.pixel.u);
        v1 = std::max(v1, proj.pixel.v);
    }
    rect.x0 = std::max(0, static_cast<int>(std::floor(u0)));
    rect.y0 = std::max(0, static_cast<int>(std::floor(v0)));
    rect.x1 = std::min(cam.width, static_cast<int>(std::ceil(u1)));
    rect.y1 = std::min(cam.height, static_cast<int>(std::ceil(v1)));
    rect.valid = rect.x0 < rect.x1 && rect.y0 < rect.y1;
    return rect;
}

inline uint64_t frame_camera_mix(uint64_t tag, int frame_index, int camera_index) {
    return tag * 1000003ULL + static_cast<uint64_t>(frame_index) * 131ULL +
           static_cast<uint64_t>(camera_index);
}
}  // namespace detail

// Analytic depth: nearest box entry along each pixel ray, evaluated only
// inside projected object hulls. Background stays invalid.
inline DepthMap render_depth(const Scene& scene, int frame_index, int camera_index,
                             const NoiseConfig& noise = {}, uint64_t noise_seed = 0,
                             const DepthRange& range = DepthRange{}) {
    const auto& frame = scene.frames[static_cast<size_t>(frame_index)];
    const auto& cam = scene.rig[static_cast<size_t>(camera_index)];
    DepthMap map(camera_index, cam.width, cam.height);
    const Point3D origin = detail::camera_position(cam);

    for (const auto& obj : scene.objects) {
        const ObbEgo box = object_in_ego(obj, frame.ego, frame.timestamp);
        const auto rect = detail::projected_hull(cam, obb_corners(box));
        if (!rect.valid) continue;
        for (int y = rect.y0; y < rect.y1; ++y)
            for (int x = rect.x0; x < rect.x1; ++x) {
                const Point3D dir = detail::pixel_ray_direction(cam, x + 0.5, y + 0.5);
                const auto hit = ray_obb_entry(origin, dir, box);
                if (!hit) continue;
                const size_t i = map.idx(x, y);
                if (!map.valid[i] || *hit < map.depth[i]) {
                    map.depth[i] = *hit;
                    map.valid[i] = 1;
                }
            }
    }

    Rng rng(derive_seed(noise_seed, detail::frame_camera_mix(0xDE, frame_index, camera_index)));
    for (size_t i = 0; i < map.depth.size(); ++i) {
        if (!map.valid[i]) continue;
        if (noise.depth_rel_sigma > 0.0) map.depth[i] *= 1.0 + rng.gaussian(0.0, noise.depth_rel_sigma);
        map.depth[i] = std::clamp(map.depth[i], range.d_min, range.d_max);
    }
    return map;
}

// Projected-hull boxes with jitter, random drops, and score noise, then the
// same score/NMS filtering the query generator assumes.
inline std::vector<Box2D> detect_2d_stub(const Scene& scene, int frame_index, int camera_index,
                                         const NoiseConfig& noise, uint64_t seed,
                                         double score_threshold = 0.05, double nms_iou = 0.7) {
    const auto& frame = scene.frames[static_cast<size_t>(frame_index)];
    const auto& cam = scene.rig[static_cast<size_t>(camera_index)];
    Rng rng(derive_seed(seed, detail::frame_camera_mix(0x2D, frame_index, camera_index)));

    std::vector<Box2D> boxes;
    for (const auto& obj : scene.objects) {
        const ObbEgo box3d = object_in_ego(obj, frame.ego, frame.timestamp);
        const auto corners = obb_corners(box3d);
        double u0 = 1e18, v0 = 1e18, u1 = -1e18, v1 = -1e18;
        bool visible = true;
        for (const auto& c : corners) {
            try {
                const auto proj = project(cam, c);
                u0 = std::min(u0, proj.pixel.u);
                v0 = std::min(v0, proj.pixel.v);
                u1 = std::max(u1, proj.pixel.u);
                v1 = std::max(v1, proj.pixel.v);
            } catch (const BehindCamera&) {
                visible = false;
                break;
            }
        }
        if (!visible) continue;

        // Fixed draw order per visible object keeps the stream aligned
        // regardless of which noise terms are active.
        const double j0 = rng.gaussian(0.0, 1.0), j1 = rng.gaussian(0.0, 1.0);
        const double j2 = rng.gaussian(0.0, 1.0), j3 = rng.gaussian(0.0, 1.0);
        const double drop_draw = rng.uniform();
        const double score_draw = rng.gaussian(0.0, 1.0);

        Box2D box;
        box.camera_index = camera_index;
        box.u_min = std::max(0.0, u0 + j0 * noise.box_jitter_px);
        box.v_min = std::max(0.0, v0 + j1 * noise.box_jitter_px);
        box.u_max = std::min(static_cast<double>(cam.width), u1 + j2 * noise.box_jitter_px);
        box.v_max = std::min(static_cast<double>(cam.height), v1 + j3 * noise.box_jitter_px);
        if (box.u_max - box.u_min < 1.0 || box.v_max - box.v_min < 1.0) continue;
        if (drop_draw < noise.drop_prob) continue;
        box.score = std::clamp(1.0 - std::abs(score_draw) * noise.score_sigma, 0.0, 1.0);
        box.class_id = obj.class_id;
        boxes.push_back(box);
    }
    return filter_boxes(std::move(boxes), score_threshold, nms_iou);
}

namespace detail {
inline std::vector<double> object_feature(int object_id, int class_id, size_t channels, uint64_t seed) {
    Rng rng(derive_seed(derive_seed(seed, 0x0B17),
                        static_cast<uint64_t>(object_id) * 131ULL + static_cast<uint64_t>(class_id)));
    std::vector<double> f(channels);
    for (auto& v : f) v = rng.uniform(-1.0, 1.0);
    return f;
}
}  // namespace detail

// Procedural stand-in for a backbone: every grid cell whose center ray hits
// an object carries that object's signature vector; background cells carry
// faint noise.
inline FeatureMap synth_features(const Scene& scene, int frame_index, int camera_index, size_t channels,
                                 uint64_t seed, int stride = 16) {
    const auto& frame = scene.frames[static_cast<size_t>(frame_index)];
    const auto& cam = scene.rig[static_cast<size_t>(camera_index)];
    FeatureMap fmap(camera_index, cam.width, cam.height, stride, channels);
    const Point3D origin = detail::camera_position(cam);

    std::vector<ObbEgo> boxes;
    boxes.reserve(scene.objects.size());
    for (const auto& obj : scene.objects) boxes.push_back(object_in_ego(obj, frame.ego, frame.timestamp));
    std::vector<std::vector<double>> signatures;
    signatures.reserve(scene.objects.size());
    for (const auto& obj : scene.objects)
        signatures.push_back(detail::object_feature(obj.id, obj.class_id, channels, seed));

    Rng bg_rng(derive_seed(seed, detail::frame_camera_mix(0xFEA, frame_index, camera_index)));
    for (int gy = 0; gy < fmap.grid_height; ++gy)
        for (int gx = 0; gx < fmap.grid_width; ++gx) {
            const Point3D dir = detail::pixel_ray_direction(cam, (gx + 0.5) * stride, (gy + 0.5) * stride);
            int nearest = -1;
            double nearest_t = std::numeric_limits<double>::infinity();
            for (size_t o = 0; o < boxes.size(); ++o) {
                const auto hit = ray_obb_entry(origin, dir, boxes[o]);
                if (hit && *hit < nearest_t) {
                    nearest_t = *hit;
                    nearest = static_cast<int>(o);
                }
            }
            double* cell = fmap.node(gx, gy);
            if (nearest >= 0) {
                const auto& sig = signatures[static_cast<size_t>(nearest)];
                for (size_t c = 0; c < channels; ++c) cell[c] = sig[c];
            } else {
                for (size_t c = 0; c < channels; ++c) cell[c] = bg_rng.gaussian(0.0, 0.05);
            }
        }
    return fmap;
}

// Ground truth of one frame in that frame's ego coordinates, restricted to
// the detection region.
inline std::vector<GtBox> gt_boxes(const Scene& scene, int frame_index, const RoiBounds& roi) {
    const auto& frame = scene.frames[static_cast<size_t>(frame_index)];
    const double psi = ego_heading(frame.ego);
    const double c = std::cos(psi), s = std::sin(psi);
    const Mat4 inv = frame.ego.transform.inverse_rigid();

    std::vector<GtBox> out;
    for (const auto& obj : scene.objects) {
        GtBox gt;
        gt.center = inv.apply_point(obj.center_at(frame.timestamp));
        if (!roi.contains(gt.center)) continue;
        gt.width = obj.width;
        gt.length = obj.length;
        gt.height = obj.height;
        gt.yaw = wrap_angle(obj.yaw - psi);
        gt.vx = c * obj.vx + s * obj.vy;
        gt.vy = -s * obj.vx + c * obj.vy;
        gt.class_id = obj.class_id;
        out.push_back(gt);
    }
    return out;
}

}  // namespace dq3d
