#include <catch2/catch_amalgamated.hpp>

#include <dq3d/simworld.hpp>

using namespace dq3d;

namespace {

// One still object straight ahead of camera 0 (which looks along +x).
Scene hand_scene() {
    Scene scene;
    scene.seed = 5;
    scene.dt = 0.5;
    scene.rig = make_rig(800, 320, 70.0, 1.0, 1.6);
    SceneFrame frame;
    frame.timestamp = 0.0;
    scene.frames.push_back(frame);

    SceneObject obj;
    obj.id = 0;
    obj.class_id = 0;
    obj.center0 = {11.0, 0.0, 1.6};  // same height as the camera ring
    obj.width = 2.0;
    obj.length = 4.0;
    obj.height = 1.0;
    obj.yaw = 0.0;
    scene.objects.push_back(obj);
    return scene;
}

double surface_distance(const Point3D& p, const ObbEgo& box) {
    const double dx = p.x - box.center.x, dy = p.y - box.center.y, dz = p.z - box.center.z;
    const double lx = dx * box.cos_yaw + dy * box.sin_yaw;
    const double ly = -dx * box.sin_yaw + dy * box.cos_yaw;
    // Distance of an inside point to the nearest face (negative if outside).
    const double margins[3] = {box.half_l - std::abs(lx), box.half_w - std::abs(ly),
                               box.half_h - std::abs(dz)};
    return std::min({margins[0], margins[1], margins[2]});
}

}  // namespace

TEST_CASE("six camera ring geometry", "[simworld]") {
    const auto rig = make_rig(800, 320, 70.0, 1.0, 1.6);
    REQUIRE(rig.size() == 6);
    const double want_f = 400.0 / std::tan(35.0 * kPi / 180.0);
    for (size_t i = 0; i < 6; ++i) {
        CHECK(rig[i].fx == Catch::Approx(want_f));
        CHECK(rig[i].cx == 400.0);
        CHECK(rig[i].cy == 160.0);
        CHECK(rig[i].R.rotation_block_orthonormal());
        const double theta = static_cast<double>(i) * kPi / 3.0;
        CHECK(rig[i].T.at(0, 3) == Catch::Approx(std::cos(theta)).margin(1e-12));
        CHECK(rig[i].T.at(1, 3) == Catch::Approx(std::sin(theta)).margin(1e-12));
        CHECK(rig[i].T.at(2, 3) == 1.6);
    }

    // Camera 0 looks along +x: a far point on the axis lands near the center.
    const Projection pr = project(rig[0], {30.0, 0.0, 1.6});
    CHECK(pr.pixel.u == Catch::Approx(400.0).margin(1e-9));
    CHECK(pr.pixel.v == Catch::Approx(160.0).margin(1e-9));
    CHECK(pr.depth == Catch::Approx(29.0).margin(1e-9));
}

TEST_CASE("scene generation is seeded and bounded", "[simworld]") {
    SimConfig cfg;
    cfg.frame_count = 4;

    const Scene a = generate_scene(cfg, 77);
    const Scene b = generate_scene(cfg, 77);
    const Scene c = generate_scene(cfg, 78);

    REQUIRE(a.objects.size() == b.objects.size());
    REQUIRE(a.objects.size() >= 8);
    REQUIRE(a.objects.size() <= 15);
    bool identical = true;
    for (size_t i = 0; i < a.objects.size(); ++i) {
        identical = identical && a.objects[i].center0.x == b.objects[i].center0.x &&
                    a.objects[i].vx == b.objects[i].vx && a.objects[i].width == b.objects[i].width &&
                    a.objects[i].class_id == b.objects[i].class_id;
    }
    CHECK(identical);
    const bool same_as_c = a.objects.size() == c.objects.size() &&
                           a.objects[0].center0.x == c.objects[0].center0.x &&
                           a.objects[0].center0.y == c.objects[0].center0.y;
    CHECK_FALSE(same_as_c);

    for (const auto& obj : a.objects) {
        REQUIRE(cfg.roi.contains(obj.center0));
        REQUIRE(std::hypot(obj.center0.x, obj.center0.y) >= cfg.placement_min_range);
        REQUIRE(obj.width > 0.0);
        REQUIRE(obj.length > 0.0);
        REQUIRE(obj.height > 0.0);
    }
    for (size_t f = 1; f < a.frames.size(); ++f) {
        REQUIRE(a.frames[f].timestamp > a.frames[f - 1].timestamp);
        REQUIRE(a.frames[f].timestamp - a.frames[f - 1].timestamp == Catch::Approx(cfg.dt));
        CHECK_NOTHROW(a.frames[f].ego.validate());
    }

    cfg.num_objects_min = 0;
    cfg.num_objects_max = 0;
    const Scene empty = generate_scene(cfg, 1);
    CHECK(empty.objects.empty());
    CHECK(empty.frames.size() == 4);
}

TEST_CASE("depth render of the straight-ahead box", "[simworld]") {
    const Scene scene = hand_scene();
    const DepthMap map = render_depth(scene, 0, 0);

    // Camera sits at x=1; the front face is at x = 11 - 4/2 = 9.
    const size_t center = map.idx(400, 160);
    REQUIRE(map.valid[center]);
    CHECK(map.depth[center] == Catch::Approx(8.0).margin(1e-9));

    size_t valid_count = 0;
    for (uint8_t v : map.valid) valid_count += v;
    CHECK(valid_count > 100);  // the box subtends a real pixel area

    const DepthMap other_side = render_depth(scene, 0, 3);  // camera looking -x
    size_t behind_count = 0;
    for (uint8_t v : other_side.valid) behind_count += v;
    CHECK(behind_count == 0);

    Scene no_objects = scene;
    no_objects.objects.clear();
    const DepthMap blank = render_depth(no_objects, 0, 0);
    for (uint8_t v : blank.valid) REQUIRE(v == 0);
}

TEST_CASE("every rendered depth unprojects onto an object surface", "[simworld]") {
    SimConfig cfg;
    cfg.frame_count = 2;
    cfg.image_width = 400;
    cfg.image_height = 160;
    const Scene scene = generate_scene(cfg, 33);

    std::vector<ObbEgo> boxes;
    for (const auto& obj : scene.objects) boxes.push_back(object_in_ego(obj, scene.frames[1].ego, scene.frames[1].timestamp));

    for (int cam_index = 0; cam_index < 6; ++cam_index) {
        const DepthMap map = render_depth(scene, 1, cam_index);
        const auto& cam = scene.rig[static_cast<size_t>(cam_index)];
        size_t checked = 0;
        for (int y = 0; y < map.height; y += 7)
            for (int x = 0; x < map.width; x += 7) {
                if (!map.valid[map.idx(x, y)]) continue;
                const double d = map.depth[map.idx(x, y)];
                const Point3D p = unproject(cam, {cam_index, x + 0.5, y + 0.5}, d);
                double best = -1e18;
                for (const auto& box : boxes) best = std::max(best, surface_distance(p, box));
                // On some box's boundary: inside by at most a hair.
                REQUIRE(best >= -1e-6);
                REQUIRE(best < 1e-6);
                ++checked;
            }
        if (cam_index == 0) CHECK(checked > 0);
    }
}

TEST_CASE("clean 2d stub reproduces projected hulls", "[simworld]") {
    const Scene scene = hand_scene();
    const auto boxes = detect_2d_stub(scene, 0, 0, NoiseConfig{}, scene.seed);
    REQUIRE(boxes.size() == 1);
    CHECK(boxes[0].score == 1.0);
    CHECK(boxes[0].class_id == 0);

    const auto& cam = scene.rig[0];
    const ObbEgo obb = object_in_ego(scene.objects[0], scene.frames[0].ego, 0.0);
    double u0 = 1e18, v0 = 1e18, u1 = -1e18, v1 = -1e18;
    for (const auto& corner : obb_corners(obb)) {
        const auto pr = project(cam, corner);
        u0 = std::min(u0, pr.pixel.u);
        v0 = std::min(v0, pr.pixel.v);
        u1 = std::max(u1, pr.pixel.u);
        v1 = std::max(v1, pr.pixel.v);
    }
    CHECK(boxes[0].u_min == Catch::Approx(std::max(0.0, u0)).margin(1e-9));
    CHECK(boxes[0].v_min == Catch::Approx(std::max(0.0, v0)).margin(1e-9));
    CHECK(boxes[0].u_max == Catch::Approx(std::min(800.0, u1)).margin(1e-9));
    CHECK(boxes[0].v_max == Catch::Approx(std::min(320.0, v1)).margin(1e-9));

    NoiseConfig drop_all;
    drop_all.drop_prob = 1.0;
    CHECK(detect_2d_stub(scene, 0, 0, drop_all, scene.seed).empty());
}

TEST_CASE("coincident duplicate boxes collapse to one", "[simworld]") {
    Scene scene = hand_scene();
    SceneObject twin = scene.objects[0];
    twin.id = 1;
    scene.objects.push_back(twin);

    const auto boxes = detect_2d_stub(scene, 0, 0, NoiseConfig{}, scene.seed);
    REQUIRE(boxes.size() == 1);  // IoU 1.0 pair, one survivor
    CHECK(boxes[0].score == 1.0);
}

TEST_CASE("synthetic features tag object identity", "[simworld]") {
    const Scene scene = hand_scene();
    const size_t dim = 16;
    const FeatureMap f1 = synth_features(scene, 0, 0, dim, scene.seed);
    const FeatureMap f2 = synth_features(scene, 0, 0, dim, scene.seed);
    CHECK(f1.values == f2.values);

    // Classify grid cells by casting the cell-center ray at the box.
    const auto& cam = scene.rig[0];
    const Point3D origin = cam.T.apply_point({0.0, 0.0, 0.0});
    const ObbEgo obb = object_in_ego(scene.objects[0], scene.frames[0].ego, 0.0);
    std::vector<std::pair<int, int>> fg, bg;
    for (int gy = 0; gy < f1.grid_height; ++gy)
        for (int gx = 0; gx < f1.grid_width; ++gx) {
            const Point3D along = unproject(cam, {0, (gx + 0.5) * f1.stride, (gy + 0.5) * f1.stride}, 1.0);
            const Point3D dir = along - origin;
            (ray_obb_entry(origin, dir, obb) ? fg : bg).push_back({gx, gy});
        }
    REQUIRE(fg.size() >= 2);
    REQUIRE(!bg.empty());

    const double* a = f1.node(fg[0].first, fg[0].second);
    const double* b = f1.node(fg[1].first, fg[1].second);
    const double* back = f1.node(bg[0].first, bg[0].second);
    double same = 0.0, diff = 0.0;
    for (size_t c = 0; c < dim; ++c) {
        same += std::abs(a[c] - b[c]);
        diff += (a[c] - back[c]) * (a[c] - back[c]);
    }
    CHECK(same == 0.0);       // same object, same signature
    CHECK(diff > 0.0);        // clearly separated from background
}

TEST_CASE("ground truth restricted to the detection region", "[simworld]") {
    Scene scene = hand_scene();
    SceneObject far = scene.objects[0];
    far.id = 1;
    far.center0 = {200.0, 0.0, 0.8};  // outside the ROI
    scene.objects.push_back(far);

    const auto gts = gt_boxes(scene, 0, RoiBounds{});
    REQUIRE(gts.size() == 1);
    CHECK(gts[0].center.x == Catch::Approx(11.0));
    CHECK(gts[0].class_id == 0);
}

TEST_CASE("ground truth moves into each frame's ego coordinates", "[simworld]") {
    SimConfig cfg;
    cfg.frame_count = 3;
    const Scene scene = generate_scene(cfg, 21);

    for (int f = 0; f < 3; ++f) {
        const auto gts = gt_boxes(scene, f, RoiBounds{});
        const auto& pose = scene.frames[static_cast<size_t>(f)].ego;
        const double t = scene.frames[static_cast<size_t>(f)].timestamp;
        // Every reported center, pushed back to world coordinates, must sit
        // on some object's trajectory at this timestamp.
        for (const auto& gt : gts) {
            const Point3D world = pose.transform.apply_point(gt.center);
            double best = 1e18;
            for (const auto& obj : scene.objects) best = std::min(best, distance(world, obj.center_at(t)));
            REQUIRE(best < 1e-9);
        }
    }
}

TEST_CASE("ego follows the constant-twist arc", "[simworld]") {
    const EgoPose line = ego_pose_at(5.0, 0.0, 2.0);
    CHECK(line.transform.at(0, 3) == Catch::Approx(10.0));
    CHECK(line.transform.at(1, 3) == 0.0);

    const double w = 0.05, v = 4.0, t = 3.0;
    const EgoPose arc = ego_pose_at(v, w, t);
    CHECK(arc.transform.at(0, 3) == Catch::Approx((v / w) * std::sin(w * t)));
    CHECK(arc.transform.at(1, 3) == Catch::Approx((v / w) * (1.0 - std::cos(w * t))));
    CHECK(ego_heading(arc) == Catch::Approx(w * t));
    CHECK_NOTHROW(arc.validate());
}
