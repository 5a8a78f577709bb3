#include <catch2/catch_amalgamated.hpp>

#include <dq3d/temporal.hpp>

using namespace dq3d;

namespace {

Detection make_det(double score, double x, double y) {
    Detection d;
    d.class_scores = {score, score * 0.5};
    d.center = {x, y, 0.5};
    d.vx = 1.0;
    d.vy = -0.5;
    return d;
}

DenseMatrix stub_embeddings(size_t n, size_t dim, uint64_t seed) {
    DenseMatrix m(n, dim);
    Rng rng(seed);
    for (auto& v : m.data) v = rng.uniform(-1.0, 1.0);
    return m;
}

}  // namespace

TEST_CASE("memory keeps the top scorers of each frame", "[temporal]") {
    MemoryQueue q;
    q.max_frames = 4;
    q.max_per_frame = 3;

    DetectionSet dets;
    for (int i = 0; i < 8; ++i) dets.push_back(make_det(0.1 * (i + 1), i, 0.0));
    push_frame(q, dets, stub_embeddings(8, 8, 1), EgoPose{}, 0.0);

    REQUIRE(q.frames.size() == 1);
    REQUIRE(q.frames[0].size() == 3);
    CHECK(q.frames[0][0].score == Catch::Approx(0.8));
    CHECK(q.frames[0][1].score == Catch::Approx(0.7));
    CHECK(q.frames[0][2].score == Catch::Approx(0.6));
}

TEST_CASE("empty frames still age the queue", "[temporal]") {
    MemoryQueue q;
    q.max_frames = 2;
    push_frame(q, {}, DenseMatrix(0, 0), EgoPose{}, 0.0);
    push_frame(q, {}, DenseMatrix(0, 0), EgoPose{}, 1.0);
    CHECK(q.frames.size() == 2);
    CHECK(q.size() == 0);

    DetectionSet one = {make_det(0.9, 5.0, 0.0)};
    push_frame(q, one, stub_embeddings(1, 8, 2), EgoPose{}, 2.0);
    REQUIRE(q.frames.size() == 2);  // oldest empty frame evicted
    CHECK(q.frames[0].empty());
    CHECK(q.frames[1].size() == 1);
    CHECK(q.frames[1][0].timestamp == 2.0);
}

TEST_CASE("queue never exceeds its frame and entry bounds", "[temporal]") {
    MemoryQueue q;
    q.max_frames = 4;
    q.max_per_frame = 5;
    for (int f = 0; f < 12; ++f) {
        DetectionSet dets;
        for (int i = 0; i < 9; ++i) dets.push_back(make_det(0.05 * (i + 1), i, f));
        push_frame(q, dets, stub_embeddings(9, 8, static_cast<uint64_t>(f)), EgoPose{}, f * 0.5);
        REQUIRE(q.frames.size() <= 4);
        REQUIRE(q.size() <= 20);
    }
    // Oldest surviving frame is number 8 of 12.
    CHECK(q.frames[0][0].timestamp == Catch::Approx(4.0));
}

TEST_CASE("alignment with still ego and zero update weights", "[temporal]") {
    const size_t dim = 8;
    Rng rng(3);
    const MlpWeights pe = make_pe3d_weights(dim, rng);
    const MotionMlps zero(dim);  // all-zero weights and biases
    const RoiBounds roi;

    MemoryEntry entry;
    entry.timestamp = 1.0;
    entry.p_ref = {12.0, -3.0, 0.8};
    entry.q_sem = std::vector<double>(dim, 0.7);
    entry.vx = 2.0;
    entry.score = 0.6;

    const Query out = align(entry, EgoPose{}, 1.5, zero, pe, roi);
    CHECK(out.source == QuerySource::Temporal);
    CHECK(out.score == 0.6);
    CHECK(distance(out.p_ref, entry.p_ref) == 0.0);

    const auto want_pos = pe3d(normalize_point(entry.p_ref, roi).p, pe);
    REQUIRE(out.q_pos.size() == dim);
    for (size_t c = 0; c < dim; ++c) {
        CHECK(out.q_pos[c] == want_pos[c]);
        CHECK(out.q_sem[c] == 0.0);
    }
}

TEST_CASE("alignment moves static points against ego motion", "[temporal]") {
    const size_t dim = 8;
    Rng rng(4);
    const MlpWeights pe = make_pe3d_weights(dim, rng);
    MotionMlps mlps(dim);
    mlps.init(rng);

    MemoryEntry entry;
    entry.p_ref = {10.0, 2.0, 0.5};
    entry.q_sem = std::vector<double>(dim, 0.1);

    EgoPose now;
    now.transform = make_translation(2.0, 0.0, 0.0);
    const Query out = align(entry, now, 0.5, mlps, pe, RoiBounds{});
    CHECK(out.p_ref.x == Catch::Approx(8.0).margin(1e-12));
    CHECK(out.p_ref.y == Catch::Approx(2.0).margin(1e-12));
    CHECK(out.p_ref.z == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("alignment geometry matches a composed rigid transform", "[temporal]") {
    const size_t dim = 8;
    Rng rng(5);
    const MlpWeights pe = make_pe3d_weights(dim, rng);
    MotionMlps mlps(dim);
    mlps.init(rng);

    for (int trial = 0; trial < 100; ++trial) {
        MemoryEntry entry;
        entry.p_ref = {rng.uniform(-40.0, 40.0), rng.uniform(-40.0, 40.0), rng.uniform(-2.0, 2.0)};
        entry.q_sem = std::vector<double>(dim, 0.0);
        entry.ego_pose.transform = rotation_z(rng.uniform(-3.0, 3.0));
        entry.ego_pose.transform.at(0, 3) = rng.uniform(-30.0, 30.0);
        entry.ego_pose.transform.at(1, 3) = rng.uniform(-30.0, 30.0);

        EgoPose now;
        now.transform = rotation_z(rng.uniform(-3.0, 3.0));
        now.transform.at(0, 3) = rng.uniform(-30.0, 30.0);
        now.transform.at(1, 3) = rng.uniform(-30.0, 30.0);

        const Query out = align(entry, now, 1.0, mlps, pe, RoiBounds{});
        const Point3D want =
            (now.transform.inverse_rigid() * entry.ego_pose.transform).apply_point(entry.p_ref);
        REQUIRE(distance(out.p_ref, want) < 1e-9);
    }
}

TEST_CASE("alignment output depends on the elapsed time", "[temporal]") {
    const size_t dim = 8;
    Rng rng(6);
    const MlpWeights pe = make_pe3d_weights(dim, rng);
    MotionMlps mlps(dim);
    mlps.init(rng);

    MemoryEntry entry;
    entry.timestamp = 1.0;
    entry.p_ref = {5.0, 5.0, 0.5};
    entry.q_sem = std::vector<double>(dim, 0.3);
    entry.vx = 1.5;

    const Query a1 = align(entry, EgoPose{}, 1.5, mlps, pe, RoiBounds{});
    const Query a2 = align(entry, EgoPose{}, 1.5, mlps, pe, RoiBounds{});
    const Query later = align(entry, EgoPose{}, 3.0, mlps, pe, RoiBounds{});
    CHECK(a1.q_sem == a2.q_sem);
    CHECK(a1.q_pos == a2.q_pos);
    CHECK(a1.q_sem != later.q_sem);
}

TEST_CASE("temporal query listing order and tags", "[temporal]") {
    const size_t dim = 8;
    Rng rng(7);
    const MlpWeights pe = make_pe3d_weights(dim, rng);
    MotionMlps mlps(dim);
    mlps.init(rng);

    MemoryQueue q;
    CHECK(temporal_queries(q, EgoPose{}, 0.0, mlps, pe, RoiBounds{}).empty());

    DetectionSet older = {make_det(0.5, 1.0, 0.0), make_det(0.9, 2.0, 0.0), make_det(0.7, 3.0, 0.0)};
    DetectionSet newer = {make_det(0.4, 4.0, 0.0), make_det(0.8, 5.0, 0.0), make_det(0.6, 6.0, 0.0)};
    push_frame(q, older, stub_embeddings(3, dim, 10), EgoPose{}, 0.0);
    push_frame(q, newer, stub_embeddings(3, dim, 11), EgoPose{}, 0.5);

    const auto out = temporal_queries(q, EgoPose{}, 1.0, mlps, pe, RoiBounds{});
    REQUIRE(out.size() == 6);
    const std::vector<double> want_scores = {0.8, 0.6, 0.4, 0.9, 0.7, 0.5};
    for (size_t i = 0; i < 6; ++i) {
        CHECK(out[i].score == Catch::Approx(want_scores[i]));
        CHECK(out[i].source == QuerySource::Temporal);
    }
}

TEST_CASE("push rejects mismatched embedding rows", "[temporal]") {
    MemoryQueue q;
    DetectionSet dets = {make_det(0.9, 1.0, 1.0)};
    CHECK_THROWS_AS(push_frame(q, dets, DenseMatrix(2, 8), EgoPose{}, 0.0), DimensionMismatch);
}
