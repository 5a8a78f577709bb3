#include <catch2/catch_amalgamated.hpp>

#include <dq3d/decoder.hpp>

using namespace dq3d;

namespace {

DenseMatrix random_rows(size_t n, size_t dim, uint64_t seed) {
    DenseMatrix m(n, dim);
    Rng rng(seed);
    for (auto& v : m.data) v = rng.uniform(-1.0, 1.0);
    return m;
}

// Reference attention: explicit loops, probabilities kept for inspection.
DenseMatrix loop_attention(const DenseMatrix& dep, const DenseMatrix& kv, const AttentionWeights& w,
                           DenseMatrix* probs_out = nullptr) {
    const DenseMatrix q = matmul(dep, w.w_q);
    const DenseMatrix k = matmul(kv, w.w_k);
    const DenseMatrix v = matmul(kv, w.w_v);
    DenseMatrix probs(q.rows, k.rows);
    for (size_t r = 0; r < q.rows; ++r) {
        double mx = -1e300;
        for (size_t j = 0; j < k.rows; ++j) {
            double s = 0.0;
            for (size_t c = 0; c < q.cols; ++c) s += q.at(r, c) * k.at(j, c);
            probs.at(r, j) = s / std::sqrt(static_cast<double>(q.cols));
            mx = std::max(mx, probs.at(r, j));
        }
        double sum = 0.0;
        for (size_t j = 0; j < k.rows; ++j) {
            probs.at(r, j) = std::exp(probs.at(r, j) - mx);
            sum += probs.at(r, j);
        }
        for (size_t j = 0; j < k.rows; ++j) probs.at(r, j) /= sum;
    }
    DenseMatrix out(q.rows, v.cols);
    for (size_t r = 0; r < q.rows; ++r)
        for (size_t c = 0; c < v.cols; ++c) {
            double s = 0.0;
            for (size_t j = 0; j < k.rows; ++j) s += probs.at(r, j) * v.at(j, c);
            out.at(r, c) = s;
        }
    if (probs_out) *probs_out = probs;
    return out;
}

std::vector<Query> make_queries(size_t n, size_t dim, uint64_t seed, QuerySource source) {
    std::vector<Query> qs(n);
    Rng rng(seed);
    for (auto& q : qs) {
        q.q_pos.resize(dim);
        q.q_sem.resize(dim);
        for (auto& v : q.q_pos) v = rng.uniform(-1.0, 1.0);
        for (auto& v : q.q_sem) v = rng.uniform(-1.0, 1.0);
        q.p_ref = {rng.uniform(-30.0, 30.0), rng.uniform(-30.0, 30.0), rng.uniform(-2.0, 2.0)};
        q.source = source;
    }
    return qs;
}

}  // namespace

TEST_CASE("hybrid attention without temporal rows is self attention", "[decoder]") {
    const size_t dim = 16;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        AttentionWeights w(dim);
        Rng rng(seed);
        w.init(rng);
        const DenseMatrix dep = random_rows(5, dim, seed + 100);
        const DenseMatrix a = hybrid_attention(dep, DenseMatrix(0, 0), w);
        const DenseMatrix b = self_attention(dep, w);
        REQUIRE(a.data == b.data);  // bitwise, not approximate
    }
}

TEST_CASE("single query attends only to itself", "[decoder]") {
    const size_t dim = 8;
    AttentionWeights w(dim);
    Rng rng(21);
    w.init(rng);
    const DenseMatrix x = random_rows(1, dim, 22);
    const DenseMatrix got = hybrid_attention(x, DenseMatrix(0, 0), w);
    const DenseMatrix want = matmul(x, w.w_v);  // softmax over one key is 1
    REQUIRE(got.rows == 1);
    for (size_t c = 0; c < dim; ++c) REQUIRE(std::abs(got.at(0, c) - want.at(0, c)) < 1e-12);
}

TEST_CASE("hybrid attention matches the loop oracle with temporal rows", "[decoder]") {
    const size_t dim = 16;
    AttentionWeights w(dim);
    Rng rng(23);
    w.init(rng);
    const DenseMatrix dep = random_rows(3, dim, 24);
    const DenseMatrix temp = random_rows(2, dim, 25);

    DenseMatrix mixed(5, dim);
    for (size_t r = 0; r < 2; ++r)
        for (size_t c = 0; c < dim; ++c) mixed.at(r, c) = temp.at(r, c);
    for (size_t r = 0; r < 3; ++r)
        for (size_t c = 0; c < dim; ++c) mixed.at(2 + r, c) = dep.at(r, c);

    DenseMatrix probs;
    const DenseMatrix want = loop_attention(dep, mixed, w, &probs);
    const DenseMatrix got = hybrid_attention(dep, temp, w);
    REQUIRE(got.rows == 3);
    for (size_t i = 0; i < got.data.size(); ++i) REQUIRE(std::abs(got.data[i] - want.data[i]) < 1e-10);
    for (size_t r = 0; r < probs.rows; ++r) {
        double sum = 0.0;
        for (size_t j = 0; j < probs.cols; ++j) sum += probs.at(r, j);
        REQUIRE(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("temporal rows act as a set", "[decoder]") {
    const size_t dim = 16;
    AttentionWeights w(dim);
    Rng rng(26);
    w.init(rng);
    const DenseMatrix dep = random_rows(4, dim, 27);
    DenseMatrix temp = random_rows(3, dim, 28);

    const DenseMatrix base = hybrid_attention(dep, temp, w);
    // Swap temporal rows 0 and 2.
    for (size_t c = 0; c < dim; ++c) std::swap(temp.at(0, c), temp.at(2, c));
    const DenseMatrix permuted = hybrid_attention(dep, temp, w);
    for (size_t i = 0; i < base.data.size(); ++i) REQUIRE(std::abs(base.data[i] - permuted.data[i]) < 1e-12);
}

TEST_CASE("cross attention over tokens", "[decoder]") {
    const size_t dim = 8;
    AttentionWeights w(dim);
    Rng rng(29);
    w.init(rng);

    SECTION("one token dominates trivially") {
        const DenseMatrix queries = random_rows(3, dim, 30);
        const DenseMatrix token = random_rows(1, dim, 31);
        const DenseMatrix got = scaled_dot_attention(queries, token, token, w);
        const DenseMatrix want = matmul(token, w.w_v);
        for (size_t r = 0; r < 3; ++r)
            for (size_t c = 0; c < dim; ++c) REQUIRE(std::abs(got.at(r, c) - want.at(0, c)) < 1e-12);
    }

    SECTION("loop oracle on 4 queries and 10 tokens") {
        const DenseMatrix queries = random_rows(4, dim, 32);
        const DenseMatrix tokens = random_rows(10, dim, 33);
        const DenseMatrix got = scaled_dot_attention(queries, tokens, tokens, w);
        const DenseMatrix want = loop_attention(queries, tokens, w);
        for (size_t i = 0; i < got.data.size(); ++i) REQUIRE(std::abs(got.data[i] - want.data[i]) < 1e-10);
    }

    SECTION("width mismatch is rejected") {
        CHECK_THROWS_AS(scaled_dot_attention(random_rows(2, 4, 1), random_rows(2, 8, 2), random_rows(2, 8, 3), w),
                        DimensionMismatch);
        CHECK_THROWS_AS(hybrid_attention(random_rows(2, 8, 1), random_rows(2, 4, 2), w), DimensionMismatch);
    }
}

TEST_CASE("image tokens pair features with encoded cell centers", "[decoder]") {
    const size_t dim = 8;
    CameraModel cam;
    cam.fx = cam.fy = 200.0;
    cam.cx = 80.0;
    cam.cy = 32.0;
    cam.width = 160;
    cam.height = 64;
    std::vector<CameraModel> rig = {cam, cam};

    std::vector<FeatureMap> maps;
    for (int c = 0; c < 2; ++c) {
        FeatureMap f(c, cam.width, cam.height, 16, dim);
        Rng rng(static_cast<uint64_t>(c) + 40);
        for (auto& v : f.values) v = rng.uniform(-1.0, 1.0);
        maps.push_back(std::move(f));
    }
    Rng wrng(41);
    const MlpWeights pe = make_pe3d_weights(dim, wrng);
    const RoiBounds roi;
    const double canon = 0.5 * (0.05 + 80.0);

    const ImageTokens tokens = make_image_tokens(maps, rig, roi, pe, canon);
    REQUIRE(tokens.features.rows == 2u * 10 * 4);  // two 10x4 grids
    REQUIRE(tokens.pos_embeds.rows == tokens.features.rows);

    // Spot-check the first grid node of camera 0.
    const Point3D p = unproject(cam, {0, 0.5 * 16, 0.5 * 16}, canon);
    const auto want = pe3d(normalize_point(p, roi).p, pe);
    for (size_t c = 0; c < dim; ++c) {
        REQUIRE(tokens.pos_embeds.at(0, c) == want[c]);
        REQUIRE(tokens.features.at(0, c) == maps[0].node(0, 0)[c]);
    }
}

TEST_CASE("decoder stack output shape and determinism", "[decoder]") {
    const size_t dim = 16;
    const auto q_dep = make_queries(5, dim, 50, QuerySource::DepthGuided);
    const auto q_temp = make_queries(3, dim, 51, QuerySource::Temporal);

    ImageTokens tokens;
    tokens.features = random_rows(12, dim, 52);
    tokens.pos_embeds = random_rows(12, dim, 53);

    SECTION("zero layers pass semantics through") {
        DecoderWeights w(dim, 0, 3);
        const DenseMatrix out = decode(q_dep, q_temp, tokens, w);
        REQUIRE(out.rows == 5);
        for (size_t i = 0; i < 5; ++i)
            for (size_t c = 0; c < dim; ++c) REQUIRE(out.at(i, c) == q_dep[i].q_sem[c]);
    }

    SECTION("row count tracks depth-guided queries only") {
        DecoderWeights w(dim, 3, 3);
        Rng rng(54);
        w.init(rng);
        for (size_t n_temp : {size_t{0}, size_t{2}, size_t{7}}) {
            const auto temp = make_queries(n_temp, dim, 60 + n_temp, QuerySource::Temporal);
            const DenseMatrix out = decode(q_dep, temp, tokens, w);
            REQUIRE(out.rows == q_dep.size());
            REQUIRE(out.cols == dim);
        }
    }

    SECTION("bit-identical reruns") {
        DecoderWeights w(dim, 4, 3);
        Rng rng(55);
        w.init(rng);
        const DenseMatrix a = decode(q_dep, q_temp, tokens, w);
        const DenseMatrix b = decode(q_dep, q_temp, tokens, w);
        REQUIRE(a.data == b.data);
    }

    SECTION("empty query list decodes to nothing") {
        DecoderWeights w(dim, 2, 3);
        Rng rng(56);
        w.init(rng);
        const DenseMatrix out = decode({}, q_temp, tokens, w);
        CHECK(out.rows == 0);
    }
}

TEST_CASE("detection head decodes the regression vector", "[decoder]") {
    const size_t dim = 16;
    const RoiBounds roi;

    SECTION("zero weights give the neutral detection") {
        HeadWeights w(dim, 3);  // zero-initialized
        const Point3D p_ref{10.0, -5.0, 0.5};
        const Detection det = head(std::vector<double>(dim, 0.0), p_ref, w, roi);
        REQUIRE(det.class_scores.size() == 3);
        for (double s : det.class_scores) CHECK(s == 0.5);
        CHECK(distance(det.center, p_ref) < 1e-9);
        CHECK(det.width == 1.0);
        CHECK(det.length == 1.0);
        CHECK(det.height == 1.0);
        CHECK(det.yaw == 0.0);
        CHECK(det.vx == 0.0);
        CHECK(det.vy == 0.0);
    }

    SECTION("ranges hold under random weights") {
        Rng rng(57);
        HeadWeights w(dim, 3);
        w.init(rng);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> emb(dim);
            for (auto& v : emb) v = rng.uniform(-3.0, 3.0);
            const Detection det = head(emb, {0.0, 0.0, 0.0}, w, roi);
            REQUIRE(det.width > 0.0);
            REQUIRE(det.length > 0.0);
            REQUIRE(det.height > 0.0);
            REQUIRE(det.yaw > -kPi - 1e-12);
            REQUIRE(det.yaw <= kPi + 1e-12);
            for (double s : det.class_scores) {
                REQUIRE(s >= 0.0);
                REQUIRE(s <= 1.0);
            }
        }
    }
}

TEST_CASE("detection score and class helpers", "[decoder]") {
    Detection d;
    d.class_scores = {0.2, 0.9, 0.4};
    CHECK(detection_score(d) == 0.9);
    CHECK(detection_class(d) == 1);
}
