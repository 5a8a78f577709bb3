#include <catch2/catch_amalgamated.hpp>

#include <dq3d/encoding.hpp>

using namespace dq3d;

TEST_CASE("sine encoding at zero and its shape", "[encoding]") {
    const auto enc = sine_encode(0.0, 32);
    REQUIRE(enc.size() == 32);
    for (size_t k = 0; k < enc.size() / 2; ++k) {
        CHECK(enc[2 * k] == 0.0);       // sin lanes
        CHECK(enc[2 * k + 1] == 1.0);   // cos lanes
    }
    CHECK_THROWS_AS(sine_encode(0.5, 5), DimensionMismatch);
}

TEST_CASE("sine encoding stays bounded and separates points", "[encoding]") {
    Rng rng(50);
    for (int trial = 0; trial < 100; ++trial) {
        const double t1 = rng.uniform();
        double t2 = rng.uniform();
        if (t1 == t2) t2 = t1 + 0.01;
        const auto e1 = sine_encode(t1, 32);
        const auto e2 = sine_encode(t2, 32);
        double dist2 = 0.0;
        for (size_t i = 0; i < e1.size(); ++i) {
            REQUIRE(e1[i] >= -1.0);
            REQUIRE(e1[i] <= 1.0);
            dist2 += (e1[i] - e2[i]) * (e1[i] - e2[i]);
        }
        REQUIRE(dist2 > 0.0);
    }
}

TEST_CASE("position encoder output width and determinism", "[encoding]") {
    Rng rng(51);
    const size_t dim = 64;
    const MlpWeights w = make_pe3d_weights(dim, rng);
    const Point3D p{0.3, 0.7, 0.5};
    const auto a = pe3d(p, w);
    const auto b = pe3d(p, w);
    REQUIRE(a.size() == dim);
    CHECK(a == b);

    CHECK_THROWS_AS([&] { Rng r(1); return make_pe3d_weights(30, r); }(), DimensionMismatch);
}

TEST_CASE("position encoder equals manual sine concatenation plus mlp", "[encoding]") {
    Rng rng(52);
    const size_t dim = 32;
    const MlpWeights w = make_pe3d_weights(dim, rng);
    const Point3D p{0.11, 0.62, 0.93};

    DenseMatrix cat(1, 3 * dim / 2);
    const double coords[3] = {p.x, p.y, p.z};
    for (size_t axis = 0; axis < 3; ++axis) {
        const auto enc = sine_encode(coords[axis], dim / 2);
        for (size_t i = 0; i < enc.size(); ++i) {
            REQUIRE(enc[i] >= -1.0);
            REQUIRE(enc[i] <= 1.0);
            cat.at(0, axis * dim / 2 + i) = enc[i];
        }
    }
    const auto want = mlp_forward(cat, w).row(0);
    const auto got = pe3d(p, w);
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < got.size(); ++i) REQUIRE(std::abs(got[i] - want[i]) < 1e-12);
}

TEST_CASE("position encoder is continuous", "[encoding]") {
    Rng rng(53);
    const MlpWeights w = make_pe3d_weights(64, rng);
    const double eps = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        const Point3D p{rng.uniform(), rng.uniform(), rng.uniform()};
        const Point3D q{p.x + eps, p.y, p.z};
        const auto a = pe3d(p, w);
        const auto b = pe3d(q, w);
        double diff = 0.0;
        for (size_t i = 0; i < a.size(); ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
        // Lipschitz-style bound: a 1e-6 nudge cannot move the embedding past 1e-3.
        REQUIRE(std::sqrt(diff) < 1e-3);
    }
}
