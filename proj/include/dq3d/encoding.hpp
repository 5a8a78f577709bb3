#pragma once

#include <cmath>
#include <vector>

#include "dq3d/errors.hpp"
#include "dq3d/geometry.hpp"
#include "dq3d/netcore.hpp"

namespace dq3d {

inline constexpr double kPi = 3.14159265358979323846;

// Classic transformer sinusoid over one coordinate in [0,1], pre-scaled by pi.
// Output is interleaved sin/cos pairs at geometrically spaced frequencies.
inline std::vector<double> sine_encode(double t, size_t half_dim, double temperature = 10000.0) {
    if (half_dim == 0 || half_dim % 2 != 0) throw DimensionMismatch("sine_encode: half_dim must be even");
    std::vector<double> out(half_dim);
    const double x = kPi * t;
    for (size_t k = 0; k < half_dim / 2; ++k) {
        const double divisor =
            std::pow(temperature, 2.0 * static_cast<double>(k) / static_cast<double>(half_dim));
        out[2 * k] = std::sin(x / divisor);
        out[2 * k + 1] = std::cos(x / divisor);
    }
    return out;
}

// Weight factory for the position encoder: 3C/2 -> 3C/2 -> C.
inline MlpWeights make_pe3d_weights(size_t embed_dim, Rng& rng) {
    if (embed_dim == 0 || embed_dim % 4 != 0)
        throw DimensionMismatch("pe3d: embed dim must be a positive multiple of 4");
    const size_t in = 3 * embed_dim / 2;
    MlpWeights w(in, in, embed_dim);
    w.init(rng);
    return w;
}

// Per-axis sinusoids concatenated (3C/2) then compressed to C by the MLP.
inline std::vector<double> pe3d(const Point3D& p, const MlpWeights& weights) {
    const size_t in = weights.first.weight.rows;
    const size_t embed_dim = weights.second.bias.size();
    if (in != 3 * embed_dim / 2 || embed_dim % 4 != 0)
        throw DimensionMismatch("pe3d: weights inconsistent with embed dim");
    const size_t half = embed_dim / 2;
    DenseMatrix cat(1, in);
    const std::array<double, 3> coords = {p.x, p.y, p.z};
    for (size_t axis = 0; axis < 3; ++axis) {
        const auto enc = sine_encode(coords[axis], half);
        for (size_t i = 0; i < half; ++i) cat.at(0, axis * half + i) = enc[i];
    }
    return mlp_forward(cat, weights).row(0);
}

}  // namespace dq3d
