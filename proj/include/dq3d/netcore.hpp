#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dq3d/errors.hpp"

namespace dq3d {

// splitmix64; chosen over std engines so streams are identical across
// platforms and standard-library versions.
struct Rng {
    uint64_t state = 0;

    explicit Rng(uint64_t seed = 0) : state(seed) {}

    uint64_t next() {
        state += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits, exact dyadic rationals.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n); n must be positive. Modulo bias is irrelevant for the n used here.
    uint64_t uniform_index(uint64_t n) { return next() % n; }

    // Box-Muller, one draw per call (second value discarded to keep the
    // stream position a simple function of call count).
    double gaussian(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(2.0 * 3.14159265358979323846 * u2);
    }
};

// One more splitmix64 scramble; gives unrelated sub-streams from a root seed.
inline uint64_t derive_seed(uint64_t root, uint64_t offset) {
    uint64_t z = root + 0x9e3779b97f4a7c15ULL * (offset + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Row-major dense matrix of doubles. Rows are samples, columns are features.
struct DenseMatrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> data;

    DenseMatrix() = default;
    DenseMatrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(size_t r, size_t c) { return data[r * cols + c]; }
    double at(size_t r, size_t c) const { return data[r * cols + c]; }

    std::vector<double> row(size_t r) const {
        return std::vector<double>(data.begin() + static_cast<long>(r * cols),
                                   data.begin() + static_cast<long>((r + 1) * cols));
    }

    void set_row(size_t r, const std::vector<double>& values) {
        if (values.size() != cols) throw DimensionMismatch("set_row: value count != cols");
        for (size_t c = 0; c < cols; ++c) at(r, c) = values[c];
    }
};

// out = a * b
inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols != b.rows)
        throw DimensionMismatch("matmul: " + std::to_string(a.cols) + " vs " + std::to_string(b.rows));
    DenseMatrix out(a.rows, b.cols);
    for (size_t r = 0; r < a.rows; ++r)
        for (size_t k = 0; k < a.cols; ++k) {
            const double av = a.at(r, k);
            if (av == 0.0) continue;
            for (size_t c = 0; c < b.cols; ++c) out.at(r, c) += av * b.at(k, c);
        }
    return out;
}

inline DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix out(a.cols, a.rows);
    for (size_t r = 0; r < a.rows; ++r)
        for (size_t c = 0; c < a.cols; ++c) out.at(c, r) = a.at(r, c);
    return out;
}

// Fill with uniform values in [-1/sqrt(cols), +1/sqrt(cols)].
inline void seeded_init(DenseMatrix& w, Rng& rng) {
    if (w.cols == 0) throw DimensionMismatch("seeded_init: zero columns");
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols));
    for (auto& v : w.data) v = rng.uniform(-bound, bound);
}

struct LinearLayer {
    DenseMatrix weight;        // (in, out)
    std::vector<double> bias;  // (out)

    LinearLayer() = default;
    LinearLayer(size_t in, size_t out) : weight(in, out), bias(out, 0.0) {}

    void init(Rng& rng) {
        seeded_init(weight, rng);
        const double bound = 1.0 / std::sqrt(static_cast<double>(weight.rows));
        for (auto& b : bias) b = rng.uniform(-bound, bound);
    }
};

// x (n, in) -> x*W + b (n, out)
inline DenseMatrix linear(const DenseMatrix& x, const LinearLayer& layer) {
    if (x.cols != layer.weight.rows)
        throw DimensionMismatch("linear: input cols " + std::to_string(x.cols) + " != weight rows " +
                                std::to_string(layer.weight.rows));
    DenseMatrix out = matmul(x, layer.weight);
    for (size_t r = 0; r < out.rows; ++r)
        for (size_t c = 0; c < out.cols; ++c) out.at(r, c) += layer.bias[c];
    return out;
}

inline void relu_inplace(DenseMatrix& x) {
    for (auto& v : x.data)
        if (v < 0.0) v = 0.0;
}

// Two linear layers with a ReLU between them.
struct MlpWeights {
    LinearLayer first;
    LinearLayer second;

    MlpWeights() = default;
    MlpWeights(size_t in, size_t hidden, size_t out) : first(in, hidden), second(hidden, out) {}

    void init(Rng& rng) {
        first.init(rng);
        second.init(rng);
    }
};

inline DenseMatrix mlp_forward(const DenseMatrix& x, const MlpWeights& w) {
    DenseMatrix h = linear(x, w.first);
    relu_inplace(h);
    return linear(h, w.second);
}

// Row-wise numerically stable softmax.
inline void softmax_rows_inplace(DenseMatrix& x) {
    for (size_t r = 0; r < x.rows; ++r) {
        double mx = x.at(r, 0);
        for (size_t c = 1; c < x.cols; ++c) mx = std::max(mx, x.at(r, c));
        double sum = 0.0;
        for (size_t c = 0; c < x.cols; ++c) {
            x.at(r, c) = std::exp(x.at(r, c) - mx);
            sum += x.at(r, c);
        }
        for (size_t c = 0; c < x.cols; ++c) x.at(r, c) /= sum;
    }
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

struct LayerNormWeights {
    std::vector<double> gamma;
    std::vector<double> beta;

    LayerNormWeights() = default;
    explicit LayerNormWeights(size_t dim) : gamma(dim, 1.0), beta(dim, 0.0) {}
};

inline void layer_norm_rows_inplace(DenseMatrix& x, const LayerNormWeights& w, double eps = 1e-5) {
    if (x.cols != w.gamma.size()) throw DimensionMismatch("layer_norm: cols != gamma size");
    for (size_t r = 0; r < x.rows; ++r) {
        double mean = 0.0;
        for (size_t c = 0; c < x.cols; ++c) mean += x.at(r, c);
        mean /= static_cast<double>(x.cols);
        double var = 0.0;
        for (size_t c = 0; c < x.cols; ++c) {
            const double d = x.at(r, c) - mean;
            var += d * d;
        }
        var /= static_cast<double>(x.cols);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (size_t c = 0; c < x.cols; ++c) x.at(r, c) = (x.at(r, c) - mean) * inv * w.gamma[c] + w.beta[c];
    }
}

// FNV-1a over the raw little-endian bytes of every weight, in declaration
// order; used to show two runs started from identical parameters.
struct WeightChecksum {
    uint64_t hash = 0xcbf29ce484222325ULL;

    void feed(double v) {
        uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        __builtin_memcpy(&bits, &v, sizeof(bits));
        for (int i = 0; i < 8; ++i) {
            hash ^= (bits >> (8 * i)) & 0xffULL;
            hash *= 0x100000001b3ULL;
        }
    }

    void feed(const std::vector<double>& v) {
        for (double x : v) feed(x);
    }
    void feed(const DenseMatrix& m) { feed(m.data); }
    void feed(const LinearLayer& l) {
        feed(l.weight);
        feed(l.bias);
    }
    void feed(const MlpWeights& w) {
        feed(w.first);
        feed(w.second);
    }
    void feed(const LayerNormWeights& w) {
        feed(w.gamma);
        feed(w.beta);
    }
};

}  // namespace dq3d
