#pragma once

#include <cmath>
#include <vector>

#include "dq3d/encoding.hpp"
#include "dq3d/errors.hpp"
#include "dq3d/geometry.hpp"
#include "dq3d/netcore.hpp"
#include "dq3d/querygen.hpp"

namespace dq3d {

struct Detection {
    std::vector<double> class_scores;  // post-sigmoid, one per class
    Point3D center;
    double width = 1.0, length = 1.0, height = 1.0;
    double yaw = 0.0;
    double vx = 0.0, vy = 0.0;
};

using DetectionSet = std::vector<Detection>;

inline double detection_score(const Detection& d) {
    double best = 0.0;
    for (double s : d.class_scores) best = std::max(best, s);
    return best;
}

inline int detection_class(const Detection& d) {
    int best = 0;
    for (size_t c = 1; c < d.class_scores.size(); ++c)
        if (d.class_scores[c] > d.class_scores[best]) best = static_cast<int>(c);
    return best;
}

// Bias-free projection triple; the attention math uses bare matrices.
struct AttentionWeights {
    DenseMatrix w_q, w_k, w_v;  // each (dim, dim), applied as x * W

    AttentionWeights() = default;
    explicit AttentionWeights(size_t dim) : w_q(dim, dim), w_k(dim, dim), w_v(dim, dim) {}

    void init(Rng& rng) {
        seeded_init(w_q, rng);
        seeded_init(w_k, rng);
        seeded_init(w_v, rng);
    }
};

// Single-head scaled dot-product attention: softmax(Q K^T / sqrt(d_k)) V.
// No output projection here; callers layer that on where needed.
inline DenseMatrix scaled_dot_attention(const DenseMatrix& queries, const DenseMatrix& keys,
                                        const DenseMatrix& values, const AttentionWeights& w) {
    if (queries.cols != w.w_q.rows || keys.cols != w.w_k.rows || values.cols != w.w_v.rows)
        throw DimensionMismatch("attention: input width vs projection width");
    if (keys.rows != values.rows) throw DimensionMismatch("attention: key count != value count");
    DenseMatrix q = matmul(queries, w.w_q);
    DenseMatrix k = matmul(keys, w.w_k);
    DenseMatrix v = matmul(values, w.w_v);
    DenseMatrix scores = matmul(q, transpose(k));
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
    for (auto& s : scores.data) s *= scale;
    softmax_rows_inplace(scores);
    return matmul(scores, v);
}

inline DenseMatrix query_values(const std::vector<Query>& qs) {
    if (qs.empty()) return DenseMatrix(0, 0);
    DenseMatrix out(qs.size(), qs[0].q_pos.size());
    for (size_t i = 0; i < qs.size(); ++i)
        for (size_t c = 0; c < out.cols; ++c) out.at(i, c) = qs[i].q_pos[c] + qs[i].q_sem[c];
    return out;
}

// Depth-guided rows attend over the concatenation of temporal and
// depth-guided rows; temporal rows contribute keys/values only.
inline DenseMatrix hybrid_attention(const DenseMatrix& dep, const DenseMatrix& temp,
                                    const AttentionWeights& w) {
    if (temp.rows == 0) return scaled_dot_attention(dep, dep, dep, w);
    if (temp.cols != dep.cols) throw DimensionMismatch("hybrid attention: temporal width != query width");
    DenseMatrix mixed(temp.rows + dep.rows, dep.cols);
    for (size_t r = 0; r < temp.rows; ++r)
        for (size_t c = 0; c < temp.cols; ++c) mixed.at(r, c) = temp.at(r, c);
    for (size_t r = 0; r < dep.rows; ++r)
        for (size_t c = 0; c < dep.cols; ++c) mixed.at(temp.rows + r, c) = dep.at(r, c);
    return scaled_dot_attention(dep, mixed, mixed, w);
}

inline DenseMatrix self_attention(const DenseMatrix& x, const AttentionWeights& w) {
    return scaled_dot_attention(x, x, x, w);
}

// Per-camera feature grid flattened to rows, each paired with the position
// embedding of its cell center unprojected at one canonical depth.
struct ImageTokens {
    DenseMatrix features;    // (tokens, C)
    DenseMatrix pos_embeds;  // (tokens, C)
};

inline ImageTokens make_image_tokens(const std::vector<FeatureMap>& maps,
                                     const std::vector<CameraModel>& rig, const RoiBounds& roi,
                                     const MlpWeights& pe_weights, double canonical_depth,
                                     const DepthRange& range = DepthRange{}) {
    size_t total = 0;
    for (const auto& m : maps) total += static_cast<size_t>(m.grid_width) * m.grid_height;
    if (total == 0) return {};
    const size_t dim = maps[0].channels;
    ImageTokens out;
    out.features = DenseMatrix(total, dim);
    out.pos_embeds = DenseMatrix(total, dim);
    size_t row = 0;
    for (const auto& m : maps) {
        const auto& cam = rig[static_cast<size_t>(m.camera_index)];
        for (int gy = 0; gy < m.grid_height; ++gy)
            for (int gx = 0; gx < m.grid_width; ++gx, ++row) {
                const double* f = m.node(gx, gy);
                for (size_t c = 0; c < dim; ++c) out.features.at(row, c) = f[c];
                Pixel center{m.camera_index, (gx + 0.5) * m.stride, (gy + 0.5) * m.stride};
                const Point3D p = unproject(cam, center, canonical_depth, range);
                const auto pe = pe3d(normalize_point(p, roi).p, pe_weights);
                for (size_t c = 0; c < dim; ++c) out.pos_embeds.at(row, c) = pe[c];
            }
    }
    return out;
}

struct DecoderLayerWeights {
    AttentionWeights hybrid;
    LinearLayer hybrid_out;  // output projection after the attention core
    AttentionWeights cross;
    LinearLayer cross_out;
    MlpWeights ffn;
    LayerNormWeights norm1, norm2, norm3;

    explicit DecoderLayerWeights(size_t dim)
        : hybrid(dim), hybrid_out(dim, dim), cross(dim), cross_out(dim, dim), ffn(dim, dim, dim),
          norm1(dim), norm2(dim), norm3(dim) {}

    void init(Rng& rng) {
        hybrid.init(rng);
        hybrid_out.init(rng);
        cross.init(rng);
        cross_out.init(rng);
        ffn.init(rng);
    }
};

struct HeadWeights {
    MlpWeights cls;  // C -> C -> num_classes
    MlpWeights reg;  // C -> C -> 10

    HeadWeights() = default;
    HeadWeights(size_t dim, size_t num_classes) : cls(dim, dim, num_classes), reg(dim, dim, 10) {}

    void init(Rng& rng) {
        cls.init(rng);
        reg.init(rng);
    }
};

struct DecoderWeights {
    std::vector<DecoderLayerWeights> layers;
    HeadWeights head;

    DecoderWeights() = default;
    DecoderWeights(size_t dim, size_t num_layers, size_t num_classes) : head(dim, num_classes) {
        layers.reserve(num_layers);
        for (size_t i = 0; i < num_layers; ++i) layers.emplace_back(dim);
    }

    void init(Rng& rng) {
        for (auto& l : layers) l.init(rng);
        head.init(rng);
    }
};

namespace detail {
inline void add_inplace(DenseMatrix& x, const DenseMatrix& y) {
    for (size_t i = 0; i < x.data.size(); ++i) x.data[i] += y.data[i];
}

inline DenseMatrix add(const DenseMatrix& x, const DenseMatrix& y) {
    DenseMatrix out = x;
    add_inplace(out, y);
    return out;
}
}  // namespace detail

// Stack of [hybrid attention, cross attention over image tokens, feed
// forward], each post-normalized around a residual. Position embeddings are
// re-added to attention inputs at every layer; temporal rows stay frozen at
// their input values throughout.
inline DenseMatrix decode(const std::vector<Query>& q_dep, const std::vector<Query>& q_temp,
                          const ImageTokens& tokens, const DecoderWeights& weights) {
    if (q_dep.empty()) return DenseMatrix(0, 0);
    const size_t dim = q_dep[0].q_pos.size();

    DenseMatrix pos(q_dep.size(), dim);
    DenseMatrix embed(q_dep.size(), dim);
    for (size_t i = 0; i < q_dep.size(); ++i)
        for (size_t c = 0; c < dim; ++c) {
            pos.at(i, c) = q_dep[i].q_pos[c];
            embed.at(i, c) = q_dep[i].q_sem[c];
        }
    const DenseMatrix temp = query_values(q_temp);

    DenseMatrix token_kv = tokens.features;
    if (token_kv.rows > 0) detail::add_inplace(token_kv, tokens.pos_embeds);

    for (const auto& layer : weights.layers) {
        DenseMatrix x = detail::add(embed, pos);
        DenseMatrix att = hybrid_attention(x, temp, layer.hybrid);
        att = linear(att, layer.hybrid_out);
        detail::add_inplace(embed, att);
        layer_norm_rows_inplace(embed, layer.norm1);

        if (token_kv.rows > 0) {
            x = detail::add(embed, pos);
            DenseMatrix cross = scaled_dot_attention(x, token_kv, token_kv, layer.cross);
            cross = linear(cross, layer.cross_out);
            detail::add_inplace(embed, cross);
        }
        layer_norm_rows_inplace(embed, layer.norm2);

        DenseMatrix ff = mlp_forward(embed, layer.ffn);
        detail::add_inplace(embed, ff);
        layer_norm_rows_inplace(embed, layer.norm3);
    }
    return embed;
}

// Detection head on one decoded embedding. Center offsets are in normalized
// ROI coordinates relative to the query's reference point; sizes come out of
// a log parameterization; yaw from a (sin, cos) pair.
inline Detection head(const std::vector<double>& embedding, const Point3D& p_ref, const HeadWeights& w,
                      const RoiBounds& roi) {
    DenseMatrix x(1, embedding.size());
    x.set_row(0, embedding);
    const auto logits = mlp_forward(x, w.cls).row(0);
    const auto reg = mlp_forward(x, w.reg).row(0);
    if (reg.size() != 10) throw DimensionMismatch("head: regression width != 10");

    Detection det;
    det.class_scores.resize(logits.size());
    for (size_t c = 0; c < logits.size(); ++c) det.class_scores[c] = sigmoid(logits[c]);

    const Point3D norm_ref = normalize_point(p_ref, roi).p;
    det.center = denormalize_point({norm_ref.x + reg[0], norm_ref.y + reg[1], norm_ref.z + reg[2]}, roi);
    det.width = std::exp(reg[3]);
    det.length = std::exp(reg[4]);
    det.height = std::exp(reg[5]);
    det.yaw = std::atan2(reg[6], reg[7]);
    det.vx = reg[8];
    det.vy = reg[9];
    return det;
}

}  // namespace dq3d
