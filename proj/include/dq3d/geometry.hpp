#pragma once

#include <array>
#include <cmath>
#include <string>

#include "dq3d/errors.hpp"

namespace dq3d {

struct Point3D {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Point3D operator+(const Point3D& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Point3D operator-(const Point3D& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Point3D operator*(double s) const { return {x * s, y * s, z * s}; }
    double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

inline double distance(const Point3D& a, const Point3D& b) { return (a - b).norm(); }

inline double bev_distance(const Point3D& a, const Point3D& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

// 4x4 row-major matrix; only what pinhole + rigid-transform math needs.
struct Mat4 {
    std::array<double, 16> m{};

    static Mat4 identity() {
        Mat4 r;
        r.m = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
        return r;
    }

    double& at(int r, int c) { return m[static_cast<size_t>(r * 4 + c)]; }
    double at(int r, int c) const { return m[static_cast<size_t>(r * 4 + c)]; }

    Mat4 operator*(const Mat4& o) const {
        Mat4 out;
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) {
                double s = 0.0;
                for (int k = 0; k < 4; ++k) s += at(r, k) * o.at(k, c);
                out.at(r, c) = s;
            }
        return out;
    }

    std::array<double, 4> apply(const std::array<double, 4>& v) const {
        std::array<double, 4> out{};
        for (int r = 0; r < 4; ++r) {
            double s = 0.0;
            for (int k = 0; k < 4; ++k) s += at(r, k) * v[static_cast<size_t>(k)];
            out[static_cast<size_t>(r)] = s;
        }
        return out;
    }

    // Applies to a point (w = 1) and renormalizes the homogeneous coordinate.
    Point3D apply_point(const Point3D& p) const {
        auto v = apply({p.x, p.y, p.z, 1.0});
        return {v[0] / v[3], v[1] / v[3], v[2] / v[3]};
    }

    // Valid only when the 3x3 block is a rotation and the last row is (0,0,0,1).
    Mat4 inverse_rigid() const {
        Mat4 out = identity();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) out.at(r, c) = at(c, r);
        for (int r = 0; r < 3; ++r) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += at(k, r) * at(k, 3);
            out.at(r, 3) = -s;
        }
        return out;
    }

    bool rotation_block_orthonormal(double tol = 1e-9) const {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += at(k, i) * at(k, j);
                if (std::abs(s - (i == j ? 1.0 : 0.0)) > tol) return false;
            }
        return true;
    }

    double rotation_block_det() const {
        return at(0, 0) * (at(1, 1) * at(2, 2) - at(1, 2) * at(2, 1)) -
               at(0, 1) * (at(1, 0) * at(2, 2) - at(1, 2) * at(2, 0)) +
               at(0, 2) * (at(1, 0) * at(2, 1) - at(1, 1) * at(2, 0));
    }
};

inline Mat4 make_rotation(const std::array<double, 9>& r3x3) {
    Mat4 out = Mat4::identity();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) out.at(r, c) = r3x3[static_cast<size_t>(r * 3 + c)];
    return out;
}

inline Mat4 make_translation(double tx, double ty, double tz) {
    Mat4 out = Mat4::identity();
    out.at(0, 3) = tx;
    out.at(1, 3) = ty;
    out.at(2, 3) = tz;
    return out;
}

inline Mat4 rotation_z(double yaw) {
    const double c = std::cos(yaw), s = std::sin(yaw);
    return make_rotation({c, -s, 0, s, c, 0, 0, 0, 1});
}

struct Pixel {
    int camera_index = 0;
    double u = 0.0;
    double v = 0.0;
};

// Ego-relative pinhole camera. Rotation and translation are kept as separate
// homogeneous matrices (camera -> ego).
struct CameraModel {
    double fx = 1.0, fy = 1.0;
    double cx = 0.0, cy = 0.0;
    Mat4 R = Mat4::identity();
    Mat4 T = Mat4::identity();
    int width = 1;
    int height = 1;

    void validate() const {
        if (!(fx > 0.0) || !(fy > 0.0)) throw SchemaError("camera focal length must be positive");
        if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height))
            throw SchemaError("camera principal point outside image");
        if (!R.rotation_block_orthonormal()) throw SchemaError("camera rotation not orthonormal");
    }
};

struct EgoPose {
    Mat4 transform = Mat4::identity();  // ego -> world
    double timestamp = 0.0;

    void validate() const {
        if (!transform.rotation_block_orthonormal()) throw SchemaError("ego pose rotation not orthonormal");
        if (std::abs(transform.rotation_block_det() - 1.0) > 1e-9)
            throw SchemaError("ego pose rotation determinant not +1");
    }
};

// Detection region of interest; also the normalization box for coordinates.
struct RoiBounds {
    double x_min = -61.2, x_max = 61.2;
    double y_min = -61.2, y_max = 61.2;
    double z_min = -10.0, z_max = 10.0;

    void validate() const {
        if (!(x_min < x_max && y_min < y_max && z_min < z_max))
            throw SchemaError("roi min must be below max on every axis");
    }

    bool contains(const Point3D& p) const {
        return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max && p.z >= z_min && p.z <= z_max;
    }
};

struct DepthRange {
    double d_min = 0.05;
    double d_max = 80.0;
};

inline Mat4 intrinsic_matrix(const CameraModel& cam) {
    Mat4 k = Mat4::identity();
    k.at(0, 0) = cam.fx;
    k.at(0, 2) = cam.cx;
    k.at(1, 1) = cam.fy;
    k.at(1, 2) = cam.cy;
    return k;
}

// Pixel + depth -> ego-frame point: R * K^-1 * (u*d, v*d, d, 1) + translation.
inline Point3D unproject(const CameraModel& cam, const Pixel& px, double depth,
                         const DepthRange& range = DepthRange{}) {
    if (depth < range.d_min || depth > range.d_max)
        throw DepthOutOfRange(std::to_string(depth) + " not in [" + std::to_string(range.d_min) + ", " +
                              std::to_string(range.d_max) + "]");
    // K^-1 applied in closed form.
    const std::array<double, 4> cam_pt = {(px.u - cam.cx) * depth / cam.fx, (px.v - cam.cy) * depth / cam.fy,
                                          depth, 1.0};
    auto rotated = cam.R.apply(cam_pt);
    auto ego = cam.T.apply(rotated);
    return {ego[0] / ego[3], ego[1] / ego[3], ego[2] / ego[3]};
}

struct Projection {
    Pixel pixel;
    double depth = 0.0;
    bool in_frame = false;
};

// Exact algebraic inverse of unproject; depth is the camera-frame z.
inline Projection project(const CameraModel& cam, const Point3D& point) {
    auto shifted = cam.T.inverse_rigid().apply({point.x, point.y, point.z, 1.0});
    auto c = cam.R.inverse_rigid().apply(shifted);
    const double z = c[2] / c[3];
    if (z <= 0.0) throw BehindCamera("camera-frame z = " + std::to_string(z));
    Projection out;
    out.pixel.u = cam.fx * (c[0] / c[3]) / z + cam.cx;
    out.pixel.v = cam.fy * (c[1] / c[3]) / z + cam.cy;
    out.depth = z;
    out.in_frame = out.pixel.u >= 0.0 && out.pixel.u < cam.width && out.pixel.v >= 0.0 && out.pixel.v < cam.height;
    return out;
}

// Re-expresses a point recorded in the previous ego frame in the current one.
inline Point3D ego_align(const Point3D& point, const EgoPose& pose_prev, const EgoPose& pose_now) {
    return (pose_now.transform.inverse_rigid() * pose_prev.transform).apply_point(point);
}

struct NormalizedPoint {
    Point3D p;
    bool inside = true;  // false when any axis left [0, 1]
};

inline NormalizedPoint normalize_point(const Point3D& p, const RoiBounds& roi) {
    NormalizedPoint out;
    out.p.x = (p.x - roi.x_min) / (roi.x_max - roi.x_min);
    out.p.y = (p.y - roi.y_min) / (roi.y_max - roi.y_min);
    out.p.z = (p.z - roi.z_min) / (roi.z_max - roi.z_min);
    out.inside = out.p.x >= 0.0 && out.p.x <= 1.0 && out.p.y >= 0.0 && out.p.y <= 1.0 && out.p.z >= 0.0 &&
                 out.p.z <= 1.0;
    return out;
}

inline Point3D denormalize_point(const Point3D& p, const RoiBounds& roi) {
    return {roi.x_min + p.x * (roi.x_max - roi.x_min), roi.y_min + p.y * (roi.y_max - roi.y_min),
            roi.z_min + p.z * (roi.z_max - roi.z_min)};
}

}  // namespace dq3d
