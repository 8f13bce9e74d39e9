#pragma once

// Frames, rotations, angular image coordinates, calibration, angular error.
//
// Conventions (fix all signs): world and camera frames are right-handed with
// z up. A camera frame differs from the world by a yaw rotation about world z
// (counterclockwise viewed from +z), optionally composed with a pitch about
// the camera y axis: R_f = R_pitch(pitch) * R_yaw(yaw). Camera-frame vectors
// map to world by v_world = R_f^T * v_cam. Direction azimuth is math
// convention: 0 along +x, counterclockwise. Angles are radians everywhere in
// the library; degrees appear only at file/CLI boundaries.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <utility>

#include "sunattn/common.hpp"

namespace sunattn {

constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

// Wraps an angle to [0, 2*pi).
inline double wrap_angle(double a) {
    double w = std::fmod(a, 2.0 * kPi);
    if (w < 0) w += 2.0 * kPi;
    return w;
}

struct Vec3 {
    double x = 0, y = 0, z = 0;

    double norm() const { return std::sqrt(x * x + y * y + z * z); }
    Vec3 normalized() const {
        double n = norm();
        return {x / n, y / n, z / n};
    }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, Vec3 v) { return {s * v.x, s * v.y, s * v.z}; }
inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

// Row-major 3x3 rotation matrix.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    double operator()(int r, int c) const { return m[r * 3 + c]; }
    double& operator()(int r, int c) { return m[r * 3 + c]; }
};

inline Mat3 matmul3(const Mat3& a, const Mat3& b) {
    Mat3 out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0;
            for (int k = 0; k < 3; ++k) s += a(i, k) * b(k, j);
            out(i, j) = s;
        }
    return out;
}

inline Mat3 transpose3(const Mat3& a) {
    Mat3 out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out(i, j) = a(j, i);
    return out;
}

inline Vec3 apply(const Mat3& r, Vec3 v) {
    return {r(0, 0) * v.x + r(0, 1) * v.y + r(0, 2) * v.z,
            r(1, 0) * v.x + r(1, 1) * v.y + r(1, 2) * v.z,
            r(2, 0) * v.x + r(2, 1) * v.y + r(2, 2) * v.z};
}

inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
    // R^T R = I within tol.
    Mat3 g = matmul3(transpose3(r), r);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double expect = i == j ? 1.0 : 0.0;
            if (std::abs(g(i, j) - expect) > tol) return false;
        }
    // det = +1 within tol.
    double det = r(0, 0) * (r(1, 1) * r(2, 2) - r(1, 2) * r(2, 1)) -
                 r(0, 1) * (r(1, 0) * r(2, 2) - r(1, 2) * r(2, 0)) +
                 r(0, 2) * (r(1, 0) * r(2, 1) - r(1, 1) * r(2, 0));
    return std::abs(det - 1.0) <= tol;
}

// Yaw: rotation about world z, counterclockwise viewed from +z.
inline Mat3 r_yaw(double theta) {
    double c = std::cos(theta), s = std::sin(theta);
    Mat3 r;
    r.m = {c, -s, 0, s, c, 0, 0, 0, 1};
    return r;
}

// Pitch: rotation about the y axis.
inline Mat3 r_pitch(double psi) {
    double c = std::cos(psi), s = std::sin(psi);
    Mat3 r;
    r.m = {c, 0, s, 0, 1, 0, -s, 0, c};
    return r;
}

// Rodrigues rotation about a unit axis.
inline Mat3 rotation_about_axis(Vec3 axis, double angle) {
    Vec3 u = axis.normalized();
    double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
    Mat3 r;
    r.m = {c + u.x * u.x * t,       u.x * u.y * t - u.z * s, u.x * u.z * t + u.y * s,
           u.y * u.x * t + u.z * s, c + u.y * u.y * t,       u.y * u.z * t - u.x * s,
           u.z * u.x * t - u.y * s, u.z * u.y * t + u.x * s, c + u.z * u.z * t};
    return r;
}

// Full pose from yaw (+ optional pitch): R_f = R_pitch(pitch) * R_yaw(yaw).
inline Mat3 pose_rotation(double yaw, double pitch = 0.0) {
    return matmul3(r_pitch(pitch), r_yaw(yaw));
}

// Extracts (yaw, pitch) from a pose built as R_pitch(pitch) * R_yaw(yaw).
// For perturbed (non-exact) poses this is the nearest consistent reading.
inline std::pair<double, double> extract_yaw_pitch(const Mat3& r) {
    double yaw = wrap_angle(std::atan2(r(1, 0), r(1, 1)));
    double pitch = std::asin(std::clamp(r(0, 2), -1.0, 1.0));
    return {yaw, pitch};
}

struct CameraFrame {
    int frame_id = 0;
    double yaw = 0.0;    // radians, [0, 2*pi)
    double pitch = 0.0;  // radians
    double fov_h = deg2rad(82.0);
    double fov_v = deg2rad(29.0);
    std::optional<std::int64_t> timestamp;  // UTC seconds

    Mat3 rotation() const { return pose_rotation(yaw, pitch); }
};

// Unit direction from spherical coordinates; azimuth 0 maps to +x,
// z = sin(altitude).
inline Vec3 direction_from_spherical(double azimuth, double altitude) {
    if (!(altitude >= -kPi / 2 - 1e-12 && altitude <= kPi / 2 + 1e-12))
        throw std::invalid_argument("direction_from_spherical: altitude out of [-pi/2, pi/2]");
    double ca = std::cos(altitude);
    return {ca * std::cos(azimuth), ca * std::sin(azimuth), std::sin(altitude)};
}

// Inverse of direction_from_spherical; azimuth in [0, 2*pi).
inline std::pair<double, double> spherical_from_direction(Vec3 v) {
    Vec3 u = v.normalized();
    double altitude = std::asin(std::clamp(u.z, -1.0, 1.0));
    double azimuth = std::atan2(u.y, u.x);
    return {wrap_angle(azimuth), altitude};
}

// Rotates a camera-frame direction into the world frame: R_f^T * v_cam.
inline Vec3 calibrate(Vec3 v_cam, const Mat3& r_f) {
    if (!is_rotation(r_f)) throw std::invalid_argument("calibrate: matrix is not a rotation");
    return apply(transpose3(r_f), v_cam);
}

// Linear pixel-center to angular-offset map: the top-left pixel center maps
// to (-fov_h/2, +fov_v/2), the bottom-right to (+fov_h/2, -fov_v/2).
inline std::pair<double, double> pixel_to_angular(double px, double py, int width, int height,
                                                  double fov_h, double fov_v) {
    if (!(px >= 0 && px < width && py >= 0 && py < height))
        throw std::invalid_argument("pixel_to_angular: pixel out of bounds");
    double phi_h = width > 1 ? -fov_h / 2 + px * fov_h / (width - 1) : 0.0;
    double phi_v = height > 1 ? fov_v / 2 - py * fov_v / (height - 1) : 0.0;
    return {phi_h, phi_v};
}

// Angle between two unit directions, in [0, pi]. The atan2 form stays
// accurate near 0 and pi where acos(dot) loses half the mantissa.
inline double angular_error(Vec3 a, Vec3 b) {
    if (std::abs(a.norm() - 1.0) > 1e-6 || std::abs(b.norm() - 1.0) > 1e-6)
        throw std::invalid_argument("angular_error: inputs must be unit vectors");
    return std::atan2(cross(a, b).norm(), dot(a, b));
}

// Composes R with a random-axis rotation whose angle is |N(0, angle_std)|.
inline Mat3 perturb_rotation(const Mat3& r, double angle_std, Rng& rng) {
    if (angle_std < 0) throw std::invalid_argument("perturb_rotation: angle_std must be >= 0");
    if (angle_std == 0.0) return r;
    // Uniform random axis via a normalized Gaussian triple.
    Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
    while (axis.norm() < 1e-12) axis = {rng.normal(), rng.normal(), rng.normal()};
    double angle = std::abs(rng.normal()) * angle_std;
    return matmul3(rotation_about_axis(axis, angle), r);
}

}  // namespace sunattn
