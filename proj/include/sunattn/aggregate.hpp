#pragma once

// Fusing per-patch camera-frame estimates into one world-frame direction.
//
// calibrate_and_average: normalize each raw estimate, rotate into the world
// frame with the owning pose (R_f^T v), take the arithmetic mean, renormalize.
// meanshift_aggregate: the predecessor-style statistical baseline — calibrate,
// sigma-clip outliers against the spherical mean, then run mean shift on the
// unit sphere (Gaussian kernel in angular distance, extrinsic shift followed
// by renormalization) from every inlier and return the densest mode.

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sunattn/geometry.hpp"
#include "sunattn/sample.hpp"

namespace sunattn {

struct Estimate {
    std::uint32_t patch_id = 0;
    CameraFrame frame;  // owning pose; calibration uses its rotation
    Vec3 v_cam;         // raw camera-frame estimate (not necessarily unit)
};

struct EstimateSet {
    std::vector<Estimate> items;

    void validate() const {
        if (items.empty()) throw DataError("estimates: empty set");
        for (const auto& e : items)
            if (!std::isfinite(e.v_cam.x) || !std::isfinite(e.v_cam.y) ||
                !std::isfinite(e.v_cam.z))
                throw DataError("estimates: non-finite estimate for patch " +
                                std::to_string(e.patch_id));
    }
};

// Unit-normalized world-frame versions of all estimates, in input order.
inline std::vector<Vec3> calibrated_directions(const EstimateSet& est) {
    est.validate();
    std::vector<Vec3> world;
    world.reserve(est.items.size());
    for (const auto& e : est.items) {
        const double n = e.v_cam.norm();
        if (!(n > 1e-12))
            throw NumericError("aggregate: degenerate estimate for patch " +
                               std::to_string(e.patch_id));
        Vec3 unit{e.v_cam.x / n, e.v_cam.y / n, e.v_cam.z / n};
        world.push_back(calibrate(unit, e.frame.rotation()));
    }
    return world;
}

// Normalized arithmetic mean of unit directions.
inline Vec3 spherical_mean(const std::vector<Vec3>& dirs) {
    if (dirs.empty()) throw DataError("spherical_mean: empty input");
    Vec3 sum{};
    for (const auto& v : dirs) {
        sum.x += v.x;
        sum.y += v.y;
        sum.z += v.z;
    }
    const double n = sum.norm() / dirs.size();
    if (!(n > 1e-6))
        throw NumericError("aggregate: estimates cancel out, no consensus direction");
    return Vec3{sum.x, sum.y, sum.z}.normalized();
}

// Root-mean-square angular deviation (radians) about the spherical mean.
inline double circular_dispersion(const std::vector<Vec3>& dirs) {
    Vec3 m = spherical_mean(dirs);
    double acc = 0;
    for (const auto& v : dirs) {
        const double a = angular_error(v, m);
        acc += a * a;
    }
    return std::sqrt(acc / dirs.size());
}

inline Vec3 calibrate_and_average(const EstimateSet& est) {
    return spherical_mean(calibrated_directions(est));
}

namespace detail {

inline double kernel_weight(double theta, double bandwidth) {
    return std::exp(-theta * theta / (2.0 * bandwidth * bandwidth));
}

inline double kde_density(Vec3 x, const std::vector<Vec3>& pts, double bandwidth) {
    double d = 0;
    for (const auto& p : pts) d += kernel_weight(angular_error(x, p), bandwidth);
    return d;
}

// Iterative sigma clipping: drop points farther than sigma * RMS deviation
// from the running spherical mean; stop at a fixpoint and never shrink the
// set below three points.
inline std::vector<Vec3> sigma_clip(std::vector<Vec3> pts, double outlier_sigma) {
    while (pts.size() > 3) {
        Vec3 m = spherical_mean(pts);
        double rms = circular_dispersion(pts);
        std::vector<Vec3> kept;
        for (const auto& p : pts)
            if (angular_error(p, m) <= outlier_sigma * rms) kept.push_back(p);
        if (kept.size() == pts.size()) break;  // fixpoint
        if (kept.size() < 3) break;            // floor: keep the current set
        pts = std::move(kept);
    }
    return pts;
}

}  // namespace detail

inline Vec3 meanshift_aggregate(const EstimateSet& est, double bandwidth = 0.2,
                                double outlier_sigma = 2.0) {
    if (!(bandwidth > 0)) throw std::invalid_argument("meanshift: bandwidth must be positive");
    if (!(outlier_sigma > 0))
        throw std::invalid_argument("meanshift: outlier sigma must be positive");
    std::vector<Vec3> inliers = detail::sigma_clip(calibrated_directions(est), outlier_sigma);
    if (inliers.empty()) throw NumericError("meanshift: no inliers");

    Vec3 best{};
    double best_density = -1;
    for (const Vec3& start : inliers) {
        Vec3 x = start;
        for (int it = 0; it < 100; ++it) {
            Vec3 shifted{};
            for (const auto& p : inliers) {
                const double w = detail::kernel_weight(angular_error(x, p), bandwidth);
                shifted.x += w * p.x;
                shifted.y += w * p.y;
                shifted.z += w * p.z;
            }
            if (!(shifted.norm() > 1e-12)) break;  // kernel mass cancelled; stay put
            Vec3 next = shifted.normalized();
            const double step = angular_error(next, x);
            x = next;
            if (step < 1e-6) break;
        }
        const double d = detail::kde_density(x, inliers, bandwidth);
        if (d > best_density) {
            best_density = d;
            best = x;
        }
    }
    return best;
}

// Packs a model output (k*n x 3 raw camera-frame rows) into an EstimateSet
// with each row's owning frame, ready for either aggregator.
template <typename T>
EstimateSet estimates_from_output(const SequenceSample& s, const Tensor<T>& out) {
    if (out.rows() != s.patches.size() || out.cols() != 3)
        throw std::invalid_argument("estimates: output shape " +
                                    std::to_string(out.rows()) + "x" +
                                    std::to_string(out.cols()) + " does not match " +
                                    std::to_string(s.patches.size()) + " patches");
    EstimateSet est;
    est.items.reserve(s.patches.size());
    for (std::size_t i = 0; i < s.patches.size(); ++i) {
        Estimate e;
        e.patch_id = static_cast<std::uint32_t>(i);
        e.frame = s.frames[s.patches[i].frame_index];
        e.v_cam = {static_cast<double>(out.at(i, 0)), static_cast<double>(out.at(i, 1)),
                   static_cast<double>(out.at(i, 2))};
        est.items.push_back(e);
    }
    return est;
}

// --- Estimate files -------------------------------------------------------
//
// JSON lines, one estimate per line:
//   {"patch_id": .., "frame_id": .., "v": [x, y, z], "yaw_deg": ..}
// Poses reconstructed from yaw alone, so external estimates can join the
// baseline without full pose plumbing. Angles in degrees on disk.

inline void write_estimates(const EstimateSet& est, const std::string& path) {
    est.validate();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("estimates: cannot open for writing: " + path);
    for (const auto& e : est.items) {
        nlohmann::json j;
        j["frame_id"] = e.frame.frame_id;
        j["patch_id"] = e.patch_id;
        j["v"] = {e.v_cam.x, e.v_cam.y, e.v_cam.z};
        j["yaw_deg"] = rad2deg(e.frame.yaw);
        out << j.dump() << "\n";
    }
    if (!out) throw DataError("estimates: write failed: " + path);
}

inline EstimateSet read_estimates(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("estimates: cannot open: " + path);
    EstimateSet est;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("estimates: bad JSON at line " + std::to_string(line_no) + ": " +
                            e.what());
        }
        try {
            Estimate e;
            e.patch_id = j.at("patch_id").get<std::uint32_t>();
            e.frame.frame_id = j.at("frame_id").get<int>();
            e.frame.yaw = deg2rad(j.at("yaw_deg").get<double>());
            auto v = j.at("v");
            if (!v.is_array() || v.size() != 3)
                throw DataError("estimates: v must have 3 components at line " +
                                std::to_string(line_no));
            e.v_cam = {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
            est.items.push_back(e);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("estimates: missing or mistyped field at line " +
                            std::to_string(line_no) + ": " + e.what());
        }
    }
    est.validate();
    return est;
}

}  // namespace sunattn
