#pragma once

// Procedural labeled sequences: Lambertian-shaded ground patches with a
// central gnomon casting a sun-direction shadow, plus cue-free outliers.
//
// The scene is a fixed gentle height field (a central dome with a small
// sinusoidal detail layer) lit by the sun direction expressed in the crop
// frame. Image basis: u = right, v = up, both in [-1, 1] at pixel centers;
// the light vector in that basis is (-y_c, x_c, z_c) for a crop-frame sun
// (x_c, y_c, z_c). The gnomon shadow runs opposite the sun's image azimuth
// with length proportional to cot(altitude), so patch brightness and shadow
// orientation together determine the sun direction up to noise.
//
// Determinism contract: every random quantity comes from the caller's Rng in
// a fixed draw order — per crop: outlier flag, then (phi_h, phi_v) pairs
// until accepted (at most 20 tries), then rendering (inliers: one albedo
// uniform; plus, when sigma > 0, one normal per value in row-major RGB
// order). Dataset generation derives one seed per sequence, so results are
// independent of worker count.

#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "sunattn/common.hpp"
#include "sunattn/geometry.hpp"
#include "sunattn/sample.hpp"

namespace sunattn {

struct SceneSpec {
    Vec3 sun_world{0, 0, 1};  // unit; altitude within [5, 85] degrees
    int k = 8;                // frames
    int n = 4;                // crops per frame
    double yaw_step_std = deg2rad(30.0);  // random-walk step
    double pitch_max = deg2rad(10.0);     // per-frame pitch ~ U[-pitch_max, pitch_max]
    double p_out = 0.25;
    double sigma = 0.05;
    std::uint64_t seed = 0;

    // Patch geometry: crop field of view follows from the pixel fraction the
    // patch occupies in the notional frame.
    int patch_size = 16;
    int frame_px_w = 128, frame_px_h = 40;
    double fov_h = deg2rad(82.0), fov_v = deg2rad(29.0);

    double crop_fov_h() const { return fov_h * patch_size / frame_px_w; }
    double crop_fov_v() const { return fov_v * patch_size / frame_px_h; }
    double phi_h_max() const { return (fov_h - crop_fov_h()) / 2; }
    double phi_v_max() const { return (fov_v - crop_fov_v()) / 2; }

    void validate() const {
        if (k < 1 || n < 1) throw std::invalid_argument("scene: k and n must be >= 1");
        if (!(p_out >= 0 && p_out <= 1))
            throw std::invalid_argument("scene: p_out must lie in [0,1]");
        if (!(sigma >= 0) || !(yaw_step_std >= 0) || !(pitch_max >= 0))
            throw std::invalid_argument("scene: stds and ranges must be nonnegative");
        if (patch_size < 2) throw std::invalid_argument("scene: patch_size must be >= 2");
        if (frame_px_w < patch_size || frame_px_h < patch_size)
            throw std::invalid_argument("scene: frame smaller than patch");
        if (!(fov_h > 0) || !(fov_v > 0))
            throw std::invalid_argument("scene: fields of view must be positive");
        if (std::abs(sun_world.norm() - 1.0) > 1e-9)
            throw std::invalid_argument("scene: sun direction must be unit length");
        const double alt = rad2deg(std::asin(std::clamp(sun_world.z, -1.0, 1.0)));
        if (alt < 5.0 - 1e-9 || alt > 85.0 + 1e-9)
            throw std::invalid_argument("scene: sun altitude " + std::to_string(alt) +
                                        " deg outside [5, 85]");
    }
};

namespace render {

inline constexpr double kAmbient = 0.15;
inline constexpr double kGnomonRadius = 0.09;
inline constexpr double kGnomonHeight = 0.18;
inline constexpr double kGnomonValue = 0.05;
inline constexpr double kShadowWidth = 0.10;
inline constexpr double kShadowDarken = 0.25;
inline constexpr double kShadowMaxLen = 1.4;
inline constexpr double kOutlierGray = 0.1;
inline constexpr double kAlbedo[3] = {0.62, 0.55, 0.46};

// Gentle fixed terrain: a central dome plus low-amplitude detail. The dome
// makes the brightest slope face the sun, which drives the brightness cue.
inline double height_field(double u, double v) {
    const double r2 = u * u + v * v;
    return 0.30 * std::exp(-r2 / 0.25) +
           0.02 * (std::sin(2 * kPi * 1.5 * u + 0.7) * std::sin(2 * kPi * 1.5 * v + 1.3) +
                   0.5 * std::sin(2 * kPi * 2.5 * u - 1.1) * std::cos(2 * kPi * 2.0 * v + 0.4));
}

// Unit surface normal from central differences of the height field.
inline Vec3 surface_normal(double u, double v) {
    constexpr double h = 1e-4;
    const double nx = -(height_field(u + h, v) - height_field(u - h, v)) / (2 * h);
    const double ny = -(height_field(u, v + h) - height_field(u, v - h)) / (2 * h);
    return Vec3{nx, ny, 1.0}.normalized();
}

// Pixel-center image coordinates: u right, v up, both spanning [-1, 1].
inline double pixel_u(int col, int patch_size) { return ((col + 0.5) / patch_size) * 2.0 - 1.0; }
inline double pixel_v(int row, int patch_size) { return 1.0 - ((row + 0.5) / patch_size) * 2.0; }

}  // namespace render

// Renders one patch_size x patch_size x 3 patch (row-major, RGB interleaved,
// values in [0,1]) for a crop-frame sun direction. Outliers are flat gray
// with no directional cue. Deterministic given the rng state.
inline std::vector<float> render_patch(Vec3 v_cam_crop, bool is_outlier, double sigma, Rng& rng,
                                       int patch_size) {
    using namespace render;
    if (patch_size < 2) throw std::invalid_argument("render: patch_size must be >= 2");
    const int ps = patch_size;
    std::vector<double> img(static_cast<std::size_t>(ps) * ps * 3);

    if (is_outlier) {
        for (auto& x : img) x = kOutlierGray;
    } else {
        // Light in the image basis (u, v, out-of-ground).
        const Vec3 l{-v_cam_crop.y, v_cam_crop.x, v_cam_crop.z};
        const double albedo_scale = 0.7 + 0.3 * rng.uniform();
        const double hn = std::hypot(l.x, l.y);
        const double alt = std::asin(std::clamp(v_cam_crop.z, -1.0, 1.0));
        const bool has_shadow = hn > 1e-9 && alt > 1e-6;
        const double sdx = has_shadow ? -l.x / hn : 0.0;
        const double sdy = has_shadow ? -l.y / hn : 0.0;
        const double slen =
            has_shadow ? std::min(kShadowMaxLen, kGnomonHeight / std::tan(alt)) : 0.0;

        for (int i = 0; i < ps; ++i) {
            for (int j = 0; j < ps; ++j) {
                const double u = pixel_u(j, ps), v = pixel_v(i, ps);
                const Vec3 nrm = surface_normal(u, v);
                const double shade = std::max(0.0, dot(nrm, l));
                double value = kAmbient + (1.0 - kAmbient) * shade;

                if (has_shadow) {
                    // Distance to the shadow segment [0, slen * sd].
                    const double t =
                        std::clamp((u * sdx + v * sdy) / std::max(slen, 1e-9), 0.0, 1.0) * slen;
                    const double dx = u - t * sdx, dy = v - t * sdy;
                    if (std::hypot(dx, dy) < kShadowWidth) value *= kShadowDarken;
                }

                const std::size_t base = (static_cast<std::size_t>(i) * ps + j) * 3;
                if (std::hypot(u, v) < kGnomonRadius) {
                    img[base] = img[base + 1] = img[base + 2] = kGnomonValue;
                } else {
                    for (int c = 0; c < 3; ++c)
                        img[base + c] = value * kAlbedo[c] * albedo_scale;
                }
            }
        }
    }

    std::vector<float> out(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        double x = img[i];
        if (sigma > 0) x += rng.normal(0.0, sigma);
        out[i] = static_cast<float>(std::clamp(x, 0.0, 1.0));
    }
    return out;
}

// Draws one full sequence: a yaw random walk over k frames, n crops per
// frame at uniform angular offsets, the world sun rendered in each crop
// frame. Crops whose sun falls below the crop horizon are re-drawn (20
// tries), then marked outlier. Frame poses record yaw and pitch only.
inline SequenceSample sample_sequence(const SceneSpec& spec, Rng& rng) {
    spec.validate();
    SequenceSample s;
    s.sequence_id = spec.seed;
    s.patch_size = spec.patch_size;
    s.gt_world = spec.sun_world;

    double yaw = rng.uniform(0.0, 2 * kPi);
    for (int f = 0; f < spec.k; ++f) {
        if (f > 0) yaw = wrap_angle(yaw + rng.normal(0.0, spec.yaw_step_std));
        const double pitch = rng.uniform(-spec.pitch_max, spec.pitch_max);
        CameraFrame frame;
        frame.frame_id = f;
        frame.yaw = yaw;
        frame.pitch = pitch;
        frame.fov_h = spec.fov_h;
        frame.fov_v = spec.fov_v;
        s.frames.push_back(frame);
        const Mat3 rf = frame.rotation();

        for (int c = 0; c < spec.n; ++c) {
            bool outlier = rng.bernoulli(spec.p_out);
            double phi_h = 0, phi_v = 0;
            Vec3 v_crop{};
            bool accepted = false;
            for (int attempt = 0; attempt < 20; ++attempt) {
                phi_h = rng.uniform(-spec.phi_h_max(), spec.phi_h_max());
                phi_v = rng.uniform(-spec.phi_v_max(), spec.phi_v_max());
                const Mat3 r_crop = matmul3(r_pitch(phi_v), matmul3(r_yaw(phi_h), rf));
                v_crop = apply(r_crop, spec.sun_world);
                if (outlier || v_crop.z > 0) {
                    accepted = true;
                    break;
                }
            }
            if (!accepted) outlier = true;  // sun unreachable in this frame

            PatchRecord p;
            p.frame_index = static_cast<std::uint32_t>(f);
            p.phi_h = phi_h;
            p.phi_v = phi_v;
            p.is_outlier = outlier;
            p.pixels = render_patch(v_crop, outlier, spec.sigma, rng, spec.patch_size);
            s.patches.push_back(std::move(p));
        }
    }
    return s;
}

// Seed-only convenience: bit-identical across calls with the same spec.
inline SequenceSample sample_sequence(const SceneSpec& spec) {
    Rng rng(spec.seed);
    return sample_sequence(spec, rng);
}

// Draws the per-sequence sun direction (uniform azimuth; altitude uniform in
// [5, 85] degrees), then the sequence itself, from one per-sequence stream.
inline SequenceSample sample_dataset_sequence(const SceneSpec& base, std::uint64_t master_seed,
                                              std::uint64_t index) {
    Rng rng(derive_seed(master_seed, index));
    const double az = rng.uniform(0.0, 2 * kPi);
    const double alt = deg2rad(5.0 + 80.0 * rng.uniform());
    SceneSpec spec = base;
    spec.sun_world = direction_from_spherical(az, alt);
    spec.seed = index;
    SequenceSample s = sample_sequence(spec, rng);
    s.sequence_id = index;
    return s;
}

// Generates `count` sequences; parallel across sequences when workers > 1,
// with identical output for any worker count.
inline std::vector<SequenceSample> generate_dataset(const SceneSpec& base, std::size_t count,
                                                    std::uint64_t master_seed, int workers = 1) {
    SceneSpec check = base;
    check.validate();
    if (workers < 1) throw std::invalid_argument("generate: workers must be >= 1");
    std::vector<SequenceSample> out(count);
    if (workers == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i)
            out[i] = sample_dataset_sequence(base, master_seed, i);
        return out;
    }
    std::vector<std::thread> pool;
    std::size_t stride = static_cast<std::size_t>(workers);
    for (std::size_t w = 0; w < stride; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < count; i += stride)
                out[i] = sample_dataset_sequence(base, master_seed, i);
        });
    }
    for (auto& t : pool) t.join();
    return out;
}

}  // namespace sunattn
