#pragma once

#include <vector>

#include "sunattn/common.hpp"
#include "sunattn/sample.hpp"
#include "sunattn/tensor.hpp"

namespace testutil {

inline sunattn::Tensor<double> random_leaf(std::size_t rows, std::size_t cols, sunattn::Rng& rng,
                                           double lo = -2.0, double hi = 2.0,
                                           bool requires_grad = true) {
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return sunattn::Tensor<double>::leaf(rows, cols, std::move(v), requires_grad);
}

// Random values bounded away from zero (for kink-avoiding relu checks).
inline sunattn::Tensor<double> random_leaf_nonzero(std::size_t rows, std::size_t cols,
                                                   sunattn::Rng& rng, double min_abs = 0.1,
                                                   double max_abs = 2.0) {
    std::vector<double> v(rows * cols);
    for (auto& x : v) {
        double mag = rng.uniform(min_abs, max_abs);
        x = rng.bernoulli(0.5) ? mag : -mag;
    }
    return sunattn::Tensor<double>::leaf(rows, cols, std::move(v), true);
}

// Structurally valid sequence with random pixels (no rendered cues); enough
// for shape/determinism/gradient tests that don't need the real generator.
inline sunattn::SequenceSample random_sample(int k, int n, int patch_size, sunattn::Rng& rng) {
    using namespace sunattn;
    SequenceSample s;
    s.sequence_id = rng.next_u64();
    s.patch_size = patch_size;
    double az = rng.uniform(-kPi, kPi), alt = rng.uniform(0.2, 1.3);
    s.gt_world = direction_from_spherical(az, alt);
    for (int f = 0; f < k; ++f) {
        CameraFrame fr;
        fr.frame_id = f;
        fr.yaw = rng.uniform(-kPi, kPi);
        fr.pitch = rng.uniform(-0.17, 0.17);
        fr.fov_h = deg2rad(82.0);
        fr.fov_v = deg2rad(29.0);
        s.frames.push_back(fr);
    }
    const std::size_t px = static_cast<std::size_t>(patch_size) * patch_size * 3;
    for (int f = 0; f < k; ++f)
        for (int c = 0; c < n; ++c) {
            PatchRecord p;
            p.frame_index = static_cast<std::uint32_t>(f);
            p.phi_h = rng.uniform(-0.6, 0.6);
            p.phi_v = rng.uniform(-0.15, 0.15);
            p.pixels.resize(px);
            for (auto& v : p.pixels) v = static_cast<float>(rng.uniform(0.0, 1.0));
            s.patches.push_back(std::move(p));
        }
    return s;
}

}  // namespace testutil
