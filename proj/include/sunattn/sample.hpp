#pragma once

// In-memory dataset records shared by the renderer, the model, and the
// evaluation harness.
//
// A sequence is k frames x n crops = k*n patches. Each patch stores its
// pixels (RGB, row-major, values in [0,1]), the index of its owning frame,
// and its angular crop offsets (phi_h, phi_v) relative to that frame's
// optical axis. Frame poses carry yaw (and pitch) only; crop offsets live
// exclusively in patch metadata.

#include <cstdint>
#include <memory>
#include <vector>

#include "sunattn/geometry.hpp"
#include "sunattn/tensor.hpp"

namespace sunattn {

struct PatchRecord {
    std::uint32_t frame_index = 0;
    double phi_h = 0;  // radians; horizontal crop offset within the frame
    double phi_v = 0;  // radians; vertical crop offset
    bool is_outlier = false;
    std::vector<float> pixels;  // patch_size * patch_size * 3, row-major RGB
};

struct SequenceSample {
    std::uint64_t sequence_id = 0;
    int patch_size = 0;
    Vec3 gt_world;  // unit ground-truth sun direction, world frame
    std::vector<CameraFrame> frames;
    std::vector<PatchRecord> patches;

    void validate() const {
        if (patch_size <= 0) throw DataError("sample: nonpositive patch size");
        if (frames.empty() || patches.empty()) throw DataError("sample: empty sequence");
        const std::size_t px = static_cast<std::size_t>(patch_size) * patch_size * 3;
        for (const auto& p : patches) {
            if (p.frame_index >= frames.size())
                throw DataError("sample: patch references missing frame " +
                                std::to_string(p.frame_index));
            if (p.pixels.size() != px)
                throw DataError("sample: patch pixel count " + std::to_string(p.pixels.size()) +
                                " != " + std::to_string(px));
        }
        if (std::abs(gt_world.norm() - 1.0) > 1e-6)
            throw DataError("sample: ground truth direction must be unit length");
    }
};

// Rotation of each patch's owning frame, in patch order (k*n entries).
inline std::shared_ptr<std::vector<std::array<double, 9>>> patch_frame_rotations(
    const SequenceSample& s) {
    auto rots = std::make_shared<std::vector<std::array<double, 9>>>();
    rots->reserve(s.patches.size());
    for (const auto& p : s.patches) rots->push_back(s.frames[p.frame_index].rotation().m);
    return rots;
}

// Per-patch training targets R_f * gt_world (k*n x 3), in the owning frame.
template <typename T>
Tensor<T> patch_targets(const SequenceSample& s) {
    std::vector<T> t;
    t.reserve(s.patches.size() * 3);
    for (const auto& p : s.patches) {
        Vec3 cam = apply(s.frames[p.frame_index].rotation(), s.gt_world);
        t.push_back(static_cast<T>(cam.x));
        t.push_back(static_cast<T>(cam.y));
        t.push_back(static_cast<T>(cam.z));
    }
    return Tensor<T>::leaf(s.patches.size(), 3, std::move(t));
}

}  // namespace sunattn
