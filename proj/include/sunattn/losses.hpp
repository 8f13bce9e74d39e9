#pragma once

// Three-term sun-direction loss.
//
//   cosine = 1 - v_gt . v_pred / ||v_pred||   (alignment; scale-invariant)
//   norm   = (1 - ||v_pred||)^2               (keeps raw outputs near unit)
//   hemi   = max(0, -z_pred)                  (upper-hemisphere prior)
//   total  = cosine + norm + hemi
//
// Applied per patch in the patch's owning camera frame against R_f * v_gt
// (world ground truth rotated into that frame); by yaw-rotation invariance
// this equals the world-frame loss for yaw-only poses. Degenerate
// predictions (||v_pred|| <= 1e-8) are rejected rather than clamped so
// training pathologies surface instead of hiding.

#include <cmath>
#include <memory>

#include "sunattn/geometry.hpp"
#include "sunattn/tensor.hpp"

namespace sunattn {

inline constexpr double kDirectionNormEps = 1e-8;

struct LossBreakdown {
    double cosine = 0, norm = 0, hemi = 0, total = 0;
};

namespace detail {

template <typename T>
void check_rows_nondegenerate(const Tensor<T>& v_pred) {
    const std::size_t m = v_pred.rows();
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < 3; ++j) {
            double x = static_cast<double>(v_pred.values()[i * 3 + j]);
            s += x * x;
        }
        if (!(std::sqrt(s) > kDirectionNormEps))
            throw NumericError("loss: degenerate direction (norm <= 1e-8) at row " +
                               std::to_string(i));
    }
}

template <typename T>
Tensor<T> target_tensor(std::size_t rows, Vec3 v_gt) {
    std::vector<T> t(rows * 3);
    for (std::size_t i = 0; i < rows; ++i) {
        t[i * 3 + 0] = static_cast<T>(v_gt.x);
        t[i * 3 + 1] = static_cast<T>(v_gt.y);
        t[i * 3 + 2] = static_cast<T>(v_gt.z);
    }
    return Tensor<T>::leaf(rows, 3, std::move(t));
}

}  // namespace detail

// Per-row cosine losses (Mx1) of raw predictions (Mx3) against unit targets.
template <typename T>
Tensor<T> loss_cosine_rows(const Tensor<T>& v_pred, const Tensor<T>& v_gt) {
    if (v_pred.cols() != 3 || v_gt.cols() != 3 || v_pred.rows() != v_gt.rows())
        throw std::invalid_argument("loss_cosine: predictions and targets must be Mx3");
    detail::check_rows_nondegenerate(v_pred);
    // 1 - dot/norm per row.
    return affine(div(rows_dot(v_pred, v_gt), rows_norm(v_pred)), T(-1), T(1));
}

template <typename T>
Tensor<T> loss_cosine(const Tensor<T>& v_pred, Vec3 v_gt) {
    return loss_cosine_rows(v_pred, detail::target_tensor<T>(v_pred.rows(), v_gt));
}

// Per-row (1 - ||v||)^2.
template <typename T>
Tensor<T> loss_norm(const Tensor<T>& v_pred) {
    if (v_pred.cols() != 3) throw std::invalid_argument("loss_norm: input must be Mx3");
    return square(affine(rows_norm(v_pred), T(-1), T(1)));
}

// Per-row max(0, -z); subgradient 0 at the kink.
template <typename T>
Tensor<T> loss_hemi(const Tensor<T>& v_pred) {
    if (v_pred.cols() != 3) throw std::invalid_argument("loss_hemi: input must be Mx3");
    return relu(neg(slice_cols(v_pred, 2, 3)));
}

// Sum of the three terms, per row (Mx1).
template <typename T>
Tensor<T> loss_light_rows(const Tensor<T>& v_pred, const Tensor<T>& v_gt) {
    return add(add(loss_cosine_rows(v_pred, v_gt), loss_norm(v_pred)), loss_hemi(v_pred));
}

template <typename T>
Tensor<T> loss_light(const Tensor<T>& v_pred, Vec3 v_gt) {
    return loss_light_rows(v_pred, detail::target_tensor<T>(v_pred.rows(), v_gt));
}

// Non-tape breakdown of the loss terms for one raw prediction.
inline LossBreakdown loss_breakdown(Vec3 v_pred, Vec3 v_gt) {
    double n = v_pred.norm();
    if (!(n > kDirectionNormEps))
        throw NumericError("loss: degenerate direction (norm <= 1e-8)");
    LossBreakdown b;
    b.cosine = 1.0 - dot(v_gt, v_pred) / n;
    b.norm = (1.0 - n) * (1.0 - n);
    b.hemi = std::max(0.0, -v_pred.z);
    b.total = b.cosine + b.norm + b.hemi;
    return b;
}

// Mean per-patch loss of raw per-patch estimates (Mx3, camera frames)
// against per-patch targets R_f * v_gt_world (Mx3 constant). Optionally adds
// aggregate_weight * loss_light(mean of world-calibrated estimates, v_gt).
template <typename T>
Tensor<T> sequence_loss(const Tensor<T>& out, const Tensor<T>& targets,
                        double aggregate_weight = 0.0,
                        std::shared_ptr<const std::vector<std::array<double, 9>>> frame_rots = {},
                        Vec3 v_gt_world = {}) {
    Tensor<T> per_patch = mean_all(loss_light_rows(out, targets));
    if (aggregate_weight == 0.0) return per_patch;
    if (!frame_rots)
        throw std::invalid_argument("sequence_loss: aggregate term needs frame rotations");
    Tensor<T> world = rotate_rows_transposed(out, frame_rots);
    Tensor<T> mean_est = mean_rows(world);  // 1x3 raw aggregate
    Tensor<T> agg = loss_light(mean_est, v_gt_world);
    return add(per_patch, scale(agg, static_cast<T>(aggregate_weight)));
}

}  // namespace sunattn
