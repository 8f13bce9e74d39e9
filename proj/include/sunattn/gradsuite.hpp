#pragma once

// The standard gradient-verification battery: every differentiable op, the
// loss stack, positional-encoding superposition, and the end-to-end tiny
// model, each checked against central finite differences at 64-bit.
// Per-op tolerance 1e-5; end-to-end tolerance 1e-4.

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sunattn/common.hpp"
#include "sunattn/encoding.hpp"
#include "sunattn/geometry.hpp"
#include "sunattn/gradcheck.hpp"
#include "sunattn/losses.hpp"
#include "sunattn/model.hpp"
#include "sunattn/sample.hpp"
#include "sunattn/tensor.hpp"

namespace sunattn {

namespace detail {

inline Tensor<double> suite_leaf(Rng& rng, std::size_t rows, std::size_t cols, double lo,
                                 double hi) {
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor<double>::leaf(rows, cols, std::move(v), true);
}

inline Tensor<double> suite_leaf_nonzero(Rng& rng, std::size_t rows, std::size_t cols) {
    std::vector<double> v(rows * cols);
    for (auto& x : v) {
        const double mag = rng.uniform(0.2, 2.0);
        x = rng.bernoulli(0.5) ? mag : -mag;
    }
    return Tensor<double>::leaf(rows, cols, std::move(v), true);
}

// A structurally valid sequence with random content, for the end-to-end
// check.
inline SequenceSample suite_sample(const ModelConfig& cfg, Rng& rng) {
    SequenceSample s;
    s.sequence_id = 1;
    s.patch_size = cfg.patch_size;
    s.gt_world = direction_from_spherical(rng.uniform(0.0, 2.0 * kPi),
                                          rng.uniform(deg2rad(10.0), deg2rad(80.0)));
    for (int f = 0; f < 2; ++f) {
        CameraFrame frame;
        frame.frame_id = f;
        frame.yaw = rng.uniform(0.0, 2.0 * kPi);
        frame.pitch = rng.uniform(-0.17, 0.17);
        s.frames.push_back(frame);
    }
    for (int f = 0; f < 2; ++f)
        for (int c = 0; c < 2; ++c) {
            PatchRecord p;
            p.frame_index = static_cast<std::uint32_t>(f);
            p.phi_h = rng.uniform(-0.6, 0.6);
            p.phi_v = rng.uniform(-0.15, 0.15);
            p.is_outlier = false;
            p.pixels.resize(static_cast<std::size_t>(cfg.patch_size) * cfg.patch_size * 3);
            for (auto& px : p.pixels) px = static_cast<float>(rng.uniform(0.0, 1.0));
            s.patches.push_back(std::move(p));
        }
    return s;
}

}  // namespace detail

// Runs the whole battery and returns one result per check, end-to-end last.
inline std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed = 12345) {
    using detail::suite_leaf;
    using detail::suite_leaf_nonzero;
    constexpr double kOpTol = 1e-5;
    constexpr double kEndTol = 1e-4;
    Rng rng(seed);
    std::vector<GradCheckResult> results;

    {
        auto a = suite_leaf(rng, 3, 4, -2.0, 2.0);
        auto b = suite_leaf(rng, 4, 5, -2.0, 2.0);
        results.push_back(gradcheck(
            "matmul", [&] { return mean_all(matmul(a, b)); }, {a, b}, kOpTol));
    }
    {
        auto a = suite_leaf(rng, 3, 5, -2.0, 2.0);
        results.push_back(gradcheck(
            "transpose", [&] { return mean_all(square(transpose(a))); }, {a}, kOpTol));
    }
    {
        auto a = suite_leaf(rng, 4, 3, -2.0, 2.0);
        auto b = suite_leaf(rng, 4, 3, -2.0, 2.0);
        results.push_back(gradcheck(
            "add", [&] { return mean_all(square(add(a, b))); }, {a, b}, kOpTol));
        results.push_back(gradcheck(
            "sub", [&] { return mean_all(square(sub(a, b))); }, {a, b}, kOpTol));
        results.push_back(gradcheck(
            "mul", [&] { return mean_all(mul(a, b)); }, {a, b}, kOpTol));
    }
    {
        auto a = suite_leaf(rng, 4, 3, -2.0, 2.0);
        auto b = suite_leaf_nonzero(rng, 4, 3);
        results.push_back(gradcheck(
            "div", [&] { return mean_all(div(a, b)); }, {a, b}, kOpTol));
    }
    {
        auto a = suite_leaf(rng, 3, 4, -2.0, 2.0);
        results.push_back(gradcheck(
            "affine", [&] { return mean_all(affine(a, 1.7, -0.3)); }, {a}, kOpTol));
        results.push_back(gradcheck(
            "scale", [&] { return mean_all(scale(a, -2.5)); }, {a}, kOpTol));
        results.push_back(gradcheck(
            "neg", [&] { return mean_all(mul(a, neg(a))); }, {a}, kOpTol));
        results.push_back(gradcheck(
            "square", [&] { return mean_all(square(a)); }, {a}, kOpTol));
    }
    {
        auto x = suite_leaf(rng, 4, 5, -2.0, 2.0);
        auto b = suite_leaf(rng, 1, 5, -1.0, 1.0);
        results.push_back(gradcheck(
            "add_bias", [&] { return mean_all(square(add_bias(x, b))); }, {x, b}, kOpTol));
    }
    {
        // Keep values away from the kink at zero.
        auto x = suite_leaf_nonzero(rng, 4, 5);
        results.push_back(gradcheck(
            "relu", [&] { return mean_all(relu(x)); }, {x}, kOpTol));
    }
    {
        auto x = suite_leaf(rng, 4, 6, -2.0, 2.0);
        auto w = suite_leaf(rng, 6, 1, -1.0, 1.0);
        results.push_back(gradcheck(
            "softmax_rows", [&] { return mean_all(matmul(softmax_rows(x), w)); }, {x, w},
            kOpTol));
    }
    {
        auto x = suite_leaf(rng, 3, 6, -2.0, 2.0);
        auto g = suite_leaf(rng, 1, 6, 0.5, 1.5);
        auto b = suite_leaf(rng, 1, 6, -0.5, 0.5);
        results.push_back(gradcheck(
            "layer_norm", [&] { return mean_all(square(layer_norm(x, g, b, 1e-5))); },
            {x, g, b}, kOpTol));
    }
    {
        auto x = suite_leaf(rng, 4, 6, -2.0, 2.0);
        results.push_back(gradcheck(
            "dropout",
            [&] {
                Rng mask_rng(7);  // identical mask every call
                return mean_all(square(dropout(x, 0.4, mask_rng, Mode::train)));
            },
            {x}, kOpTol));
    }
    {
        auto a = suite_leaf(rng, 3, 4, -2.0, 2.0);
        auto b = suite_leaf(rng, 2, 4, -2.0, 2.0);
        results.push_back(gradcheck(
            "concat_rows", [&] { return mean_all(square(concat_rows(a, b))); }, {a, b},
            kOpTol));
    }
    {
        auto a = suite_leaf(rng, 3, 4, -2.0, 2.0);
        auto b = suite_leaf(rng, 3, 2, -2.0, 2.0);
        results.push_back(gradcheck(
            "concat_cols", [&] { return mean_all(square(concat_cols(a, b))); }, {a, b},
            kOpTol));
    }
    {
        auto x = suite_leaf(rng, 3, 6, -2.0, 2.0);
        results.push_back(gradcheck(
            "slice_cols", [&] { return mean_all(square(slice_cols(x, 1, 4))); }, {x}, kOpTol));
        results.push_back(gradcheck(
            "slice_rows", [&] { return mean_all(square(slice_rows(x, 0, 2))); }, {x}, kOpTol));
    }
    {
        auto x = suite_leaf(rng, 3, 4, -2.0, 2.0);
        results.push_back(gradcheck(
            "sum_all", [&] { return sum_all(square(x)); }, {x}, kOpTol));
        results.push_back(gradcheck(
            "mean_all", [&] { return mean_all(square(x)); }, {x}, kOpTol));
    }
    {
        auto a = suite_leaf(rng, 4, 3, -2.0, 2.0);
        auto b = suite_leaf(rng, 4, 3, -2.0, 2.0);
        results.push_back(gradcheck(
            "rows_dot", [&] { return mean_all(rows_dot(a, b)); }, {a, b}, kOpTol));
    }
    {
        // rows_norm is smooth away from the origin; keep rows there.
        auto a = suite_leaf_nonzero(rng, 4, 3);
        results.push_back(gradcheck(
            "rows_norm", [&] { return mean_all(rows_norm(a)); }, {a}, kOpTol));
    }
    {
        auto x = suite_leaf(rng, 4, 3, -2.0, 2.0);
        auto rots = std::make_shared<std::vector<std::array<double, 9>>>();
        for (int i = 0; i < 4; ++i)
            rots->push_back(
                pose_rotation(rng.uniform(0.0, 2.0 * kPi), rng.uniform(-0.3, 0.3)).m);
        results.push_back(gradcheck(
            "rotate_rows_transposed",
            [&, rots] { return mean_all(square(rotate_rows_transposed(x, rots))); }, {x},
            kOpTol));
    }
    {
        auto x = suite_leaf(rng, 5, 3, -2.0, 2.0);
        results.push_back(gradcheck(
            "mean_rows", [&] { return mean_all(square(mean_rows(x))); }, {x}, kOpTol));
    }
    {
        // Direction loss stack over well-conditioned predictions.
        auto pred = suite_leaf_nonzero(rng, 4, 3);
        std::vector<double> tv;
        for (int i = 0; i < 4; ++i) {
            Vec3 g = direction_from_spherical(rng.uniform(0.0, 2.0 * kPi),
                                              rng.uniform(0.2, 1.3));
            tv.insert(tv.end(), {g.x, g.y, g.z});
        }
        auto targets = Tensor<double>::leaf(4, 3, std::move(tv));
        results.push_back(gradcheck(
            "loss_light", [&] { return mean_all(loss_light_rows(pred, targets)); }, {pred},
            kOpTol));
    }
    {
        // Positional superposition feeding a quadratic readout.
        EncodingConfig ecfg{4, kPi / 2, 10000.0, 12};
        auto x = suite_leaf(rng, 3, 12, -1.0, 1.0);
        std::vector<PatchPosition> pos;
        for (int i = 0; i < 3; ++i)
            pos.push_back({rng.uniform(-0.6, 0.6), rng.uniform(-0.15, 0.15),
                           rng.uniform(0.0, 2.0 * kPi)});
        results.push_back(gradcheck(
            "superpose", [&] { return mean_all(square(superpose(x, pos, ecfg))); }, {x},
            kOpTol));
    }
    {
        // End to end: the tiny model with every parameter as a leaf.
        ModelConfig cfg;
        cfg.patch_size = 4;
        cfg.d_model = 12;
        cfg.n_layers = 1;
        cfg.n_heads = 2;
        cfg.d_mlp = 16;
        cfg.enc_hidden = 8;
        cfg.dropout_rate = 0.0;
        cfg.encoding = EncodingConfig{4, kPi / 2, 10000.0, 12};
        Rng wrng(seed ^ 0x5eed);
        ModelWeights<double> w = init_weights<double>(cfg, wrng);
        SequenceSample s = detail::suite_sample(cfg, wrng);
        Tensor<double> targets = patch_targets<double>(s);
        auto rots = patch_frame_rotations(s);
        std::vector<Tensor<double>> leaves;
        for (const auto& [name, t] : w.registry()) leaves.push_back(t);
        results.push_back(gradcheck(
            "model_end_to_end",
            [&] {
                Rng fwd_rng(0);
                return sequence_loss(forward_sequence(s, w, cfg, Mode::train, fwd_rng),
                                     targets, 0.5, rots, s.gt_world);
            },
            leaves, kEndTol, 1e-5));
    }
    return results;
}

}  // namespace sunattn
