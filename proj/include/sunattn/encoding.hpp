#pragma once

// Cyclic positional encoding of (phi_h, phi_v, yaw) and its superposition
// onto patch embeddings.
//
// Per angle, entry 2i   = sin(sin(phi) * alpha / base^(2i/d_angle)),
//           entry 2i+1 = sin(cos(phi) * alpha / base^(2i/d_angle)).
// The nested (sin, cos) pair makes the encoding 2*pi-periodic while staying
// injective: with alpha <= pi/2 the outer sine is monotonic over the inner
// range [-alpha, alpha], so distinct (sin phi, cos phi) pairs keep distinct
// encodings. A patch encoding is [pe(phi_h); pe(phi_v); pe(yaw)], giving
// d_model = 3 * d_angle.

#include <cmath>
#include <vector>

#include "sunattn/geometry.hpp"
#include "sunattn/tensor.hpp"

namespace sunattn {

struct EncodingConfig {
    int d_angle = 22;        // per-angle depth, even
    double alpha = kPi / 2;  // inner amplitude
    double base = 10000.0;
    int d_model = 66;  // must equal 3 * d_angle

    void validate() const {
        if (d_angle <= 0 || d_angle % 2 != 0)
            throw std::invalid_argument("encoding: d_angle must be a positive even integer");
        if (!(alpha > 0)) throw std::invalid_argument("encoding: alpha must be positive");
        if (!(base > 0)) throw std::invalid_argument("encoding: base must be positive");
        if (d_model != 3 * d_angle)
            throw std::invalid_argument("encoding: d_model must equal 3*d_angle, got d_model=" +
                                        std::to_string(d_model) +
                                        " d_angle=" + std::to_string(d_angle));
    }
};

// Encoding of one angle; phi may be unnormalized (wrapped internally).
inline std::vector<double> cyclic_pe(double phi, const EncodingConfig& cfg) {
    cfg.validate();
    const double w = wrap_angle(phi);
    const double s = std::sin(w), c = std::cos(w);
    std::vector<double> out(cfg.d_angle);
    for (int i = 0; i < cfg.d_angle / 2; ++i) {
        const double freq = cfg.alpha / std::pow(cfg.base, 2.0 * i / cfg.d_angle);
        out[2 * i] = std::sin(s * freq);
        out[2 * i + 1] = std::sin(c * freq);
    }
    return out;
}

struct PatchPosition {
    double phi_h = 0, phi_v = 0, yaw = 0;  // radians
};

// Concatenation [pe(phi_h); pe(phi_v); pe(yaw)], in this fixed order.
inline std::vector<double> patch_positional_encoding(double phi_h, double phi_v, double yaw,
                                                     const EncodingConfig& cfg) {
    std::vector<double> out;
    out.reserve(cfg.d_model);
    for (double a : {phi_h, phi_v, yaw}) {
        auto pe = cyclic_pe(a, cfg);
        out.insert(out.end(), pe.begin(), pe.end());
    }
    return out;
}

// Adds the positional encoding of positions[i] to row i of x (seq x d_model).
// Differentiable with gradient 1 w.r.t. x; the encodings are constants.
template <typename T>
Tensor<T> superpose(const Tensor<T>& x, const std::vector<PatchPosition>& positions,
                    const EncodingConfig& cfg) {
    cfg.validate();
    if (x.rows() != positions.size())
        throw std::invalid_argument("superpose: " + std::to_string(positions.size()) +
                                    " positions for " + std::to_string(x.rows()) + " rows");
    if (x.cols() != static_cast<std::size_t>(cfg.d_model))
        throw std::invalid_argument("superpose: input width " + std::to_string(x.cols()) +
                                    " != d_model " + std::to_string(cfg.d_model));
    std::vector<T> pe(x.numel());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        auto row = patch_positional_encoding(positions[i].phi_h, positions[i].phi_v,
                                             positions[i].yaw, cfg);
        for (int j = 0; j < cfg.d_model; ++j) pe[i * cfg.d_model + j] = static_cast<T>(row[j]);
    }
    return add(x, Tensor<T>::leaf(x.rows(), x.cols(), std::move(pe)));
}

}  // namespace sunattn
