#pragma once

// Patch encoder + transformer + regression head.
//
// Each RGB patch is flattened and pushed through a two-layer affine+ReLU
// encoder into a d_model embedding. Positional encodings of (phi_h, phi_v,
// frame yaw) are superposed, the sequence runs through pre-norm multi-head
// self-attention blocks (x + MHA(LN(x)), then + MLP(LN(.))), and a final
// layer norm plus dense head emits one raw camera-frame 3-vector per patch.
// Outputs are intentionally unnormalized; the loss owns the norm.

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "sunattn/encoding.hpp"
#include "sunattn/sample.hpp"
#include "sunattn/tensor.hpp"

namespace sunattn {

struct ModelConfig {
    int patch_size = 16;  // square, RGB
    int d_model = 66;
    int n_layers = 2;
    int n_heads = 2;
    int d_mlp = 128;
    int enc_hidden = 128;
    double dropout_rate = 0.1;
    EncodingConfig encoding{22, kPi / 2, 10000.0, 66};

    int patch_dim() const { return patch_size * patch_size * 3; }
    int d_head() const { return d_model / n_heads; }

    void validate() const {
        if (patch_size <= 0) throw std::invalid_argument("model: patch_size must be positive");
        if (n_layers <= 0 || n_heads <= 0 || d_mlp <= 0 || enc_hidden <= 0)
            throw std::invalid_argument("model: layer/head/width counts must be positive");
        if (d_model % n_heads != 0)
            throw std::invalid_argument("model: d_model " + std::to_string(d_model) +
                                        " not divisible by n_heads " + std::to_string(n_heads));
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
            throw std::invalid_argument("model: dropout_rate must lie in [0,1)");
        encoding.validate();
        if (d_model != encoding.d_model)
            throw std::invalid_argument("model: d_model " + std::to_string(d_model) +
                                        " != encoding d_model " +
                                        std::to_string(encoding.d_model));
    }

    // Desk-scale defaults: small enough to train in minutes on a CPU.
    static ModelConfig desk() { return ModelConfig{}; }

    // Full-scale hyperparameters; d_model rounded 512 -> 516 so it stays a
    // multiple of three angle encodings (and of n_heads).
    static ModelConfig paper() {
        ModelConfig c;
        c.patch_size = 224;
        c.d_model = 516;
        c.n_layers = 4;
        c.n_heads = 4;
        c.d_mlp = 1024;
        c.enc_hidden = 128;
        c.dropout_rate = 0.2;
        c.encoding = EncodingConfig{172, kPi / 2, 10000.0, 516};
        return c;
    }
};

template <typename T>
struct LayerWeights {
    Tensor<T> ln1_gain, ln1_bias;
    Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<T> ln2_gain, ln2_bias;
    Tensor<T> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

// Model parameters. The registry() order is the canonical parameter order:
// initialization draws, optimizer state, and checkpoint sections all follow
// it, so it must never be reordered.
template <typename T>
struct ModelWeights {
    Tensor<T> enc_w1, enc_b1, enc_w2, enc_b2;
    std::vector<LayerWeights<T>> layers;
    Tensor<T> final_gain, final_bias;
    Tensor<T> head_w, head_b;

    std::vector<std::pair<std::string, Tensor<T>>> registry() const {
        std::vector<std::pair<std::string, Tensor<T>>> r;
        r.emplace_back("enc.w1", enc_w1);
        r.emplace_back("enc.b1", enc_b1);
        r.emplace_back("enc.w2", enc_w2);
        r.emplace_back("enc.b2", enc_b2);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& lw = layers[l];
            const std::string p = "block" + std::to_string(l) + ".";
            r.emplace_back(p + "ln1.gain", lw.ln1_gain);
            r.emplace_back(p + "ln1.bias", lw.ln1_bias);
            r.emplace_back(p + "wq", lw.wq);
            r.emplace_back(p + "bq", lw.bq);
            r.emplace_back(p + "wk", lw.wk);
            r.emplace_back(p + "bk", lw.bk);
            r.emplace_back(p + "wv", lw.wv);
            r.emplace_back(p + "bv", lw.bv);
            r.emplace_back(p + "wo", lw.wo);
            r.emplace_back(p + "bo", lw.bo);
            r.emplace_back(p + "ln2.gain", lw.ln2_gain);
            r.emplace_back(p + "ln2.bias", lw.ln2_bias);
            r.emplace_back(p + "mlp.w1", lw.mlp_w1);
            r.emplace_back(p + "mlp.b1", lw.mlp_b1);
            r.emplace_back(p + "mlp.w2", lw.mlp_w2);
            r.emplace_back(p + "mlp.b2", lw.mlp_b2);
        }
        r.emplace_back("final.ln.gain", final_gain);
        r.emplace_back("final.ln.bias", final_bias);
        r.emplace_back("head.w", head_w);
        r.emplace_back("head.b", head_b);
        return r;
    }

    void zero_grad() {
        for (auto& [name, t] : registry()) t.zero_grad();
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : registry()) n += t.numel();
        return n;
    }
};

namespace detail {

template <typename T>
Tensor<T> xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / (static_cast<double>(fan_in) + fan_out));
    std::vector<T> v(fan_in * fan_out);
    for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
    return Tensor<T>::leaf(fan_in, fan_out, std::move(v), true);
}

template <typename T>
Tensor<T> zeros_param(std::size_t cols) {
    return Tensor<T>::zeros(1, cols, true);
}

template <typename T>
Tensor<T> ones_param(std::size_t cols) {
    return Tensor<T>::leaf(1, cols, std::vector<T>(cols, T(1)), true);
}

}  // namespace detail

// Fresh parameters: affine weights uniform in +-sqrt(6/(fan_in+fan_out)),
// biases zero, layer-norm gains one. Draws consumed in registry order.
template <typename T>
ModelWeights<T> init_weights(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    using detail::xavier;
    const std::size_t d = cfg.d_model;
    ModelWeights<T> w;
    w.enc_w1 = xavier<T>(cfg.patch_dim(), cfg.enc_hidden, rng);
    w.enc_b1 = detail::zeros_param<T>(cfg.enc_hidden);
    w.enc_w2 = xavier<T>(cfg.enc_hidden, d, rng);
    w.enc_b2 = detail::zeros_param<T>(d);
    for (int l = 0; l < cfg.n_layers; ++l) {
        LayerWeights<T> lw;
        lw.ln1_gain = detail::ones_param<T>(d);
        lw.ln1_bias = detail::zeros_param<T>(d);
        lw.wq = xavier<T>(d, d, rng);
        lw.bq = detail::zeros_param<T>(d);
        lw.wk = xavier<T>(d, d, rng);
        lw.bk = detail::zeros_param<T>(d);
        lw.wv = xavier<T>(d, d, rng);
        lw.bv = detail::zeros_param<T>(d);
        lw.wo = xavier<T>(d, d, rng);
        lw.bo = detail::zeros_param<T>(d);
        lw.ln2_gain = detail::ones_param<T>(d);
        lw.ln2_bias = detail::zeros_param<T>(d);
        lw.mlp_w1 = xavier<T>(d, cfg.d_mlp, rng);
        lw.mlp_b1 = detail::zeros_param<T>(cfg.d_mlp);
        lw.mlp_w2 = xavier<T>(cfg.d_mlp, d, rng);
        lw.mlp_b2 = detail::zeros_param<T>(d);
        w.layers.push_back(std::move(lw));
    }
    w.final_gain = detail::ones_param<T>(d);
    w.final_bias = detail::zeros_param<T>(d);
    w.head_w = xavier<T>(d, 3, rng);
    w.head_b = detail::zeros_param<T>(3);
    return w;
}

// Converts weights between scalar types (values only; grads reset).
template <typename To, typename From>
ModelWeights<To> cast_weights(const ModelWeights<From>& w) {
    auto conv = [](const Tensor<From>& t) {
        std::vector<To> v(t.numel());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<To>(t.values()[i]);
        return Tensor<To>::leaf(t.rows(), t.cols(), std::move(v), true);
    };
    ModelWeights<To> o;
    o.enc_w1 = conv(w.enc_w1);
    o.enc_b1 = conv(w.enc_b1);
    o.enc_w2 = conv(w.enc_w2);
    o.enc_b2 = conv(w.enc_b2);
    for (const auto& lw : w.layers) {
        LayerWeights<To> n;
        n.ln1_gain = conv(lw.ln1_gain);
        n.ln1_bias = conv(lw.ln1_bias);
        n.wq = conv(lw.wq);
        n.bq = conv(lw.bq);
        n.wk = conv(lw.wk);
        n.bk = conv(lw.bk);
        n.wv = conv(lw.wv);
        n.bv = conv(lw.bv);
        n.wo = conv(lw.wo);
        n.bo = conv(lw.bo);
        n.ln2_gain = conv(lw.ln2_gain);
        n.ln2_bias = conv(lw.ln2_bias);
        n.mlp_w1 = conv(lw.mlp_w1);
        n.mlp_b1 = conv(lw.mlp_b1);
        n.mlp_w2 = conv(lw.mlp_w2);
        n.mlp_b2 = conv(lw.mlp_b2);
        o.layers.push_back(std::move(n));
    }
    o.final_gain = conv(w.final_gain);
    o.final_bias = conv(w.final_bias);
    o.head_w = conv(w.head_w);
    o.head_b = conv(w.head_b);
    return o;
}

// Encoder over a batch of flattened patches (seq x patch_dim) -> seq x d_model.
template <typename T>
Tensor<T> encode_patches(const Tensor<T>& flat, const ModelWeights<T>& w) {
    auto h = relu(add_bias(matmul(flat, w.enc_w1), w.enc_b1));
    return add_bias(matmul(h, w.enc_w2), w.enc_b2);
}

// Single-patch convenience wrapper (1 x d_model).
template <typename T>
Tensor<T> encode_patch(const std::vector<T>& pixels, const ModelWeights<T>& w,
                       const ModelConfig& cfg) {
    if (pixels.size() != static_cast<std::size_t>(cfg.patch_dim()))
        throw std::invalid_argument("encode_patch: expected " + std::to_string(cfg.patch_dim()) +
                                    " pixel values, got " + std::to_string(pixels.size()));
    auto x = Tensor<T>::leaf(1, pixels.size(), pixels);
    return encode_patches(x, w);
}

// Multi-head self attention weights for one head (exposed for tests):
// softmax(q kT / sqrt(d_head)) with optional masked key columns.
template <typename T>
Tensor<T> attention_probs(const Tensor<T>& q_head, const Tensor<T>& k_head,
                          const std::vector<char>* masked_keys = nullptr) {
    const std::size_t dh = q_head.cols();
    auto scores = scale(matmul(q_head, transpose(k_head)), static_cast<T>(1.0 / std::sqrt(
                                                               static_cast<double>(dh))));
    if (masked_keys) {
        const std::size_t nk = k_head.rows();
        std::vector<T> bias(nk, T(0));
        for (std::size_t j = 0; j < nk; ++j)
            if ((*masked_keys)[j]) bias[j] = T(-1e30);
        scores = add_bias(scores, Tensor<T>::leaf(1, nk, std::move(bias)));
    }
    return softmax_rows(scores);
}

// Pre-norm residual transformer block. Dropout (train mode only) applies to
// the attention probabilities of each head in head order, then to the
// attention output projection, then to the MLP output — that draw order is
// part of the determinism contract. `masked_keys`, when given, removes the
// flagged patches from every head's key set (test hook).
template <typename T>
Tensor<T> attention_block(const Tensor<T>& x, const LayerWeights<T>& lw, const ModelConfig& cfg,
                          Mode mode, Rng& rng, const std::vector<char>* masked_keys = nullptr) {
    const int dh = cfg.d_head();
    auto h = layer_norm(x, lw.ln1_gain, lw.ln1_bias);
    auto q = add_bias(matmul(h, lw.wq), lw.bq);
    auto k = add_bias(matmul(h, lw.wk), lw.bk);
    auto v = add_bias(matmul(h, lw.wv), lw.bv);

    std::vector<Tensor<T>> heads;
    heads.reserve(cfg.n_heads);
    for (int i = 0; i < cfg.n_heads; ++i) {
        auto qh = slice_cols(q, i * dh, (i + 1) * dh);
        auto kh = slice_cols(k, i * dh, (i + 1) * dh);
        auto vh = slice_cols(v, i * dh, (i + 1) * dh);
        auto probs = dropout(attention_probs(qh, kh, masked_keys), cfg.dropout_rate, rng, mode);
        heads.push_back(matmul(probs, vh));
    }
    Tensor<T> cat = heads[0];
    for (int i = 1; i < cfg.n_heads; ++i) cat = concat_cols(cat, heads[i]);
    auto attn = dropout(add_bias(matmul(cat, lw.wo), lw.bo), cfg.dropout_rate, rng, mode);
    auto x1 = add(x, attn);

    auto m = layer_norm(x1, lw.ln2_gain, lw.ln2_bias);
    auto mlp = add_bias(matmul(relu(add_bias(matmul(m, lw.mlp_w1), lw.mlp_b1)), lw.mlp_w2),
                        lw.mlp_b2);
    return add(x1, dropout(mlp, cfg.dropout_rate, rng, mode));
}

// Flattens a sample's patches into one (k*n x patch_dim) untracked leaf.
template <typename T>
Tensor<T> patch_matrix(const SequenceSample& s, const ModelConfig& cfg) {
    if (s.patch_size != cfg.patch_size)
        throw std::invalid_argument("model: sample patch size " + std::to_string(s.patch_size) +
                                    " != config " + std::to_string(cfg.patch_size));
    s.validate();
    const std::size_t dim = cfg.patch_dim();
    std::vector<T> flat;
    flat.reserve(s.patches.size() * dim);
    for (const auto& p : s.patches)
        for (float px : p.pixels) flat.push_back(static_cast<T>(px));
    return Tensor<T>::leaf(s.patches.size(), dim, std::move(flat));
}

// Positional encoding inputs per patch: crop offsets plus owning-frame yaw.
inline std::vector<PatchPosition> patch_positions(const SequenceSample& s) {
    std::vector<PatchPosition> pos;
    pos.reserve(s.patches.size());
    for (const auto& p : s.patches)
        pos.push_back({p.phi_h, p.phi_v, s.frames[p.frame_index].yaw});
    return pos;
}

// Full forward pass: k*n raw camera-frame sun direction estimates (k*n x 3).
template <typename T>
Tensor<T> forward_sequence(const SequenceSample& s, const ModelWeights<T>& w,
                           const ModelConfig& cfg, Mode mode, Rng& rng,
                           const std::vector<char>* masked_keys = nullptr) {
    cfg.validate();
    auto x = superpose(encode_patches(patch_matrix<T>(s, cfg), w), patch_positions(s),
                       cfg.encoding);
    for (const auto& lw : w.layers) x = attention_block(x, lw, cfg, mode, rng, masked_keys);
    x = layer_norm(x, w.final_gain, w.final_bias);
    return add_bias(matmul(x, w.head_w), w.head_b);
}

}  // namespace sunattn
