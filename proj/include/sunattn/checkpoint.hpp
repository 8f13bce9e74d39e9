#pragma once

// Checkpoint container:
//
//   bytes 0..7   magic "SUNCKPT1"
//   bytes 8..11  u32le header length H
//   bytes 12..   JSON header (H bytes): format_version, model + encoding
//                echo, train_meta, named section index (rows, cols, offset
//                in floats), optimizer flag + step count
//   ...          payload: little-endian float32 blob — weight sections in
//                registry order, then (when optimizer state is included) the
//                first- and second-moment sections in the same order
//   last 4       u32le CRC32 over everything before it
//
// Loading validates magic, version, checksum, then the section index against
// the shapes implied by the stored ModelConfig; any mismatch names the
// offending section. Round trips are bit-exact.

#include <bit>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sunattn/common.hpp"
#include "sunattn/model.hpp"

namespace sunattn {

inline constexpr char kCheckpointMagic[8] = {'S', 'U', 'N', 'C', 'K', 'P', 'T', '1'};
inline constexpr int kCheckpointVersion = 1;

struct TrainMeta {
    int epoch = 0;
    double val_mean_err_deg = 0.0;
    std::uint64_t seed = 0;
};

// Optimizer moment accumulators, parallel to the weight registry.
template <typename T>
struct AdamState {
    std::vector<std::vector<T>> m, v;
    std::uint64_t t = 0;

    template <typename W>
    static AdamState init(const W& weights) {
        AdamState st;
        for (const auto& [name, tensor] : weights.registry()) {
            st.m.emplace_back(tensor.numel(), T(0));
            st.v.emplace_back(tensor.numel(), T(0));
        }
        return st;
    }
};

struct LoadedCheckpoint {
    ModelConfig config;
    ModelWeights<float> weights;
    TrainMeta meta;
    std::optional<AdamState<float>> optimizer;
};

namespace detail {

inline void append_u32le(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xFF));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xFF));
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xFF));
    out.push_back(static_cast<unsigned char>((v >> 24) & 0xFF));
}

inline std::uint32_t parse_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void append_f32le_ckpt(std::vector<unsigned char>& out, float v) {
    append_u32le(out, std::bit_cast<std::uint32_t>(v));
}

// Zero-valued weights with the shapes the config implies; the reference
// layout checkpoints are validated against.
inline ModelWeights<float> shaped_weights(const ModelConfig& cfg) {
    Rng rng(0);
    ModelWeights<float> w = init_weights<float>(cfg, rng);
    return w;
}

inline nlohmann::json model_json(const ModelConfig& m) {
    return {{"patch_size", m.patch_size},  {"d_model", m.d_model},
            {"n_layers", m.n_layers},      {"n_heads", m.n_heads},
            {"d_mlp", m.d_mlp},            {"enc_hidden", m.enc_hidden},
            {"dropout_rate", m.dropout_rate}};
}

inline nlohmann::json encoding_json(const EncodingConfig& e) {
    return {{"d_angle", e.d_angle}, {"alpha", e.alpha}, {"base", e.base},
            {"d_model", e.d_model}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig m;
    const auto& mj = j.at("model");
    m.patch_size = mj.at("patch_size").get<int>();
    m.d_model = mj.at("d_model").get<int>();
    m.n_layers = mj.at("n_layers").get<int>();
    m.n_heads = mj.at("n_heads").get<int>();
    m.d_mlp = mj.at("d_mlp").get<int>();
    m.enc_hidden = mj.at("enc_hidden").get<int>();
    m.dropout_rate = mj.at("dropout_rate").get<double>();
    const auto& ej = j.at("encoding");
    m.encoding.d_angle = ej.at("d_angle").get<int>();
    m.encoding.alpha = ej.at("alpha").get<double>();
    m.encoding.base = ej.at("base").get<double>();
    m.encoding.d_model = ej.at("d_model").get<int>();
    return m;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const ModelWeights<float>& weights,
                            const ModelConfig& cfg, const TrainMeta& meta,
                            const AdamState<float>* optimizer = nullptr) {
    cfg.validate();
    auto reg = weights.registry();

    nlohmann::json header;
    header["format_version"] = kCheckpointVersion;
    header["model"] = detail::model_json(cfg);
    header["encoding"] = detail::encoding_json(cfg.encoding);
    header["train_meta"] = {{"epoch", meta.epoch},
                            {"val_mean_err_deg", meta.val_mean_err_deg},
                            {"seed", meta.seed}};
    std::size_t offset = 0;
    for (const auto& [name, t] : reg) {
        header["sections"].push_back(
            {{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}, {"offset", offset}});
        offset += t.numel();
    }
    header["optimizer"] = {{"included", optimizer != nullptr},
                           {"t", optimizer ? optimizer->t : 0}};
    const std::string htext = header.dump();

    std::vector<unsigned char> bytes;
    bytes.insert(bytes.end(), kCheckpointMagic, kCheckpointMagic + 8);
    detail::append_u32le(bytes, static_cast<std::uint32_t>(htext.size()));
    bytes.insert(bytes.end(), htext.begin(), htext.end());
    for (const auto& [name, t] : reg)
        for (float v : t.values()) detail::append_f32le_ckpt(bytes, v);
    if (optimizer) {
        if (optimizer->m.size() != reg.size() || optimizer->v.size() != reg.size())
            throw std::invalid_argument("checkpoint: optimizer state does not match weights");
        for (std::size_t i = 0; i < reg.size(); ++i)
            for (float v : optimizer->m[i]) detail::append_f32le_ckpt(bytes, v);
        for (std::size_t i = 0; i < reg.size(); ++i)
            for (float v : optimizer->v[i]) detail::append_f32le_ckpt(bytes, v);
    }
    detail::append_u32le(bytes, crc32(bytes.data(), bytes.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("checkpoint: cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("checkpoint: write failed: " + path);
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 16) throw DataError("checkpoint: file too short: " + path);
    if (!std::equal(kCheckpointMagic, kCheckpointMagic + 8, bytes.begin()))
        throw DataError("checkpoint magic mismatch: not a checkpoint file: " + path);

    const std::uint32_t stored_crc = detail::parse_u32le(bytes.data() + bytes.size() - 4);
    if (crc32(bytes.data(), bytes.size() - 4) != stored_crc)
        throw DataError("checkpoint checksum mismatch: " + path);

    const std::uint32_t hlen = detail::parse_u32le(bytes.data() + 8);
    if (12 + static_cast<std::size_t>(hlen) + 4 > bytes.size())
        throw DataError("checkpoint: header length exceeds file size");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + hlen);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: header unparsable: ") + e.what());
    }

    LoadedCheckpoint ck;
    bool opt_included = false;
    std::uint64_t opt_t = 0;
    try {
        const int version = header.at("format_version").get<int>();
        if (version != kCheckpointVersion)
            throw DataError("checkpoint version mismatch: file has " + std::to_string(version) +
                            ", reader expects " + std::to_string(kCheckpointVersion));
        ck.config = detail::config_from_json(header);
        ck.meta.epoch = header.at("train_meta").at("epoch").get<int>();
        ck.meta.val_mean_err_deg = header.at("train_meta").at("val_mean_err_deg").get<double>();
        ck.meta.seed = header.at("train_meta").at("seed").get<std::uint64_t>();
        opt_included = header.at("optimizer").at("included").get<bool>();
        opt_t = header.at("optimizer").at("t").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: header field missing or mistyped: ") + e.what());
    }
    ck.config.validate();

    // Expected layout from the stored config.
    ck.weights = detail::shaped_weights(ck.config);
    auto reg = ck.weights.registry();
    const auto& sections = header.at("sections");
    if (!sections.is_array() || sections.size() != reg.size())
        throw DataError("checkpoint: section count " + std::to_string(sections.size()) +
                        " does not match config (" + std::to_string(reg.size()) + " expected)");

    std::size_t total_floats = 0;
    for (std::size_t i = 0; i < reg.size(); ++i) {
        const auto& sj = sections[i];
        std::string name;
        std::size_t rows = 0, cols = 0, off = 0;
        try {
            name = sj.at("name").get<std::string>();
            rows = sj.at("rows").get<std::size_t>();
            cols = sj.at("cols").get<std::size_t>();
            off = sj.at("offset").get<std::size_t>();
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("checkpoint: malformed section entry: ") + e.what());
        }
        if (name != reg[i].first)
            throw DataError("checkpoint: section '" + name + "' where '" + reg[i].first +
                            "' was expected");
        if (rows != reg[i].second.rows() || cols != reg[i].second.cols())
            throw DataError("checkpoint: section '" + name + "' has shape " +
                            std::to_string(rows) + "x" + std::to_string(cols) +
                            ", config implies " + shape_string(reg[i].second.rows(),
                                                               reg[i].second.cols()));
        if (off != total_floats)
            throw DataError("checkpoint: section '" + name + "' offset " + std::to_string(off) +
                            " does not match layout");
        total_floats += rows * cols;
    }

    const std::size_t payload_floats = opt_included ? total_floats * 3 : total_floats;
    const std::size_t want_bytes = 12 + hlen + payload_floats * 4 + 4;
    if (bytes.size() != want_bytes)
        throw DataError("checkpoint: payload holds " + std::to_string(bytes.size()) +
                        " bytes, header implies " + std::to_string(want_bytes));

    const unsigned char* blob = bytes.data() + 12 + hlen;
    auto read_f32 = [&](std::size_t float_index) {
        return std::bit_cast<float>(detail::parse_u32le(blob + float_index * 4));
    };
    std::size_t cursor = 0;
    for (auto& [name, t] : reg) {
        for (std::size_t i = 0; i < t.numel(); ++i) t.values()[i] = read_f32(cursor + i);
        cursor += t.numel();
    }
    if (opt_included) {
        AdamState<float> st;
        st.t = opt_t;
        for (auto& [name, t] : reg) {
            std::vector<float> m(t.numel());
            for (std::size_t i = 0; i < m.size(); ++i) m[i] = read_f32(cursor + i);
            cursor += m.size();
            st.m.push_back(std::move(m));
        }
        for (auto& [name, t] : reg) {
            std::vector<float> v(t.numel());
            for (std::size_t i = 0; i < v.size(); ++i) v[i] = read_f32(cursor + i);
            cursor += v.size();
            st.v.push_back(std::move(v));
        }
        ck.optimizer = std::move(st);
    }
    return ck;
}

}  // namespace sunattn
