#pragma once

// Dataset directory layout:
//   manifest.json  - version, counts, generation-parameter echo, checksums
//   patches.f32le  - all pixels, little-endian float32, sequence order ->
//                    patch order -> row-major RGB
//   meta.jsonl     - one JSON object per sequence (ids, poses, crop offsets,
//                    sun direction); angles in degrees on disk
//
// Error kinds are distinguishable by message prefix: "dataset version",
// "dataset checksum", "dataset structure" (all DataError).

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sunattn/common.hpp"
#include "sunattn/sample.hpp"
#include "sunattn/synth.hpp"

namespace sunattn {

inline constexpr int kDatasetVersion = 1;

namespace detail {

inline void append_f32le(std::vector<unsigned char>& out, float v) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    out.push_back(static_cast<unsigned char>(bits & 0xFF));
    out.push_back(static_cast<unsigned char>((bits >> 8) & 0xFF));
    out.push_back(static_cast<unsigned char>((bits >> 16) & 0xFF));
    out.push_back(static_cast<unsigned char>((bits >> 24) & 0xFF));
}

inline float read_f32le(const unsigned char* p) {
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                               (static_cast<std::uint32_t>(p[1]) << 8) |
                               (static_cast<std::uint32_t>(p[2]) << 16) |
                               (static_cast<std::uint32_t>(p[3]) << 24);
    return std::bit_cast<float>(bits);
}

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path,
                                                  const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(std::string("dataset structure: missing ") + what + ": " +
                             path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path,
                             const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("dataset: cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("dataset: write failed: " + path.string());
}

}  // namespace detail

// Writes one dataset split. All samples must share patch_size and the k x n
// layout; `spec` echoes the generation parameters and `master_seed` the seed
// that derived the per-sequence streams.
inline void write_dataset(const std::vector<SequenceSample>& samples, const std::string& dir,
                          const SceneSpec& spec, std::uint64_t master_seed) {
    namespace fs = std::filesystem;
    if (samples.empty()) throw DataError("dataset: refusing to write an empty dataset");
    for (const auto& s : samples) s.validate();
    const std::size_t k = samples.front().frames.size();
    const std::size_t kn = samples.front().patches.size();
    const int ps = samples.front().patch_size;
    for (const auto& s : samples)
        if (s.frames.size() != k || s.patches.size() != kn || s.patch_size != ps)
            throw DataError("dataset: samples disagree on k/n/patch_size");
    if (kn % k != 0) throw DataError("dataset: patch count not a multiple of frame count");
    const std::size_t n = kn / k;

    fs::create_directories(dir);

    // Pixel blob.
    std::vector<unsigned char> blob;
    blob.reserve(samples.size() * kn * static_cast<std::size_t>(ps) * ps * 3 * 4);
    for (const auto& s : samples)
        for (const auto& p : s.patches)
            for (float v : p.pixels) detail::append_f32le(blob, v);
    detail::write_file_bytes(fs::path(dir) / "patches.f32le", blob);

    // Per-sequence metadata.
    std::string meta;
    for (const auto& s : samples) {
        nlohmann::json j;
        j["sequence_id"] = s.sequence_id;
        auto [az, alt] = spherical_from_direction(s.gt_world);
        j["sun"] = {{"azimuth_deg", rad2deg(az)}, {"altitude_deg", rad2deg(alt)}};
        for (const auto& f : s.frames)
            j["frames"].push_back({{"frame_id", f.frame_id},
                                   {"yaw_deg", rad2deg(f.yaw)},
                                   {"pitch_deg", rad2deg(f.pitch)}});
        for (const auto& p : s.patches)
            j["patches"].push_back({{"frame_index", p.frame_index},
                                    {"phi_h_deg", rad2deg(p.phi_h)},
                                    {"phi_v_deg", rad2deg(p.phi_v)},
                                    {"outlier", p.is_outlier}});
        meta += j.dump();
        meta += "\n";
    }
    detail::write_file_bytes(fs::path(dir) / "meta.jsonl",
                             std::vector<unsigned char>(meta.begin(), meta.end()));

    nlohmann::json m;
    m["version"] = kDatasetVersion;
    m["patch_size"] = ps;
    m["channels"] = 3;
    m["counts"] = {{"sequences", samples.size()},
                   {"frames_per_sequence", k},
                   {"crops_per_frame", n}};
    m["spec"] = {{"p_out", spec.p_out},
                 {"sigma", spec.sigma},
                 {"yaw_step_std_deg", rad2deg(spec.yaw_step_std)},
                 {"pitch_max_deg", rad2deg(spec.pitch_max)},
                 {"fov_h_deg", rad2deg(spec.fov_h)},
                 {"fov_v_deg", rad2deg(spec.fov_v)},
                 {"crop_fov_h_deg", rad2deg(spec.crop_fov_h())},
                 {"crop_fov_v_deg", rad2deg(spec.crop_fov_v())},
                 {"frame_px", {spec.frame_px_w, spec.frame_px_h}},
                 {"master_seed", master_seed}};
    m["checksums"] = {{"patches_crc32", crc32(blob.data(), blob.size())},
                      {"meta_crc32", crc32(meta.data(), meta.size())}};
    const std::string mtext = m.dump(2) + "\n";
    detail::write_file_bytes(fs::path(dir) / "manifest.json",
                             std::vector<unsigned char>(mtext.begin(), mtext.end()));
}

inline nlohmann::json read_manifest(const std::string& dir) {
    auto bytes = detail::read_file_bytes(std::filesystem::path(dir) / "manifest.json",
                                         "manifest.json");
    try {
        return nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("dataset structure: manifest.json unparsable: ") + e.what());
    }
}

inline std::vector<SequenceSample> read_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    nlohmann::json m = read_manifest(dir);

    int version = -1;
    std::size_t n_seq = 0, k = 0, n = 0;
    int ps = 0, channels = 0;
    std::uint32_t want_patches_crc = 0, want_meta_crc = 0;
    try {
        version = m.at("version").get<int>();
        if (version != kDatasetVersion)
            throw DataError("dataset version mismatch: file has " + std::to_string(version) +
                            ", reader expects " + std::to_string(kDatasetVersion));
        ps = m.at("patch_size").get<int>();
        channels = m.at("channels").get<int>();
        n_seq = m.at("counts").at("sequences").get<std::size_t>();
        k = m.at("counts").at("frames_per_sequence").get<std::size_t>();
        n = m.at("counts").at("crops_per_frame").get<std::size_t>();
        want_patches_crc = m.at("checksums").at("patches_crc32").get<std::uint32_t>();
        want_meta_crc = m.at("checksums").at("meta_crc32").get<std::uint32_t>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("dataset structure: manifest field missing or mistyped: ") +
                        e.what());
    }
    if (channels != 3)
        throw DataError("dataset structure: unsupported channel count " +
                        std::to_string(channels));
    if (ps < 2 || n_seq == 0 || k == 0 || n == 0)
        throw DataError("dataset structure: implausible counts in manifest");

    const auto blob = detail::read_file_bytes(fs::path(dir) / "patches.f32le", "patches.f32le");
    const std::size_t px_per_patch = static_cast<std::size_t>(ps) * ps * 3;
    const std::size_t want_bytes = n_seq * k * n * px_per_patch * 4;
    if (blob.size() != want_bytes)
        throw DataError("dataset structure: patches.f32le holds " + std::to_string(blob.size()) +
                        " bytes, manifest implies " + std::to_string(want_bytes));
    if (crc32(blob.data(), blob.size()) != want_patches_crc)
        throw DataError("dataset checksum mismatch: patches.f32le");

    const auto meta_bytes = detail::read_file_bytes(fs::path(dir) / "meta.jsonl", "meta.jsonl");
    if (crc32(meta_bytes.data(), meta_bytes.size()) != want_meta_crc)
        throw DataError("dataset checksum mismatch: meta.jsonl");

    // Split into lines.
    std::vector<std::string> lines;
    {
        std::string cur;
        for (unsigned char c : meta_bytes) {
            if (c == '\n') {
                if (!cur.empty()) lines.push_back(std::move(cur));
                cur.clear();
            } else {
                cur.push_back(static_cast<char>(c));
            }
        }
        if (!cur.empty()) lines.push_back(std::move(cur));
    }
    if (lines.size() != n_seq)
        throw DataError("dataset structure: meta.jsonl has " + std::to_string(lines.size()) +
                        " records, manifest says " + std::to_string(n_seq));

    std::vector<SequenceSample> samples;
    samples.reserve(n_seq);
    const unsigned char* cursor = blob.data();
    for (std::size_t si = 0; si < n_seq; ++si) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(lines[si]);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("dataset structure: meta line " + std::to_string(si + 1) +
                            " unparsable: " + e.what());
        }
        SequenceSample s;
        s.patch_size = ps;
        try {
            s.sequence_id = j.at("sequence_id").get<std::uint64_t>();
            s.gt_world = direction_from_spherical(
                deg2rad(j.at("sun").at("azimuth_deg").get<double>()),
                deg2rad(j.at("sun").at("altitude_deg").get<double>()));
            for (const auto& fj : j.at("frames")) {
                CameraFrame f;
                f.frame_id = fj.at("frame_id").get<int>();
                f.yaw = deg2rad(fj.at("yaw_deg").get<double>());
                f.pitch = deg2rad(fj.at("pitch_deg").get<double>());
                s.frames.push_back(f);
            }
            for (const auto& pj : j.at("patches")) {
                PatchRecord p;
                p.frame_index = pj.at("frame_index").get<std::uint32_t>();
                p.phi_h = deg2rad(pj.at("phi_h_deg").get<double>());
                p.phi_v = deg2rad(pj.at("phi_v_deg").get<double>());
                p.is_outlier = pj.at("outlier").get<bool>();
                p.pixels.resize(px_per_patch);
                for (std::size_t i = 0; i < px_per_patch; ++i, cursor += 4)
                    p.pixels[i] = detail::read_f32le(cursor);
                s.patches.push_back(std::move(p));
            }
        } catch (const nlohmann::json::exception& e) {
            throw DataError("dataset structure: meta line " + std::to_string(si + 1) +
                            " field missing or mistyped: " + e.what());
        }
        if (s.frames.size() != k || s.patches.size() != k * n)
            throw DataError("dataset structure: sequence " + std::to_string(si) +
                            " record counts disagree with manifest");
        s.validate();
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace sunattn
