#pragma once

// Shared plumbing: error taxonomy, deterministic RNG, CRC32.

#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sunattn {

// Error taxonomy used across the library; the CLI maps these to exit codes
// (invalid_argument -> 2, DataError -> 3, NumericError -> 4).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Deterministic splitmix64-based generator. Self-contained so that datasets,
// dropout masks and weight init are reproducible independent of platform
// standard-library implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; draws exactly two uniforms per call
    // (no cached spare, so the draw count is predictable).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        // Map u1 from [0,1) to (0,1] to keep log() finite.
        double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        return r * std::cos(6.283185307179586476925287 * u2);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

  private:
    std::uint64_t state_;
};

// Derives a stream seed for item `index` under `master`. Used for
// per-sequence generator seeds so output is independent of worker count.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    Rng r(master ^ ((index + 1) * 0x9E3779B97F4A7C15ull));
    r.next_u64();
    return r.next_u64();
}

// CRC32 (IEEE 802.3, reflected) over a byte range.
inline std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0) {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint32_t crc = ~seed;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xFFu] ^ (crc >> 8);
    return ~crc;
}

inline std::string shape_string(std::size_t rows, std::size_t cols) {
    std::ostringstream os;
    os << rows << "x" << cols;
    return os.str();
}

}  // namespace sunattn
