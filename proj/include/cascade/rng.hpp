#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace cascade {

// Philox 4x32-10 counter-based generator. Stateless: every draw is a pure
// function of (key, counter), so parallel workers never share RNG state and
// a draw is reproducible from its coordinates alone.
struct Philox4x32 {
    static constexpr uint32_t kMul0 = 0xD2511F53u;
    static constexpr uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr uint32_t kWeyl1 = 0xBB67AE85u;

    static std::array<uint32_t, 4> block(std::array<uint32_t, 4> ctr,
                                         std::array<uint32_t, 2> key) {
        for (int round = 0; round < 10; ++round) {
            const uint64_t p0 = static_cast<uint64_t>(kMul0) * ctr[0];
            const uint64_t p1 = static_cast<uint64_t>(kMul1) * ctr[2];
            const uint32_t hi0 = static_cast<uint32_t>(p0 >> 32);
            const uint32_t lo0 = static_cast<uint32_t>(p0);
            const uint32_t hi1 = static_cast<uint32_t>(p1 >> 32);
            const uint32_t lo1 = static_cast<uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }
};

/// Substream purpose; part of the counter so purposes never collide.
enum class Stream : uint32_t {
    path = 0,       ///< Brownian increments of the main path set
    bridge = 1,     ///< extra uniforms for the Brownian-bridge hit test
    synthetic = 2,  ///< fan-out paths for regimes with no organic visits
    probe = 3,      ///< sampling in verification checks
};

// Keyed noise source. A draw is addressed by (path, step, node, stream);
// identical coordinates give identical values regardless of worker count or
// evaluation order, which is what makes common-random-number comparisons and
// thread-invariant outputs possible.
class NoiseStream {
  public:
    explicit NoiseStream(uint64_t seed) : seed_(seed) {}

    uint64_t seed() const { return seed_; }

    /// Standard normal draw for (path, step, node).
    double gaussian(uint64_t path, uint32_t step, uint32_t node,
                    Stream stream = Stream::path) const {
        const auto r = raw(path, step, node, stream);
        const double u1 = to_unit_positive(r[0], r[1]);
        const double u2 = to_unit_positive(r[2], r[3]);
        constexpr double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    /// Uniform draw in (0, 1].
    double uniform(uint64_t path, uint32_t step, uint32_t node,
                   Stream stream) const {
        const auto r = raw(path, step, node, stream);
        return to_unit_positive(r[0], r[1]);
    }

    std::array<uint32_t, 4> raw(uint64_t path, uint32_t step, uint32_t node,
                                Stream stream) const {
        const std::array<uint32_t, 4> ctr = {
            static_cast<uint32_t>(path),
            static_cast<uint32_t>(path >> 32),
            step,
            node | (static_cast<uint32_t>(stream) << 24),
        };
        const std::array<uint32_t, 2> key = {
            static_cast<uint32_t>(seed_),
            static_cast<uint32_t>(seed_ >> 32),
        };
        return Philox4x32::block(ctr, key);
    }

  private:
    // 53-bit value mapped to (0, 1]; never 0, so log() is safe.
    static double to_unit_positive(uint32_t a, uint32_t b) {
        const uint64_t x = (static_cast<uint64_t>(a) << 21) | (b >> 11);
        return static_cast<double>(x + 1) * 0x1.0p-53;
    }

    uint64_t seed_;
};

}  // namespace cascade
