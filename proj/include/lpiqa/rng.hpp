#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace lpiqa {

/// Counter-based generator built on Philox4x32-10.
///
/// The 64-bit seed is the Philox key; the 128-bit counter is split into a
/// 64-bit block index (low words) and the 64-bit stream id (high words), so
/// every (seed, stream_id) pair addresses an independent, platform-stable
/// sequence. Uniform doubles take the top 53 bits of a 64-bit draw. Normals use
/// the Box-Muller transform on (1 - u1, u2) and hand out both outputs in order.
class SeededRng {
public:
    SeededRng(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_; }

    std::uint32_t next_u32();
    std::uint64_t next_u64();

    /// Uniform in [0, 1).
    double uniform();
    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);
    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n);
    /// Standard normal.
    double normal();

private:
    void refill();

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int used_ = 4;
    bool has_spare_normal_ = false;
    double spare_normal_ = 0.0;
};

SeededRng make_rng(std::uint64_t seed, std::uint64_t stream_id);

/// One Philox4x32-10 block. Exposed for known-answer testing.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Deterministic child seed from a parent seed and a textual tag plus index.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag, std::uint64_t index = 0);

/// Stream ids used across the toolkit. Fixed values keep manifests stable.
namespace streams {
inline constexpr std::uint64_t kMotionAngle = 1;
inline constexpr std::uint64_t kNoiseField = 2;
inline constexpr std::uint64_t kIllumination = 3;
inline constexpr std::uint64_t kSmokePlate = 4;
inline constexpr std::uint64_t kSmokeChoice = 5;
inline constexpr std::uint64_t kPhantom = 6;
inline constexpr std::uint64_t kInit = 7;
inline constexpr std::uint64_t kShuffle = 8;
}  // namespace streams

}  // namespace lpiqa
