#pragma once

// Counter-based random number generation (Philox4x32-10).
//
// Every stream is addressed by (key, replication, stream) and produces the
// same output regardless of call interleaving elsewhere, which is what makes
// parallel Monte Carlo runs byte-reproducible. The 128-bit counter is laid
// out as [replication | stream | 64-bit draw counter], so distinct
// (replication, stream) pairs never share a counter block.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace noisediff {

namespace detail {

inline constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
inline constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
inline constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                                  std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
        const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
        const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kPhiloxW0;
        key[1] += kPhiloxW1;
    }
    return ctr;
}

}  // namespace detail

/// Stream ids used by the library; user code may pick any other values.
enum class RngStream : std::uint32_t {
    path_noise = 0,         // Wiener increments of the latent path
    observation_noise = 1,  // measurement errors
    initial_state = 2,      // random x0 draws
    mcmc = 3,               // Metropolis chains
};

class CounterRng {
public:
    CounterRng(std::uint64_t key, std::uint32_t replication, std::uint32_t stream)
        : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)},
          prefix_{replication, stream} {}

    CounterRng(std::uint64_t key, std::uint32_t replication, RngStream stream)
        : CounterRng(key, replication, static_cast<std::uint32_t>(stream)) {}

    std::uint64_t next_u64() {
        if (word_ == 0) {
            block_ = detail::philox4x32_10(
                {static_cast<std::uint32_t>(draw_), static_cast<std::uint32_t>(draw_ >> 32),
                 prefix_[1], prefix_[0]},
                key_);
            ++draw_;
            word_ = 2;
            return (static_cast<std::uint64_t>(block_[1]) << 32) | block_[0];
        }
        word_ = 0;
        return (static_cast<std::uint64_t>(block_[3]) << 32) | block_[2];
    }

    /// Uniform on (0,1]; never returns 0, so log() is safe.
    double next_uniform() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1p-53;
    }

    /// Standard normal via Box-Muller (fixed two-uniform consumption per pair).
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 2> prefix_;  // {replication, stream}
    std::uint64_t draw_ = 0;
    std::array<std::uint32_t, 4> block_{};
    int word_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace noisediff
