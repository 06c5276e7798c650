#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>

namespace heatprobe {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
//   http://www.thesalmons.org/john/random123/papers/random123sc11.pdf
// The output block is a pure function of (counter, key), so any increment of
// the noise field can be regenerated without replaying a stream.
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr std::uint32_t kMulA = 0xD2511F53u;
    static constexpr std::uint32_t kMulB = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeylA = 0x9E3779B9u;
    static constexpr std::uint32_t kWeylB = 0xBB67AE85u;
    static constexpr int kRounds = 10;

    static constexpr Counter block(Counter ctr, Key key) noexcept {
        for (int round = 0; round < kRounds; ++round) {
            if (round > 0) {
                key[0] += kWeylA;
                key[1] += kWeylB;
            }
            const std::uint64_t p0 = std::uint64_t{kMulA} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kMulB} * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }
};

/// Identifies the noise realization of an experiment.
struct RngSpec {
    static constexpr const char* kAlgorithm = "philox4x32-10/box-muller";
    std::uint64_t master_seed = 0;
    std::string algorithm_id = kAlgorithm;
};

/// Standard normal increments addressed by (path, step, site, channel).
///
/// Within one step the (site, channel) slots of a field with `dim` channels
/// are flattened to k = site * dim + channel; slots 2q and 2q+1 share the
/// Philox block with counter (step, q, 0, path), turned into two normals by
/// Box-Muller.
class NoiseField {
public:
    explicit NoiseField(const RngSpec& spec) : NoiseField(spec.master_seed) {}
    explicit NoiseField(std::uint64_t seed)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

    std::array<double, 2> pair(std::uint64_t path, std::uint32_t step,
                               std::uint32_t slot_pair) const noexcept {
        // path occupies the last word; paths beyond 2^32 are out of contract
        const auto out =
            Philox4x32::block({step, slot_pair, 0u, static_cast<std::uint32_t>(path)}, key_);
        const double u1 = to_open_unit(out[0], out[1]);
        const double u2 = to_open_unit(out[2], out[3]);
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        return {radius * std::cos(angle), radius * std::sin(angle)};
    }

    double normal(std::uint64_t path, std::uint32_t step, std::uint32_t site, std::uint32_t channel,
                  std::uint32_t dim) const noexcept {
        const std::uint32_t k = site * dim + channel;
        return pair(path, step, k / 2)[k % 2];
    }

    /// Fills out[site * dim + channel] for all sites of one time step.
    void fill_step(std::uint64_t path, std::uint32_t step, int sites, int dim,
                   std::span<double> out) const noexcept {
        const std::size_t slots = static_cast<std::size_t>(sites) * dim;
        for (std::size_t k = 0; k < slots; k += 2) {
            const auto z = pair(path, step, static_cast<std::uint32_t>(k / 2));
            out[k] = z[0];
            if (k + 1 < slots) out[k + 1] = z[1];
        }
    }

private:
    // 53-bit uniform on (0, 1]
    static double to_open_unit(std::uint32_t a, std::uint32_t b) noexcept {
        const std::uint64_t bits = (std::uint64_t{a >> 5} << 26) | (b >> 6);
        return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
    }

    Philox4x32::Key key_;
};

}  // namespace heatprobe
