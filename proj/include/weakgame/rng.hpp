#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace weakgame {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Stateless:
/// the output is a pure function of (counter, key).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter generate(Counter c, Key k) {
    constexpr std::uint32_t kM0 = 0xD2511F53u;
    constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u;
    constexpr std::uint32_t kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{kM0} * c[0];
      const std::uint64_t p1 = std::uint64_t{kM1} * c[2];
      c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
      k[0] += kW0;
      k[1] += kW1;
    }
    return c;
  }
};

/// Stream purposes encoded in the last counter word.
enum class StreamTag : std::uint32_t { kIncrement = 0, kInitialState = 1 };

/// Uniform pair in the open interval (0, 1) for one (seed, path, player, step)
/// cell, each with 53 random bits.
inline std::array<double, 2> uniform_pair(std::uint64_t seed, std::uint32_t path,
                                          std::uint32_t player, std::uint32_t step,
                                          StreamTag tag = StreamTag::kIncrement) {
  const auto out = Philox4x32::generate(
      {path, player, step, static_cast<std::uint32_t>(tag)},
      {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
  constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
  const std::uint64_t a = (std::uint64_t{out[0]} << 32 | out[1]) >> 11;
  const std::uint64_t b = (std::uint64_t{out[2]} << 32 | out[3]) >> 11;
  return {(static_cast<double>(a) + 0.5) * kScale, (static_cast<double>(b) + 0.5) * kScale};
}

/// Two independent standard normals for one cell (Box-Muller).
inline std::array<double, 2> normal_pair(std::uint64_t seed, std::uint32_t path,
                                         std::uint32_t player, std::uint32_t step,
                                         StreamTag tag = StreamTag::kIncrement) {
  const auto u = uniform_pair(seed, path, player, step, tag);
  const double r = std::sqrt(-2.0 * std::log(u[0]));
  const double theta = 2.0 * std::numbers::pi * u[1];
  return {r * std::cos(theta), r * std::sin(theta)};
}

/// First component of normal_pair only.
inline double normal_first(std::uint64_t seed, std::uint32_t path, std::uint32_t player,
                           std::uint32_t step, StreamTag tag = StreamTag::kIncrement) {
  const auto u = uniform_pair(seed, path, player, step, tag);
  return std::sqrt(-2.0 * std::log(u[0])) * std::cos(2.0 * std::numbers::pi * u[1]);
}

}  // namespace weakgame
