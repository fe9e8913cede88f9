#pragma once

// Counter-based random streams.
//
// Every random quantity in the simulator comes from Philox4x32-10 (Salmon et
// al., "Parallel random numbers: as easy as 1, 2, 3", SC'11), keyed by the
// master seed. A stream is identified by two 32-bit-pair tags written into the
// counter, so the value drawn for (worker, step) never depends on evaluation
// order or thread count. The distributions below are implemented here rather
// than taken from <random>: the standard library leaves the algorithms of
// normal_distribution and gamma_distribution unspecified, which would break
// cross-platform reproducibility.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace qgm::rng {

using Block = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

namespace detail {

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace detail

/// Philox4x32 with 10 rounds.
inline Block philox4x32(Block ctr, Key key) {
  constexpr std::uint32_t kM0 = 0xD2511F53u;
  constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    detail::mulhilo(kM0, ctr[0], hi0, lo0);
    detail::mulhilo(kM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

inline Key key_from_seed(std::uint64_t seed) {
  return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

/// 64-bit seed for the (worker, step) stream of a run. Pure function.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t worker, std::uint64_t step) {
  const Block out = philox4x32({static_cast<std::uint32_t>(worker), static_cast<std::uint32_t>(step),
                                static_cast<std::uint32_t>(step >> 32), 0x5EEDu ^ static_cast<std::uint32_t>(worker >> 32)},
                               key_from_seed(master));
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

/// Sequential draws from one counter stream. Cheap to copy; copies replay the
/// same sequence.
class Stream {
 public:
  explicit Stream(std::uint64_t seed, std::uint64_t tag_a = 0, std::uint64_t tag_b = 0)
      : key_(key_from_seed(seed)),
        tag_a_(static_cast<std::uint32_t>(tag_a ^ (tag_a >> 32))),
        tag_b_(static_cast<std::uint32_t>(tag_b ^ (tag_b >> 32))) {}

  std::uint32_t next_u32() {
    if (used_ == 4) {
      buffer_ = philox4x32({static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32), tag_a_, tag_b_},
                           key_);
      ++block_;
      used_ = 0;
    }
    return buffer_[used_++];
  }

  /// Uniform on the open interval (0, 1) with 53 bits of resolution.
  double uniform() {
    const std::uint64_t a = next_u32() >> 5;
    const std::uint64_t b = next_u32() >> 6;
    const double k = static_cast<double>(a * 67108864ull + b);
    return (k + 0.5) / 9007199254740992.0;
  }

  /// Standard normal via Box-Muller; the paired value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// log of a Gamma(shape, 1) variate (Marsaglia-Tsang). Working in log space
  /// keeps tiny shapes (Dirichlet alpha ~ 1e-2) from underflowing to zero.
  double log_gamma(double shape) {
    if (shape < 1.0) {
      // G(a) = G(a + 1) * U^(1/a)
      const double boost = std::log(uniform()) / shape;
      return log_gamma(shape + 1.0) + boost;
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double z, v;
      do {
        z = normal();
        v = 1.0 + c * z;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (std::log(u) < 0.5 * z * z + d - d * v + d * std::log(v)) return std::log(d) + std::log(v);
    }
  }

 private:
  Key key_;
  std::uint32_t tag_a_;
  std::uint32_t tag_b_;
  std::uint64_t block_ = 0;
  Block buffer_{};
  int used_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace qgm::rng
