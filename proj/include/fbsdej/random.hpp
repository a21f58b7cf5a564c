#pragma once

#include <array>
#include <cstdint>

namespace fbsdej {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). A 128-bit
/// counter and 64-bit key map to 128 random bits with no carried state.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Separates independent uses of one master seed.
enum class StreamPurpose : std::uint8_t {
  brownian = 1,
  poisson_count = 2,
  jump_marks = 3,
  frozen_marks = 4,
  network_init = 5,
  minibatch = 6,
  inner_mc = 7,
  test = 8,
};

/// Sequential draws from the Philox block sequence addressed by
/// (seed, purpose, path, step). Identical keys give identical draws regardless
/// of thread count or call order elsewhere.
class RandomStream {
 public:
  static constexpr std::uint64_t max_path = (std::uint64_t{1} << 56) - 1;

  RandomStream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t path, std::uint32_t step);

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1) with 53-bit resolution.
  double uniform();
  /// Standard normal by inversion of the uniform.
  double normal();
  /// Poisson(mean) by sequential inversion of one uniform.
  std::uint64_t poisson(double mean);

 private:
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
};

/// Inverse standard normal CDF, Wichura's AS241 (PPND16), relative accuracy
/// about 1e-16 on (0, 1).
double inverse_normal_cdf(double p);

/// SplitMix64 finalizer; used to derive sub-seeds from structured indices.
std::uint64_t splitmix64(std::uint64_t x);

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
  std::uint64_t h = splitmix64(seed ^ 0x6a09e667f3bcc909ULL);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (b + 0x3c6ef372fe94f82bULL));
  return splitmix64(h ^ (c + 0xa54ff53a5f1d36f1ULL));
}

}  // namespace fbsdej
