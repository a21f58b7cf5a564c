#include "fbsdej/common.hpp"
#include "fbsdej/random.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace fbsdej;

TEST(Philox, KnownAnswers) {
  using C = std::array<std::uint32_t, 4>;
  using K = std::array<std::uint32_t, 2>;
  EXPECT_EQ(philox4x32(C{0, 0, 0, 0}, K{0, 0}), (C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(philox4x32(C{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, K{0xffffffff, 0xffffffff}),
            (C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  EXPECT_EQ(philox4x32(C{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, K{0xa4093822, 0x299f31d0}),
            (C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(RandomStream, SameAddressSameDraws) {
  RandomStream a(42, StreamPurpose::brownian, 17, 3);
  RandomStream b(42, StreamPurpose::brownian, 17, 3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(RandomStream, AddressesAreIndependent) {
  std::set<std::uint64_t> first;
  for (std::uint64_t seed : {1ull, 2ull}) {
    for (auto purpose : {StreamPurpose::brownian, StreamPurpose::poisson_count, StreamPurpose::jump_marks}) {
      for (std::uint64_t path : {0ull, 1ull, (1ull << 40) + 1}) {
        for (std::uint32_t step : {0u, 1u, 63u}) {
          RandomStream s(seed, purpose, path, step);
          first.insert(s.next_u64());
        }
      }
    }
  }
  EXPECT_EQ(first.size(), 2u * 3u * 3u * 3u);
}

TEST(RandomStream, PathLimit) {
  EXPECT_NO_THROW(RandomStream(1, StreamPurpose::test, RandomStream::max_path, 0));
  EXPECT_THROW(RandomStream(1, StreamPurpose::test, RandomStream::max_path + 1, 0), SimulationError);
}

TEST(RandomStream, UniformIsOpenInterval) {
  RandomStream s(7, StreamPurpose::test, 0, 0);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  EXPECT_GT(lo, 0.0);
  EXPECT_LT(hi, 1.0);
  EXPECT_NEAR(sum / n, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST(RandomStream, NormalMoments) {
  RandomStream s(11, StreamPurpose::test, 0, 0);
  const int n = 400000;
  double m1 = 0, m2 = 0, m4 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal();
    m1 += z;
    m2 += z * z;
    m4 += z * z * z * z;
  }
  m1 /= n;
  m2 /= n;
  m4 /= n;
  EXPECT_NEAR(m1, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(m2, 1.0, 4.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(m4, 3.0, 4.0 * std::sqrt(96.0 / n));
}

TEST(RandomStream, PoissonMean) {
  RandomStream s(5, StreamPurpose::poisson_count, 0, 0);
  const int n = 200000;
  const double mean = 0.3;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double k = static_cast<double>(s.poisson(mean));
    sum += k;
    sq += k * k;
  }
  EXPECT_NEAR(sum / n, mean, 4.0 * std::sqrt(mean / n));
  EXPECT_NEAR(sq / n - (sum / n) * (sum / n), mean, 0.01);
  EXPECT_EQ(s.poisson(0.0), 0u);
}

TEST(InverseNormal, MatchesReferenceQuantiles) {
  // Reference quantiles computed independently with scipy.stats.norm.ppf.
  const std::pair<double, double> cases[] = {
      {1e-10, -6.361340902404056},     {0.02, -2.053748910631823},
      {0.3, -0.5244005127080409},      {0.5, 0.0},
      {0.975, 1.959963984540054},      {1.0 - 1e-12, 7.0344869100478356},
      {1e-300, -37.0470962993612},
  };
  for (auto [p, z] : cases) {
    const double got = inverse_normal_cdf(p);
    EXPECT_NEAR(got, z, 1e-13 * std::max(1.0, std::abs(z))) << "p=" << p;
  }
}

TEST(InverseNormal, Symmetry) {
  // Dyadic p so that 1 - p is exact.
  for (double p : {0x1p-27, 0x1p-7, 0.1875, 0.375, 0.4921875}) {
    EXPECT_NEAR(inverse_normal_cdf(p), -inverse_normal_cdf(1.0 - p), 1e-12);
  }
  EXPECT_TRUE(std::isinf(inverse_normal_cdf(0.0)));
  EXPECT_TRUE(std::isnan(inverse_normal_cdf(-0.1)));
}

TEST(DeriveSeed, DistinctForDistinctIndices) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 20; ++a) {
    for (std::uint64_t b = 0; b < 20; ++b) seen.insert(derive_seed(99, a, b));
  }
  EXPECT_EQ(seen.size(), 400u);
  EXPECT_EQ(derive_seed(1, 2, 3, 4), derive_seed(1, 2, 3, 4));
}
