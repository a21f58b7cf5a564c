#include "fbsdej/models.hpp"
#include "fbsdej/parallel.hpp"
#include "fbsdej/recursion.hpp"
#include "fbsdej/reference.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace fbsdej;

namespace {

Example2Config linear_config(double lambda) {
  Example2Config cfg;
  cfg.d = 1;
  cfg.T = 1.0;
  cfg.b0 = -0.1;
  cfg.sigma0 = 0.2;
  cfg.c = 0.2;
  cfg.lambda = lambda;
  cfg.alpha = 0.3;
  cfg.beta = 0.0;
  cfg.rho = 0.0;
  return cfg;
}

PathBatch simulate(const ModelSpec& model, int steps, std::size_t paths, std::uint64_t seed, double x0 = 0.0) {
  const std::vector<double> x(static_cast<std::size_t>(model.dims.state), x0);
  return simulate_forward(model, TimeGrid(1.0, steps), x, paths, seed);
}

}  // namespace

TEST(Recursion, SuffixSumsSatisfyBackwardIdentity) {
  const Example2Config cfg = linear_config(1.0);
  const ModelSpec model = example2_model(cfg);
  const PathBatch batch = simulate(model, 8, 2000, 11);
  LsmcScheme scheme(model, batch, {});
  const PicardLevel zero = scheme.level_zero();
  const PicardLevel one = scheme.picard_step(zero);
  const SuffixAccumulator acc = build_targets(one, batch, model, scheme.gamma(), scheme.terminal(), true);
  const int n = 8;
  const double delta = batch.grid.delta();
  for (std::size_t p = 0; p < batch.paths; ++p) {
    ASSERT_EQ(acc.sum(p, n)[0], scheme.terminal().phi(static_cast<Eigen::Index>(p), 0));
    for (int k = n; k >= 1; --k) {
      const double term = acc.terms[p * static_cast<std::size_t>(n) + static_cast<std::size_t>(k - 1)];
      ASSERT_EQ(acc.sum(p, k - 1)[0], acc.sum(p, k)[0] + delta * term) << "path " << p << " k " << k;
    }
  }
  // Without keep_terms the sums are the same.
  const SuffixAccumulator plain = build_targets(one, batch, model, scheme.gamma(), scheme.terminal());
  EXPECT_EQ(plain.sums, acc.sums);
  EXPECT_TRUE(plain.terms.empty());
}

TEST(Recursion, MalliavinWeightIsScaledIncrement) {
  const ModelSpec model = example2_model(linear_config(0.5));
  const PathBatch batch = simulate(model, 4, 100, 3);
  for (int k = 0; k < 4; ++k) {
    const RowMatrix w = malliavin_weight(batch, k);
    for (std::size_t p = 0; p < batch.paths; ++p) {
      EXPECT_DOUBLE_EQ(w(static_cast<Eigen::Index>(p), 0), batch.increment(p, k)[0] / batch.grid.delta());
    }
  }
}

TEST(Recursion, ZeroDriverWithoutJumpsIsAFixedPoint) {
  Example2Config cfg = linear_config(0.0);
  cfg.alpha = 0.0;
  const ModelSpec model = example2_model(cfg);
  const auto levels = run_scheme(model, TimeGrid(1.0, 8), Vector::Zero(1), 5000, 3, LsmcOptions{}, 5);
  ASSERT_EQ(levels.size(), 4u);
  for (const auto& l : levels) EXPECT_EQ(l.value[0], levels[0].value[0]);
  // Level zero is the plain mean of Phi(X_n); its expectation is exp(b0 + sigma0^2/2).
  EXPECT_NEAR(levels[0].value[0], std::exp(cfg.b0 + 0.5 * cfg.sigma0 * cfg.sigma0), 4 * levels[0].std_error[0]);
}

TEST(Recursion, ConstantTerminalIsReproducedExactly) {
  Example2Config cfg = linear_config(2.0);
  cfg.alpha = 0.0;
  const ModelSpec model = custom_model(cfg, TerminalKind::constant, 0.0, 1.0);
  const auto levels = run_scheme(model, TimeGrid(1.0, 8), Vector::Zero(1), 3000, 3,
                                 LsmcOptions{"quadratic_payoff", 1e-10}, 2);
  for (const auto& l : levels) {
    EXPECT_NEAR(l.value[0], 1.0, 1e-12);
    EXPECT_NEAR(l.std_error[0], 0.0, 1e-12);
  }
}

TEST(Recursion, LsmcTracksExactPicardIterates) {
  const Example2Config cfg = linear_config(1.0);
  const ModelSpec model = example2_model(cfg);
  const std::vector<std::uint64_t> seeds{101, 102, 103};
  const auto levels = solve(model, TimeGrid(cfg.T, 32), Vector::Zero(1), 40000, 3,
                            LsmcOptions{"example2", 1e-10}, seeds);
  ASSERT_EQ(levels.size(), 4u);
  for (const auto& l : levels) {
    const double exact = example2_wm_exact_1d(cfg, l.m, 0.0);
    // Time discretization contributes well under one percent here.
    EXPECT_NEAR(l.value[0], exact, 0.01 * exact + 4 * l.std_error[0]) << "m=" << l.m;
  }
}

TEST(Recursion, SolveReportsSpreadAcrossRuns) {
  const ModelSpec model = example2_model(linear_config(0.5));
  const TimeGrid grid(1.0, 4);
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto both = solve(model, grid, Vector::Zero(1), 2000, 1, LsmcOptions{}, seeds);
  const auto a = run_scheme(model, grid, Vector::Zero(1), 2000, 1, LsmcOptions{}, 1);
  const auto b = run_scheme(model, grid, Vector::Zero(1), 2000, 1, LsmcOptions{}, 2);
  for (std::size_t m = 0; m < 2; ++m) {
    const double va = a[m].value[0], vb = b[m].value[0];
    EXPECT_NEAR(both[m].value[0], 0.5 * (va + vb), 1e-14);
    EXPECT_NEAR(both[m].std_error[0], std::abs(va - vb) / 2.0, 1e-14);
  }
  const auto single = solve(model, grid, Vector::Zero(1), 2000, 1, LsmcOptions{}, {1});
  EXPECT_EQ(single[1].std_error[0], a[1].std_error[0]);
  EXPECT_THROW(solve(model, grid, Vector::Zero(1), 2000, 1, LsmcOptions{}, {}), ConfigError);
}

TEST(Recursion, LsmcIsIndependentOfThreadCount) {
  const ModelSpec model = example2_model(linear_config(1.0));
  set_thread_count(1);
  const auto a = run_scheme(model, TimeGrid(1.0, 8), Vector::Zero(1), 5000, 2, LsmcOptions{}, 9);
  set_thread_count(4);
  const auto b = run_scheme(model, TimeGrid(1.0, 8), Vector::Zero(1), 5000, 2, LsmcOptions{}, 9);
  set_thread_count(0);
  for (std::size_t m = 0; m < a.size(); ++m) EXPECT_EQ(a[m].value[0], b[m].value[0]);
}

TEST(Recursion, NeuralBackendSmoke) {
  const Example2Config cfg = linear_config(0.5);
  const ModelSpec model = example2_model(cfg);
  NnOptions nn;
  nn.hidden = {8, 8};
  nn.schedule.batch_size = 512;
  nn.schedule.steps = 150;
  nn.evaluation_paths = 20000;
  std::vector<PicardLevel> kept;
  const auto levels = run_scheme(model, TimeGrid(cfg.T, 4), Vector::Zero(1), 0, 1, nn, 4, {}, &kept);
  ASSERT_EQ(levels.size(), 2u);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[1].u.size(), 5u);
  for (const auto& l : levels) {
    ASSERT_TRUE(std::isfinite(l.value[0]));
    const double exact = example2_wm_exact_1d(cfg, l.m, 0.0);
    EXPECT_NEAR(l.value[0], exact, 0.05 * exact) << "m=" << l.m;
  }
}

TEST(Recursion, RejectsMismatchedLevel) {
  const ModelSpec model = example2_model(linear_config(0.5));
  const PathBatch batch = simulate(model, 4, 100, 3);
  LsmcScheme scheme(model, batch, {});
  PicardLevel bogus;
  bogus.u.resize(2);
  bogus.v.resize(2);
  EXPECT_THROW(build_targets(bogus, batch, model, scheme.gamma(), scheme.terminal()), ConfigError);
}
