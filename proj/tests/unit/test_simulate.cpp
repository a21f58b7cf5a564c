#include "fbsdej/models.hpp"
#include "fbsdej/parallel.hpp"
#include "fbsdej/simulate.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace fbsdej;

namespace {

MertonConfig merton_dim(int d) {
  MertonConfig cfg;
  cfg.d = d;
  return cfg;
}

struct ThreadGuard {
  explicit ThreadGuard(int n) { set_thread_count(n); }
  ~ThreadGuard() { set_thread_count(0); }
};

std::span<const double> as_span(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

Example2Config linear_config() {
  Example2Config cfg;
  cfg.d = 2;
  cfg.T = 1.5;
  cfg.b0 = 0.2;
  cfg.sigma0 = 0.3;
  cfg.c = 0.25;
  cfg.lambda = 0.8;
  return cfg;
}

}  // namespace

TEST(Simulate, JumpFreeMoments) {
  const auto cfg = linear_config();
  const ModelSpec model = example2_model(cfg);
  const TimeGrid grid(cfg.T, 8);
  const Vector x0 = (Vector(2) << 0.1, -0.2).finished();
  const std::size_t M = 200000;
  const PathBatch b = simulate_forward(model, grid, as_span(x0), M, 5);
  for (int i = 0; i < 2; ++i) {
    double s = 0, s2 = 0;
    for (std::size_t p = 0; p < M; ++p) {
      const double v = b.state(p, 8)[i];
      s += v;
      s2 += v * v;
    }
    const double mean = s / M, var = s2 / M - mean * mean;
    const double sd = cfg.sigma0 * std::sqrt(cfg.T);
    EXPECT_NEAR(mean, x0[i] + cfg.b0 * cfg.T, 4.0 * sd / std::sqrt(M));
    EXPECT_NEAR(var, sd * sd, 4.0 * sd * sd * std::sqrt(2.0 / M));
  }
}

TEST(Simulate, OracleMomentsWithJumps) {
  const auto cfg = linear_config();
  const ModelSpec model = example2_model(cfg);
  const TimeGrid grid(cfg.T, 8);
  const Vector x0 = Vector::Zero(2);
  const std::size_t M = 200000;
  const PathBatch b = simulate_jump_oracle(model, grid, as_span(x0), M, 9);
  double s = 0, s2 = 0;
  for (std::size_t p = 0; p < M; ++p) {
    const double v = b.state(p, 8)[0];
    s += v;
    s2 += v * v;
  }
  const double mean = s / M, var = s2 / M - mean * mean;
  const double expected_var = cfg.sigma0 * cfg.sigma0 * cfg.T + cfg.c * cfg.c * cfg.lambda * cfg.T;
  EXPECT_NEAR(mean, (cfg.b0 + cfg.lambda * cfg.c) * cfg.T, 4.0 * std::sqrt(expected_var / M));
  EXPECT_NEAR(var, expected_var, 0.02 * expected_var);
}

TEST(Simulate, MertonOracleMeanIsEulerGrowth) {
  MertonConfig cfg;
  const ModelSpec model = merton_model(cfg, 16);
  const int n = 16;
  const TimeGrid grid(cfg.T, n);
  const Vector x0 = Vector::Constant(1, 10.0);
  const std::size_t M = 400000;
  double s = 0, s2 = 0;
  stream_oracle_terminals(model, grid, as_span(x0), M, 21, [&](std::size_t, const RowMatrix& X) {
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
      s += X(r, 0);
      s2 += X(r, 0) * X(r, 0);
    }
  });
  const double mean = s / M, sd = std::sqrt(s2 / M - mean * mean);
  EXPECT_NEAR(mean, 10.0 * std::pow(1.0 + cfg.r * cfg.T / n, n), 4.0 * sd / std::sqrt(M));
}

TEST(Simulate, DeterministicAcrossThreadCounts) {
  const ModelSpec model = merton_model(merton_dim(3), 16);
  const TimeGrid grid(1.0, 16);
  const Vector x0 = Vector::Constant(3, 10.0);
  PathBatch one, many;
  {
    ThreadGuard g(1);
    one = simulate_forward(model, grid, as_span(x0), 5000, 3);
  }
  {
    ThreadGuard g(4);
    many = simulate_forward(model, grid, as_span(x0), 5000, 3);
  }
  EXPECT_EQ(one.states, many.states);
  EXPECT_EQ(one.increments, many.increments);
}

TEST(Simulate, PrefixOfLargerBatchIsIdentical) {
  const ModelSpec model = example2_model(linear_config());
  const TimeGrid grid(1.0, 8);
  const Vector x0 = Vector::Zero(2);
  const PathBatch small = simulate_forward(model, grid, as_span(x0), 50, 8);
  const PathBatch large = simulate_forward(model, grid, as_span(x0), 120, 8);
  ASSERT_TRUE(std::equal(small.states.begin(), small.states.end(), large.states.begin()));
}

TEST(Simulate, ReplayReproducesStates) {
  const ModelSpec model = merton_model(merton_dim(2), 16);
  const TimeGrid grid(1.0, 10);
  const Vector x0 = Vector::Constant(2, 10.0);
  const PathBatch b = simulate_forward(model, grid, as_span(x0), 20, 4);
  std::vector<double> next(2);
  for (std::size_t p = 0; p < b.paths; ++p) {
    for (int k = 0; k < grid.steps; ++k) {
      forward_step(model, grid.time(k), grid.delta(), b.state(p, k), b.increment(p, k), next);
      ASSERT_EQ(next[0], b.state(p, k + 1)[0]);
      ASSERT_EQ(next[1], b.state(p, k + 1)[1]);
    }
  }
}

TEST(Simulate, OracleSharesBrownianDraws) {
  auto cfg = linear_config();
  cfg.lambda = 0.0;
  const ModelSpec model = example2_model(cfg);
  const TimeGrid grid(1.0, 6);
  const Vector x0 = Vector::Zero(2);
  const PathBatch a = simulate_forward(model, grid, as_span(x0), 100, 12);
  const PathBatch b = simulate_jump_oracle(model, grid, as_span(x0), 100, 12);
  EXPECT_EQ(a.increments, b.increments);
  EXPECT_EQ(a.states, b.states);
}

TEST(Simulate, StreamedTerminalsMatchStoredOracle) {
  const ModelSpec model = example2_model(linear_config());
  const TimeGrid grid(1.0, 4);
  const Vector x0 = Vector::Zero(2);
  const PathBatch b = simulate_jump_oracle(model, grid, as_span(x0), 1000, 77);
  std::size_t seen = 0;
  stream_oracle_terminals(model, grid, as_span(x0), 1000, 77, [&](std::size_t first, const RowMatrix& X) {
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
      const auto s = b.state(first + static_cast<std::size_t>(r), 4);
      ASSERT_EQ(X(r, 0), s[0]);
      ASSERT_EQ(X(r, 1), s[1]);
      ++seen;
    }
  }, 300);
  EXPECT_EQ(seen, 1000u);
}

TEST(Simulate, BinaryDumpRoundTrip) {
  const ModelSpec model = merton_model(merton_dim(2), 16);
  const TimeGrid grid(0.5, 5);
  const Vector x0 = Vector::Constant(2, 10.0);
  const PathBatch b = simulate_forward(model, grid, as_span(x0), 33, 6);
  const auto path = std::filesystem::temp_directory_path() / "fbsdej_paths.bin";
  write_path_batch(b, path.string());
  const PathBatch r = read_path_batch(path.string());
  EXPECT_EQ(r.paths, b.paths);
  EXPECT_EQ(r.grid.steps, b.grid.steps);
  EXPECT_EQ(r.grid.horizon, b.grid.horizon);
  EXPECT_EQ(r.seed, b.seed);
  EXPECT_EQ(r.states, b.states);
  EXPECT_EQ(r.increments, b.increments);
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTAPATHFILE";
  }
  EXPECT_THROW(read_path_batch(path.string()), Error);
  std::filesystem::remove(path);
}

TEST(Simulate, MemoryCapIsEnforced) {
  const ModelSpec model = example2_model(linear_config());
  const TimeGrid grid(1.0, 64);
  const Vector x0 = Vector::Zero(2);
  SimulationOptions opts;
  opts.memory_cap_bytes = 1 << 20;
  EXPECT_EQ(path_batch_bytes(10000, 64, 2, 2), 10000u * (65 * 2 + 64 * 2) * 8u);
  try {
    simulate_forward(model, grid, as_span(x0), 10000, 1, opts);
    FAIL();
  } catch (const SimulationError& e) {
    EXPECT_NE(std::string(e.what()).find("memory cap"), std::string::npos);
  }
}

TEST(Simulate, OracleRejectsStateDependentIntensity) {
  ModelSpec model = example2_model(linear_config());
  model.constant_intensity = false;
  model.intensity = [](double, std::span<const double> x) { return 0.5 + 0.1 * std::tanh(x[0]); };
  model.intensity_bound = 0.6;
  const Vector x0 = Vector::Zero(2);
  EXPECT_THROW(simulate_jump_oracle(model, TimeGrid(1.0, 4), as_span(x0), 10, 1), UnsupportedError);
  EXPECT_NO_THROW(simulate_forward(model, TimeGrid(1.0, 4), as_span(x0), 10, 1));
}

TEST(Simulate, IntensityAboveBoundIsReported) {
  ModelSpec model = example2_model(linear_config());
  model.intensity = [](double, std::span<const double>) { return 2.0; };
  const Vector x0 = Vector::Zero(2);
  EXPECT_THROW(simulate_forward(model, TimeGrid(1.0, 4), as_span(x0), 10, 1), SimulationError);
}

TEST(Simulate, NonFiniteStateNamesPathAndStep) {
  ModelSpec model = example2_model(linear_config());
  model.drift = [](double, std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = 1e308 * (1.0 + std::abs(x[i])) * 10.0;
  };
  const Vector x0 = Vector::Zero(2);
  try {
    simulate_forward(model, TimeGrid(1.0, 4), as_span(x0), 3, 1);
    FAIL();
  } catch (const SimulationError& e) {
    EXPECT_NE(std::string(e.what()).find("path 0"), std::string::npos);
  }
}
