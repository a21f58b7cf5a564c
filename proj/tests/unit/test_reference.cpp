#include "fbsdej/models.hpp"
#include "fbsdej/reference.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace fbsdej;

namespace {

// Composite Simpson rule over the standard normal density, used as an
// independent oracle for lognormal expectations.
template <class F>
double gaussian_expectation(F&& g, double lo = -12.0, double hi = 12.0, int n = 20000) {
  const double h = (hi - lo) / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double z = lo + i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s += w * g(z) * std::exp(-0.5 * z * z);
  }
  return s * h / 3.0 / std::sqrt(2.0 * std::numbers::pi);
}

// E[(K - x e^{m + s Z})^+], integrated only below the kink.
double lognormal_put_undiscounted(double x, double K, double m, double s) {
  const double kink = (std::log(K / x) - m) / s;
  return gaussian_expectation([&](double z) { return K - x * std::exp(m + s * z); }, -12.0, kink);
}

double lognormal_put(double x, double K, double T, double r, double sigma) {
  return std::exp(-r * T) * lognormal_put_undiscounted(x, K, (r - 0.5 * sigma * sigma) * T, sigma * std::sqrt(T));
}

}  // namespace

TEST(Reference, NormalCdf) {
  EXPECT_EQ(normal_cdf(0.0), 0.5);
  EXPECT_NEAR(normal_cdf(1.959963984540054), 0.975, 1e-15);
  EXPECT_NEAR(normal_cdf(-2.053748910631823), 0.02, 1e-16);
  EXPECT_NEAR(normal_cdf(-6.361340902404056) / 1e-10, 1.0, 1e-12);
}

TEST(Reference, BlackScholesPutMatchesQuadrature) {
  for (double K : {5.0, 10.0, 15.0}) {
    for (double sigma : {0.1, 0.25, 0.6}) {
      EXPECT_NEAR(bs_put(10.0, K, 1.0, 0.04, sigma), lognormal_put(10.0, K, 1.0, 0.04, sigma), 1e-11)
          << "K=" << K << " sigma=" << sigma;
    }
  }
  EXPECT_NEAR(bs_put(10.0, 10.0, 1.0, 0.04, 0.25), 0.79159903560564, 1e-12);
}

TEST(Reference, PutCallParity) {
  // Call by quadrature; C - P = x - K e^{-rT}.
  const double x = 9.0, K = 10.5, T = 0.7, r = 0.03, s = 0.3;
  const double m = (r - 0.5 * s * s) * T, v = s * std::sqrt(T);
  const double kink = (std::log(K / x) - m) / v;
  const double call = std::exp(-r * T) * gaussian_expectation([&](double z) { return x * std::exp(m + v * z) - K; },
                                                              kink, 12.0);
  EXPECT_NEAR(call - bs_put(x, K, T, r, s), x - K * std::exp(-r * T), 1e-11);
}

TEST(Reference, MertonWithoutJumpsIsBlackScholes) {
  MertonConfig cfg;
  cfg.lambda = 0.0;
  EXPECT_NEAR(merton_put(cfg), bs_put(cfg.x, cfg.K, cfg.T, cfg.r, cfg.sigma), 1e-15);
}

TEST(Reference, MertonPutMatchesPoissonMixtureQuadrature) {
  MertonConfig cfg;
  // Oracle: condition on N_T = k, price the lognormal put by quadrature.
  const double kappa = std::expm1(cfg.mu_j + 0.5 * cfg.sigma_j * cfg.sigma_j);
  double oracle = 0.0, weight = std::exp(-cfg.lambda * cfg.T);
  for (int k = 0; k < 40; ++k) {
    if (k > 0) weight *= cfg.lambda * cfg.T / k;
    const double var = cfg.sigma * cfg.sigma * cfg.T + k * cfg.sigma_j * cfg.sigma_j;
    const double drift = (cfg.r - cfg.lambda * kappa - 0.5 * cfg.sigma * cfg.sigma) * cfg.T + k * cfg.mu_j;
    oracle += weight * std::exp(-cfg.r * cfg.T) * lognormal_put_undiscounted(cfg.x, cfg.K, drift, std::sqrt(var));
  }
  EXPECT_NEAR(merton_put(cfg), oracle, 1e-11);
}

TEST(Reference, MertonReferenceValue) {
  MertonConfig cfg;
  EXPECT_NEAR(merton_u_ref_1d(cfg), 2.160926, 5e-7);
  cfg.K = 5.0;
  EXPECT_NEAR(merton_u_ref_1d(cfg), 0.070331, 5e-7);
  cfg.K = 15.0;
  EXPECT_NEAR(merton_u_ref_1d(cfg), 5.674748, 5e-7);
}

TEST(Reference, MertonLevelZeroIsCompensatedBlackScholes) {
  MertonConfig cfg;
  const Estimate w0 = merton_wm_semianalytic(cfg, 0, 1000, 1);
  EXPECT_NEAR(w0.value, 3.307421, 5e-7);
  EXPECT_LT(w0.std_error, 1e-12);
}

TEST(Reference, MertonRecursionConvergesToReference) {
  MertonConfig cfg;
  const Estimate w8 = merton_wm_semianalytic(cfg, 8, 200000, 3);
  EXPECT_NEAR(w8.value, merton_u_ref_1d(cfg), 4 * w8.std_error + 1e-4);
}

TEST(Reference, Example2GeneratorIdentity) {
  Example2Config cfg;
  for (double t : {0.0, 0.7, 1.9}) {
    for (double x : {-1.0, 0.0, 0.5, 2.0}) EXPECT_LE(std::abs(example2_pide_residual_1d(cfg, t, x)), 1e-14);
  }
}

TEST(Reference, Example2TableValues) {
  // T = 1, b = 0.1, sigma = 0.1, c = 0.2, lambda = 0.5, alpha = 0.1, beta = rho = 0.
  Example2Config cfg;
  cfg.T = 1.0;
  cfg.b0 = 0.1;
  cfg.sigma0 = 0.1;
  cfg.lambda = 0.5;
  cfg.alpha = 0.1;
  cfg.beta = 0.0;
  cfg.rho = 0.0;
  const double u[] = {0.831687, 1.371221, 2.260761};
  const double w[6][3] = {{0.673680, 1.110711, 1.831252}, {0.815625, 1.344739, 2.217100},
                          {0.830579, 1.369394, 2.257749}, {0.831630, 1.371126, 2.260604},
                          {0.831685, 1.371217, 2.260754}, {0.831687, 1.371221, 2.260761}};
  const double xs[] = {-0.5, 0.0, 0.5};
  for (int j = 0; j < 3; ++j) {
    EXPECT_NEAR(example2_u_ref_1d(cfg, xs[j]), u[j], 5e-7);
    for (int m = 0; m <= 5; ++m) {
      EXPECT_NEAR(example2_wm_semianalytic_1d(cfg, m, xs[j]), w[m][j], 5e-7) << "m=" << m << " x=" << xs[j];
      EXPECT_NEAR(example2_wm_exact_1d(cfg, m, xs[j]), example2_wm_semianalytic_1d(cfg, m, xs[j]), 1e-13);
    }
  }
}

TEST(Reference, ExactIteratesConvergeWithCoupling) {
  const Example2Config cfg;  // beta, rho nonzero
  const double u = example2_u_ref_1d(cfg, 0.0);
  double prev = std::abs(example2_wm_exact_1d(cfg, 0, 0.0) - u);
  for (int m = 1; m <= 30; ++m) {
    const double err = std::abs(example2_wm_exact_1d(cfg, m, 0.0) - u);
    EXPECT_LE(err, prev + 1e-15);
    prev = err;
  }
  EXPECT_LE(prev, 1e-12 * u);
  EXPECT_THROW(example2_wm_semianalytic_1d(cfg, 2, 0.0), UnsupportedError);
}

TEST(Reference, MultiDimensionalFormulaReducesToOneDimension) {
  Example2Config cfg;
  cfg.beta = 0.0;
  cfg.rho = 0.0;
  EXPECT_NEAR(example2_u_ref_d(cfg, 0.3), example2_u_ref_1d(cfg, 0.3), 1e-14);
  cfg.d = 10;
  cfg.T = 1.0;
  cfg.b0 = 0.1;
  cfg.sigma0 = 0.2;
  cfg.lambda = 0.5;
  cfg.alpha = 0.1;
  EXPECT_NEAR(example2_u_ref_d(cfg, 0.0), 1.367113, 5e-7);
}

TEST(Reference, MonteCarloReferenceAgreesWithFormula) {
  Example2Config cfg;
  cfg.d = 3;
  cfg.T = 1.0;
  cfg.b0 = 0.1;
  cfg.sigma0 = 0.2;
  cfg.lambda = 0.5;
  cfg.alpha = 0.1;
  cfg.beta = 0.0;
  cfg.rho = 0.0;
  const ModelSpec model = example2_model(cfg);
  const Estimate mc = u_ref_mc(model, TimeGrid(cfg.T, 1), Vector::Zero(3), 400000, 17, -cfg.alpha);
  EXPECT_NEAR(mc.value, example2_u_ref_d(cfg, 0.0), 4 * mc.std_error);
  EXPECT_GT(mc.std_error, 0.0);
}

TEST(Reference, MertonMonteCarloReferenceOneDimension) {
  MertonConfig cfg;
  const ModelSpec model = merton_model(cfg);
  const Estimate mc = u_ref_mc(model, TimeGrid(cfg.T, 64), Vector::Constant(1, cfg.x), 200000, 5, cfg.r + cfg.c);
  // Euler bias at n = 64 is far below the sampling error here.
  EXPECT_NEAR(mc.value, merton_u_ref_1d(cfg), 4 * mc.std_error);
}
