#include "fbsdej/gamma.hpp"
#include "fbsdej/models.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>

using namespace fbsdej;

namespace {

// Gauss-Hermite nodes and weights (weight exp(-t^2)) by Golub-Welsch.
void gauss_hermite(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(i / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  nodes.resize(static_cast<std::size_t>(n));
  weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    nodes[static_cast<std::size_t>(i)] = es.eigenvalues()[i];
    const double v = es.eigenvectors()(0, i);
    weights[static_cast<std::size_t>(i)] = std::sqrt(std::numbers::pi) * v * v;
  }
}

// One-dimensional Merton coefficients with the mark law N(mu, s^2) replaced by
// Gauss-Hermite atoms.
ModelSpec merton_with_atoms(double lambda, double mu, double s, int n) {
  MertonConfig cfg;
  cfg.lambda = lambda;
  cfg.mu_j = mu;
  cfg.sigma_j = s;
  ModelSpec model = merton_model(cfg, 8);
  std::vector<double> t, w;
  gauss_hermite(n, t, w);
  std::vector<JumpAtom> atoms;
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += w[static_cast<std::size_t>(i)] / std::sqrt(std::numbers::pi);
  for (int i = 0; i < n; ++i) {
    atoms.push_back({{mu + std::sqrt(2.0) * s * t[static_cast<std::size_t>(i)]},
                     w[static_cast<std::size_t>(i)] / std::sqrt(std::numbers::pi) / total});
  }
  model.measure = JumpMeasure::from_atoms(atoms);
  return model;
}

void square(std::span<const double> x, std::span<double> out) { out[0] = x[0] * x[0]; }
void cube(std::span<const double> x, std::span<double> out) { out[0] = x[0] * x[0] * x[0]; }

}  // namespace

TEST(Gamma, AtomsMatchClosedFormIntegral) {
  const double lambda = 0.5, mu = 0.5, s = 0.5;
  const ModelSpec model = merton_with_atoms(lambda, mu, s, 60);
  const GammaEvaluator g(model);
  EXPECT_EQ(g.mode(), GammaEvaluator::Mode::exact_atoms);
  for (double x : {0.5, 10.0, 13.0}) {
    const double got = g.gamma(0.0, {&x, 1}, square)[0];
    const double expected = lambda * x * x * std::expm1(2.0 * mu + 2.0 * s * s);
    EXPECT_NEAR(got, expected, 1e-10 * std::abs(expected));
  }
}

TEST(Gamma, FrozenSampleAgreesWithQuadrature) {
  MertonConfig cfg;
  const std::size_t Q = 128;
  const ModelSpec model = merton_model(cfg, Q);
  const GammaEvaluator g(model);
  EXPECT_EQ(g.mode(), GammaEvaluator::Mode::frozen_sample);
  const ModelSpec quad = merton_with_atoms(cfg.lambda, cfg.mu_j, cfg.sigma_j, 60);
  const GammaEvaluator gq(quad);
  auto put = [](std::span<const double> x, std::span<double> out) { out[0] = std::max(10.0 - x[0], 0.0); };
  for (double x : {8.0, 10.0, 12.0}) {
    const double frozen = g.gamma(0.0, {&x, 1}, put)[0];
    const double exact = gq.gamma(0.0, {&x, 1}, put)[0];
    // Sample sd of lambda (phi(x e^Z) - phi(x)) over the frozen marks.
    double s1 = 0, s2 = 0;
    for (Eigen::Index k = 0; k < g.marks().rows(); ++k) {
      const double v = cfg.lambda * (std::max(10.0 - x * std::exp(g.marks()(k, 0)), 0.0) - std::max(10.0 - x, 0.0));
      s1 += v;
      s2 += v * v;
    }
    const double var = (s2 - s1 * s1 / Q) / (Q - 1);
    EXPECT_NEAR(frozen, exact, 4.0 * std::sqrt(var / Q) + 1e-12) << "x=" << x;
  }
}

TEST(Gamma, LambdaScalingIsExact) {
  Example2Config a;
  a.lambda = 1.0;
  Example2Config b = a;
  b.lambda = 2.5;
  const ModelSpec ma = example2_model(a), mb = example2_model(b);
  const GammaEvaluator ga(ma), gb(mb);
  for (double x : {-0.3, 0.0, 0.7}) {
    EXPECT_EQ(gb.gamma(0.1, {&x, 1}, cube)[0], 2.5 * ga.gamma(0.1, {&x, 1}, cube)[0]);
  }
}

TEST(Gamma, LinearInPhiUpToRounding) {
  const ModelSpec model = merton_with_atoms(0.8, 0.1, 0.3, 20);
  const GammaEvaluator g(model);
  const double a = 1.7, b = -0.4;
  auto combo = [&](std::span<const double> x, std::span<double> out) {
    double s, c;
    square(x, {&s, 1});
    cube(x, {&c, 1});
    out[0] = a * s + b * c;
  };
  for (double x : {0.5, 2.0, 3.0}) {
    const double lhs = g.gamma(0.0, {&x, 1}, combo)[0];
    const double rhs = a * g.gamma(0.0, {&x, 1}, square)[0] + b * g.gamma(0.0, {&x, 1}, cube)[0];
    EXPECT_NEAR(lhs, rhs, 1e-13 * std::max(1.0, std::abs(rhs)));
  }
}

TEST(Gamma, ConstantFunctionHasZeroGamma) {
  MertonConfig cfg;
  const ModelSpec model = merton_model(cfg, 32);
  const GammaEvaluator g(model);
  auto one = [](std::span<const double>, std::span<double> out) { out[0] = 1.0; };
  const double x = 9.0;
  EXPECT_EQ(g.gamma(0.0, {&x, 1}, one)[0], 0.0);
}

TEST(Gamma, BatchMatchesPointwiseBitForBit) {
  MertonConfig cfg;
  cfg.d = 3;
  const ModelSpec model = merton_model(cfg, 16);
  const GammaEvaluator g(model);
  auto phi_point = [](std::span<const double> x, std::span<double> out) {
    out[0] = std::sin(x[0]) + x[1] * x[2];
  };
  BatchFunction phi_batch = [&](const RowMatrix& X, RowMatrix& out) {
    out.resize(X.rows(), 1);
    for (Eigen::Index r = 0; r < X.rows(); ++r) phi_point(row_span(X, r), row_span(out, r));
  };
  RowMatrix X(3000, 3);
  RandomStream s(1, StreamPurpose::test, 0, 0);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = 10.0 + s.normal();
  const RowMatrix batch = g.gamma_batch(0.3, X, phi_batch);
  RowMatrix base;
  phi_batch(X, base);
  const RowMatrix with_base = g.gamma_batch(0.3, StridedRows::of(X), phi_batch, &base);
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const double point = g.gamma(0.3, row_span(X, r), phi_point)[0];
    ASSERT_EQ(batch(r, 0), point) << r;
    ASSERT_EQ(with_base(r, 0), point) << r;
  }
}
