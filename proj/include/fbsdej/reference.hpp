#pragma once

#include "fbsdej/common.hpp"
#include "fbsdej/model.hpp"

#include <cstdint>

namespace fbsdej {

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Merton jump-diffusion with a put on the arithmetic mean. Scalars describe
/// the isotropic case (sigma I, mu_J 1, sigma_J I); the optional matrices
/// override them when non-empty.
struct MertonConfig {
  int d = 1;
  double x = 10.0;
  double K = 10.0;
  double T = 1.0;
  double r = 0.04;
  double sigma = 0.25;
  double lambda = 0.5;
  double mu_j = 0.5;
  double sigma_j = 0.5;
  double c = 0.1;
  RowMatrix sigma_matrix;    // d x d
  Vector mu_j_vector;        // d
  RowMatrix sigma_j_matrix;  // d x d, Sigma_J = sigma_J sigma_J^T

  void validate() const;
  RowMatrix diffusion() const;
  Vector jump_mean() const;
  RowMatrix jump_factor() const;
};

/// Example with exponential terminal condition, driver alpha y + beta <z, 1/d> +
/// rho gamma / lambda and common jumps of size c in every coordinate.
struct Example2Config {
  int d = 1;
  double T = 2.0;
  double b0 = -0.1;
  double sigma0 = 0.1;
  double c = 0.2;
  double lambda = 3.0;
  double alpha = 0.3;
  double beta = 0.3;
  double rho = 0.2;

  void validate() const;
};

/// Standard normal CDF through std::erfc (absolute error near machine epsilon).
double normal_cdf(double x);

/// Black-Scholes put.
double bs_put(double x, double K, double T, double r, double sigma);

/// Merton put as a Poisson mixture of Black-Scholes puts, truncated once the
/// remaining Poisson mass falls below 1e-12 or after k_max terms.
double merton_put(const MertonConfig& cfg, int k_max = 200);

/// e^{-cT} Merton(x, K, T, r, sigma, lambda, mu_J, sigma_J) in one dimension.
double merton_u_ref_1d(const MertonConfig& cfg);

/// w_m(0, x) of the Picard recursion for the Merton model,
///   sum_k E[w_0(0, x e^{Z_1 + .. + Z_k})] (lambda T)^k / k! sum_{n <= m-k} ((c + r + lambda)(-T))^n / n!.
/// In one dimension w_0 is a Black-Scholes put at the compensated rate and only
/// the jump sums are sampled; in d dimensions w_0 is sampled jointly with the
/// exact lognormal law of the jump-free process. The same inner draws are used
/// for every k.
Estimate merton_wm_semianalytic(const MertonConfig& cfg, int m, std::size_t inner_paths,
                                std::uint64_t seed);

/// e^{-rate T} E[Phi(X_T)] over the jump-inclusive Euler scheme (first output of Phi).
Estimate u_ref_mc(const ModelSpec& model, const TimeGrid& grid, const Vector& x0,
                  std::size_t paths, std::uint64_t seed, double rate, int threads = 0);

/// exp(x + kappa T) with kappa = b + sigma^2/2 + alpha + beta sigma + (lambda + rho)(e^c - 1).
double example2_u_ref_1d(const Example2Config& cfg, double x);

/// Residual of the one-dimensional PIDE at (t, x) for u = exp(x + kappa (T - t)),
/// divided by u. Zero up to rounding.
double example2_pide_residual_1d(const Example2Config& cfg, double t, double x);

/// exp(x_ini + b0 T + (alpha + sigma0^2 / (2d)) T + (e^c - 1) lambda T); needs beta = rho = 0.
double example2_u_ref_d(const Example2Config& cfg, double x_ini);

/// sum_k w_0(x + k c) (lambda T)^k / k! sum_{n <= m-k} ((alpha - lambda) T)^n / n!,
/// w_0(x) = exp(x + (b + sigma^2/2) T); needs d = 1 and beta = rho = 0.
double example2_wm_semianalytic_1d(const Example2Config& cfg, int m, double x);

/// w_m(0, x) = exp(x + a T) sum_{j <= m} (A T)^j / j! with a = b + sigma^2/2 and
/// A = alpha + beta sigma + (lambda + rho)(e^c - 1); valid for any beta, rho in d = 1.
double example2_wm_exact_1d(const Example2Config& cfg, int m, double x);

}  // namespace fbsdej
