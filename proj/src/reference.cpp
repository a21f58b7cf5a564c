#include "fbsdej/reference.hpp"

#include "fbsdej/parallel.hpp"
#include "fbsdej/random.hpp"
#include "fbsdej/simulate.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace fbsdej {

namespace {

// c_k = (lambda T)^k / k! * sum_{n <= m-k} ((c + r + lambda)(-T))^n / n!.
std::vector<double> merton_weights(const MertonConfig& cfg, int m) {
  std::vector<double> w(static_cast<std::size_t>(m + 1));
  const double rate = (cfg.c + cfg.r + cfg.lambda) * -cfg.T;
  double pk = 1.0;
  for (int k = 0; k <= m; ++k) {
    if (k > 0) pk *= cfg.lambda * cfg.T / k;
    double s = 0.0;
    double term = 1.0;
    for (int n = 0; n <= m - k; ++n) {
      if (n > 0) term *= rate / n;
      s += term;
    }
    w[static_cast<std::size_t>(k)] = pk * s;
  }
  return w;
}

double put_payoff(double K, const double* x, int d) {
  double mean = 0.0;
  for (int i = 0; i < d; ++i) mean += x[i];
  mean /= d;
  return std::max(K - mean, 0.0);
}

}  // namespace

void MertonConfig::validate() const {
  if (d < 1) throw ConfigError("Merton dimension must be positive");
  if (!(x > 0.0) || !(K > 0.0)) throw ConfigError("Merton spot and strike must be positive");
  if (!(T > 0.0)) throw ConfigError("Merton horizon must be positive");
  if (!(sigma > 0.0) || !(sigma_j > 0.0)) throw ConfigError("Merton volatilities must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("Merton intensity must be non-negative");
  if (sigma_matrix.size() != 0 && (sigma_matrix.rows() != d || sigma_matrix.cols() != d)) {
    throw ConfigError("Merton sigma matrix must be d x d");
  }
  if (sigma_j_matrix.size() != 0 && (sigma_j_matrix.rows() != d || sigma_j_matrix.cols() != d)) {
    throw ConfigError("Merton sigma_J matrix must be d x d");
  }
  if (mu_j_vector.size() != 0 && mu_j_vector.size() != d) throw ConfigError("Merton mu_J must have d entries");
}

RowMatrix MertonConfig::diffusion() const {
  if (sigma_matrix.size() != 0) return sigma_matrix;
  return sigma * RowMatrix::Identity(d, d);
}

Vector MertonConfig::jump_mean() const {
  if (mu_j_vector.size() != 0) return mu_j_vector;
  return Vector::Constant(d, mu_j);
}

RowMatrix MertonConfig::jump_factor() const {
  if (sigma_j_matrix.size() != 0) return sigma_j_matrix;
  return sigma_j * RowMatrix::Identity(d, d);
}

void Example2Config::validate() const {
  if (d < 1) throw ConfigError("dimension must be positive");
  if (!(T > 0.0)) throw ConfigError("horizon must be positive");
  if (!(sigma0 > 0.0)) throw ConfigError("sigma0 must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double bs_put(double x, double K, double T, double r, double sigma) {
  if (!(x > 0.0) || !(K > 0.0)) throw ConfigError("Black-Scholes spot and strike must be positive");
  if (!(T > 0.0) || !(sigma > 0.0)) throw ConfigError("Black-Scholes needs positive T and sigma");
  const double vol = sigma * std::sqrt(T);
  const double d1 = (std::log(x / K) + (r + 0.5 * sigma * sigma) * T) / vol;
  const double d2 = d1 - vol;
  return K * std::exp(-r * T) * normal_cdf(-d2) - x * normal_cdf(-d1);
}

double merton_put(const MertonConfig& cfg, int k_max) {
  if (cfg.lambda == 0.0) return bs_put(cfg.x, cfg.K, cfg.T, cfg.r, cfg.sigma);
  const double jump_mean = std::exp(cfg.mu_j + 0.5 * cfg.sigma_j * cfg.sigma_j);
  const double intensity = jump_mean * cfg.lambda * cfg.T;
  double weight = std::exp(-intensity);
  double mass = 0.0;
  double price = 0.0;
  for (int k = 0; k <= k_max; ++k) {
    if (k > 0) weight *= intensity / k;
    const double rk = cfg.r - cfg.lambda * (jump_mean - 1.0) +
                      k * (cfg.mu_j + 0.5 * cfg.sigma_j * cfg.sigma_j) / cfg.T;
    const double sk = std::sqrt(cfg.sigma * cfg.sigma + k * cfg.sigma_j * cfg.sigma_j / cfg.T);
    price += weight * bs_put(cfg.x, cfg.K, cfg.T, rk, sk);
    mass += weight;
    if (1.0 - mass < 1e-12 && k >= intensity) break;
  }
  return price;
}

double merton_u_ref_1d(const MertonConfig& cfg) {
  if (cfg.d != 1) throw UnsupportedError("the Merton series reference is one-dimensional");
  return std::exp(-cfg.c * cfg.T) * merton_put(cfg);
}

Estimate merton_wm_semianalytic(const MertonConfig& cfg, int m, std::size_t inner_paths,
                                std::uint64_t seed) {
  cfg.validate();
  if (m < 0) throw ConfigError("m must be non-negative");
  if (inner_paths == 0) throw ConfigError("inner path count must be positive");
  const std::vector<double> weights = merton_weights(cfg, m);
  const int d = cfg.d;
  const Vector mu = cfg.jump_mean();
  const RowMatrix sj = cfg.jump_factor();
  const RowMatrix sigma = cfg.diffusion();

  // Compensated drift of the jump-free process, per coordinate.
  Vector drift(d);
  for (int i = 0; i < d; ++i) {
    const double var = sj.row(i).squaredNorm();
    drift[i] = cfg.r - cfg.lambda * (std::exp(mu[i] + 0.5 * var) - 1.0);
  }
  const double r0 = drift[0];

  std::vector<double> values(inner_paths);
  if (d == 1) {
    const double s1 = sigma(0, 0);
    const double w0_x = std::exp(r0 * cfg.T) * bs_put(cfg.x, cfg.K, cfg.T, r0, s1);
    parallel_for(inner_paths, 4096, [&](std::size_t begin, std::size_t end) {
      for (std::size_t p = begin; p < end; ++p) {
        RandomStream rng(seed, StreamPurpose::inner_mc, p, 0);
        const double xi = rng.normal();
        double v = weights[0] * w0_x;
        for (int k = 1; k <= m; ++k) {
          const double jump = k * mu[0] + std::sqrt(static_cast<double>(k)) * sj(0, 0) * xi;
          const double y = cfg.x * std::exp(jump);
          v += weights[static_cast<std::size_t>(k)] * std::exp(r0 * cfg.T) * bs_put(y, cfg.K, cfg.T, r0, s1);
        }
        values[p] = v;
      }
    });
  } else {
    Vector log_drift(d);
    for (int i = 0; i < d; ++i) log_drift[i] = (drift[i] - 0.5 * sigma.row(i).squaredNorm()) * cfg.T;
    const double sqrtT = std::sqrt(cfg.T);
    parallel_for(inner_paths, 1024, [&](std::size_t begin, std::size_t end) {
      Vector xi(d), eta(d), jump(d), diffusion(d), y(d);
      for (std::size_t p = begin; p < end; ++p) {
        RandomStream rng(seed, StreamPurpose::inner_mc, p, 0);
        for (int i = 0; i < d; ++i) xi[i] = rng.normal();
        diffusion = sqrtT * (sigma * xi);
        jump.setZero();
        double v = 0.0;
        for (int k = 0; k <= m; ++k) {
          if (k > 0) {
            for (int i = 0; i < d; ++i) eta[i] = rng.normal();
            jump += mu + sj * eta;
          }
          for (int i = 0; i < d; ++i) y[i] = cfg.x * std::exp(jump[i] + log_drift[i] + diffusion[i]);
          v += weights[static_cast<std::size_t>(k)] * put_payoff(cfg.K, y.data(), d);
        }
        values[p] = v;
      }
    });
  }

  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(inner_paths);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double n = static_cast<double>(inner_paths);
  return {mean, inner_paths > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0};
}

Estimate u_ref_mc(const ModelSpec& model, const TimeGrid& grid, const Vector& x0,
                  std::size_t paths, std::uint64_t seed, double rate, int threads) {
  const int dy = model.dims.value;
  // Block sums, combined in path order, keep the estimate independent of threads.
  double sum = 0.0;
  double sum_sq = 0.0;
  std::vector<double> phi;
  std::vector<double> out(static_cast<std::size_t>(dy));
  stream_oracle_terminals(
      model, grid, {x0.data(), static_cast<std::size_t>(x0.size())}, paths, seed,
      [&](std::size_t, const RowMatrix& terminal) {
        phi.resize(static_cast<std::size_t>(terminal.rows()));
        for (Eigen::Index p = 0; p < terminal.rows(); ++p) {
          model.terminal(row_span(terminal, p), out);
          phi[static_cast<std::size_t>(p)] = out[0];
        }
        for (double v : phi) {
          sum += v;
          sum_sq += v * v;
        }
      },
      std::size_t{1} << 16, threads);
  const double n = static_cast<double>(paths);
  const double mean = sum / n;
  const double var = paths > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0)) : 0.0;
  const double discount = std::exp(-rate * grid.horizon);
  return {discount * mean, discount * std::sqrt(var / n)};
}

double example2_u_ref_1d(const Example2Config& cfg, double x) {
  const double kappa = cfg.b0 + 0.5 * cfg.sigma0 * cfg.sigma0 + cfg.alpha + cfg.beta * cfg.sigma0 +
                       (cfg.lambda + cfg.rho) * std::expm1(cfg.c);
  return std::exp(x + kappa * cfg.T);
}

double example2_pide_residual_1d(const Example2Config& cfg, double t, double x) {
  const double kappa = cfg.b0 + 0.5 * cfg.sigma0 * cfg.sigma0 + cfg.alpha + cfg.beta * cfg.sigma0 +
                       (cfg.lambda + cfg.rho) * std::expm1(cfg.c);
  const double u = std::exp(x + kappa * (cfg.T - t));
  const double u_shift = std::exp(x + cfg.c + kappa * (cfg.T - t));
  const double u_t = -kappa * u;
  const double u_x = u;
  const double u_xx = u;
  const double gamma = cfg.lambda * (u_shift - u);
  const double z = u_x * cfg.sigma0;
  const double driver = cfg.alpha * u + cfg.beta * z + (cfg.lambda > 0.0 ? cfg.rho * gamma / cfg.lambda
                                                                         : cfg.rho * (u_shift - u));
  const double residual = u_t + cfg.b0 * u_x + 0.5 * cfg.sigma0 * cfg.sigma0 * u_xx + gamma + driver;
  return residual / u;
}

double example2_u_ref_d(const Example2Config& cfg, double x_ini) {
  if (cfg.beta != 0.0 || cfg.rho != 0.0) {
    throw UnsupportedError("the closed-form multi-dimensional reference needs beta = rho = 0");
  }
  return std::exp(x_ini + cfg.b0 * cfg.T + (cfg.alpha + cfg.sigma0 * cfg.sigma0 / (2.0 * cfg.d)) * cfg.T +
                  std::expm1(cfg.c) * cfg.lambda * cfg.T);
}

double example2_wm_semianalytic_1d(const Example2Config& cfg, int m, double x) {
  if (cfg.d != 1) throw UnsupportedError("the semi-analytic recursion is one-dimensional");
  if (cfg.beta != 0.0 || cfg.rho != 0.0) throw UnsupportedError("the semi-analytic recursion needs beta = rho = 0");
  if (m < 0) throw ConfigError("m must be non-negative");
  auto w0 = [&](double y) { return std::exp(y + (cfg.b0 + 0.5 * cfg.sigma0 * cfg.sigma0) * cfg.T); };
  double total = 0.0;
  double pk = 1.0;
  for (int k = 0; k <= m; ++k) {
    if (k > 0) pk *= cfg.lambda * cfg.T / k;
    double s = 0.0;
    double term = 1.0;
    for (int n = 0; n <= m - k; ++n) {
      if (n > 0) term *= (-cfg.alpha + cfg.lambda) * -cfg.T / n;
      s += term;
    }
    total += w0(x + k * cfg.c) * pk * s;
  }
  return total;
}

double example2_wm_exact_1d(const Example2Config& cfg, int m, double x) {
  if (cfg.d != 1) throw UnsupportedError("the closed-form recursion is one-dimensional");
  if (m < 0) throw ConfigError("m must be non-negative");
  const double a = cfg.b0 + 0.5 * cfg.sigma0 * cfg.sigma0;
  const double A = cfg.alpha + cfg.beta * cfg.sigma0 + (cfg.lambda + cfg.rho) * std::expm1(cfg.c);
  double s = 0.0;
  double term = 1.0;
  for (int j = 0; j <= m; ++j) {
    if (j > 0) term *= A * cfg.T / j;
    s += term;
  }
  return std::exp(x + a * cfg.T) * s;
}

}  // namespace fbsdej
