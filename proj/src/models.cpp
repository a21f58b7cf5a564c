#include "fbsdej/models.hpp"

#include <cmath>

namespace fbsdej {

namespace {

double mean_of(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

void set_terminal(ModelSpec& model, TerminalKind kind, double strike, double value) {
  const int d = model.dims.state;
  switch (kind) {
    case TerminalKind::exp_mean:
      model.terminal = [](std::span<const double> x, std::span<double> out) { out[0] = std::exp(mean_of(x)); };
      model.terminal_gradient = [d](std::span<const double> x, std::span<double> out) {
        const double g = std::exp(mean_of(x)) / d;
        for (int i = 0; i < d; ++i) out[i] = g;
      };
      break;
    case TerminalKind::put_mean:
      model.terminal = [strike](std::span<const double> x, std::span<double> out) {
        out[0] = std::max(strike - mean_of(x), 0.0);
      };
      // Zero at the kink: the one-sided slope from the out-of-the-money side.
      model.terminal_gradient = [d, strike](std::span<const double> x, std::span<double> out) {
        const double g = mean_of(x) < strike ? -1.0 / d : 0.0;
        for (int i = 0; i < d; ++i) out[i] = g;
      };
      break;
    case TerminalKind::constant:
      model.terminal = [value](std::span<const double>, std::span<double> out) { out[0] = value; };
      model.terminal_gradient = [d](std::span<const double>, std::span<double> out) {
        for (int i = 0; i < d; ++i) out[i] = 0.0;
      };
      break;
  }
}

}  // namespace

ModelSpec merton_model(const MertonConfig& cfg, std::size_t gamma_samples, std::uint64_t marks_seed) {
  cfg.validate();
  const int d = cfg.d;
  const double r = cfg.r;
  const double c = cfg.c;
  const double lambda = cfg.lambda;
  const RowMatrix sigma = cfg.diffusion();
  const Vector mu = cfg.jump_mean();
  const RowMatrix sj = cfg.jump_factor();
  Vector jump_mean(d);
  for (int i = 0; i < d; ++i) jump_mean[i] = std::expm1(mu[i] + 0.5 * sj.row(i).squaredNorm());

  ModelSpec model;
  model.dims = {d, d, d, 1};
  model.drift = [r](double, std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = r * x[i];
  };
  model.diffusion = [sigma, d](double, std::span<const double> x, std::span<double> out) {
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(i * d + j)] = x[i] * sigma(i, j);
    }
  };
  model.jump_size = [](double, std::span<const double> x, std::span<const double> z, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * std::expm1(z[i]);
  };
  model.intensity = [lambda](double, std::span<const double>) { return lambda; };
  model.intensity_bound = lambda;
  model.constant_intensity = true;
  model.measure = JumpMeasure::from_sampler(
      d,
      [mu, sj, d](RandomStream& rng, std::span<double> out) {
        Vector eta(d);
        for (int i = 0; i < d; ++i) eta[i] = rng.normal();
        const Vector z = mu + sj * eta;
        for (int i = 0; i < d; ++i) out[i] = z[i];
      },
      gamma_samples, marks_seed);
  model.compensator_closed_form = [lambda, jump_mean](double, std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = lambda * x[i] * jump_mean[static_cast<Eigen::Index>(i)];
  };
  model.driver = [r, c](double, std::span<const double>, std::span<const double> y, std::span<const double>,
                        std::span<const double>, std::span<double> out) {
    out[0] = -r * y[0] - c * std::max(y[0], 0.0);
  };
  set_terminal(model, TerminalKind::put_mean, cfg.K, 0.0);
  return model;
}

ModelSpec custom_model(const Example2Config& cfg, TerminalKind terminal, double strike,
                       double terminal_value) {
  cfg.validate();
  const int d = cfg.d;
  const double drift = cfg.b0 + cfg.lambda * cfg.c;
  const double sigma0 = cfg.sigma0;
  const double lambda = cfg.lambda;
  const double alpha = cfg.alpha;
  const double beta = cfg.beta;
  const double rho = cfg.rho;

  ModelSpec model;
  model.dims = {d, d, 1, 1};
  model.drift = [drift](double, std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = drift;
  };
  model.diffusion = [sigma0, d](double, std::span<const double>, std::span<double> out) {
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(i * d + j)] = i == j ? sigma0 : 0.0;
    }
  };
  model.jump_size = [](double, std::span<const double> x, std::span<const double> z, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = z[0];
  };
  model.intensity = [lambda](double, std::span<const double>) { return lambda; };
  model.intensity_bound = lambda;
  model.constant_intensity = true;
  model.measure = JumpMeasure::from_atoms({JumpAtom{{cfg.c}, 1.0}});
  model.driver = [alpha, beta, rho, lambda, d](double, std::span<const double>, std::span<const double> y,
                                               std::span<const double> z, std::span<const double> gamma,
                                               std::span<double> out) {
    double zbar = 0.0;
    for (int i = 0; i < d; ++i) zbar += z[i];
    zbar /= d;
    out[0] = alpha * y[0] + beta * zbar + (lambda > 0.0 ? rho * gamma[0] / lambda : 0.0);
  };
  set_terminal(model, terminal, strike, terminal_value);
  return model;
}

ModelSpec example2_model(const Example2Config& cfg) {
  return custom_model(cfg, TerminalKind::exp_mean, 0.0, 0.0);
}

TerminalKind parse_terminal_kind(const std::string& name) {
  if (name == "exp_mean") return TerminalKind::exp_mean;
  if (name == "put_mean") return TerminalKind::put_mean;
  if (name == "constant") return TerminalKind::constant;
  throw ConfigError("unknown terminal '" + name + "' (expected exp_mean, put_mean or constant)");
}

std::string to_string(TerminalKind kind) {
  switch (kind) {
    case TerminalKind::exp_mean:
      return "exp_mean";
    case TerminalKind::put_mean:
      return "put_mean";
    case TerminalKind::constant:
      return "constant";
  }
  return "exp_mean";
}

}  // namespace fbsdej
