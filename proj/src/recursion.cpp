#include "fbsdej/recursion.hpp"

#include "fbsdej/parallel.hpp"

#include <cmath>

namespace fbsdej {

namespace {

constexpr std::size_t kRowGrain = 4096;

RowMatrix gather(const StridedRows& X) {
  RowMatrix out(static_cast<Eigen::Index>(X.count), X.dim);
  for (std::size_t i = 0; i < X.count; ++i) {
    const auto row = X[i];
    std::copy(row.begin(), row.end(), out.data() + i * static_cast<std::size_t>(X.dim));
  }
  return out;
}

// Row i of the result is the row-major flattening of s_i w_i^T (d_y x d_0).
RowMatrix outer_rows(const RowMatrix& s, const RowMatrix& w) {
  const auto dy = s.cols();
  const auto d0 = w.cols();
  RowMatrix out(s.rows(), dy * d0);
  for (Eigen::Index p = 0; p < s.rows(); ++p) {
    for (Eigen::Index a = 0; a < dy; ++a) {
      for (Eigen::Index c = 0; c < d0; ++c) out(p, a * d0 + c) = s(p, a) * w(p, c);
    }
  }
  return out;
}

Vector column_means(const RowMatrix& A) {
  // Fixed-order column sums so the result is reproducible.
  Vector mean = Vector::Zero(A.cols());
  for (Eigen::Index p = 0; p < A.rows(); ++p) mean += A.row(p).transpose();
  return mean / static_cast<double>(A.rows());
}

Vector column_std_errors(const RowMatrix& A, const Vector& mean) {
  Vector var = Vector::Zero(A.cols());
  for (Eigen::Index p = 0; p < A.rows(); ++p) var += (A.row(p).transpose() - mean).cwiseAbs2();
  const double M = static_cast<double>(A.rows());
  if (A.rows() < 2) return Vector::Zero(A.cols());
  return (var / (M - 1.0) / M).cwiseSqrt();
}

SuffixAccumulator terminal_only(const RowMatrix& phi, int steps) {
  SuffixAccumulator acc;
  acc.paths = static_cast<std::size_t>(phi.rows());
  acc.steps = steps;
  acc.value_dim = static_cast<int>(phi.cols());
  const auto dy = static_cast<std::size_t>(phi.cols());
  acc.sums.resize(acc.paths * static_cast<std::size_t>(steps + 1) * dy);
  for (std::size_t p = 0; p < acc.paths; ++p) {
    for (int k = 0; k <= steps; ++k) {
      for (std::size_t a = 0; a < dy; ++a) {
        acc.sums[(p * static_cast<std::size_t>(steps + 1) + static_cast<std::size_t>(k)) * dy + a] =
            phi(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(a));
      }
    }
  }
  return acc;
}

std::vector<int> network_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  if (hidden.empty()) {
    sizes.push_back(in + 10);
    sizes.push_back(in + 10);
  } else {
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  }
  sizes.push_back(out);
  return sizes;
}

}  // namespace

RegressedFunction RegressedFunction::constant(const Vector& value) {
  Vector c = value;
  Exact e{[c](const RowMatrix& X, RowMatrix& out) {
    out.resize(X.rows(), c.size());
    for (Eigen::Index i = 0; i < X.rows(); ++i) out.row(i) = c.transpose();
  }};
  return {std::move(e), static_cast<int>(value.size())};
}

void RegressedFunction::evaluate(const StridedRows& X, RowMatrix& out) const {
  std::visit(
      [&](const auto& r) {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          throw Error("evaluating an empty regressed function");
        } else if constexpr (std::is_same_v<T, Linear>) {
          evaluate_linear(r.coeffs, *r.basis, X, out);
        } else if constexpr (std::is_same_v<T, Network>) {
          out.resize(static_cast<Eigen::Index>(X.count), output_dim_);
          parallel_for(X.count, kRowGrain, [&](std::size_t begin, std::size_t end) {
            Eigen::MatrixXd in(static_cast<Eigen::Index>(end - begin), X.dim);
            for (std::size_t i = begin; i < end; ++i) {
              const auto row = X[i];
              for (int j = 0; j < X.dim; ++j) in(static_cast<Eigen::Index>(i - begin), j) = row[j];
            }
            Eigen::MatrixXd y;
            r.net->evaluate(in, y);
            out.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) = y;
          });
        } else {
          r.fn(gather(X), out);
        }
      },
      realization_);
}

BatchFunction RegressedFunction::as_batch() const {
  RegressedFunction self = *this;
  return [self](const RowMatrix& X, RowMatrix& out) { self.evaluate(X, out); };
}

RowMatrix SuffixAccumulator::column(int k) const {
  RowMatrix out(static_cast<Eigen::Index>(paths), value_dim);
  for (std::size_t p = 0; p < paths; ++p) {
    const auto s = sum(p, k);
    for (int a = 0; a < value_dim; ++a) out(static_cast<Eigen::Index>(p), a) = s[a];
  }
  return out;
}

RowMatrix malliavin_weight(const PathBatch& paths, int k) {
  if (k < 0 || k >= paths.grid.steps) throw ConfigError("Malliavin weight index out of range");
  const double delta = paths.grid.delta();
  RowMatrix w(static_cast<Eigen::Index>(paths.paths), paths.brownian_dim);
  for (std::size_t p = 0; p < paths.paths; ++p) {
    const auto dB = paths.increment(p, k);
    for (int c = 0; c < paths.brownian_dim; ++c) w(static_cast<Eigen::Index>(p), c) = dB[c] / delta;
  }
  return w;
}

RegressedFunction terminal_u(const ModelSpec& model) {
  const ModelSpec* m = &model;
  RegressedFunction::Exact e{[m](const RowMatrix& X, RowMatrix& out) {
    out.resize(X.rows(), m->dims.value);
    for (Eigen::Index i = 0; i < X.rows(); ++i) m->terminal(row_span(X, i), row_span(out, i));
  }};
  return {std::move(e), model.dims.value};
}

RegressedFunction terminal_v(const ModelSpec& model, double t_n) {
  const ModelSpec* m = &model;
  RegressedFunction::Exact e{[m, t_n](const RowMatrix& X, RowMatrix& out) {
    out.resize(X.rows(), m->dims.value * m->dims.brownian);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      terminal_gradient_sigma(*m, t_n, row_span(X, i), row_span(out, i));
    }
  }};
  return {std::move(e), model.dims.value * model.dims.brownian};
}

TerminalData terminal_data(const ModelSpec& model, const PathBatch& paths,
                           const GammaEvaluator& gamma) {
  const int n = paths.grid.steps;
  const StridedRows Xn = paths.slice(n);
  TerminalData out;
  out.phi.resize(static_cast<Eigen::Index>(paths.paths), model.dims.value);
  out.grad_sigma.resize(static_cast<Eigen::Index>(paths.paths), model.dims.value * model.dims.brownian);
  const double T = paths.grid.horizon;
  parallel_for(paths.paths, kRowGrain, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      const auto row = static_cast<Eigen::Index>(p);
      model.terminal(Xn[p], row_span(out.phi, row));
      terminal_gradient_sigma(model, T, Xn[p], row_span(out.grad_sigma, row));
    }
  });
  out.gamma = gamma.gamma_batch(T, Xn, terminal_u(model).as_batch());
  return out;
}

SuffixAccumulator build_targets(const PicardLevel& previous, const PathBatch& paths,
                                const ModelSpec& model, const GammaEvaluator& gamma,
                                const TerminalData& terminal, bool keep_terms) {
  const int n = paths.grid.steps;
  const double delta = paths.grid.delta();
  const int dy = model.dims.value;
  const int dz = model.dims.value * model.dims.brownian;
  if (static_cast<int>(previous.u.size()) != n + 1 || static_cast<int>(previous.v.size()) != n + 1) {
    throw ConfigError("previous level does not match the time grid");
  }
  SuffixAccumulator acc = terminal_only(terminal.phi, n);
  if (keep_terms) acc.terms.resize(paths.paths * static_cast<std::size_t>(n) * static_cast<std::size_t>(dy));
  const std::size_t stride = static_cast<std::size_t>(n + 1) * static_cast<std::size_t>(dy);

  RowMatrix Y, Z, G;
  for (int i = n; i >= 1; --i) {
    const double t = paths.grid.time(i);
    const StridedRows X = paths.slice(i);
    const RowMatrix* y = &terminal.phi;
    const RowMatrix* z = &terminal.grad_sigma;
    const RowMatrix* g = &terminal.gamma;
    if (i < n) {
      const auto& u = previous.u[static_cast<std::size_t>(i)];
      const auto& v = previous.v[static_cast<std::size_t>(i)];
      const auto* lu = std::get_if<RegressedFunction::Linear>(&u.realization());
      const auto* lv = std::get_if<RegressedFunction::Linear>(&v.realization());
      if (lu && lv && lu->basis == lv->basis) {
        evaluate_linear_pair(lu->coeffs, lv->coeffs, *lu->basis, X, Y, Z);
      } else {
        u.evaluate(X, Y);
        v.evaluate(X, Z);
      }
      G = gamma.gamma_batch(t, X, u.as_batch(), &Y);
      y = &Y;
      z = &Z;
      g = &G;
    }
    parallel_for(paths.paths, kRowGrain, [&](std::size_t begin, std::size_t end) {
      std::vector<double> f(static_cast<std::size_t>(dy));
      for (std::size_t p = begin; p < end; ++p) {
        const auto row = static_cast<Eigen::Index>(p);
        model.driver(t, X[p], row_span(*y, row), {z->data() + p * static_cast<std::size_t>(dz), static_cast<std::size_t>(dz)},
                     row_span(*g, row), f);
        double* s = acc.sums.data() + p * stride;
        for (int a = 0; a < dy; ++a) {
          const double term = f[static_cast<std::size_t>(a)] + (*g)(row, a);
          const double next = s[static_cast<std::size_t>(i * dy + a)];
          const double value = next + delta * term;
          if (!std::isfinite(value)) {
            throw SimulationError("non-finite regression target on path " + std::to_string(p) +
                                  " at time index " + std::to_string(i));
          }
          s[static_cast<std::size_t>((i - 1) * dy + a)] = value;
          if (keep_terms) {
            acc.terms[(p * static_cast<std::size_t>(n) + static_cast<std::size_t>(i - 1)) *
                          static_cast<std::size_t>(dy) + static_cast<std::size_t>(a)] = term;
          }
        }
      }
    });
  }
  return acc;
}

LsmcScheme::LsmcScheme(const ModelSpec& model, const PathBatch& paths, LsmcOptions options)
    : model_(model),
      paths_(paths),
      options_(std::move(options)),
      basis_(std::make_shared<BasisSet>(default_basis(
          options_.basis, model.dims.state,
          model.dims.value == 1 ? std::optional<TerminalField>(model.terminal) : std::nullopt))),
      gamma_(model),
      terminal_(terminal_data(model, paths, gamma_)),
      projectors_(static_cast<std::size_t>(paths.grid.steps)) {}

const LeastSquaresProjector& LsmcScheme::projector(int k) {
  auto& slot = projectors_[static_cast<std::size_t>(k)];
  if (!slot) slot = std::make_unique<LeastSquaresProjector>(basis_, paths_.slice(k), options_.ridge_factor);
  return *slot;
}

PicardLevel LsmcScheme::fit_level(int m, const SuffixAccumulator& targets) {
  const int n = paths_.grid.steps;
  const int dy = model_.dims.value;
  const int dz = dy * model_.dims.brownian;
  PicardLevel level;
  level.m = m;
  level.u.resize(static_cast<std::size_t>(n + 1));
  level.v.resize(static_cast<std::size_t>(n + 1));
  level.u[static_cast<std::size_t>(n)] = terminal_u(model_);
  level.v[static_cast<std::size_t>(n)] = terminal_v(model_, paths_.grid.horizon);

  for (int k = n - 1; k >= 1; --k) {
    const RowMatrix S = targets.column(k);
    RowMatrix Y(S.rows(), dy + dz);
    Y.leftCols(dy) = S;
    Y.rightCols(dz) = outer_rows(S, malliavin_weight(paths_, k));
    const LinearCoefficients fit = projector(k).project(Y);
    LinearCoefficients cu = fit;
    LinearCoefficients cv = fit;
    cu.beta = fit.beta.leftCols(dy);
    cv.beta = fit.beta.rightCols(dz);
    level.u[static_cast<std::size_t>(k)] = RegressedFunction(RegressedFunction::Linear{basis_, std::move(cu)}, dy);
    level.v[static_cast<std::size_t>(k)] = RegressedFunction(RegressedFunction::Linear{basis_, std::move(cv)}, dz);
  }

  const RowMatrix S0 = targets.column(0);
  level.u_at_origin = column_means(S0);
  level.u_std_error = column_std_errors(S0, level.u_at_origin);
  level.u[0] = RegressedFunction::constant(level.u_at_origin);
  level.v[0] = RegressedFunction::constant(column_means(outer_rows(S0, malliavin_weight(paths_, 0))));
  return level;
}

PicardLevel LsmcScheme::level_zero() {
  return fit_level(0, terminal_only(terminal_.phi, paths_.grid.steps));
}

PicardLevel LsmcScheme::picard_step(const PicardLevel& previous) {
  const SuffixAccumulator acc = build_targets(previous, paths_, model_, gamma_, terminal_);
  return fit_level(previous.m + 1, acc);
}

NnScheme::NnScheme(const ModelSpec& model, const TimeGrid& grid, Vector x0, NnOptions options,
                   std::uint64_t seed)
    : model_(model), grid_(grid), x0_(std::move(x0)), options_(std::move(options)), seed_(seed),
      gamma_(model) {
  if (grid_.steps < 1) throw ConfigError("time grid needs at least one step");
  if (options_.schedule.batch_size < 2) throw ConfigError("NN batch size must be at least 2");
  if (options_.schedule.steps < 0) throw ConfigError("NN train steps must be non-negative");
}

PicardLevel NnScheme::train_level(int m, const PicardLevel* previous) {
  const int n = grid_.steps;
  const int dx = model_.dims.state;
  const int dy = model_.dims.value;
  const int dz = dy * model_.dims.brownian;
  const std::span<const double> x0{x0_.data(), static_cast<std::size_t>(x0_.size())};
  const std::uint64_t level_seed = derive_seed(seed_, static_cast<std::uint64_t>(m));

  std::vector<PairTrainer> trainers;
  trainers.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    Mlp u(network_sizes(dx, options_.hidden, dy), options_.batch_norm);
    Mlp v(network_sizes(dx, options_.hidden, dz), options_.batch_norm);
    u.initialize(level_seed, 2 * static_cast<std::uint64_t>(k));
    v.initialize(level_seed, 2 * static_cast<std::uint64_t>(k) + 1);
    trainers.emplace_back(std::move(u), std::move(v));
  }

  auto targets_for = [&](const PathBatch& batch) {
    const TerminalData terminal = terminal_data(model_, batch, gamma_);
    if (previous == nullptr) return terminal_only(terminal.phi, n);
    return build_targets(*previous, batch, model_, gamma_, terminal);
  };

  const TrainSchedule& schedule = options_.schedule;
  for (int j = 0; j < schedule.steps; ++j) {
    const PathBatch batch = simulate_forward(model_, grid_, x0, schedule.batch_size,
                                             derive_seed(level_seed, 1, static_cast<std::uint64_t>(j)));
    const SuffixAccumulator acc = targets_for(batch);
    const double lr = schedule.rate(j);
    for (int k = 1; k < n; ++k) {
      const RowMatrix S = acc.column(k);
      const Eigen::MatrixXd X = gather(batch.slice(k));
      const Eigen::MatrixXd tu = S;
      const Eigen::MatrixXd tv = outer_rows(S, malliavin_weight(batch, k));
      const double loss = trainers[static_cast<std::size_t>(k)].step(X, tu, tv, lr);
      if (!std::isfinite(loss)) {
        throw NumericalError("non-finite training loss at level " + std::to_string(m) + ", time index " +
                             std::to_string(k) + ", step " + std::to_string(j));
      }
    }
  }

  PicardLevel level;
  level.m = m;
  level.u.resize(static_cast<std::size_t>(n + 1));
  level.v.resize(static_cast<std::size_t>(n + 1));
  level.u[static_cast<std::size_t>(n)] = terminal_u(model_);
  level.v[static_cast<std::size_t>(n)] = terminal_v(model_, grid_.horizon);
  losses_.assign(static_cast<std::size_t>(n), {});
  for (int k = 1; k < n; ++k) {
    auto& tr = trainers[static_cast<std::size_t>(k)];
    losses_[static_cast<std::size_t>(k)] = tr.losses();
    level.u[static_cast<std::size_t>(k)] =
        RegressedFunction(RegressedFunction::Network{std::make_shared<const Mlp>(tr.u())}, dy);
    level.v[static_cast<std::size_t>(k)] =
        RegressedFunction(RegressedFunction::Network{std::make_shared<const Mlp>(tr.v())}, dz);
  }

  // U_{m,0} is a plain mean, taken over a separate evaluation batch.
  const PathBatch eval = simulate_forward(model_, grid_, x0, options_.evaluation_paths,
                                          derive_seed(level_seed, 2));
  const SuffixAccumulator acc = targets_for(eval);
  const RowMatrix S0 = acc.column(0);
  level.u_at_origin = column_means(S0);
  level.u_std_error = column_std_errors(S0, level.u_at_origin);
  level.u[0] = RegressedFunction::constant(level.u_at_origin);
  level.v[0] = RegressedFunction::constant(column_means(outer_rows(S0, malliavin_weight(eval, 0))));
  return level;
}

PicardLevel NnScheme::level_zero() { return train_level(0, nullptr); }

PicardLevel NnScheme::picard_step(const PicardLevel& previous) {
  return train_level(previous.m + 1, &previous);
}

std::vector<LevelEstimate> run_scheme(const ModelSpec& model, const TimeGrid& grid,
                                      const Vector& x0, std::size_t paths, int m_max,
                                      const Backend& backend, std::uint64_t seed,
                                      const SolveOptions& options, std::vector<PicardLevel>* levels) {
  if (m_max < 0) throw ConfigError("m_max must be non-negative");
  model.validate();
  std::vector<LevelEstimate> out;
  auto record = [&](const PicardLevel& level) {
    out.push_back({level.m, level.u_at_origin, level.u_std_error});
    if (levels) levels->push_back(level);
  };
  if (const auto* lsmc = std::get_if<LsmcOptions>(&backend)) {
    const PathBatch batch = simulate_forward(model, grid, {x0.data(), static_cast<std::size_t>(x0.size())},
                                             paths, seed, options.simulation);
    LsmcScheme scheme(model, batch, *lsmc);
    PicardLevel level = scheme.level_zero();
    record(level);
    for (int m = 1; m <= m_max; ++m) {
      level = scheme.picard_step(level);
      record(level);
    }
  } else {
    NnScheme scheme(model, grid, x0, std::get<NnOptions>(backend), seed);
    PicardLevel level = scheme.level_zero();
    record(level);
    for (int m = 1; m <= m_max; ++m) {
      level = scheme.picard_step(level);
      record(level);
    }
  }
  return out;
}

std::vector<LevelEstimate> solve(const ModelSpec& model, const TimeGrid& grid, const Vector& x0,
                                 std::size_t paths, int m_max, const Backend& backend,
                                 const std::vector<std::uint64_t>& seeds, const SolveOptions& options) {
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  std::vector<std::vector<LevelEstimate>> runs;
  for (std::uint64_t seed : seeds) runs.push_back(run_scheme(model, grid, x0, paths, m_max, backend, seed, options));
  if (runs.size() == 1) return runs.front();

  const double R = static_cast<double>(runs.size());
  std::vector<LevelEstimate> out;
  for (std::size_t m = 0; m < runs.front().size(); ++m) {
    LevelEstimate e;
    e.m = runs.front()[m].m;
    e.value = Vector::Zero(runs.front()[m].value.size());
    for (const auto& r : runs) e.value += r[m].value;
    e.value /= R;
    Vector var = Vector::Zero(e.value.size());
    for (const auto& r : runs) var += (r[m].value - e.value).cwiseAbs2();
    e.std_error = (var / (R - 1.0) / R).cwiseSqrt();
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace fbsdej
