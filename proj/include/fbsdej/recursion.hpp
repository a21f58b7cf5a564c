#pragma once

#include "fbsdej/common.hpp"
#include "fbsdej/gamma.hpp"
#include "fbsdej/lsmc.hpp"
#include "fbsdej/mlp.hpp"
#include "fbsdej/model.hpp"
#include "fbsdej/simulate.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

namespace fbsdej {

/// An evaluable approximation of U_{m,k} or V_{m,k}.
class RegressedFunction {
 public:
  struct Linear {
    std::shared_ptr<const BasisSet> basis;
    LinearCoefficients coeffs;
  };
  struct Network {
    std::shared_ptr<const Mlp> net;
  };
  struct Exact {
    BatchFunction fn;
  };

  RegressedFunction() = default;
  RegressedFunction(Linear r, int out) : realization_(std::move(r)), output_dim_(out) {}
  RegressedFunction(Network r, int out) : realization_(std::move(r)), output_dim_(out) {}
  RegressedFunction(Exact r, int out) : realization_(std::move(r)), output_dim_(out) {}

  static RegressedFunction constant(const Vector& value);

  int output_dim() const { return output_dim_; }
  const auto& realization() const { return realization_; }
  bool empty() const { return std::holds_alternative<std::monostate>(realization_); }

  void evaluate(const StridedRows& X, RowMatrix& out) const;
  void evaluate(const RowMatrix& X, RowMatrix& out) const { evaluate(StridedRows::of(X), out); }
  BatchFunction as_batch() const;

 private:
  std::variant<std::monostate, Linear, Network, Exact> realization_;
  int output_dim_ = 0;
};

/// {U_{m,k}, V_{m,k}} for k = 0..n. Entry n is the terminal condition and
/// (grad Phi sigma)(t_n, .); entry 0 is the constant sample mean.
struct PicardLevel {
  int m = 0;
  std::vector<RegressedFunction> u;
  std::vector<RegressedFunction> v;
  Vector u_at_origin;
  /// Within-run standard error of u_at_origin (sample sd over sqrt(M)).
  Vector u_std_error;
};

/// Per-path suffix sums S_k = Phi(X_n) + sum_{i=k+1}^{n} delta (f_i + gamma_i),
/// stored as sums[(p * (n + 1) + k) * d_y]. `terms` (optional) holds f_i + gamma_i
/// at terms[(p * n + i - 1) * d_y].
struct SuffixAccumulator {
  std::size_t paths = 0;
  int steps = 0;
  int value_dim = 0;
  std::vector<double> sums;
  std::vector<double> terms;

  std::span<const double> sum(std::size_t p, int k) const {
    return {sums.data() + (p * static_cast<std::size_t>(steps + 1) + static_cast<std::size_t>(k)) *
                              static_cast<std::size_t>(value_dim),
            static_cast<std::size_t>(value_dim)};
  }
  /// S_k for all paths as an M x d_y matrix.
  RowMatrix column(int k) const;
};

struct LsmcOptions {
  std::string basis = "example2";
  double ridge_factor = 1e-10;
};

struct NnOptions {
  /// Hidden widths; empty means two layers of d_x + 10.
  std::vector<int> hidden;
  bool batch_norm = true;
  TrainSchedule schedule;
  /// Paths used for the plain mean defining U_{m,0}.
  std::size_t evaluation_paths = std::size_t{1} << 16;
};

using Backend = std::variant<LsmcOptions, NnOptions>;

/// Delta B_{k+1}^T / delta per path (M x d_0).
RowMatrix malliavin_weight(const PathBatch& paths, int k);

/// Terminal data shared by all levels: Phi(X_n), (grad Phi sigma)(t_n, X_n) and
/// gamma(t_n, X_n; Phi).
struct TerminalData {
  RowMatrix phi;
  RowMatrix grad_sigma;
  RowMatrix gamma;
};
TerminalData terminal_data(const ModelSpec& model, const PathBatch& paths,
                           const GammaEvaluator& gamma);

/// Exact entries used at k = n.
RegressedFunction terminal_u(const ModelSpec& model);
RegressedFunction terminal_v(const ModelSpec& model, double t_n);

/// Evaluates level m-1 along the paths and accumulates the suffix sums. At
/// i = n the terminal condition and its gradient are used exactly.
SuffixAccumulator build_targets(const PicardLevel& previous, const PathBatch& paths,
                                const ModelSpec& model, const GammaEvaluator& gamma,
                                const TerminalData& terminal, bool keep_terms = false);

/// Least-squares Monte Carlo realization of the forward scheme on one PathBatch.
/// Projectors for each time index are built once and reused by every level.
class LsmcScheme {
 public:
  LsmcScheme(const ModelSpec& model, const PathBatch& paths, LsmcOptions options);

  PicardLevel level_zero();
  PicardLevel picard_step(const PicardLevel& previous);
  /// Fits level m from given suffix sums (S_0 gives u_at_origin).
  PicardLevel fit_level(int m, const SuffixAccumulator& targets);

  const TerminalData& terminal() const { return terminal_; }
  const GammaEvaluator& gamma() const { return gamma_; }

 private:
  const ModelSpec& model_;
  const PathBatch& paths_;
  LsmcOptions options_;
  std::shared_ptr<const BasisSet> basis_;
  GammaEvaluator gamma_;
  TerminalData terminal_;
  std::vector<std::unique_ptr<LeastSquaresProjector>> projectors_;

  const LeastSquaresProjector& projector(int k);
};

/// Neural-network realization: every training step simulates a fresh minibatch
/// of forward paths, builds the targets of the current level from the previous
/// one, and updates one (U, V) network pair per time index.
class NnScheme {
 public:
  NnScheme(const ModelSpec& model, const TimeGrid& grid, Vector x0, NnOptions options,
           std::uint64_t seed);

  PicardLevel level_zero();
  PicardLevel picard_step(const PicardLevel& previous);

  /// Summed training loss per step for each time index of the last level.
  const std::vector<std::vector<double>>& last_losses() const { return losses_; }

 private:
  const ModelSpec& model_;
  TimeGrid grid_;
  Vector x0_;
  NnOptions options_;
  std::uint64_t seed_;
  GammaEvaluator gamma_;
  std::vector<std::vector<double>> losses_;

  PicardLevel train_level(int m, const PicardLevel* previous);
};

struct LevelEstimate {
  int m = 0;
  Vector value;
  Vector std_error;
};

struct SolveOptions {
  SimulationOptions simulation;
};

/// One full run: level 0 and m_max Picard steps. Only the previous level is
/// kept in memory unless `levels` is given, which then receives every level.
std::vector<LevelEstimate> run_scheme(const ModelSpec& model, const TimeGrid& grid,
                                      const Vector& x0, std::size_t paths, int m_max,
                                      const Backend& backend, std::uint64_t seed,
                                      const SolveOptions& options = {},
                                      std::vector<PicardLevel>* levels = nullptr);

/// Repeats the scheme once per seed. With two or more runs the standard error
/// is the sample sd of the run values over sqrt(R); with one run it is the
/// within-run error.
std::vector<LevelEstimate> solve(const ModelSpec& model, const TimeGrid& grid, const Vector& x0,
                                 std::size_t paths, int m_max, const Backend& backend,
                                 const std::vector<std::uint64_t>& seeds,
                                 const SolveOptions& options = {});

}  // namespace fbsdej
