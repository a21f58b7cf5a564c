#pragma once

#include "fbsdej/common.hpp"
#include "fbsdej/random.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace fbsdej {

/// Sizes of the forward state, Brownian driver, jump marks and backward value.
struct Dimensions {
  int state = 1;
  int brownian = 1;
  int mark = 1;
  int value = 1;

  void validate() const;
};

/// Equidistant grid t_k = k T / n on [0, T].
struct TimeGrid {
  double horizon = 1.0;
  int steps = 1;

  TimeGrid() = default;
  TimeGrid(double horizon_, int steps_);

  double delta() const { return horizon / steps; }
  double time(int k) const { return k == steps ? horizon : horizon * k / steps; }
};

struct JumpAtom {
  std::vector<double> mark;
  double probability = 0.0;
};

/// Probability measure of the jump marks. Either finitely many atoms, or a
/// sampler from which `sample_count` marks are drawn once at construction and
/// then reused by every compensator integral (common random numbers).
class JumpMeasure {
 public:
  enum class Kind { atoms, sampled };
  using Sampler = std::function<void(RandomStream&, std::span<double>)>;

  static JumpMeasure from_atoms(std::vector<JumpAtom> atoms);
  static JumpMeasure from_sampler(int mark_dim, Sampler sampler, std::size_t sample_count,
                                  std::uint64_t marks_seed);

  Kind kind() const { return kind_; }
  int mark_dim() const { return mark_dim_; }
  std::size_t sample_count() const { return static_cast<std::size_t>(nodes_.rows()); }

  /// Atom marks, or the frozen sample (one mark per row).
  const RowMatrix& nodes() const { return nodes_; }
  /// Atom probabilities; empty for the sampled kind (uniform 1/Q weights).
  const std::vector<double>& probabilities() const { return probabilities_; }

  /// Draws one fresh mark (used by the jump-inclusive oracle).
  void draw(RandomStream& stream, std::span<double> out) const;

 private:
  Kind kind_ = Kind::atoms;
  int mark_dim_ = 1;
  RowMatrix nodes_;
  std::vector<double> probabilities_;
  std::vector<double> cumulative_;
  Sampler sampler_;
};

using VectorField = std::function<void(double t, std::span<const double> x, std::span<double> out)>;
// Row-major d_x x d_0 matrix.
using DiffusionField =
    std::function<void(double t, std::span<const double> x, std::span<double> out)>;
using JumpField = std::function<void(double t, std::span<const double> x,
                                     std::span<const double> z, std::span<double> out)>;
using IntensityField = std::function<double(double t, std::span<const double> x)>;
// f(t, x, y, z, gamma); z is row-major d_y x d_0.
using DriverField =
    std::function<void(double t, std::span<const double> x, std::span<const double> y,
                       std::span<const double> z, std::span<const double> gamma,
                       std::span<double> out)>;
using TerminalField = std::function<void(std::span<const double> x, std::span<double> out)>;
// Row-major d_y x d_x Jacobian of the terminal condition.
using TerminalGradientField =
    std::function<void(std::span<const double> x, std::span<double> out)>;

/// Coefficients of one FBSDE with jumps: forward drift b, diffusion sigma,
/// jump size h, intensity lambda <= eta, mark law nu, driver f and terminal
/// condition Phi. All maps must be pure.
struct ModelSpec {
  Dimensions dims;
  VectorField drift;
  DiffusionField diffusion;
  JumpField jump_size;
  IntensityField intensity;
  double intensity_bound = 0.0;
  /// Set when lambda does not depend on (t, x); required by the jump oracle.
  bool constant_intensity = false;
  JumpMeasure measure = JumpMeasure::from_atoms({});
  DriverField driver;
  TerminalField terminal;
  std::optional<TerminalGradientField> terminal_gradient;
  /// Closed form of the compensator drift, when known.
  std::optional<VectorField> compensator_closed_form;

  void validate() const;
};

/// Integral of h(t, x, z) lambda(t, x) nu(dz).
void compensator_drift(const ModelSpec& model, double t, std::span<const double> x,
                       std::span<double> out);
Vector compensator_drift(const ModelSpec& model, double t, std::span<const double> x);

/// b(t, x) minus the compensator drift: the drift of the jump-free forward process.
void effective_drift(const ModelSpec& model, double t, std::span<const double> x,
                     std::span<double> out);
Vector effective_drift(const ModelSpec& model, double t, std::span<const double> x);

/// Terminal Jacobian. Without a user-supplied gradient a one-sided difference
/// is used; where the one-sided slopes disagree (a kink) the slope of smaller
/// magnitude is taken, which is zero at the kink of a hockey-stick payoff.
void terminal_jacobian(const ModelSpec& model, std::span<const double> x, std::span<double> out);

/// (grad Phi sigma)(t, x) as a row-major d_y x d_0 matrix.
void terminal_gradient_sigma(const ModelSpec& model, double t, std::span<const double> x,
                             std::span<double> out);

}  // namespace fbsdej
