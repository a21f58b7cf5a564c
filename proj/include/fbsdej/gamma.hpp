#pragma once

#include "fbsdej/common.hpp"
#include "fbsdej/model.hpp"

#include <functional>
#include <span>

namespace fbsdej {

/// Evaluates phi on every row of X, writing one row of width d_y per input row.
/// Must be safe to call concurrently.
using BatchFunction = std::function<void(const RowMatrix& X, RowMatrix& out)>;
using PointFunction = std::function<void(std::span<const double> x, std::span<double> out)>;

/// Nonlocal term gamma(t, x; phi) = lambda(t, x) * int (phi(x + h(t, x, z)) - phi(x)) nu(dz).
/// Atom measures are integrated exactly; sampled measures use the marks that
/// were frozen when the measure was built.
class GammaEvaluator {
 public:
  enum class Mode { exact_atoms, frozen_sample };

  explicit GammaEvaluator(const ModelSpec& model);

  Mode mode() const { return mode_; }
  const RowMatrix& marks() const { return marks_; }
  /// Integration weights: atom probabilities, or 1 for every frozen mark (the
  /// 1/Q factor is applied after summation).
  const std::vector<double>& weights() const { return weights_; }

  void gamma(double t, std::span<const double> x, const PointFunction& phi,
             std::span<double> out) const;
  Vector gamma(double t, std::span<const double> x, const PointFunction& phi) const;

  /// Row i of the result equals gamma(t, X[i], phi). phi is evaluated on
  /// shifted blocks of rows so that regression backends amortize their cost.
  /// When `base` is given it must hold phi(X) and phi is only evaluated on the
  /// shifted rows.
  RowMatrix gamma_batch(double t, const StridedRows& X, const BatchFunction& phi,
                        const RowMatrix* base = nullptr) const;
  RowMatrix gamma_batch(double t, const RowMatrix& X, const BatchFunction& phi) const {
    return gamma_batch(t, StridedRows::of(X), phi);
  }

 private:
  const ModelSpec* model_;
  Mode mode_;
  RowMatrix marks_;
  std::vector<double> weights_;

  void combine(double lambda, const double* base, const double* shifted, int dy,
               std::span<double> out) const;
};

}  // namespace fbsdej
