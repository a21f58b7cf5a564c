#pragma once

#include "fbsdej/common.hpp"
#include "fbsdej/model.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fbsdej {

/// Finite family of regression functions v_1..v_J on R^{d_x}.
struct BasisSet {
  int input_dim = 0;
  int size = 0;
  std::vector<std::string> names;
  std::function<void(std::span<const double> x, std::span<double> out)> features;
  /// Index of the constant function, if the basis contains one.
  std::optional<int> constant_index;

  RowMatrix evaluate(const StridedRows& X) const;
  RowMatrix evaluate(const RowMatrix& X) const { return evaluate(StridedRows::of(X)); }
};

/// {1, x_1..x_d, x_i x_j for i <= j, Phi(x)}; the payoff term is omitted when
/// `terminal` is empty. Only the first output of Phi is used.
BasisSet quadratic_basis(int dim, std::optional<TerminalField> terminal);

/// Basis used by the named experiment family ("example2", "merton", "quadratic",
/// "quadratic_payoff"). Throws ConfigError for an unknown tag.
BasisSet default_basis(const std::string& tag, int dim, std::optional<TerminalField> terminal);

struct LinearCoefficients {
  RowMatrix beta;  // J x p
  double ridge = 0.0;
  int rank = 0;
  bool rank_deficient = false;
};

/// beta = argmin ||F beta - Y||^2 + ridge ||beta||^2. With ridge = 0 a complete
/// orthogonal decomposition gives the minimum-norm solution and flags rank
/// deficiency; with ridge > 0 the augmented system [F; sqrt(ridge) I] is solved by QR.
LinearCoefficients fit_least_squares(const RowMatrix& F, const RowMatrix& Y, double ridge);

/// 1e-10 * trace(F^T F) / J.
double default_ridge(const RowMatrix& F);

/// out = features(X) * beta, computed row by row.
void evaluate_linear(const LinearCoefficients& coeffs, const BasisSet& basis, const StridedRows& X,
                     RowMatrix& out);

/// Evaluates two coefficient sets over one basis with a single feature pass per
/// row. Each output matches evaluate_linear bit for bit.
void evaluate_linear_pair(const LinearCoefficients& a, const LinearCoefficients& b, const BasisSet& basis,
                          const StridedRows& X, RowMatrix& out_a, RowMatrix& out_b);
RowMatrix evaluate_linear(const LinearCoefficients& coeffs, const BasisSet& basis, const RowMatrix& X);

/// Least-squares projection onto a basis for a fixed design X, reusable for any
/// number of target matrices. Features are standardized with their sample
/// moments (the constant column is left as is), the Gram matrix is accumulated
/// in fixed-size chunks so the result does not depend on the thread count, and
/// a ridge of `ridge_factor * trace / J` on the standardized Gram is applied.
/// Coefficients are returned on the raw basis.
class LeastSquaresProjector {
 public:
  LeastSquaresProjector(std::shared_ptr<const BasisSet> basis, const StridedRows& X,
                        double ridge_factor = 1e-10);

  LinearCoefficients project(const RowMatrix& Y) const;

  const BasisSet& basis() const { return *basis_; }
  std::shared_ptr<const BasisSet> basis_ptr() const { return basis_; }
  double ridge() const { return ridge_; }
  const Vector& means() const { return mean_; }
  const Vector& scales() const { return scale_; }

 private:
  std::shared_ptr<const BasisSet> basis_;
  StridedRows X_;
  Vector mean_;
  Vector scale_;
  double ridge_ = 0.0;
  Eigen::LDLT<Eigen::MatrixXd> solver_;

  void standardized_features(std::size_t begin, std::size_t end, Eigen::MatrixXd& F) const;
};

}  // namespace fbsdej
