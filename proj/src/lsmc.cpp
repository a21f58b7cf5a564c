#include "fbsdej/lsmc.hpp"

#include "fbsdej/parallel.hpp"

#include <cmath>
#include <limits>

namespace fbsdej {

namespace {

constexpr std::size_t kChunk = 8192;

std::size_t chunk_count(std::size_t rows) { return (rows + kChunk - 1) / kChunk; }

}  // namespace

RowMatrix BasisSet::evaluate(const StridedRows& X) const {
  RowMatrix F(static_cast<Eigen::Index>(X.count), size);
  for (std::size_t i = 0; i < X.count; ++i) features(X[i], row_span(F, static_cast<Eigen::Index>(i)));
  return F;
}

BasisSet quadratic_basis(int dim, std::optional<TerminalField> terminal) {
  if (dim <= 0) throw ConfigError("basis dimension must be positive");
  BasisSet basis;
  basis.input_dim = dim;
  basis.constant_index = 0;
  basis.names.push_back("1");
  for (int i = 0; i < dim; ++i) basis.names.push_back("x" + std::to_string(i + 1));
  for (int i = 0; i < dim; ++i) {
    for (int j = i; j < dim; ++j) {
      basis.names.push_back("x" + std::to_string(i + 1) + "*x" + std::to_string(j + 1));
    }
  }
  const bool with_payoff = terminal.has_value();
  if (with_payoff) basis.names.push_back("Phi");
  basis.size = static_cast<int>(basis.names.size());

  basis.features = [dim, terminal = std::move(terminal)](std::span<const double> x,
                                                         std::span<double> out) {
    std::size_t c = 0;
    out[c++] = 1.0;
    for (int i = 0; i < dim; ++i) out[c++] = x[i];
    for (int i = 0; i < dim; ++i) {
      for (int j = i; j < dim; ++j) out[c++] = x[i] * x[j];
    }
    if (terminal) {
      double phi[8];
      // Payoff bases are only built for scalar terminals; the first entry is used.
      (*terminal)(x, std::span<double>(phi, 1));
      out[c++] = phi[0];
    }
  };
  return basis;
}

BasisSet default_basis(const std::string& tag, int dim, std::optional<TerminalField> terminal) {
  if (tag == "example2" || tag == "merton" || tag == "quadratic_payoff") {
    if (!terminal) throw ConfigError("basis '" + tag + "' needs the terminal condition");
    return quadratic_basis(dim, std::move(terminal));
  }
  if (tag == "quadratic") return quadratic_basis(dim, std::nullopt);
  throw ConfigError("unknown basis tag '" + tag +
                    "' (expected example2, merton, quadratic or quadratic_payoff)");
}

LinearCoefficients fit_least_squares(const RowMatrix& F, const RowMatrix& Y, double ridge) {
  if (F.rows() != Y.rows()) throw ConfigError("feature and target row counts differ");
  if (!(ridge >= 0.0)) throw ConfigError("ridge must be non-negative");
  const Eigen::Index J = F.cols();
  LinearCoefficients out;
  out.ridge = ridge;
  const Eigen::MatrixXd Fc = F;
  const Eigen::MatrixXd Yc = Y;
  if (ridge == 0.0) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Fc);
    out.beta = cod.solve(Yc);
    out.rank = static_cast<int>(cod.rank());
  } else {
    Eigen::MatrixXd A(F.rows() + J, J);
    A.topRows(F.rows()) = Fc;
    A.bottomRows(J) = std::sqrt(ridge) * Eigen::MatrixXd::Identity(J, J);
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(F.rows() + J, Y.cols());
    B.topRows(F.rows()) = Yc;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    out.beta = qr.solve(B);
    out.rank = static_cast<int>(Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(Fc).rank());
  }
  out.rank_deficient = out.rank < J;
  return out;
}

double default_ridge(const RowMatrix& F) {
  if (F.cols() == 0) return 0.0;
  return 1e-10 * F.squaredNorm() / static_cast<double>(F.cols());
}

void evaluate_linear(const LinearCoefficients& coeffs, const BasisSet& basis, const StridedRows& X,
                     RowMatrix& out) {
  const int J = basis.size;
  const auto p = coeffs.beta.cols();
  if (coeffs.beta.rows() != J) throw ConfigError("coefficient rows do not match the basis size");
  out.resize(static_cast<Eigen::Index>(X.count), p);
  parallel_for(X.count, 4096, [&](std::size_t begin, std::size_t end) {
    std::vector<double> v(static_cast<std::size_t>(J));
    for (std::size_t i = begin; i < end; ++i) {
      basis.features(X[i], v);
      for (Eigen::Index c = 0; c < p; ++c) {
        double acc = 0.0;
        for (int j = 0; j < J; ++j) acc += v[static_cast<std::size_t>(j)] * coeffs.beta(j, c);
        out(static_cast<Eigen::Index>(i), c) = acc;
      }
    }
  });
}

void evaluate_linear_pair(const LinearCoefficients& a, const LinearCoefficients& b, const BasisSet& basis,
                          const StridedRows& X, RowMatrix& out_a, RowMatrix& out_b) {
  const int J = basis.size;
  if (a.beta.rows() != J || b.beta.rows() != J) throw ConfigError("coefficient rows do not match the basis size");
  out_a.resize(static_cast<Eigen::Index>(X.count), a.beta.cols());
  out_b.resize(static_cast<Eigen::Index>(X.count), b.beta.cols());
  parallel_for(X.count, 4096, [&](std::size_t begin, std::size_t end) {
    std::vector<double> v(static_cast<std::size_t>(J));
    for (std::size_t i = begin; i < end; ++i) {
      basis.features(X[i], v);
      for (const auto* pair : {&a, &b}) {
        RowMatrix& out = pair == &a ? out_a : out_b;
        for (Eigen::Index c = 0; c < pair->beta.cols(); ++c) {
          double acc = 0.0;
          for (int j = 0; j < J; ++j) acc += v[static_cast<std::size_t>(j)] * pair->beta(j, c);
          out(static_cast<Eigen::Index>(i), c) = acc;
        }
      }
    }
  });
}

RowMatrix evaluate_linear(const LinearCoefficients& coeffs, const BasisSet& basis, const RowMatrix& X) {
  RowMatrix out;
  evaluate_linear(coeffs, basis, StridedRows::of(X), out);
  return out;
}

LeastSquaresProjector::LeastSquaresProjector(std::shared_ptr<const BasisSet> basis,
                                             const StridedRows& X, double ridge_factor)
    : basis_(std::move(basis)), X_(X) {
  const int J = basis_->size;
  const std::size_t rows = X_.count;
  if (rows == 0) throw ConfigError("cannot project on an empty design");
  const std::size_t chunks = chunk_count(rows);

  // Pass 1: means. Pass 2: centered second moments. Both reduce per chunk and
  // then sum the chunk partials in order.
  std::vector<Eigen::VectorXd> part(chunks, Eigen::VectorXd::Zero(J));
  parallel_for(chunks, 1, [&](std::size_t c0, std::size_t c1) {
    std::vector<double> v(static_cast<std::size_t>(J));
    for (std::size_t c = c0; c < c1; ++c) {
      for (std::size_t i = c * kChunk; i < std::min(rows, (c + 1) * kChunk); ++i) {
        basis_->features(X_[i], v);
        for (int j = 0; j < J; ++j) part[c][j] += v[static_cast<std::size_t>(j)];
      }
    }
  });
  mean_ = Eigen::VectorXd::Zero(J);
  for (const auto& p : part) mean_ += p;
  mean_ /= static_cast<double>(rows);

  for (auto& p : part) p.setZero();
  parallel_for(chunks, 1, [&](std::size_t c0, std::size_t c1) {
    std::vector<double> v(static_cast<std::size_t>(J));
    for (std::size_t c = c0; c < c1; ++c) {
      for (std::size_t i = c * kChunk; i < std::min(rows, (c + 1) * kChunk); ++i) {
        basis_->features(X_[i], v);
        for (int j = 0; j < J; ++j) {
          const double d = v[static_cast<std::size_t>(j)] - mean_[j];
          part[c][j] += d * d;
        }
      }
    }
  });
  Eigen::VectorXd var = Eigen::VectorXd::Zero(J);
  for (const auto& p : part) var += p;
  var /= static_cast<double>(rows);

  scale_.resize(J);
  const bool center = basis_->constant_index.has_value();
  for (int j = 0; j < J; ++j) {
    if (center && j == *basis_->constant_index) {
      scale_[j] = 1.0;
      mean_[j] = 0.0;
      continue;
    }
    const double sd = std::sqrt(var[j]);
    if (!std::isfinite(sd)) throw NumericalError("non-finite basis feature '" + basis_->names[j] + "'");
    if (sd <= 1e-12 * std::max(1.0, std::fabs(mean_[j]))) {
      // Constant on this design: the column carries no information beyond the
      // constant and is dropped (infinite scale maps it to zero).
      scale_[j] = std::numeric_limits<double>::infinity();
    } else {
      scale_[j] = sd;
    }
    if (!center) mean_[j] = 0.0;
  }

  std::vector<Eigen::MatrixXd> gram(chunks);
  parallel_for(chunks, 1, [&](std::size_t c0, std::size_t c1) {
    Eigen::MatrixXd F;
    for (std::size_t c = c0; c < c1; ++c) {
      standardized_features(c * kChunk, std::min(rows, (c + 1) * kChunk), F);
      gram[c] = Eigen::MatrixXd::Zero(J, J);
      gram[c].selfadjointView<Eigen::Lower>().rankUpdate(F.transpose());
    }
  });
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(J, J);
  for (const auto& g : gram) G += g;
  G = G.selfadjointView<Eigen::Lower>();
  ridge_ = ridge_factor * G.trace() / static_cast<double>(J);
  G.diagonal().array() += ridge_;
  solver_.compute(G);
  if (solver_.info() != Eigen::Success) throw NumericalError("Gram factorization failed");
}

void LeastSquaresProjector::standardized_features(std::size_t begin, std::size_t end,
                                                  Eigen::MatrixXd& F) const {
  const int J = basis_->size;
  F.resize(static_cast<Eigen::Index>(end - begin), J);
  std::vector<double> v(static_cast<std::size_t>(J));
  for (std::size_t i = begin; i < end; ++i) {
    basis_->features(X_[i], v);
    for (int j = 0; j < J; ++j) {
      const double s = scale_[j];
      F(static_cast<Eigen::Index>(i - begin), j) =
          std::isinf(s) ? 0.0 : (v[static_cast<std::size_t>(j)] - mean_[j]) / s;
    }
  }
}

LinearCoefficients LeastSquaresProjector::project(const RowMatrix& Y) const {
  const int J = basis_->size;
  const std::size_t rows = X_.count;
  if (static_cast<std::size_t>(Y.rows()) != rows) throw ConfigError("target rows do not match the design");
  const std::size_t chunks = chunk_count(rows);
  std::vector<Eigen::MatrixXd> part(chunks);
  parallel_for(chunks, 1, [&](std::size_t c0, std::size_t c1) {
    Eigen::MatrixXd F;
    for (std::size_t c = c0; c < c1; ++c) {
      const std::size_t begin = c * kChunk;
      const std::size_t end = std::min(rows, (c + 1) * kChunk);
      standardized_features(begin, end, F);
      part[c] = F.transpose() *
                Y.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
    }
  });
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(J, Y.cols());
  for (const auto& p : part) rhs += p;
  const Eigen::MatrixXd scaled = solver_.solve(rhs);

  LinearCoefficients out;
  out.ridge = ridge_;
  out.rank = J;
  out.beta = RowMatrix::Zero(J, Y.cols());
  for (int j = 0; j < J; ++j) {
    if (std::isinf(scale_[j])) continue;
    out.beta.row(j) = scaled.row(j) / scale_[j];
  }
  if (basis_->constant_index) {
    const int c = *basis_->constant_index;
    for (int j = 0; j < J; ++j) {
      if (j == c || std::isinf(scale_[j])) continue;
      out.beta.row(c) -= out.beta.row(j) * mean_[j];
    }
  }
  return out;
}

}  // namespace fbsdej
