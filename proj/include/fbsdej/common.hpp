#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>

namespace fbsdej {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Error hierarchy. The CLI maps ConfigError to exit code 1 and every other
// Error to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SimulationError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

inline std::span<const double> row_span(const RowMatrix& m, Eigen::Index row) {
  return {m.data() + row * m.cols(), static_cast<std::size_t>(m.cols())};
}

inline std::span<double> row_span(RowMatrix& m, Eigen::Index row) {
  return {m.data() + row * m.cols(), static_cast<std::size_t>(m.cols())};
}

// Read-only view of `count` rows of width `dim` laid out with a fixed stride.
// Used to address one time slice of a PathBatch without copying it.
struct StridedRows {
  const double* base = nullptr;
  std::size_t count = 0;
  std::size_t stride = 0;
  int dim = 0;

  std::span<const double> operator[](std::size_t i) const {
    return {base + i * stride, static_cast<std::size_t>(dim)};
  }

  static StridedRows of(const RowMatrix& m) {
    return {m.data(), static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()),
            static_cast<int>(m.cols())};
  }
};

}  // namespace fbsdej
