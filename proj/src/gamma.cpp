#include "fbsdej/gamma.hpp"

#include "fbsdej/parallel.hpp"

#include <algorithm>

namespace fbsdej {

GammaEvaluator::GammaEvaluator(const ModelSpec& model)
    : model_(&model),
      mode_(model.measure.kind() == JumpMeasure::Kind::atoms ? Mode::exact_atoms
                                                              : Mode::frozen_sample),
      marks_(model.measure.nodes()) {
  if (mode_ == Mode::exact_atoms) {
    weights_ = model.measure.probabilities();
  } else {
    if (marks_.rows() == 0) throw ConfigError("frozen-sample gamma needs at least one mark");
    weights_.assign(static_cast<std::size_t>(marks_.rows()), 1.0);
  }
}

void GammaEvaluator::combine(double lambda, const double* base, const double* shifted, int dy,
                             std::span<double> out) const {
  const auto marks = static_cast<std::size_t>(marks_.rows());
  for (int j = 0; j < dy; ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < marks; ++k) {
      acc += weights_[k] * (shifted[k * static_cast<std::size_t>(dy) + static_cast<std::size_t>(j)] - base[j]);
    }
    if (mode_ == Mode::exact_atoms) {
      out[static_cast<std::size_t>(j)] = lambda * acc;
    } else {
      out[static_cast<std::size_t>(j)] = lambda * acc / static_cast<double>(marks);
    }
  }
}

void GammaEvaluator::gamma(double t, std::span<const double> x, const PointFunction& phi,
                           std::span<double> out) const {
  const int dx = model_->dims.state;
  const int dy = model_->dims.value;
  const auto marks = static_cast<std::size_t>(marks_.rows());
  if (marks == 0) {
    std::fill(out.begin(), out.begin() + dy, 0.0);
    return;
  }
  const double lambda = model_->intensity(t, x);
  std::vector<double> base(static_cast<std::size_t>(dy));
  std::vector<double> shifted(marks * static_cast<std::size_t>(dy));
  std::vector<double> point(static_cast<std::size_t>(dx));
  std::vector<double> jump(static_cast<std::size_t>(dx));
  phi(x, base);
  for (std::size_t k = 0; k < marks; ++k) {
    model_->jump_size(t, x, row_span(marks_, static_cast<Eigen::Index>(k)), jump);
    for (int i = 0; i < dx; ++i) point[i] = x[i] + jump[i];
    phi(point, {shifted.data() + k * static_cast<std::size_t>(dy), static_cast<std::size_t>(dy)});
  }
  combine(lambda, base.data(), shifted.data(), dy, out);
}

Vector GammaEvaluator::gamma(double t, std::span<const double> x, const PointFunction& phi) const {
  Vector out(model_->dims.value);
  gamma(t, x, phi, {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

RowMatrix GammaEvaluator::gamma_batch(double t, const StridedRows& X, const BatchFunction& phi,
                                      const RowMatrix* base_values) const {
  const int dx = model_->dims.state;
  const int dy = model_->dims.value;
  const std::size_t rows = X.count;
  const auto marks = static_cast<std::size_t>(marks_.rows());
  RowMatrix out = RowMatrix::Zero(static_cast<Eigen::Index>(rows), dy);
  if (marks == 0 || rows == 0) return out;
  if (base_values && static_cast<std::size_t>(base_values->rows()) != rows) {
    throw ConfigError("base values do not match the number of rows");
  }
  const std::size_t skip = base_values ? 0 : 1;
  const std::size_t block = marks + skip;

  parallel_for(rows, 1024, [&](std::size_t begin, std::size_t end) {
    const std::size_t count = end - begin;
    // Each input row occupies `block` consecutive rows: the point itself
    // (unless supplied), then one shifted copy per mark.
    RowMatrix points(static_cast<Eigen::Index>(count * block), dx);
    RowMatrix values(static_cast<Eigen::Index>(count * block), dy);
    std::vector<double> lambda(count);
    std::vector<double> jump(static_cast<std::size_t>(dx));
    for (std::size_t r = 0; r < count; ++r) {
      const auto x = X[begin + r];
      lambda[r] = model_->intensity(t, x);
      const auto row0 = static_cast<Eigen::Index>(r * block);
      if (skip) {
        for (int i = 0; i < dx; ++i) points(row0, i) = x[i];
      }
      for (std::size_t k = 0; k < marks; ++k) {
        model_->jump_size(t, x, row_span(marks_, static_cast<Eigen::Index>(k)), jump);
        const auto row = row0 + static_cast<Eigen::Index>(skip + k);
        for (int i = 0; i < dx; ++i) points(row, i) = x[i] + jump[i];
      }
    }
    phi(points, values);
    for (std::size_t r = 0; r < count; ++r) {
      const double* shifted = values.data() + (r * block + skip) * static_cast<std::size_t>(dy);
      const double* base = base_values ? base_values->data() + (begin + r) * static_cast<std::size_t>(dy)
                                       : shifted - dy;
      combine(lambda[r], base, shifted, dy, row_span(out, static_cast<Eigen::Index>(begin + r)));
    }
  });
  return out;
}

}  // namespace fbsdej
