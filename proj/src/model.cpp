#include "fbsdej/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fbsdej {

namespace {

thread_local std::vector<double> t_jump_buffer;
thread_local std::vector<double> t_fd_buffer;

std::span<double> scratch(std::vector<double>& buf, std::size_t n) {
  if (buf.size() < n) buf.resize(n);
  return {buf.data(), n};
}

}  // namespace

void Dimensions::validate() const {
  if (state <= 0 || brownian <= 0 || mark <= 0 || value <= 0) {
    throw ConfigError("all dimensions must be strictly positive (state=" + std::to_string(state) +
                      ", brownian=" + std::to_string(brownian) + ", mark=" +
                      std::to_string(mark) + ", value=" + std::to_string(value) + ")");
  }
}

TimeGrid::TimeGrid(double horizon_, int steps_) : horizon(horizon_), steps(steps_) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("time horizon must be positive");
  if (steps < 1) throw ConfigError("time grid needs at least one step");
}

JumpMeasure JumpMeasure::from_atoms(std::vector<JumpAtom> atoms) {
  JumpMeasure m;
  m.kind_ = Kind::atoms;
  if (atoms.empty()) {
    // Placeholder used by jump-free models; any intensity must then be zero.
    m.mark_dim_ = 1;
    m.nodes_ = RowMatrix::Zero(0, 1);
    return m;
  }
  m.mark_dim_ = static_cast<int>(atoms.front().mark.size());
  if (m.mark_dim_ <= 0) throw ConfigError("jump atoms need a non-empty mark vector");
  m.nodes_.resize(static_cast<Eigen::Index>(atoms.size()), m.mark_dim_);
  double total = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const auto& a = atoms[i];
    if (static_cast<int>(a.mark.size()) != m.mark_dim_) {
      throw ConfigError("jump atoms have inconsistent mark dimensions");
    }
    if (!(a.probability > 0.0)) throw ConfigError("jump atom probabilities must be positive");
    for (int j = 0; j < m.mark_dim_; ++j) m.nodes_(static_cast<Eigen::Index>(i), j) = a.mark[j];
    m.probabilities_.push_back(a.probability);
    total += a.probability;
    m.cumulative_.push_back(total);
  }
  if (std::fabs(total - 1.0) > 1e-12) {
    throw ConfigError("jump atom probabilities must sum to one (got " + std::to_string(total) + ")");
  }
  return m;
}

JumpMeasure JumpMeasure::from_sampler(int mark_dim, Sampler sampler, std::size_t sample_count,
                                      std::uint64_t marks_seed) {
  if (mark_dim <= 0) throw ConfigError("mark dimension must be positive");
  if (sample_count == 0) throw ConfigError("sampled jump measure needs a positive sample count Q");
  if (!sampler) throw ConfigError("sampled jump measure needs a sampler");
  JumpMeasure m;
  m.kind_ = Kind::sampled;
  m.mark_dim_ = mark_dim;
  m.sampler_ = std::move(sampler);
  m.nodes_.resize(static_cast<Eigen::Index>(sample_count), mark_dim);
  for (std::size_t q = 0; q < sample_count; ++q) {
    RandomStream stream(marks_seed, StreamPurpose::frozen_marks, q, 0);
    m.sampler_(stream, row_span(m.nodes_, static_cast<Eigen::Index>(q)));
  }
  return m;
}

void JumpMeasure::draw(RandomStream& stream, std::span<double> out) const {
  if (kind_ == Kind::sampled) {
    sampler_(stream, out);
    return;
  }
  if (nodes_.rows() == 0) throw UnsupportedError("cannot draw from an empty jump measure");
  const double u = stream.uniform();
  auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), u);
  auto i = static_cast<Eigen::Index>(std::min<std::ptrdiff_t>(
      it - cumulative_.begin(), static_cast<std::ptrdiff_t>(cumulative_.size()) - 1));
  for (int j = 0; j < mark_dim_; ++j) out[j] = nodes_(i, j);
}

void ModelSpec::validate() const {
  dims.validate();
  if (!drift || !diffusion || !intensity || !driver || !terminal) {
    throw ConfigError("model is missing one of drift, diffusion, intensity, driver, terminal");
  }
  if (!(intensity_bound >= 0.0)) throw ConfigError("intensity bound eta must be non-negative");
  if (intensity_bound > 0.0) {
    if (!jump_size) throw ConfigError("model with positive intensity needs a jump size map");
    if (measure.nodes().rows() == 0) throw ConfigError("model with positive intensity needs a jump measure");
    if (measure.mark_dim() != dims.mark) {
      throw ConfigError("jump measure mark dimension does not match dims.mark");
    }
  }
}

void compensator_drift(const ModelSpec& model, double t, std::span<const double> x,
                       std::span<double> out) {
  const int dx = model.dims.state;
  if (model.compensator_closed_form) {
    (*model.compensator_closed_form)(t, x, out);
    return;
  }
  std::fill(out.begin(), out.begin() + dx, 0.0);
  const double lambda = model.intensity(t, x);
  if (lambda == 0.0) return;
  const JumpMeasure& nu = model.measure;
  const RowMatrix& nodes = nu.nodes();
  if (nodes.rows() == 0) throw ConfigError("positive intensity with an empty jump measure");
  auto h = scratch(t_jump_buffer, static_cast<std::size_t>(dx));
  if (nu.kind() == JumpMeasure::Kind::atoms) {
    const auto& p = nu.probabilities();
    for (Eigen::Index i = 0; i < nodes.rows(); ++i) {
      model.jump_size(t, x, row_span(nodes, i), h);
      for (int j = 0; j < dx; ++j) out[j] += p[static_cast<std::size_t>(i)] * h[j];
    }
    for (int j = 0; j < dx; ++j) out[j] *= lambda;
  } else {
    for (Eigen::Index q = 0; q < nodes.rows(); ++q) {
      model.jump_size(t, x, row_span(nodes, q), h);
      for (int j = 0; j < dx; ++j) out[j] += h[j];
    }
    const double q = static_cast<double>(nodes.rows());
    for (int j = 0; j < dx; ++j) out[j] = out[j] * lambda / q;
  }
}

Vector compensator_drift(const ModelSpec& model, double t, std::span<const double> x) {
  Vector out(model.dims.state);
  compensator_drift(model, t, x, {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

void effective_drift(const ModelSpec& model, double t, std::span<const double> x,
                     std::span<double> out) {
  const auto dx = static_cast<std::size_t>(model.dims.state);
  model.drift(t, x, out);
  auto comp = scratch(t_fd_buffer, dx);
  compensator_drift(model, t, x, comp);
  for (std::size_t j = 0; j < dx; ++j) out[j] -= comp[j];
}

Vector effective_drift(const ModelSpec& model, double t, std::span<const double> x) {
  Vector out(model.dims.state);
  effective_drift(model, t, x, {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

void terminal_jacobian(const ModelSpec& model, std::span<const double> x, std::span<double> out) {
  const int dx = model.dims.state;
  const int dy = model.dims.value;
  if (model.terminal_gradient) {
    (*model.terminal_gradient)(x, out);
    return;
  }
  std::vector<double> shifted(x.begin(), x.end());
  std::vector<double> base(static_cast<std::size_t>(dy)), up(base.size()), down(base.size());
  model.terminal(x, base);
  for (int j = 0; j < dx; ++j) {
    const double step = 1e-6 * std::max(1.0, std::fabs(x[j]));
    shifted[j] = x[j] + step;
    model.terminal(shifted, up);
    shifted[j] = x[j] - step;
    model.terminal(shifted, down);
    shifted[j] = x[j];
    for (int i = 0; i < dy; ++i) {
      const double fwd = (up[i] - base[i]) / step;
      const double bwd = (base[i] - down[i]) / step;
      const double scale = std::max({1.0, std::fabs(fwd), std::fabs(bwd)});
      double slope;
      if (std::fabs(fwd - bwd) <= 1e-4 * scale) {
        slope = 0.5 * (fwd + bwd);
      } else {
        slope = std::fabs(fwd) <= std::fabs(bwd) ? fwd : bwd;
      }
      out[static_cast<std::size_t>(i * dx + j)] = slope;
    }
  }
}

void terminal_gradient_sigma(const ModelSpec& model, double t, std::span<const double> x,
                             std::span<double> out) {
  const int dx = model.dims.state;
  const int d0 = model.dims.brownian;
  const int dy = model.dims.value;
  std::vector<double> jac(static_cast<std::size_t>(dy * dx));
  std::vector<double> sigma(static_cast<std::size_t>(dx * d0));
  terminal_jacobian(model, x, jac);
  model.diffusion(t, x, sigma);
  for (int i = 0; i < dy; ++i) {
    for (int c = 0; c < d0; ++c) {
      double acc = 0.0;
      for (int j = 0; j < dx; ++j) acc += jac[static_cast<std::size_t>(i * dx + j)] *
                                         sigma[static_cast<std::size_t>(j * d0 + c)];
      out[static_cast<std::size_t>(i * d0 + c)] = acc;
    }
  }
}

}  // namespace fbsdej
