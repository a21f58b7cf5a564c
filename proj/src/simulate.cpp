#include "fbsdej/simulate.hpp"

#include "fbsdej/parallel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fbsdej {

namespace {

constexpr char kMagic[8] = {'F', 'B', 'S', 'J', 'P', 'A', 'T', 'H'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kGrain = 1024;

struct StepScratch {
  std::vector<double> drift;
  std::vector<double> sigma;
  std::vector<double> jump;
  std::vector<double> mark;
  std::vector<double> x;

  explicit StepScratch(const Dimensions& dims)
      : drift(static_cast<std::size_t>(dims.state)),
        sigma(static_cast<std::size_t>(dims.state * dims.brownian)),
        jump(static_cast<std::size_t>(dims.state)),
        mark(static_cast<std::size_t>(dims.mark)),
        x(static_cast<std::size_t>(dims.state)) {}
};

void step_with(const ModelSpec& model, double t, double delta, std::span<const double> x,
               std::span<const double> dB, std::span<double> next, StepScratch& s) {
  const int dx = model.dims.state;
  const int d0 = model.dims.brownian;
  effective_drift(model, t, x, s.drift);
  model.diffusion(t, x, s.sigma);
  for (int i = 0; i < dx; ++i) {
    double acc = x[i] + s.drift[static_cast<std::size_t>(i)] * delta;
    for (int c = 0; c < d0; ++c) acc += s.sigma[static_cast<std::size_t>(i * d0 + c)] * dB[c];
    next[i] = acc;
  }
}

void draw_increments(std::uint64_t seed, std::size_t path, int k, double sqrt_delta,
                     std::span<double> out) {
  RandomStream stream(seed, StreamPurpose::brownian, path, static_cast<std::uint32_t>(k));
  for (auto& v : out) v = sqrt_delta * stream.normal();
}

void check_finite(std::span<const double> x, std::size_t path, int k) {
  for (double v : x) {
    if (!std::isfinite(v)) {
      throw SimulationError("non-finite state on path " + std::to_string(path) + " at step " +
                            std::to_string(k));
    }
  }
}

void check_intensity(const ModelSpec& model, double t, std::span<const double> x, std::size_t path,
                     int k) {
  const double lambda = model.intensity(t, x);
  if (!(lambda >= 0.0) || lambda > model.intensity_bound * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << "intensity " << lambda << " outside [0, " << model.intensity_bound << "] on path "
        << path << " at step " << k;
    throw SimulationError(msg.str());
  }
}

PathBatch allocate(const ModelSpec& model, const TimeGrid& grid, std::span<const double> x0,
                   std::size_t paths, std::uint64_t seed, const SimulationOptions& options) {
  model.validate();
  if (paths == 0) throw ConfigError("path count must be at least 1");
  if (static_cast<int>(x0.size()) != model.dims.state) {
    throw ConfigError("initial point has dimension " + std::to_string(x0.size()) + ", expected " +
                      std::to_string(model.dims.state));
  }
  const std::size_t bytes = path_batch_bytes(paths, grid.steps, model.dims.state, model.dims.brownian);
  if (bytes > options.memory_cap_bytes) {
    std::ostringstream msg;
    msg << "path batch needs " << bytes << " bytes (M=" << paths << ", n=" << grid.steps
        << ", d_x=" << model.dims.state << ", d_0=" << model.dims.brownian
        << ") which exceeds the memory cap of " << options.memory_cap_bytes << " bytes";
    throw SimulationError(msg.str());
  }
  PathBatch batch;
  batch.grid = grid;
  batch.paths = paths;
  batch.state_dim = model.dims.state;
  batch.brownian_dim = model.dims.brownian;
  batch.seed = seed;
  batch.states.resize(paths * static_cast<std::size_t>(grid.steps + 1) *
                      static_cast<std::size_t>(model.dims.state));
  batch.increments.resize(paths * static_cast<std::size_t>(grid.steps) *
                          static_cast<std::size_t>(model.dims.brownian));
  return batch;
}

double constant_lambda(const ModelSpec& model, std::span<const double> x0) {
  if (!model.constant_intensity) {
    throw UnsupportedError("the jump oracle needs a constant intensity (thinning is not implemented)");
  }
  const double lambda = model.intensity(0.0, x0);
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("intensity must be non-negative");
  return lambda;
}

// One jump-inclusive Euler step from x to next.
void oracle_step(const ModelSpec& model, double t, double delta, double lambda,
                 std::uint64_t seed, std::size_t path, int k, std::span<const double> x,
                 std::span<const double> dB, std::span<double> next, StepScratch& s) {
  step_with(model, t, delta, x, dB, next, s);
  if (lambda <= 0.0) return;
  RandomStream counts(seed, StreamPurpose::poisson_count, path, static_cast<std::uint32_t>(k));
  const std::uint64_t jumps = counts.poisson(lambda * delta);
  if (jumps == 0) return;
  RandomStream marks(seed, StreamPurpose::jump_marks, path, static_cast<std::uint32_t>(k));
  for (std::uint64_t j = 0; j < jumps; ++j) {
    model.measure.draw(marks, s.mark);
    model.jump_size(t, x, s.mark, s.jump);
    for (std::size_t i = 0; i < next.size(); ++i) next[i] += s.jump[i];
  }
}

template <class T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    std::reverse(bytes, bytes + sizeof(T));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
  } else {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
}

template <class T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error("truncated path batch file");
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    std::reverse(bytes, bytes + sizeof(T));
    std::memcpy(&value, bytes, sizeof(T));
  }
  return value;
}

}  // namespace

std::size_t path_batch_bytes(std::size_t paths, int steps, int state_dim, int brownian_dim) {
  const std::size_t per_path = static_cast<std::size_t>(steps + 1) * static_cast<std::size_t>(state_dim) +
                               static_cast<std::size_t>(steps) * static_cast<std::size_t>(brownian_dim);
  return paths * per_path * sizeof(double);
}

void forward_step(const ModelSpec& model, double t, double delta, std::span<const double> x,
                  std::span<const double> dB, std::span<double> next) {
  StepScratch s(model.dims);
  step_with(model, t, delta, x, dB, next, s);
}

PathBatch simulate_forward(const ModelSpec& model, const TimeGrid& grid, std::span<const double> x0,
                           std::size_t paths, std::uint64_t seed, const SimulationOptions& options) {
  PathBatch batch = allocate(model, grid, x0, paths, seed, options);
  const int n = grid.steps;
  const double delta = grid.delta();
  const double sqrt_delta = std::sqrt(delta);
  const auto dx = static_cast<std::size_t>(model.dims.state);
  const auto d0 = static_cast<std::size_t>(model.dims.brownian);

  parallel_for(paths, kGrain, [&](std::size_t begin, std::size_t end) {
    StepScratch s(model.dims);
    for (std::size_t p = begin; p < end; ++p) {
      double* xs = batch.states.data() + p * static_cast<std::size_t>(n + 1) * dx;
      double* dbs = batch.increments.data() + p * static_cast<std::size_t>(n) * d0;
      std::copy(x0.begin(), x0.end(), xs);
      for (int k = 0; k < n; ++k) {
        const double t = grid.time(k);
        std::span<const double> x{xs + static_cast<std::size_t>(k) * dx, dx};
        std::span<double> dB{dbs + static_cast<std::size_t>(k) * d0, d0};
        check_intensity(model, t, x, p, k);
        draw_increments(seed, p, k, sqrt_delta, dB);
        std::span<double> next{xs + static_cast<std::size_t>(k + 1) * dx, dx};
        step_with(model, t, delta, x, dB, next, s);
        check_finite(next, p, k + 1);
      }
    }
  }, options.threads);
  return batch;
}

PathBatch simulate_jump_oracle(const ModelSpec& model, const TimeGrid& grid,
                               std::span<const double> x0, std::size_t paths, std::uint64_t seed,
                               const SimulationOptions& options) {
  PathBatch batch = allocate(model, grid, x0, paths, seed, options);
  const double lambda = constant_lambda(model, x0);
  const int n = grid.steps;
  const double delta = grid.delta();
  const double sqrt_delta = std::sqrt(delta);
  const auto dx = static_cast<std::size_t>(model.dims.state);
  const auto d0 = static_cast<std::size_t>(model.dims.brownian);

  parallel_for(paths, kGrain, [&](std::size_t begin, std::size_t end) {
    StepScratch s(model.dims);
    for (std::size_t p = begin; p < end; ++p) {
      double* xs = batch.states.data() + p * static_cast<std::size_t>(n + 1) * dx;
      double* dbs = batch.increments.data() + p * static_cast<std::size_t>(n) * d0;
      std::copy(x0.begin(), x0.end(), xs);
      for (int k = 0; k < n; ++k) {
        std::span<const double> x{xs + static_cast<std::size_t>(k) * dx, dx};
        std::span<double> dB{dbs + static_cast<std::size_t>(k) * d0, d0};
        draw_increments(seed, p, k, sqrt_delta, dB);
        std::span<double> next{xs + static_cast<std::size_t>(k + 1) * dx, dx};
        oracle_step(model, grid.time(k), delta, lambda, seed, p, k, x, dB, next, s);
        check_finite(next, p, k + 1);
      }
    }
  }, options.threads);
  return batch;
}

void stream_oracle_terminals(const ModelSpec& model, const TimeGrid& grid,
                             std::span<const double> x0, std::size_t paths, std::uint64_t seed,
                             const std::function<void(std::size_t, const RowMatrix&)>& sink,
                             std::size_t block, int threads) {
  model.validate();
  if (paths == 0) throw ConfigError("path count must be at least 1");
  if (static_cast<int>(x0.size()) != model.dims.state) throw ConfigError("initial point dimension mismatch");
  const double lambda = constant_lambda(model, x0);
  const int n = grid.steps;
  const double delta = grid.delta();
  const double sqrt_delta = std::sqrt(delta);
  const auto dx = static_cast<std::size_t>(model.dims.state);
  const auto d0 = static_cast<std::size_t>(model.dims.brownian);
  block = std::max<std::size_t>(block, 1);

  RowMatrix terminal;
  for (std::size_t first = 0; first < paths; first += block) {
    const std::size_t count = std::min(block, paths - first);
    terminal.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dx));
    parallel_for(count, kGrain, [&](std::size_t begin, std::size_t end) {
      StepScratch s(model.dims);
      std::vector<double> a(x0.begin(), x0.end()), b(dx), dB(d0);
      for (std::size_t r = begin; r < end; ++r) {
        const std::size_t p = first + r;
        std::copy(x0.begin(), x0.end(), a.begin());
        for (int k = 0; k < n; ++k) {
          draw_increments(seed, p, k, sqrt_delta, dB);
          oracle_step(model, grid.time(k), delta, lambda, seed, p, k, a, dB, b, s);
          check_finite(b, p, k + 1);
          a.swap(b);
        }
        std::copy(a.begin(), a.end(), terminal.data() + r * dx);
      }
    }, threads);
    sink(first, terminal);
  }
}

void write_path_batch(const PathBatch& batch, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, batch.paths);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(batch.grid.steps));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(batch.state_dim));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(batch.brownian_dim));
  put<std::uint64_t>(out, batch.seed);
  put<double>(out, batch.grid.horizon);
  for (double v : batch.states) put<double>(out, v);
  for (double v : batch.increments) put<double>(out, v);
  if (!out) throw Error("failed writing " + path);
}

PathBatch read_path_batch(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw Error(path + " is not a path batch file");
  if (const auto version = get<std::uint32_t>(in); version != kVersion) {
    throw Error("unsupported path batch version " + std::to_string(version));
  }
  PathBatch batch;
  batch.paths = get<std::uint64_t>(in);
  const auto steps = get<std::uint32_t>(in);
  batch.state_dim = static_cast<int>(get<std::uint32_t>(in));
  batch.brownian_dim = static_cast<int>(get<std::uint32_t>(in));
  batch.seed = get<std::uint64_t>(in);
  const double horizon = get<double>(in);
  batch.grid = TimeGrid(horizon, static_cast<int>(steps));
  batch.states.resize(batch.paths * (steps + 1) * static_cast<std::size_t>(batch.state_dim));
  batch.increments.resize(batch.paths * steps * static_cast<std::size_t>(batch.brownian_dim));
  for (double& v : batch.states) v = get<double>(in);
  for (double& v : batch.increments) v = get<double>(in);
  return batch;
}

}  // namespace fbsdej
