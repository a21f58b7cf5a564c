#pragma once

#include "fbsdej/common.hpp"
#include "fbsdej/model.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace fbsdej {

struct SimulationOptions {
  /// Upper bound on states + increments storage.
  std::size_t memory_cap_bytes = std::size_t{4} << 30;
  int threads = 0;
};

/// Simulated forward paths. States are stored per path as n+1 consecutive
/// points, increments as n consecutive Brownian increments:
///   state(p, k)     at states[(p * (n + 1) + k) * d_x]
///   increment(p, k) at increments[(p * n + k) * d_0], the increment over [t_k, t_{k+1}].
struct PathBatch {
  TimeGrid grid;
  std::size_t paths = 0;
  int state_dim = 0;
  int brownian_dim = 0;
  std::uint64_t seed = 0;
  std::vector<double> states;
  std::vector<double> increments;

  std::span<const double> state(std::size_t p, int k) const {
    return {states.data() + (p * static_cast<std::size_t>(grid.steps + 1) + static_cast<std::size_t>(k)) *
                                static_cast<std::size_t>(state_dim),
            static_cast<std::size_t>(state_dim)};
  }
  std::span<const double> increment(std::size_t p, int k) const {
    return {increments.data() + (p * static_cast<std::size_t>(grid.steps) + static_cast<std::size_t>(k)) *
                                    static_cast<std::size_t>(brownian_dim),
            static_cast<std::size_t>(brownian_dim)};
  }
  /// All paths at time index k.
  StridedRows slice(int k) const {
    return {states.data() + static_cast<std::size_t>(k) * static_cast<std::size_t>(state_dim), paths,
            static_cast<std::size_t>(grid.steps + 1) * static_cast<std::size_t>(state_dim), state_dim};
  }
  /// All increments over [t_k, t_{k+1}].
  StridedRows increment_slice(int k) const {
    return {increments.data() + static_cast<std::size_t>(k) * static_cast<std::size_t>(brownian_dim),
            paths, static_cast<std::size_t>(grid.steps) * static_cast<std::size_t>(brownian_dim),
            brownian_dim};
  }
};

/// Bytes a PathBatch of this shape occupies.
std::size_t path_batch_bytes(std::size_t paths, int steps, int state_dim, int brownian_dim);

/// Jump-free Euler scheme X_{k+1} = X_k + (b - int h lambda nu) delta + sigma dB_{k+1}.
PathBatch simulate_forward(const ModelSpec& model, const TimeGrid& grid, std::span<const double> x0,
                           std::size_t paths, std::uint64_t seed,
                           const SimulationOptions& options = {});

/// Euler scheme of the jump-inclusive process with the compensated jump
/// measure: X_{k+1} = X_k + (b - int h lambda nu) delta + sigma dB_{k+1} + sum of h over
/// the jumps in (t_k, t_{k+1}]. Brownian draws coincide with simulate_forward for
/// the same seed. Requires a constant intensity.
PathBatch simulate_jump_oracle(const ModelSpec& model, const TimeGrid& grid,
                               std::span<const double> x0, std::size_t paths, std::uint64_t seed,
                               const SimulationOptions& options = {});

/// Streams terminal states of the jump-inclusive process without storing the
/// paths. `sink(first_path, terminal)` receives consecutive blocks in path
/// order; blocks are produced in parallel but delivered sequentially.
void stream_oracle_terminals(const ModelSpec& model, const TimeGrid& grid,
                             std::span<const double> x0, std::size_t paths, std::uint64_t seed,
                             const std::function<void(std::size_t, const RowMatrix&)>& sink,
                             std::size_t block = 1 << 16, int threads = 0);

/// Replays one step of the jump-free Euler scheme.
void forward_step(const ModelSpec& model, double t, double delta, std::span<const double> x,
                  std::span<const double> dB, std::span<double> next);

/// Binary dump: magic "FBSJPATH", u32 version, u64 M, u32 n, u32 d_x, u32 d_0,
/// u64 seed, f64 T, then states and increments as little-endian doubles.
void write_path_batch(const PathBatch& batch, const std::string& path);
PathBatch read_path_batch(const std::string& path);

}  // namespace fbsdej
