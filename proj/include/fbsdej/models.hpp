#pragma once

#include "fbsdej/model.hpp"
#include "fbsdej/reference.hpp"

#include <cstdint>
#include <string>

namespace fbsdej {

/// Multi-dimensional Merton jump-diffusion with driver f(y) = -r y - c y^+ and
/// terminal condition (K - mean(x))^+. The Gaussian mark law is integrated
/// with `gamma_samples` frozen marks drawn from `marks_seed`; the compensator
/// uses its closed form.
ModelSpec merton_model(const MertonConfig& cfg, std::size_t gamma_samples = 128,
                       std::uint64_t marks_seed = 0x6d65727430ULL);

/// X_t = x + b0 t 1 + sigma0 B_t + c N_t 1 with a scalar Poisson process N of
/// intensity lambda, written with the compensated measure: drift
/// (b0 + lambda c) 1, single mark z = c, h(t, x, z) = z 1. Driver
/// alpha y + beta <z, 1/d> + rho gamma / lambda, terminal exp(mean(x)).
ModelSpec example2_model(const Example2Config& cfg);

enum class TerminalKind { exp_mean, put_mean, constant };

TerminalKind parse_terminal_kind(const std::string& name);
std::string to_string(TerminalKind kind);

/// Linear model of the same shape as example2_model with a selectable
/// terminal condition: exp(mean x), (strike - mean x)^+ or a constant.
ModelSpec custom_model(const Example2Config& cfg, TerminalKind terminal, double strike,
                       double terminal_value);

}  // namespace fbsdej
