#pragma once

#include "fbsdej/models.hpp"
#include "fbsdej/recursion.hpp"
#include "fbsdej/reference.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fbsdej {

/// Declarative description of one experiment. Every table tag has defaults
/// matching the published setting at desk scale; `apply_paper_scale` restores
/// the published sample sizes.
struct ExperimentConfig {
  std::string experiment = "merton1d";
  std::string backend = "semianalytic";

  int dimension = 1;
  double x = 10.0;
  double horizon = 1.0;

  // Merton parameters.
  double strike = 10.0;
  double rate = 0.04;
  double sigma = 0.25;
  double mu_j = 0.5;
  double sigma_j = 0.5;
  double default_intensity = 0.1;  // c in the driver -r y - c y^+

  // Linear-model parameters (example2 and custom).
  double b0 = -0.1;
  double sigma0 = 0.1;
  double jump = 0.2;  // c, the common jump size
  double alpha = 0.3;
  double beta = 0.3;
  double rho = 0.2;
  std::string terminal = "exp_mean";
  double terminal_value = 1.0;

  double lambda = 0.5;

  // Solver.
  std::size_t paths = 1000000;
  int steps = 64;
  int iterations = 5;
  int runs = 1;
  std::uint64_t seed = 20240101;
  std::size_t gamma_samples = 128;
  std::size_t memory_cap_mb = 4096;

  // LSMC.
  std::string basis = "merton";
  double ridge_factor = 1e-10;

  // Neural networks.
  std::vector<int> hidden;
  bool batch_norm = true;
  std::size_t batch_size = 4096;
  int train_steps = 500;
  std::size_t eval_paths = 65536;

  // Semi-analytic recursion and reference.
  std::size_t inner_paths = 1000000;
  std::string reference = "auto";  // auto, formula, mc, none
  std::size_t reference_paths = 1000000;
  int reference_steps = 64;

  std::string out;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Known experiment tags.
const std::vector<std::string>& experiment_tags();

/// Defaults for a tag. Throws ConfigError for an unknown tag.
ExperimentConfig default_config(const std::string& tag);

/// Scales sample sizes (and the NN setting) up to the published values.
void apply_paper_scale(ExperimentConfig& cfg);

/// Checks tag-specific completeness and ranges; throws ConfigError listing every problem.
void validate(const ExperimentConfig& cfg);

/// Parses the `key = value` format: `#` starts a comment, `[section]` lines
/// group keys. `experiment` selects the defaults the remaining keys override.
/// Every problem is reported, each with its line number.
ExperimentConfig parse_config(const std::string& text);

/// Inverse of parse_config: every key written explicitly, doubles with 17
/// significant digits.
std::string serialize_config(const ExperimentConfig& cfg);

/// Every valid key.
std::vector<std::string> config_keys();

struct ResultRow {
  int m = 0;
  double value = 0.0;
  double std_error = 0.0;
  std::optional<double> reference;
  std::optional<double> abs_error;
  std::optional<double> rel_error_pct;

  bool operator==(const ResultRow&) const = default;
};

struct ResultTable {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<ResultRow> rows;

  std::optional<std::string> meta(const std::string& key) const;
};

/// CSV with a `# key: value` preamble and one row per level.
std::string to_csv(const ResultTable& table);
ResultTable parse_csv(const std::string& text);
void write_csv(const ResultTable& table, const std::string& path);

/// Model and reference built from a config.
ModelSpec build_model(const ExperimentConfig& cfg);
MertonConfig merton_config(const ExperimentConfig& cfg);
Example2Config example2_config(const ExperimentConfig& cfg);

/// Reference value u_ref(0, x) selected by cfg.reference; nullopt for "none".
std::optional<Estimate> compute_reference(const ExperimentConfig& cfg, const ModelSpec& model);

/// Runs the configured scheme and reference and, when cfg.out is set, writes the CSV.
ResultTable run_experiment(const ExperimentConfig& cfg);

}  // namespace fbsdej
