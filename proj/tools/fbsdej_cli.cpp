// Experiment runner. Exit status: 0 success, 1 invalid or unsupported configuration,
// 2 numerical or runtime failure. FBSDEJ_THREADS sets the worker count.

#include "fbsdej/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw fbsdej::ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void print_table(const fbsdej::ResultTable& table) {
  std::printf("%3s  %14s  %12s  %14s  %10s\n", "m", "value", "std_error", "reference", "rel_err%");
  for (const auto& r : table.rows) {
    std::printf("%3d  %14.6f  %12.6f", r.m, r.value, r.std_error);
    if (r.reference) {
      std::printf("  %14.6f", *r.reference);
    } else {
      std::printf("  %14s", "-");
    }
    if (r.rel_error_pct) {
      std::printf("  %10.4f\n", *r.rel_error_pct);
    } else {
      std::printf("  %10s\n", "-");
    }
  }
  if (auto wall = table.meta("wall_time_s")) std::printf("wall time %.2f s\n", std::stod(*wall));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forward Picard solver for FBSDEs with jumps"};
  std::string config_path, experiment, backend, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths;
  std::optional<int> iterations;
  bool paper_scale = false;
  bool print_config = false;
  app.add_option("--config", config_path, "Experiment config file")->check(CLI::ExistingFile);
  app.add_option("--experiment", experiment, "Experiment tag (merton1d, merton10d, example2_1d, "
                                             "example2_10d_lsmc, example2_100d_nn, custom)");
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--paths", paths, "Number of simulated paths M");
  app.add_option("--iterations", iterations, "Number of Picard steps m_max");
  app.add_option("--backend", backend, "lsmc, nn or semianalytic");
  app.add_option("--out", out, "CSV output path");
  app.add_flag("--paper-scale", paper_scale, "Use the published sample sizes");
  app.add_flag("--print-config", print_config, "Print the resolved config and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    fbsdej::ExperimentConfig cfg;
    if (!config_path.empty()) {
      cfg = fbsdej::parse_config(read_file(config_path));
      if (!experiment.empty() && experiment != cfg.experiment) {
        throw fbsdej::ConfigError("--experiment '" + experiment + "' conflicts with '" + cfg.experiment +
                                  "' in " + config_path);
      }
    } else if (!experiment.empty()) {
      cfg = fbsdej::default_config(experiment);
    } else {
      throw fbsdej::ConfigError("one of --config or --experiment is required");
    }
    if (paper_scale) fbsdej::apply_paper_scale(cfg);
    if (seed) cfg.seed = *seed;
    if (paths) cfg.paths = *paths;
    if (iterations) cfg.iterations = *iterations;
    if (!backend.empty()) cfg.backend = backend;
    if (!out.empty()) cfg.out = out;
    fbsdej::validate(cfg);
    if (print_config) {
      std::cout << fbsdej::serialize_config(cfg);
      return 0;
    }
    const auto table = fbsdej::run_experiment(cfg);
    print_table(table);
    if (!cfg.out.empty()) std::printf("wrote %s\n", cfg.out.c_str());
    return 0;
  } catch (const fbsdej::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const fbsdej::UnsupportedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
