#include "fbsdej/experiment.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace fbsdej;

namespace {

py::dict table_to_dict(const ResultTable& t) {
  py::dict meta;
  for (const auto& [k, v] : t.metadata) meta[py::str(k)] = v;
  py::list rows;
  for (const auto& r : t.rows) {
    py::dict row;
    row["m"] = r.m;
    row["value"] = r.value;
    row["std_error"] = r.std_error;
    row["reference"] = r.reference ? py::cast(*r.reference) : py::none();
    row["abs_error"] = r.abs_error ? py::cast(*r.abs_error) : py::none();
    row["rel_error_pct"] = r.rel_error_pct ? py::cast(*r.rel_error_pct) : py::none();
    rows.append(row);
  }
  py::dict out;
  out["metadata"] = meta;
  out["rows"] = rows;
  return out;
}

MertonConfig merton(double x, double strike, double horizon, double rate, double sigma, double lambda,
                    double mu_j, double sigma_j, double default_intensity) {
  MertonConfig m;
  m.x = x;
  m.K = strike;
  m.T = horizon;
  m.r = rate;
  m.sigma = sigma;
  m.lambda = lambda;
  m.mu_j = mu_j;
  m.sigma_j = sigma_j;
  m.c = default_intensity;
  return m;
}

Example2Config example2(int d, double horizon, double b0, double sigma0, double jump, double lambda, double alpha,
                        double beta, double rho) {
  Example2Config e;
  e.d = d;
  e.T = horizon;
  e.b0 = b0;
  e.sigma0 = sigma0;
  e.c = jump;
  e.lambda = lambda;
  e.alpha = alpha;
  e.beta = beta;
  e.rho = rho;
  return e;
}

#define MERTON_ARGS                                                                                        \
  py::arg("x") = 10.0, py::arg("strike") = 10.0, py::arg("horizon") = 1.0, py::arg("rate") = 0.04,          \
      py::arg("sigma") = 0.25, py::arg("lam") = 0.5, py::arg("mu_j") = 0.5, py::arg("sigma_j") = 0.5,        \
      py::arg("default_intensity") = 0.1

#define EXAMPLE2_ARGS                                                                                        \
  py::arg("d") = 1, py::arg("horizon") = 2.0, py::arg("b0") = -0.1, py::arg("sigma0") = 0.1,                  \
      py::arg("jump") = 0.2, py::arg("lam") = 3.0, py::arg("alpha") = 0.3, py::arg("beta") = 0.3,              \
      py::arg("rho") = 0.2

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Forward Picard solver for FBSDEs with jumps";
  m.attr("__version__") = "0.1.0";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<SimulationError>(m, "SimulationError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<UnsupportedError>(m, "UnsupportedError", base.ptr());

  m.def("experiment_tags", &experiment_tags);
  m.def("default_config", [](const std::string& tag) { return serialize_config(default_config(tag)); },
        py::arg("tag"), "Config text with every key of the tag's defaults.");
  m.def("normalize_config", [](const std::string& text) { return serialize_config(parse_config(text)); },
        py::arg("text"), "Parses and re-serializes a config; raises ConfigError listing every problem.");
  m.def(
      "run_experiment",
      [](const std::string& text) {
        const ExperimentConfig cfg = parse_config(text);
        ResultTable t;
        {
          py::gil_scoped_release release;
          t = run_experiment(cfg);
        }
        return table_to_dict(t);
      },
      py::arg("config"), "Runs a config and returns {'metadata': dict, 'rows': list of dicts}.");

  m.def("normal_cdf", &normal_cdf, py::arg("x"));
  m.def("bs_put", &bs_put, py::arg("x"), py::arg("strike"), py::arg("horizon"), py::arg("rate"), py::arg("sigma"));
  m.def(
      "merton_u_ref_1d",
      [](double x, double K, double T, double r, double s, double l, double mj, double sj, double c) {
        return merton_u_ref_1d(merton(x, K, T, r, s, l, mj, sj, c));
      },
      MERTON_ARGS);
  m.def(
      "merton_wm",
      [](int level, std::size_t inner_paths, std::uint64_t seed, double x, double K, double T, double r, double s,
         double l, double mj, double sj, double c) {
        const Estimate e = merton_wm_semianalytic(merton(x, K, T, r, s, l, mj, sj, c), level, inner_paths, seed);
        return py::make_tuple(e.value, e.std_error);
      },
      py::arg("m"), py::arg("inner_paths") = 100000, py::arg("seed") = 1, MERTON_ARGS,
      "Semi-analytic Picard iterate w_m(0, x) of the one-dimensional Merton problem as (value, std_error).");
  m.def(
      "example2_u_ref",
      [](double x, int d, double T, double b0, double s0, double c, double l, double a, double b, double r) {
        const Example2Config e = example2(d, T, b0, s0, c, l, a, b, r);
        return d == 1 ? example2_u_ref_1d(e, x) : example2_u_ref_d(e, x);
      },
      py::arg("x") = 0.0, EXAMPLE2_ARGS);
  m.def(
      "example2_wm_exact",
      [](int level, double x, int d, double T, double b0, double s0, double c, double l, double a, double b,
         double r) { return example2_wm_exact_1d(example2(d, T, b0, s0, c, l, a, b, r), level, x); },
      py::arg("m"), py::arg("x") = 0.0, EXAMPLE2_ARGS);
  m.def(
      "simulate_example2",
      [](std::size_t paths, int steps, std::uint64_t seed, double x, int d, double T, double b0, double s0, double c,
         double l, double a, double b, double r) {
        const ModelSpec model = example2_model(example2(d, T, b0, s0, c, l, a, b, r));
        const std::vector<double> x0(static_cast<std::size_t>(d), x);
        PathBatch batch;
        {
          py::gil_scoped_release release;
          batch = simulate_forward(model, TimeGrid(T, steps), x0, paths, seed);
        }
        py::array_t<double> states({static_cast<py::ssize_t>(paths), static_cast<py::ssize_t>(steps + 1),
                                    static_cast<py::ssize_t>(d)});
        std::copy(batch.states.begin(), batch.states.end(), states.mutable_data());
        return states;
      },
      py::arg("paths"), py::arg("steps"), py::arg("seed") = 1, py::arg("x") = 0.0, EXAMPLE2_ARGS,
      "Jump-free forward paths of the linear example as an array of shape (paths, steps + 1, d).");
}
