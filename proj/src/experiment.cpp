#include "fbsdej/experiment.hpp"

#include "fbsdej/random.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

namespace fbsdej {

namespace {

constexpr const char* kVersion = "fbsdej 0.1.0";

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

std::string nearest(const std::string& word, const std::vector<std::string>& candidates) {
  std::string best;
  std::size_t best_d = std::numeric_limits<std::size_t>::max();
  for (const auto& c : candidates) {
    const std::size_t d = levenshtein(word, c);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

// Integers accept scientific notation ("1e6") when the value is integral.
std::optional<long long> parse_integer(const std::string& s, long long lo, long long hi) {
  long long v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec == std::errc() && ptr == end) {
    if (v < lo || v > hi) return std::nullopt;
    return v;
  }
  auto d = parse_double(s);
  if (!d || *d != std::floor(*d) || *d < static_cast<double>(lo) || *d > static_cast<double>(hi)) {
    return std::nullopt;
  }
  return static_cast<long long>(*d);
}

using Setter = std::function<std::optional<std::string>(ExperimentConfig&, const std::string&)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Field {
  std::string section;
  Setter set;
  Getter get;
};

Field double_field(const char* section, double ExperimentConfig::*member) {
  return {section,
          [member](ExperimentConfig& c, const std::string& s) -> std::optional<std::string> {
            auto v = parse_double(s);
            if (!v) return "expected a finite number, got '" + s + "'";
            c.*member = *v;
            return std::nullopt;
          },
          [member](const ExperimentConfig& c) { return format_double(c.*member); }};
}

Field int_field(const char* section, int ExperimentConfig::*member) {
  return {section,
          [member](ExperimentConfig& c, const std::string& s) -> std::optional<std::string> {
            auto v = parse_integer(s, std::numeric_limits<int>::min(), std::numeric_limits<int>::max());
            if (!v) return "expected an integer, got '" + s + "'";
            c.*member = static_cast<int>(*v);
            return std::nullopt;
          },
          [member](const ExperimentConfig& c) { return std::to_string(c.*member); }};
}

Field size_field(const char* section, std::size_t ExperimentConfig::*member) {
  return {section,
          [member](ExperimentConfig& c, const std::string& s) -> std::optional<std::string> {
            auto v = parse_integer(s, 0, std::numeric_limits<long long>::max());
            if (!v) return "expected a non-negative integer, got '" + s + "'";
            c.*member = static_cast<std::size_t>(*v);
            return std::nullopt;
          },
          [member](const ExperimentConfig& c) { return std::to_string(c.*member); }};
}

Field string_field(const char* section, std::string ExperimentConfig::*member) {
  return {section,
          [member](ExperimentConfig& c, const std::string& s) -> std::optional<std::string> {
            c.*member = s;
            return std::nullopt;
          },
          [member](const ExperimentConfig& c) { return c.*member; }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> f;
    f["experiment"] = string_field("experiment", &ExperimentConfig::experiment);
    f["backend"] = string_field("experiment", &ExperimentConfig::backend);
    f["out"] = string_field("experiment", &ExperimentConfig::out);

    f["dimension"] = int_field("model", &ExperimentConfig::dimension);
    f["x"] = double_field("model", &ExperimentConfig::x);
    f["horizon"] = double_field("model", &ExperimentConfig::horizon);
    f["strike"] = double_field("model", &ExperimentConfig::strike);
    f["rate"] = double_field("model", &ExperimentConfig::rate);
    f["sigma"] = double_field("model", &ExperimentConfig::sigma);
    f["mu_j"] = double_field("model", &ExperimentConfig::mu_j);
    f["sigma_j"] = double_field("model", &ExperimentConfig::sigma_j);
    f["default_intensity"] = double_field("model", &ExperimentConfig::default_intensity);
    f["b0"] = double_field("model", &ExperimentConfig::b0);
    f["sigma0"] = double_field("model", &ExperimentConfig::sigma0);
    f["jump"] = double_field("model", &ExperimentConfig::jump);
    f["alpha"] = double_field("model", &ExperimentConfig::alpha);
    f["beta"] = double_field("model", &ExperimentConfig::beta);
    f["rho"] = double_field("model", &ExperimentConfig::rho);
    f["lambda"] = double_field("model", &ExperimentConfig::lambda);
    f["terminal"] = string_field("model", &ExperimentConfig::terminal);
    f["terminal_value"] = double_field("model", &ExperimentConfig::terminal_value);

    f["paths"] = size_field("solver", &ExperimentConfig::paths);
    f["steps"] = int_field("solver", &ExperimentConfig::steps);
    f["iterations"] = int_field("solver", &ExperimentConfig::iterations);
    f["runs"] = int_field("solver", &ExperimentConfig::runs);
    f["seed"] = {"solver",
                 [](ExperimentConfig& c, const std::string& s) -> std::optional<std::string> {
                   std::uint64_t v = 0;
                   const char* end = s.data() + s.size();
                   auto [ptr, ec] = std::from_chars(s.data(), end, v);
                   if (ec != std::errc() || ptr != end) return "expected an unsigned 64-bit integer, got '" + s + "'";
                   c.seed = v;
                   return std::nullopt;
                 },
                 [](const ExperimentConfig& c) { return std::to_string(c.seed); }};
    f["gamma_samples"] = size_field("solver", &ExperimentConfig::gamma_samples);
    f["memory_cap_mb"] = size_field("solver", &ExperimentConfig::memory_cap_mb);

    f["basis"] = string_field("lsmc", &ExperimentConfig::basis);
    f["ridge_factor"] = double_field("lsmc", &ExperimentConfig::ridge_factor);

    f["hidden"] = {"nn",
                   [](ExperimentConfig& c, const std::string& s) -> std::optional<std::string> {
                     std::vector<int> widths;
                     std::stringstream ss(s);
                     std::string item;
                     while (std::getline(ss, item, ',')) {
                       item = trim(item);
                       if (item.empty()) continue;
                       auto v = parse_integer(item, 1, 1 << 20);
                       if (!v) return "expected a comma-separated list of positive widths, got '" + s + "'";
                       widths.push_back(static_cast<int>(*v));
                     }
                     c.hidden = std::move(widths);
                     return std::nullopt;
                   },
                   [](const ExperimentConfig& c) {
                     std::string out;
                     for (std::size_t i = 0; i < c.hidden.size(); ++i) {
                       if (i) out += ",";
                       out += std::to_string(c.hidden[i]);
                     }
                     return out;
                   }};
    f["batch_norm"] = {"nn",
                       [](ExperimentConfig& c, const std::string& s) -> std::optional<std::string> {
                         if (s == "true" || s == "1" || s == "yes") {
                           c.batch_norm = true;
                         } else if (s == "false" || s == "0" || s == "no") {
                           c.batch_norm = false;
                         } else {
                           return "expected true or false, got '" + s + "'";
                         }
                         return std::nullopt;
                       },
                       [](const ExperimentConfig& c) { return std::string(c.batch_norm ? "true" : "false"); }};
    f["batch_size"] = size_field("nn", &ExperimentConfig::batch_size);
    f["train_steps"] = int_field("nn", &ExperimentConfig::train_steps);
    f["eval_paths"] = size_field("nn", &ExperimentConfig::eval_paths);

    f["reference"] = string_field("reference", &ExperimentConfig::reference);
    f["inner_paths"] = size_field("reference", &ExperimentConfig::inner_paths);
    f["reference_paths"] = size_field("reference", &ExperimentConfig::reference_paths);
    f["reference_steps"] = int_field("reference", &ExperimentConfig::reference_steps);
    return f;
  }();
  return table;
}

const std::vector<std::string> kSections = {"experiment", "model", "solver", "lsmc", "nn", "reference"};

bool is_merton(const ExperimentConfig& c) { return c.experiment.rfind("merton", 0) == 0; }
bool is_example2(const ExperimentConfig& c) { return c.experiment.rfind("example2", 0) == 0; }

struct Line {
  int number = 0;
  std::string key;
  std::string value;
};

}  // namespace

const std::vector<std::string>& experiment_tags() {
  static const std::vector<std::string> tags = {"merton1d",          "merton10d",        "example2_1d",
                                                "example2_10d_lsmc", "example2_100d_nn", "custom"};
  return tags;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : fields()) keys.push_back(k);
  return keys;
}

ExperimentConfig default_config(const std::string& tag) {
  ExperimentConfig c;
  c.experiment = tag;
  if (tag == "merton1d" || tag == "merton10d") {
    c.backend = "semianalytic";
    c.dimension = tag == "merton1d" ? 1 : 10;
    c.x = 10.0;
    c.strike = 10.0;
    c.horizon = 1.0;
    c.rate = 0.04;
    c.sigma = 0.25;
    c.lambda = 0.5;
    c.mu_j = 0.5;
    c.sigma_j = 0.5;
    c.default_intensity = 0.1;
    c.terminal = "put_mean";
    c.basis = "merton";
    c.iterations = 5;
    c.steps = 64;
    c.paths = 1000000;
    c.runs = 1;
    c.inner_paths = 1000000;
    c.reference_paths = 1000000;
    // Euler bias of the jump-inclusive reference is about 0.4% at 64 steps.
    c.reference_steps = 512;
  } else if (tag == "example2_1d") {
    c.backend = "lsmc";
    c.dimension = 1;
    c.x = 0.0;
    c.horizon = 2.0;
    c.b0 = -0.1;
    c.sigma0 = 0.1;
    c.jump = 0.2;
    c.lambda = 3.0;
    c.alpha = 0.3;
    c.beta = 0.3;
    c.rho = 0.2;
    c.basis = "example2";
    c.iterations = 8;
    c.steps = 64;
    c.paths = 1000000;
    c.runs = 5;
    c.reference_steps = 1;
  } else if (tag == "example2_10d_lsmc" || tag == "example2_100d_nn") {
    const bool nn = tag == "example2_100d_nn";
    c.backend = nn ? "nn" : "lsmc";
    c.dimension = 10;
    c.x = 0.0;
    c.horizon = 1.0;
    c.b0 = 0.1;
    c.sigma0 = nn ? 0.1 : 0.2;
    c.jump = 0.2;
    c.lambda = 0.5;
    c.alpha = 0.1;
    c.beta = 0.0;
    c.rho = 0.0;
    c.basis = "example2";
    c.iterations = nn ? 1 : 3;
    c.steps = nn ? 8 : 16;
    c.paths = 1000000;
    c.runs = nn ? 3 : 5;
    c.reference_paths = 10000000;
    c.reference_steps = 1;
  } else if (tag == "custom") {
    c.backend = "lsmc";
    c.dimension = 1;
    c.x = 0.0;
    c.horizon = 1.0;
    c.b0 = 0.0;
    c.sigma0 = 0.2;
    c.jump = 0.1;
    c.lambda = 1.0;
    c.alpha = 0.0;
    c.beta = 0.0;
    c.rho = 0.0;
    c.basis = "quadratic_payoff";
    c.iterations = 4;
    c.steps = 32;
    c.paths = 100000;
    c.runs = 1;
    c.reference_steps = 1;
  } else {
    throw ConfigError("unknown experiment '" + tag + "' (did you mean '" + nearest(tag, experiment_tags()) + "'?)");
  }
  return c;
}

void apply_paper_scale(ExperimentConfig& c) {
  if (c.experiment == "example2_100d_nn") {
    c.dimension = 100;
    c.batch_size = 32768;
    c.train_steps = 4000;
    c.runs = 5;
  } else if (is_merton(c)) {
    c.inner_paths = 10000000;
    c.reference_paths = 10000000;
  } else {
    c.paths = 10000000;
  }
}

void validate(const ExperimentConfig& c) {
  std::vector<std::string> errors;
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };
  const auto& tags = experiment_tags();
  check(std::find(tags.begin(), tags.end(), c.experiment) != tags.end(),
        "unknown experiment '" + c.experiment + "'");
  check(c.backend == "lsmc" || c.backend == "nn" || c.backend == "semianalytic",
        "backend must be lsmc, nn or semianalytic, got '" + c.backend + "'");
  check(c.dimension >= 1, "dimension must be at least 1");
  check(c.horizon > 0.0, "horizon must be positive");
  check(c.lambda >= 0.0, "lambda must be non-negative");
  check(c.steps >= 1, "steps must be at least 1");
  check(c.iterations >= 0, "iterations must be non-negative");
  check(c.runs >= 1, "runs must be at least 1");
  check(c.reference == "auto" || c.reference == "formula" || c.reference == "mc" || c.reference == "none",
        "reference must be auto, formula, mc or none, got '" + c.reference + "'");
  if (c.backend != "semianalytic") check(c.paths >= 2, "paths must be at least 2");
  if (is_merton(c)) {
    check(c.x > 0.0 && c.strike > 0.0, "x and strike must be positive for the Merton model");
    check(c.sigma > 0.0 && c.sigma_j > 0.0, "sigma and sigma_j must be positive");
    check(c.gamma_samples >= 1, "gamma_samples must be at least 1");
    if (c.backend == "semianalytic") check(c.inner_paths >= 2, "inner_paths must be at least 2");
  } else {
    check(c.sigma0 > 0.0, "sigma0 must be positive");
    check(c.terminal == "exp_mean" || c.terminal == "put_mean" || c.terminal == "constant",
          "terminal must be exp_mean, put_mean or constant, got '" + c.terminal + "'");
    if (c.backend == "semianalytic") {
      check(c.dimension == 1 && c.terminal == "exp_mean",
            "the semianalytic backend for the linear model needs dimension 1 and terminal exp_mean");
    }
  }
  if (c.backend == "lsmc") {
    check(c.basis == "example2" || c.basis == "merton" || c.basis == "quadratic" ||
              c.basis == "quadratic_payoff",
          "basis must be example2, merton, quadratic or quadratic_payoff, got '" + c.basis + "'");
    check(c.ridge_factor >= 0.0, "ridge_factor must be non-negative");
  }
  if (c.backend == "nn") {
    check(c.batch_size >= 2, "batch_size must be at least 2");
    check(c.train_steps >= 1, "train_steps must be at least 1");
    check(c.eval_paths >= 2, "eval_paths must be at least 2");
  }
  if (c.reference == "mc" || c.reference == "auto") {
    check(c.reference_steps >= 1, "reference_steps must be at least 1");
  }
  if (c.reference == "mc") check(c.reference_paths >= 2, "reference_paths must be at least 2");
  if (c.reference == "formula" && !is_merton(c)) {
    check((c.dimension == 1 && c.terminal == "exp_mean") || (c.beta == 0.0 && c.rho == 0.0),
          "reference = formula needs dimension 1 or beta = rho = 0");
  }
  if (c.reference == "formula" && is_merton(c)) {
    check(c.dimension == 1, "reference = formula for the Merton model needs dimension 1");
  }
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
}

ExperimentConfig parse_config(const std::string& text) {
  std::vector<std::string> errors;
  std::vector<Line> lines;
  std::istringstream in(text);
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      const std::string name = line.back() == ']' ? trim(line.substr(1, line.size() - 2)) : "";
      if (line.back() != ']') {
        errors.push_back("line " + std::to_string(number) + ": malformed section header '" + line + "'");
      } else if (std::find(kSections.begin(), kSections.end(), name) == kSections.end()) {
        errors.push_back("line " + std::to_string(number) + ": unknown section '" + name +
                         "' (did you mean '" + nearest(name, kSections) + "'?)");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(number) + ": expected 'key = value', got '" + line + "'");
      continue;
    }
    lines.push_back({number, trim(line.substr(0, eq)), trim(line.substr(eq + 1))});
  }

  std::map<std::string, int> seen;
  std::optional<std::string> tag;
  for (const auto& l : lines) {
    if (auto it = seen.find(l.key); it != seen.end()) {
      errors.push_back("line " + std::to_string(l.number) + ": duplicate key '" + l.key + "' (first set on line " +
                       std::to_string(it->second) + ")");
      continue;
    }
    seen[l.key] = l.number;
    if (l.key == "experiment") tag = l.value;
  }

  ExperimentConfig cfg;
  if (!tag) {
    errors.push_back("missing required key 'experiment'");
  } else {
    try {
      cfg = default_config(*tag);
    } catch (const ConfigError& e) {
      errors.push_back("line " + std::to_string(seen["experiment"]) + ": " + e.what());
    }
  }

  const auto& table = fields();
  const auto keys = config_keys();
  std::map<std::string, bool> applied;
  for (const auto& l : lines) {
    if (applied[l.key]) continue;
    applied[l.key] = true;
    auto it = table.find(l.key);
    if (it == table.end()) {
      errors.push_back("line " + std::to_string(l.number) + ": unknown key '" + l.key + "' (did you mean '" +
                       nearest(l.key, keys) + "'?)");
      continue;
    }
    if (l.key == "experiment") continue;
    if (auto err = it->second.set(cfg, l.value)) {
      errors.push_back("line " + std::to_string(l.number) + ": " + l.key + ": " + *err);
    }
  }

  if (errors.empty()) {
    try {
      validate(cfg);
    } catch (const ConfigError& e) {
      errors.push_back(e.what());
    }
  }
  auto line_of = [](const std::string& e) {
    return e.rfind("line ", 0) == 0 ? std::atoi(e.c_str() + 5) : std::numeric_limits<int>::max();
  };
  std::stable_sort(errors.begin(), errors.end(),
                   [&](const std::string& a, const std::string& b) { return line_of(a) < line_of(b); });
  if (!errors.empty()) {
    std::string msg = errors.size() == 1 ? errors.front() : std::to_string(errors.size()) + " configuration errors:";
    if (errors.size() > 1) {
      for (const auto& e : errors) msg += "\n  " + e;
    }
    throw ConfigError(msg);
  }
  return cfg;
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& section : kSections) {
    out += "[" + section + "]\n";
    if (section == "experiment") out += "experiment = " + cfg.experiment + "\n";
    for (const auto& [key, field] : fields()) {
      if (field.section != section || key == "experiment") continue;
      out += key + " = " + field.get(cfg) + "\n";
    }
  }
  return out;
}

std::optional<std::string> ResultTable::meta(const std::string& key) const {
  for (const auto& [k, v] : metadata) {
    if (k == key) return v;
  }
  return std::nullopt;
}

std::string to_csv(const ResultTable& table) {
  std::string out;
  for (const auto& [k, v] : table.metadata) {
    std::istringstream lines(v);
    std::string line;
    bool any = false;
    while (std::getline(lines, line)) {
      out += "# " + k + ": " + line + "\n";
      any = true;
    }
    if (!any) out += "# " + k + ": \n";
  }
  out += "m,value,std_error,reference,abs_error,rel_error_pct\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : table.rows) {
    out += std::to_string(r.m) + "," + format_double(r.value) + "," + format_double(r.std_error) + "," +
           opt(r.reference) + "," + opt(r.abs_error) + "," + opt(r.rel_error_pct) + "\n";
  }
  return out;
}

ResultTable parse_csv(const std::string& text) {
  ResultTable table;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.rfind("# ", 0) == 0) {
      const auto colon = line.find(": ", 2);
      const auto bare = line.find(':', 2);
      std::string key, value;
      if (colon != std::string::npos) {
        key = line.substr(2, colon - 2);
        value = line.substr(colon + 2);
      } else if (bare != std::string::npos) {
        key = line.substr(2, bare - 2);
      } else {
        throw ConfigError("malformed metadata line '" + line + "'");
      }
      // Multi-line values were written one line per entry.
      if (!table.metadata.empty() && table.metadata.back().first == key) {
        table.metadata.back().second += "\n" + value;
      } else {
        table.metadata.emplace_back(key, value);
      }
      continue;
    }
    if (!header) {
      if (line != "m,value,std_error,reference,abs_error,rel_error_pct") {
        throw ConfigError("unexpected CSV header '" + line + "'");
      }
      header = true;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    while (cells.size() < 6) cells.emplace_back();
    auto num = [&](const std::string& s) {
      auto v = parse_double(s);
      if (!v) throw ConfigError("malformed CSV value '" + s + "' in row '" + line + "'");
      return *v;
    };
    auto opt = [&](const std::string& s) -> std::optional<double> {
      if (s.empty()) return std::nullopt;
      return num(s);
    };
    ResultRow r;
    r.m = static_cast<int>(num(cells[0]));
    r.value = num(cells[1]);
    r.std_error = num(cells[2]);
    r.reference = opt(cells[3]);
    r.abs_error = opt(cells[4]);
    r.rel_error_pct = opt(cells[5]);
    table.rows.push_back(r);
  }
  return table;
}

void write_csv(const ResultTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << to_csv(table);
  if (!out) throw Error("failed writing '" + path + "'");
}

MertonConfig merton_config(const ExperimentConfig& c) {
  MertonConfig m;
  m.d = c.dimension;
  m.x = c.x;
  m.K = c.strike;
  m.T = c.horizon;
  m.r = c.rate;
  m.sigma = c.sigma;
  m.lambda = c.lambda;
  m.mu_j = c.mu_j;
  m.sigma_j = c.sigma_j;
  m.c = c.default_intensity;
  return m;
}

Example2Config example2_config(const ExperimentConfig& c) {
  Example2Config e;
  e.d = c.dimension;
  e.T = c.horizon;
  e.b0 = c.b0;
  e.sigma0 = c.sigma0;
  e.c = c.jump;
  e.lambda = c.lambda;
  e.alpha = c.alpha;
  e.beta = c.beta;
  e.rho = c.rho;
  return e;
}

ModelSpec build_model(const ExperimentConfig& c) {
  if (is_merton(c)) return merton_model(merton_config(c), c.gamma_samples);
  if (is_example2(c)) return example2_model(example2_config(c));
  return custom_model(example2_config(c), parse_terminal_kind(c.terminal), c.strike, c.terminal_value);
}

std::optional<Estimate> compute_reference(const ExperimentConfig& c, const ModelSpec& model) {
  std::string method = c.reference;
  const bool linear_drift_free = c.beta == 0.0 && c.rho == 0.0;
  if (method == "none") return std::nullopt;
  if (method == "auto") {
    if (is_merton(c)) {
      method = c.dimension == 1 ? "formula" : "mc";
    } else if (c.terminal == "exp_mean" && (c.dimension == 1 || linear_drift_free)) {
      method = c.dimension == 1 ? "formula" : "mc";
    } else if (c.terminal == "constant" && c.beta == 0.0) {
      method = "formula";
    } else if (linear_drift_free) {
      method = "mc";
    } else {
      return std::nullopt;
    }
  }
  if (method == "formula") {
    if (is_merton(c)) return Estimate{merton_u_ref_1d(merton_config(c)), 0.0};
    const Example2Config e = example2_config(c);
    if (c.terminal == "constant") {
      if (c.beta != 0.0) throw ConfigError("no closed form for a constant terminal with beta != 0");
      return Estimate{c.terminal_value * std::exp(c.alpha * c.horizon), 0.0};
    }
    if (c.terminal != "exp_mean") throw ConfigError("no closed form for terminal '" + c.terminal + "'");
    if (c.dimension == 1) return Estimate{example2_u_ref_1d(e, c.x), 0.0};
    return Estimate{example2_u_ref_d(e, c.x), 0.0};
  }
  // Jump-inclusive Monte Carlo; valid when the driver is linear in y alone.
  double rate = 0.0;
  if (is_merton(c)) {
    rate = c.rate + c.default_intensity;
  } else {
    if (!linear_drift_free) throw ConfigError("reference = mc needs beta = rho = 0");
    rate = -c.alpha;
  }
  const TimeGrid grid(c.horizon, c.reference_steps);
  const Vector x0 = Vector::Constant(c.dimension, c.x);
  return u_ref_mc(model, grid, x0, c.reference_paths, derive_seed(c.seed, 0x726566), rate);
}

ResultTable run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();
  const ModelSpec model = build_model(cfg);

  std::vector<std::uint64_t> seeds;
  for (int r = 0; r < cfg.runs; ++r) seeds.push_back(derive_seed(cfg.seed, 0x72756e, static_cast<std::uint64_t>(r)));

  std::vector<LevelEstimate> levels;
  if (cfg.backend == "semianalytic") {
    for (int m = 0; m <= cfg.iterations; ++m) {
      LevelEstimate est;
      est.m = m;
      est.value = Vector::Zero(1);
      est.std_error = Vector::Zero(1);
      if (is_merton(cfg)) {
        std::vector<Estimate> runs;
        for (auto s : seeds) runs.push_back(merton_wm_semianalytic(merton_config(cfg), m, cfg.inner_paths, s));
        double mean = 0.0;
        for (const auto& r : runs) mean += r.value;
        mean /= static_cast<double>(runs.size());
        double se = runs.front().std_error;
        if (runs.size() > 1) {
          double ss = 0.0;
          for (const auto& r : runs) ss += (r.value - mean) * (r.value - mean);
          se = std::sqrt(ss / static_cast<double>(runs.size() - 1) / static_cast<double>(runs.size()));
        }
        est.value[0] = mean;
        est.std_error[0] = se;
      } else {
        est.value[0] = example2_wm_exact_1d(example2_config(cfg), m, cfg.x);
      }
      levels.push_back(est);
    }
  } else {
    Backend backend;
    if (cfg.backend == "lsmc") {
      backend = LsmcOptions{cfg.basis, cfg.ridge_factor};
    } else {
      NnOptions nn;
      nn.hidden = cfg.hidden;
      nn.batch_norm = cfg.batch_norm;
      nn.schedule.batch_size = cfg.batch_size;
      nn.schedule.steps = cfg.train_steps;
      nn.evaluation_paths = cfg.eval_paths;
      backend = nn;
    }
    SolveOptions options;
    options.simulation.memory_cap_bytes = cfg.memory_cap_mb * (std::size_t{1} << 20);
    const TimeGrid grid(cfg.horizon, cfg.steps);
    const Vector x0 = Vector::Constant(cfg.dimension, cfg.x);
    levels = solve(model, grid, x0, cfg.paths, cfg.iterations, backend, seeds, options);
  }

  const auto ref = compute_reference(cfg, model);

  ResultTable table;
  table.metadata.emplace_back("version", kVersion);
  table.metadata.emplace_back("config", serialize_config(cfg));
  if (ref) {
    table.metadata.emplace_back("reference_value", format_double(ref->value));
    table.metadata.emplace_back("reference_std_error", format_double(ref->std_error));
  }
  for (const auto& l : levels) {
    ResultRow row;
    row.m = l.m;
    row.value = l.value[0];
    row.std_error = l.std_error[0];
    if (ref) {
      row.reference = ref->value;
      row.abs_error = std::abs(row.value - ref->value);
      if (ref->value != 0.0) row.rel_error_pct = 100.0 * *row.abs_error / std::abs(ref->value);
    }
    table.rows.push_back(row);
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  table.metadata.emplace_back("wall_time_s", format_double(wall));
  if (!cfg.out.empty()) write_csv(table, cfg.out);
  return table;
}

}  // namespace fbsdej
