#include "dynbps/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dynbps/dlm.hpp"
#include "dynbps/io.hpp"

namespace dynbps {

namespace pt = boost::property_tree;
namespace fs = std::filesystem;

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"data", {"panel", "future", "locations", "output", "fit"}},
      {"grid", {"alpha", "phi"}},
      {"prior", {"coef_var", "prior_phi", "psi_scale", "nu0"}},
      {"run",
       {"seed", "draws", "horizon", "time", "threads", "aggregation", "forecast_mode", "freeze_model",
        "coef_state_scale", "solver_tol", "solver_max_iter"}},
      {"seasonal", {"enabled", "start_month"}},
      {"simulate", {"n", "q", "T", "p", "alpha", "phi", "sigma", "horizon", "seed", "coords"}},
  };
  return keys;
}

[[noreturn]] void bad(const std::string& key, const std::string& message) {
  throw Error(ErrorKind::ConfigError, key + ": " + message);
}

double to_double(const std::string& key, const std::string& s) {
  double v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
    bad(key, "expected a number, got '" + s + "'");
  return v;
}

long long to_int(const std::string& key, const std::string& s) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    bad(key, "expected an integer, got '" + s + "'");
  return v;
}

std::uint64_t to_seed(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    bad(key, "expected a nonnegative integer seed, got '" + s + "'");
  return v;
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
  if (s == "false" || s == "no" || s == "0" || s == "off") return false;
  bad(key, "expected true or false, got '" + s + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    out.push_back(to_double(key, b == std::string::npos ? "" : item.substr(b, e - b + 1)));
  }
  if (out.empty()) bad(key, "expected a comma-separated list of numbers");
  return out;
}

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty()) return p;
  fs::path path(p);
  return path.is_absolute() ? p : (fs::path(base) / path).lexically_normal().string();
}

// Canonical text of the effective configuration, used for the hash. Keys
// that cannot change any output value are left out.
std::string canonical(const pt::ptree& tree) {
  static const std::set<std::string> ignored{"run.threads", "data.output", "data.fit"};
  std::map<std::string, std::map<std::string, std::string>> sorted;
  for (const auto& [section, body] : tree)
    for (const auto& [key, value] : body)
      if (!ignored.count(section + "." + key)) sorted[section][key] = value.data();
  std::string out;
  for (const auto& [section, body] : sorted) {
    out += "[" + section + "]\n";
    for (const auto& [key, value] : body) out += key + "=" + value + "\n";
  }
  return out;
}

}  // namespace

EngineOptions RunConfig::engine() const {
  EngineOptions o;
  o.aggregation = aggregation;
  o.coef_state_scale = coef_state_scale;
  o.solver = solver;
  o.threads = threads;
  o.freeze_model = freeze_model;
  o.forecast_mode = forecast_mode;
  return o;
}

std::uint64_t RunConfig::require_seed() const {
  if (!seed) throw Error(ErrorKind::ConfigError, "run.seed: a seed is required");
  return *seed;
}

Matrix RunConfig::design_at(const Matrix& x, int t) const {
  if (!seasonal) return x;
  const int month = ((start_month - 1 + t - 1) % 12) + 1;
  return build_seasonal_design(x, month);
}

RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides,
                       const std::string& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorKind::ConfigError, std::string("config syntax: ") + e.what());
  }
  for (const auto& ov : overrides) {
    const auto eq = ov.find('='), dot = ov.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
      throw Error(ErrorKind::ConfigError, "override '" + ov + "' must look like section.key=value");
    const std::string section = ov.substr(0, dot), key = ov.substr(dot + 1, eq - dot - 1);
    if (section.empty() || key.empty())
      throw Error(ErrorKind::ConfigError, "override '" + ov + "' must look like section.key=value");
    if (tree.find(section) == tree.not_found()) tree.add_child(section, pt::ptree());
    tree.get_child(section).put(pt::ptree::path_type(key, '\0'), ov.substr(eq + 1));
  }

  const auto& known = known_keys();
  for (const auto& [section, body] : tree) {
    auto it = known.find(section);
    if (it == known.end()) {
      if (body.empty()) bad(section, "keys must appear inside a [section]");
      bad("[" + section + "]", "unknown section");
    }
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) bad(section + "." + key, "unknown key");
      if (!value.empty()) bad(section + "." + key, "nested keys are not allowed");
    }
  }

  auto get = [&](const std::string& section, const std::string& key) -> std::optional<std::string> {
    auto s = tree.find(section);
    if (s == tree.not_found()) return std::nullopt;
    auto k = s->second.find(key);
    if (k == s->second.not_found()) return std::nullopt;
    return k->second.data();
  };

  RunConfig c;
  const std::string base = base_dir.empty() ? "." : base_dir;
  if (auto v = get("data", "panel")) c.panel = resolve(base, *v);
  if (auto v = get("data", "future")) c.future = resolve(base, *v);
  if (auto v = get("data", "locations")) c.locations = resolve(base, *v);
  if (auto v = get("data", "output")) c.output = *v;
  c.output = resolve(base, c.output);
  c.fit_archive = get("data", "fit") ? resolve(base, *get("data", "fit"))
                                     : (fs::path(c.output) / "fit.bin").string();

  if (auto v = get("grid", "alpha")) c.alphas = to_list("grid.alpha", *v);
  if (auto v = get("grid", "phi")) c.phis = to_list("grid.phi", *v);
  for (double a : c.alphas)
    if (!(a > 0 && a < 1)) bad("grid.alpha", "values must lie in (0, 1)");
  for (double f : c.phis)
    if (!(f > 0)) bad("grid.phi", "values must be positive");

  if (auto v = get("prior", "coef_var")) c.prior.coef_var = to_double("prior.coef_var", *v);
  if (auto v = get("prior", "prior_phi")) c.prior.prior_phi = to_double("prior.prior_phi", *v);
  if (auto v = get("prior", "psi_scale")) c.prior.psi_scale = to_double("prior.psi_scale", *v);
  if (auto v = get("prior", "nu0")) c.prior.nu0 = to_double("prior.nu0", *v);
  if (!(c.prior.coef_var > 0)) bad("prior.coef_var", "must be positive");
  if (!(c.prior.prior_phi > 0)) bad("prior.prior_phi", "must be positive");
  if (!(c.prior.psi_scale > 0)) bad("prior.psi_scale", "must be positive");
  if (c.prior.nu0 && !(*c.prior.nu0 > 0)) bad("prior.nu0", "must be positive");

  if (auto v = get("run", "seed")) c.seed = to_seed("run.seed", *v);
  if (auto v = get("run", "draws")) c.draws = static_cast<int>(to_int("run.draws", *v));
  if (auto v = get("run", "horizon")) c.horizon = static_cast<int>(to_int("run.horizon", *v));
  if (auto v = get("run", "time")) c.time = static_cast<int>(to_int("run.time", *v));
  if (auto v = get("run", "threads")) c.threads = static_cast<int>(to_int("run.threads", *v));
  if (auto v = get("run", "aggregation")) {
    if (*v == "global") c.aggregation = Aggregation::Global;
    else if (*v == "consensus") c.aggregation = Aggregation::Consensus;
    else bad("run.aggregation", "expected global or consensus, got '" + *v + "'");
  }
  if (auto v = get("run", "forecast_mode")) {
    if (*v == "conditional") c.forecast_mode = ForecastMode::Conditional;
    else if (*v == "marginal") c.forecast_mode = ForecastMode::Marginal;
    else bad("run.forecast_mode", "expected conditional or marginal, got '" + *v + "'");
  }
  if (auto v = get("run", "freeze_model")) c.freeze_model = to_bool("run.freeze_model", *v);
  if (auto v = get("run", "coef_state_scale")) c.coef_state_scale = to_double("run.coef_state_scale", *v);
  if (auto v = get("run", "solver_tol")) c.solver.tol = to_double("run.solver_tol", *v);
  if (auto v = get("run", "solver_max_iter"))
    c.solver.max_iter = static_cast<int>(to_int("run.solver_max_iter", *v));
  if (c.draws < 1) bad("run.draws", "must be at least 1");
  if (c.horizon < 1) bad("run.horizon", "must be at least 1");
  if (c.time < 0) bad("run.time", "must be nonnegative");
  if (c.threads < 0) bad("run.threads", "must be nonnegative (0 means all cores)");
  if (!(c.coef_state_scale > 0)) bad("run.coef_state_scale", "must be positive");
  if (!(c.solver.tol > 0)) bad("run.solver_tol", "must be positive");
  if (c.solver.max_iter < 1) bad("run.solver_max_iter", "must be at least 1");

  if (auto v = get("seasonal", "enabled")) c.seasonal = to_bool("seasonal.enabled", *v);
  if (auto v = get("seasonal", "start_month"))
    c.start_month = static_cast<int>(to_int("seasonal.start_month", *v));
  if (c.start_month < 1 || c.start_month > 12) bad("seasonal.start_month", "must lie in 1..12");

  auto& s = c.simulate;
  if (auto v = get("simulate", "n")) s.n = to_int("simulate.n", *v);
  if (auto v = get("simulate", "q")) s.q = to_int("simulate.q", *v);
  if (auto v = get("simulate", "T")) s.T = static_cast<int>(to_int("simulate.T", *v));
  if (auto v = get("simulate", "p")) s.p = to_int("simulate.p", *v);
  if (auto v = get("simulate", "alpha")) s.alpha = to_double("simulate.alpha", *v);
  if (auto v = get("simulate", "phi")) s.phi = to_double("simulate.phi", *v);
  if (auto v = get("simulate", "horizon")) s.horizon = static_cast<int>(to_int("simulate.horizon", *v));
  if (auto v = get("simulate", "sigma")) {
    const auto vals = to_list("simulate.sigma", *v);
    const auto k = static_cast<Index>(std::lround(std::sqrt(static_cast<double>(vals.size()))));
    if (k * k != static_cast<Index>(vals.size()) || k != s.q)
      bad("simulate.sigma", "expected q*q row-major values");
    s.sigma.resize(k, k);
    for (Index r = 0; r < k; ++r)
      for (Index col = 0; col < k; ++col) s.sigma(r, col) = vals[static_cast<std::size_t>(r * k + col)];
  }
  if (auto v = get("simulate", "coords")) {
    const auto file = ingest_locations(resolve(base, *v));
    s.layout = LocationLayout::Supplied;
    s.coords = file.locations.coords;
  }
  if (auto v = get("simulate", "seed")) s.seed = to_seed("simulate.seed", *v);
  else if (c.seed) s.seed = *c.seed;
  s.prior = c.prior;
  s.coef_state_scale = c.coef_state_scale;
  try {
    s.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::ConfigError, std::string("simulate: ") + e.what());
  }

  c.hash = content_hash(canonical(tree));
  return c;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), overrides, fs::path(path).parent_path().string());
}

}  // namespace dynbps
