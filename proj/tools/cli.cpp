#include "dynbps/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>

#include "dynbps/config.hpp"
#include "dynbps/engine.hpp"
#include "dynbps/io.hpp"
#include "dynbps/simulate.hpp"

namespace dynbps {

namespace fs = std::filesystem;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigError:
    case ErrorKind::InvalidAlpha:
    case ErrorKind::InvalidPhi:
    case ErrorKind::InvalidMonth:
      return kExitConfig;
    case ErrorKind::SchemaError:
    case ErrorKind::GridError:
    case ErrorKind::ParseError:
    case ErrorKind::InputError:
    case ErrorKind::DimensionMismatch:
      return kExitData;
    case ErrorKind::NotPositiveDefinite:
    case ErrorKind::NoConvergence:
    case ErrorKind::InvalidShape:
      return kExitNumeric;
  }
  return kExitNumeric;
}

namespace {

struct Context {
  RunConfig cfg;
  OutputMeta meta;
  fs::path out_dir;

  std::ofstream open(const std::string& name) const {
    const fs::path path = out_dir / name;
    std::ofstream f(path);
    require(static_cast<bool>(f), ErrorKind::InputError, "cannot write '" + path.string() + "'");
    return f;
  }
};

const double kProbs[3] = {0.025, 0.5, 0.975};

std::vector<std::string> state_row_names(Index p, const LocationSet<double>& locations) {
  std::vector<std::string> names;
  for (Index k = 0; k < p; ++k) names.push_back("b_" + std::to_string(k + 1));
  for (const auto& id : locations.ids) names.push_back(id);
  return names;
}

// mean, q025, q500, q975 of entry (r, c) over draws.
void summary_fields(CsvWriter& w, const std::vector<Matrix>& draws, Index r, Index c,
                    std::vector<double>& scratch) {
  scratch.resize(draws.size());
  double mean = 0;
  for (std::size_t k = 0; k < draws.size(); ++k) {
    scratch[k] = draws[k](r, c);
    mean += scratch[k];
  }
  w.field(mean / static_cast<double>(draws.size()));
  for (double prob : kProbs) w.field(empirical_quantile(scratch, prob));
}

Index raw_design_columns(const RunConfig& cfg, Index p) {
  const Index extra = cfg.seasonal ? kSeasonalDummies : 0;
  require(p >= extra, ErrorKind::InputError, "fit archive does not match the seasonal setting");
  return p - extra;
}

// Run-time options come from the current config, not from the archive.
FitResult load_fitted(const RunConfig& cfg) {
  FitResult fit = load_fit(cfg.fit_archive);
  fit.options.threads = cfg.threads;
  fit.options.forecast_mode = cfg.forecast_mode;
  fit.options.aggregation = cfg.aggregation;
  return fit;
}

void cmd_simulate(const Context& ctx) {
  GeneratorSpec spec = ctx.cfg.simulate;
  const auto data = generate_dataset(spec);
  {
    auto f = ctx.open("panel.csv");
    emit_panel(f, data.train, ctx.meta);
  }
  if (spec.horizon > 0) {
    auto f = ctx.open("holdout.csv");
    emit_panel(f, data.holdout, ctx.meta, spec.T + 1);
  }
  {
    auto f = ctx.open("truth_theta.csv");
    CsvWriter w(f, ctx.meta, {"time", "row", "outcome", "value"});
    const auto names = state_row_names(spec.p, data.train.locations);
    for (std::size_t t = 0; t < data.truth.theta.size(); ++t) {
      const Matrix& th = data.truth.theta[t];
      for (Index r = 0; r < th.rows(); ++r)
        for (Index c = 0; c < th.cols(); ++c) {
          w.field(static_cast<long long>(t)).field(names[static_cast<std::size_t>(r)]).field(c + 1);
          w.field(th(r, c)).end_row();
        }
    }
  }
  {
    auto f = ctx.open("truth_sigma.csv");
    CsvWriter w(f, ctx.meta, {"row", "col", "value"});
    for (Index r = 0; r < data.truth.sigma.rows(); ++r)
      for (Index c = 0; c < data.truth.sigma.cols(); ++c)
        w.field(r + 1).field(c + 1).field(data.truth.sigma(r, c)).end_row();
  }
}

void cmd_fit(const Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  if (cfg.panel.empty()) throw Error(ErrorKind::ConfigError, "data.panel: required by fit");
  if (cfg.alphas.empty() || cfg.phis.empty())
    throw Error(ErrorKind::ConfigError, "grid: alpha and phi lists are required by fit");
  auto data = ingest_panel(cfg.panel);
  for (int t = 1; t <= data.T(); ++t)
    data.X[static_cast<std::size_t>(t - 1)] = cfg.design_at(data.X[static_cast<std::size_t>(t - 1)], t);
  const Prior prior = Prior::standard(data.locations, data.p(), data.q(), cfg.prior);
  const auto res = ffbs(data, cfg.grid(), prior, cfg.draws, cfg.engine(), cfg.require_seed());
  const FitResult& fit = res.fit;
  save_fit(fit, cfg.fit_archive);

  {
    auto f = ctx.open("weights_trace.csv");
    CsvWriter w(f, ctx.meta, {"time", "model", "label", "alpha", "phi", "global", "consensus", "count"});
    for (int t = 0; t <= fit.T; ++t)
      for (Index j = 0; j < fit.models(); ++j) {
        const auto& m = fit.grid.models[static_cast<std::size_t>(j)];
        w.field(t).field(j + 1).field(m.label).field(m.alpha).field(m.phi);
        w.field(fit.weights.global(t, j)).field(fit.weights.consensus(t, j));
        w.field(static_cast<long long>(fit.weights.counts(t, j))).end_row();
      }
  }
  const auto names = state_row_names(fit.p, fit.locations);
  {
    // Marginal law of each state entry: Student-t with dof d - q + 1 and
    // scale^2 = C_ii S_cc / (d - q + 1), d = 2 nu, S = 2 Psi.
    auto f = ctx.open("model_states.csv");
    CsvWriter w(f, ctx.meta, {"model", "time", "row", "outcome", "mean", "scale", "dof"});
    for (Index j = 0; j < fit.models(); ++j)
      for (const auto& st : fit.states[static_cast<std::size_t>(j)]) {
        const double dof = 2.0 * st.nu - static_cast<double>(fit.q) + 1.0;
        for (Index r = 0; r < st.m.rows(); ++r)
          for (Index c = 0; c < fit.q; ++c) {
            w.field(j + 1).field(st.t).field(names[static_cast<std::size_t>(r)]).field(c + 1);
            w.field(st.m(r, c)).field(std::sqrt(st.C(r, r) * 2.0 * st.Psi(c, c) / dof)).field(dof);
            w.end_row();
          }
      }
  }
  {
    auto f = ctx.open("states_summary.csv");
    CsvWriter w(f, ctx.meta, {"time", "row", "outcome", "mean", "q025", "q500", "q975"});
    std::vector<double> scratch;
    for (int t = 0; t <= fit.T; ++t) {
      const auto draws = res.draws.slot(t);
      for (Index r = 0; r < draws.front().rows(); ++r)
        for (Index c = 0; c < fit.q; ++c) {
          w.field(t).field(names[static_cast<std::size_t>(r)]).field(c + 1);
          summary_fields(w, draws, r, c, scratch);
          w.end_row();
        }
    }
  }
}

void cmd_forecast(const Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const FitResult fit = load_fitted(cfg);
  const int K = cfg.horizon;
  const Index n = fit.n(), p_raw = raw_design_columns(cfg, fit.p);
  std::vector<Matrix> designs;
  if (p_raw > 0) {
    if (cfg.future.empty())
      throw Error(ErrorKind::ConfigError, "data.future: required by forecast when the panel has covariates");
    const auto future = ingest_panel(cfg.future, fit.T + 1);
    require(future.locations.ids == fit.locations.ids, ErrorKind::GridError,
            cfg.future + ": locations differ from the fitted panel");
    require(future.p() == p_raw, ErrorKind::SchemaError,
            cfg.future + ": expected " + std::to_string(p_raw) + " covariate columns");
    require(future.T() >= K, ErrorKind::GridError,
            cfg.future + ": has " + std::to_string(future.T()) + " times, horizon needs " + std::to_string(K));
    for (int k = 0; k < K; ++k) designs.push_back(future.X[static_cast<std::size_t>(k)]);
  } else {
    designs.assign(static_cast<std::size_t>(K), Matrix(n, 0));
  }
  for (int k = 0; k < K; ++k)
    designs[static_cast<std::size_t>(k)] = cfg.design_at(designs[static_cast<std::size_t>(k)], fit.T + k + 1);
  const auto draws = forecast(fit, K, designs, cfg.draws, cfg.require_seed());

  auto f = ctx.open("forecast_quantiles.csv");
  CsvWriter w(f, ctx.meta, {"k", "location_id", "outcome", "mean", "q025", "q500", "q975"});
  std::vector<double> scratch;
  for (int k = 0; k < K; ++k) {
    const auto slot = draws.slot(k);
    for (Index i = 0; i < n; ++i)
      for (Index c = 0; c < fit.q; ++c) {
        w.field(k + 1).field(fit.locations.ids[static_cast<std::size_t>(i)]).field(c + 1);
        summary_fields(w, slot, fit.p + n + i, c, scratch);
        w.end_row();
      }
  }
}

void cmd_interpolate(const Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  if (cfg.locations.empty()) throw Error(ErrorKind::ConfigError, "data.locations: required by interpolate");
  const FitResult fit = load_fitted(cfg);
  const int t = cfg.time == 0 ? fit.T : cfg.time;
  if (t > fit.T)
    throw Error(ErrorKind::ConfigError,
                "run.time: " + std::to_string(t) + " is after the last fitted time " + std::to_string(fit.T));
  const auto file = ingest_locations(cfg.locations);
  const Index p_raw = raw_design_columns(cfg, fit.p);
  require(file.design.cols() == p_raw, ErrorKind::SchemaError,
          cfg.locations + ": expected " + std::to_string(p_raw) + " covariate columns");
  const Matrix design = cfg.design_at(file.design, t);
  const auto draws = spatial_predict(fit, t, file.locations, design, cfg.draws, cfg.require_seed());

  auto f = ctx.open("interpolation_quantiles.csv");
  CsvWriter w(f, ctx.meta, {"time", "location_id", "quantity", "outcome", "mean", "q025", "q500", "q975"});
  const auto slot = draws.slot(0);
  const Index m = file.locations.size();
  std::vector<double> scratch;
  for (int block = 0; block < 2; ++block)
    for (Index i = 0; i < m; ++i)
      for (Index c = 0; c < fit.q; ++c) {
        w.field(t).field(file.locations.ids[static_cast<std::size_t>(i)]).field(block == 0 ? "Y" : "Omega");
        w.field(c + 1);
        summary_fields(w, slot, block * m + i, c, scratch);
        w.end_row();
      }
}

void cmd_weights(const Context& ctx) {
  const FitResult fit = load_fitted(ctx.cfg);
  auto f = ctx.open("weights.csv");
  CsvWriter w(f, ctx.meta, {"time", "scope", "location_id", "model", "weight"});
  for (int t = 0; t <= fit.T; ++t) {
    const Matrix& pl = fit.weights.per_location[static_cast<std::size_t>(t)];
    for (Index i = 0; i < fit.n(); ++i)
      for (Index j = 0; j < fit.models(); ++j)
        w.field(t).field("location").field(fit.locations.ids[static_cast<std::size_t>(i)]).field(j + 1)
            .field(pl(i, j)).end_row();
    for (Index j = 0; j < fit.models(); ++j)
      w.field(t).field("global").field("").field(j + 1).field(fit.weights.global(t, j)).end_row();
    for (Index j = 0; j < fit.models(); ++j)
      w.field(t).field("consensus").field("").field(j + 1).field(fit.weights.consensus(t, j)).end_row();
  }
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

void report(std::ostream& err, const std::string& kind, int code, const std::string& message) {
  err << "error: kind=" << kind << " code=" << code << " message=" << one_line(message) << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dynamic Bayesian predictive stacking for spatiotemporal DLMs", "dynbps"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string output;
  app.add_option("-c,--config", config_path, "INI configuration file")->required();
  app.add_option("--set", overrides, "Override a config value as section.key=value (repeatable)");
  app.add_option("--seed", seed, "Override run.seed");
  app.add_option("--threads", threads, "Override run.threads (0 = all cores)");
  app.add_option("-o,--output", output, "Override data.output");
  app.set_version_flag("--version", kVersion);

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic panel and its truth");
  auto* fit = app.add_subcommand("fit", "Filter, stack and smooth a panel");
  auto* fc = app.add_subcommand("forecast", "Forecast quantiles from a fitted archive");
  std::optional<int> horizon;
  fc->add_option("--horizon", horizon, "Forecast horizon K");
  auto* interp = app.add_subcommand("interpolate", "Spatial prediction at new locations");
  std::optional<int> time;
  std::string locations;
  interp->add_option("--time", time, "Fitted time to interpolate at (default T)");
  interp->add_option("--locations", locations, "CSV of new locations");
  auto* wts = app.add_subcommand("weights", "Per-location and aggregated stacking weights");
  for (auto* sub : {sim, fit, fc, interp, wts}) sub->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    report(err, "UsageError", kExitConfig, e.what());
    return kExitConfig;
  }

  auto absolute = [](const std::string& p) { return fs::absolute(p).lexically_normal().string(); };
  if (seed) overrides.push_back("run.seed=" + std::to_string(*seed));
  if (threads) overrides.push_back("run.threads=" + std::to_string(*threads));
  if (!output.empty()) overrides.push_back("data.output=" + absolute(output));
  if (horizon) overrides.push_back("run.horizon=" + std::to_string(*horizon));
  if (time) overrides.push_back("run.time=" + std::to_string(*time));
  if (!locations.empty()) overrides.push_back("data.locations=" + absolute(locations));

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    Context ctx;
    ctx.cfg = load_config(config_path, overrides);
    ctx.meta = {command, ctx.cfg.require_seed(), ctx.cfg.hash};
    ctx.out_dir = ctx.cfg.output;
    fs::create_directories(ctx.out_dir);
    if (command == "simulate") cmd_simulate(ctx);
    else if (command == "fit") cmd_fit(ctx);
    else if (command == "forecast") cmd_forecast(ctx);
    else if (command == "interpolate") cmd_interpolate(ctx);
    else cmd_weights(ctx);
  } catch (const Error& e) {
    const int code = exit_code_for(e.kind());
    report(err, to_string(e.kind()), code, e.what());
    return code;
  } catch (const fs::filesystem_error& e) {
    report(err, "IOError", kExitData, e.what());
    return kExitData;
  } catch (const std::exception& e) {
    report(err, "InternalError", kExitNumeric, e.what());
    return kExitNumeric;
  }
  return kExitOk;
}

}  // namespace dynbps
