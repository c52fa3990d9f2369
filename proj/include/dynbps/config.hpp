#ifndef DYNBPS_CONFIG_HPP
#define DYNBPS_CONFIG_HPP

// Run configuration: an INI file (grammar in docs/config.md) plus
// section.key=value overrides.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dynbps/engine.hpp"
#include "dynbps/simulate.hpp"

namespace dynbps {

struct RunConfig {
  // [data]; relative paths are resolved against the config file directory.
  std::string panel;
  std::string future;
  std::string locations;
  std::string output = ".";
  std::string fit_archive;  // defaults to <output>/fit.bin

  // [grid]; the model grid is the cross product.
  std::vector<double> alphas;
  std::vector<double> phis;

  PriorSpec prior;

  // [run]
  std::optional<std::uint64_t> seed;
  int draws = 200;
  int horizon = 1;
  int time = 0;  // interpolation time; 0 means T
  int threads = 0;
  Aggregation aggregation = Aggregation::Global;
  ForecastMode forecast_mode = ForecastMode::Conditional;
  bool freeze_model = false;
  double coef_state_scale = 1.0;
  SolverOptions solver;

  // [seasonal]
  bool seasonal = false;
  int start_month = 1;

  // [simulate]
  GeneratorSpec simulate;

  std::string hash;  // content hash of the effective configuration

  ModelGrid grid() const { return ModelGrid::cross(alphas, phis); }
  EngineOptions engine() const;
  std::uint64_t require_seed() const;
  /// Design at 1-based time t with seasonal dummies appended when enabled.
  Matrix design_at(const Matrix& x, int t) const;
};

/// Parses INI text. `overrides` are "section.key=value" strings applied on
/// top of the file. `base_dir` anchors relative paths. ConfigError on any
/// unknown key, malformed value or violated invariant.
RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {},
                       const std::string& base_dir = ".");
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

}  // namespace dynbps

#endif  // DYNBPS_CONFIG_HPP
