#ifndef DYNBPS_ENGINE_HPP
#define DYNBPS_ENGINE_HPP

// Parallel model flows with dynamic stacking, weighted backward sampling,
// temporal forecasting and spatial prediction.
//
// Each candidate model (alpha_j, phi_j) runs its own conjugate filter; the
// stacking weights only decide which flow a posterior draw comes from and
// never feed back into the filter states.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dynbps/common.hpp"
#include "dynbps/dlm.hpp"
#include "dynbps/spatial.hpp"
#include "dynbps/stacking.hpp"

namespace dynbps {

struct CandidateModel {
  double alpha = 0;
  double phi = 0;
  std::string label;
};

struct ModelGrid {
  std::vector<CandidateModel> models;

  /// Every (alpha, phi) pair, alpha varying slowest.
  static ModelGrid cross(const std::vector<double>& alphas, const std::vector<double>& phis);

  Index size() const { return static_cast<Index>(models.size()); }
  Vector alphas() const;
  Vector phis() const;
  /// Index of the model with exactly this pair, or -1.
  Index find(double alpha, double phi) const;
  void validate() const;
};

struct SpatioTemporalDataset {
  LocationSet<double> locations;
  std::vector<Matrix> Y;  // [t-1] n x q
  std::vector<Matrix> X;  // [t-1] n x p

  Index n() const { return locations.size(); }
  Index q() const { return Y.empty() ? 0 : Y.front().cols(); }
  Index p() const { return X.empty() ? 0 : X.front().cols(); }
  int T() const { return static_cast<int>(Y.size()); }
  void validate() const;
};

struct PriorSpec {
  double coef_var = 0.05;   // C0 coefficient block is coef_var * I_p
  double prior_phi = 1.0;   // C0 spatial block is R(S, S; prior_phi)
  double psi_scale = 10.0;  // Psi0 = psi_scale * I_q
  std::optional<double> nu0;  // defaults to q + 1
};

struct Prior {
  Matrix m0;
  Matrix C0;
  double nu0 = 0;
  Matrix Psi0;

  /// m0 = 0, C0 = blockdiag(coef_var I_p, R(S,S;prior_phi)), Psi0 = psi_scale I_q.
  static Prior standard(const LocationSet<double>& locations, Index p, Index q,
                        const PriorSpec& spec = {});
};

enum class ForecastMode {
  Conditional,  // step k+1 is propagated from the drawn state at k
  Marginal,     // each step uses the unconditioned recursion A_T(k), R_T(k)
};

struct EngineOptions {
  Aggregation aggregation = Aggregation::Global;
  double coef_state_scale = 1.0;  // W^B = coef_state_scale * I_p
  std::optional<WeightVector> initial_weights;  // w^(0); uniform when empty
  SolverOptions solver;
  int threads = 0;  // <= 0 picks DYNBPS_THREADS or all cores
  bool freeze_model = false;  // backward sampling keeps the model drawn at T
  ForecastMode forecast_mode = ForecastMode::Conditional;
  double max_jitter = kDefaultMaxJitter;
};

struct FitResult {
  ModelGrid grid;
  LocationSet<double> locations;
  Prior prior;
  EngineOptions options;
  Index p = 0;
  Index q = 0;
  int T = 0;
  std::vector<std::vector<FilterState<double>>> states;  // [j][t], t = 0..T
  WeightTrace weights;
  LogDensityHistory history;

  Index n() const { return locations.size(); }
  Index models() const { return grid.size(); }
  /// Aggregated weights at time t under the configured strategy.
  WeightVector weights_at(int t) const { return weights.aggregated(t, options.aggregation); }
  /// System matrices of model j for a given design.
  SystemMatrices<double> system(Index j, const Matrix& design) const;
  /// State row-covariance W of model j.
  Matrix state_covariance(Index j) const;
};

enum class DrawKind { SmoothedStates, Forecast, Interpolation, Sigma };

/// R draws from a stacked posterior. `draws[r][slot]` is one matrix; slots are
/// times 0..T for smoothed states, horizons 1..K for forecasts ([Theta; Y]),
/// and a single [Y~; Omega~] block for interpolation. `model_indices[r][slot]`
/// records the 1-based model that produced each slot.
struct PosteriorDraws {
  DrawKind kind = DrawKind::SmoothedStates;
  std::vector<std::vector<Matrix>> draws;
  std::vector<std::vector<int>> model_indices;

  Index size() const { return static_cast<Index>(draws.size()); }
  Index slots() const { return draws.empty() ? 0 : static_cast<Index>(draws.front().size()); }
  /// All R draws of one slot.
  std::vector<Matrix> slot(Index s) const;
};

FitResult parallel_forward_filter(const SpatioTemporalDataset& data, const ModelGrid& grid,
                                  const Prior& prior, const EngineOptions& options = {});

/// Smoothed trajectories Theta_{0:T}. Draw r uses the stream keyed by (seed, r).
PosteriorDraws weighted_backward_sample(const FitResult& fit, int draws, std::uint64_t seed);

struct FfbsResult {
  FitResult fit;
  PosteriorDraws draws;
};

FfbsResult ffbs(const SpatioTemporalDataset& data, const ModelGrid& grid, const Prior& prior,
                int draws, const EngineOptions& options, std::uint64_t seed);

/// Joint draws of [Theta_{T+k}; Y_{T+k}] for k = 1..K, given designs X_{T+k}.
PosteriorDraws forecast(const FitResult& fit, int horizon, const std::vector<Matrix>& future_designs,
                        int draws, std::uint64_t seed);

/// Joint draws of [Y~_t; Omega~_t] at new locations with design `new_design`.
PosteriorDraws spatial_predict(const FitResult& fit, int t, const LocationSet<double>& new_locations,
                               const Matrix& new_design, int draws, std::uint64_t seed);

/// Draws of Sigma from the stacked filtered posterior at time t.
PosteriorDraws sample_sigma(const FitResult& fit, int t, int draws, std::uint64_t seed);

}  // namespace dynbps

#endif  // DYNBPS_ENGINE_HPP
