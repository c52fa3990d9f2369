#ifndef DYNBPS_SIMULATE_HPP
#define DYNBPS_SIMULATE_HPP

// Synthetic spatiotemporal data, evaluation metrics and the simulation
// experiments (closed grid, randomized open grid, weight dynamics).

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dynbps/engine.hpp"

namespace dynbps {

enum class LocationLayout { UniformUnitSquare, Supplied };

struct GeneratorSpec {
  Index n = 100;
  Index q = 3;
  int T = 20;
  Index p = 2;
  double alpha = 0.8;
  double phi = 4.0;
  Matrix sigma;  // q x q; empty means the default 3 x 3 matrix below
  std::uint64_t seed = 1;
  LocationLayout layout = LocationLayout::UniformUnitSquare;
  Matrix coords;   // n x 2 when layout is Supplied
  int horizon = 0; // extra held-out time points after T
  PriorSpec prior;
  double coef_state_scale = 1.0;

  /// [[1, -0.3, 0.6], [-0.3, 1.2, 0.4], [0.6, 0.4, 1]]
  static Matrix default_sigma();
  void validate() const;
};

struct TruthRecord {
  std::vector<Matrix> theta;  // [t], t = 0..T+horizon
  Matrix sigma;
};

struct GeneratedData {
  SpatioTemporalDataset train;    // t = 1..T
  SpatioTemporalDataset holdout;  // t = T+1..T+horizon (same locations)
  TruthRecord truth;
};

/// Draws locations, designs, states and outcomes from the spatiotemporal DLM
/// with Theta_0 from the standard prior. Bit-identical for identical specs.
GeneratedData generate_dataset(const GeneratorSpec& spec);

/// Summary of R draws of one matrix against its true value.
struct EntryMetrics {
  Matrix mean;      // posterior mean (point estimate)
  Matrix abs_bias;  // |mean - truth|
  Matrix mspe;      // mean over draws of (draw - truth)^2
  Matrix lower;
  Matrix upper;
  Matrix width;
  Matrix variance;  // population variance over draws
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> covered;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> zero_width;
};

/// Type-7 empirical quantile of a sample (sorted in place).
double empirical_quantile(std::vector<double>& sample, double prob);

EntryMetrics entry_metrics(const std::vector<Matrix>& draws, const Matrix& truth, double level = 0.95);

/// Per-slot, per-outcome summaries. Rows are slots (times or horizons),
/// columns outcomes; each cell averages over the rows of the target block.
struct MetricPanel {
  Matrix abs_bias;
  Matrix mspe;
  Matrix interval_width;
  Matrix pred_variance;
  std::map<std::string, double> coverage;  // per parameter block
  Vector frobenius;                        // ||B_hat_t - B_t||_F per slot (states only)
  int zero_width_entries = 0;
};

/// Scores draws against per-slot truth matrices of the same shape.
/// Smoothed states: target block is the whole state, coverage for "B" and
/// "Omega", Frobenius on B. Forecasts: target block is Y (rows p+n..), with
/// coverage for "B", "Omega" and "Y". Interpolation: target is Y~, coverage
/// for "Y" and "Omega". Sigma draws: coverage for "Sigma".
MetricPanel metrics(const PosteriorDraws& draws, const std::vector<Matrix>& truth, Index p,
                    double level = 0.95);

struct ReplicateOutcome {
  bool ok = false;
  std::string error;
  std::uint64_t seed = 0;
  ModelGrid grid;
  Index true_model = -1;  // 0-based, -1 when not in the grid
  int true_model_rank = 0;  // 1-based rank in final weights, 0 when not in the grid
  WeightVector final_weights;
  HyperparamEstimate estimate;
  MetricPanel states;
  MetricPanel forecast;
  MetricPanel sigma;
};

struct ExperimentReport {
  std::vector<ReplicateOutcome> replicates;
  int failures = 0;

  /// Mean over successful replicates of a coverage entry of one panel.
  double mean_coverage(const std::string& panel, const std::string& block) const;
  /// Mean over successful replicates and all cells of a forecast panel field.
  double mean_forecast(const std::string& field) const;
  int top_k_count(int k) const;
};

struct ExperimentOptions {
  int replicates = 10;
  int draws = 200;
  std::uint64_t seed = 1;
  EngineOptions engine;
  int replicate_threads = 0;
};

/// The closed grid alpha in {0.7, 0.8, 0.9} x phi in {2, 4, 6}.
ModelGrid closed_grid();

/// Each replicate: generate (with one held-out time), filter and smooth,
/// forecast one step, and score B/Omega, Sigma at T and the forecast.
ExperimentReport run_mclosed(const GeneratorSpec& spec, const ExperimentOptions& options,
                             const ModelGrid& grid = closed_grid());

/// As run_mclosed with a per-replicate grid of 3 alpha draws from U(0.5, 1)
/// crossed with 3 phi draws from U[1, 50].
ExperimentReport run_mopen(const GeneratorSpec& spec, const ExperimentOptions& options,
                           double alpha_lo = 0.5, double alpha_hi = 1.0, double phi_lo = 1.0,
                           double phi_hi = 50.0);

struct WeightsDynamics {
  WeightTrace trace;
  Matrix estimates;  // (T+1) x 2 columns alpha_hat, phi_hat from global weights
  double early_variability = 0;
  double late_variability = 0;
  bool stabilized = false;
  Index global_argmax = 0;
  Index consensus_argmax = 0;
};

/// Weight trajectories on a single generated dataset. Variability over a
/// window is the summed per-model variance of the global weights; the first
/// and last 20% of times 2..T are compared.
WeightsDynamics weights_dynamics_experiment(const GeneratorSpec& spec,
                                            const EngineOptions& engine = {},
                                            const ModelGrid& grid = closed_grid());

}  // namespace dynbps

#endif  // DYNBPS_SIMULATE_HPP
