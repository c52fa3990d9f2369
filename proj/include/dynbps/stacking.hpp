#ifndef DYNBPS_STACKING_HPP
#define DYNBPS_STACKING_HPP

// Leave-future-out stacking of one-step-ahead predictive densities.
//
// For a location i and time tau the weights maximize
//
//   (1 / (tau - 1)) sum_{t=1}^{tau-1} log sum_j w_j p(Y_{t+1,i} | D_t, M_j)
//
// over the probability simplex. Location-level weights are then pooled into
// a single vector either by averaging ("global") or by normalized argmax
// counts ("consensus").

#include <utility>
#include <vector>

#include "dynbps/common.hpp"

namespace dynbps {

/// A length-J probability vector.
using WeightVector = Vector;

struct SolverOptions {
  double tol = 1e-9;
  int max_iter = 50000;
};

/// One-step-ahead per-location log densities. Step k (0-based) holds the J x n
/// matrix of log p(Y_{k+2,i} | D_{k+1}, M_j).
class LogDensityHistory {
 public:
  LogDensityHistory() = default;
  LogDensityHistory(Index models, Index locations) : models_(models), locations_(locations) {}

  void append(Matrix step);

  Index models() const { return models_; }
  Index locations() const { return locations_; }
  Index steps() const { return static_cast<Index>(steps_.size()); }
  const Matrix& step(Index k) const { return steps_.at(static_cast<std::size_t>(k)); }
  const std::vector<Matrix>& all_steps() const { return steps_; }

  /// (tau - 1) x J matrix of log densities for location i used by the
  /// weights at time tau.
  Matrix location_window(Index i, int tau) const;

 private:
  Index models_ = 0;
  Index locations_ = 0;
  std::vector<Matrix> steps_;
};

/// Mean log score of the mixture `w` over the rows of `logdens`.
double stacking_objective(const Matrix& logdens, const Vector& w);

/// Maximizes the mean mixture log score over the simplex by log-barrier
/// Newton ascent from the barycenter. Stops when the KKT residual
/// max_j max(w_j |g_j - 1|, g_j - 1) drops to `tol`, where g is the gradient.
/// Bitwise-identical columns are merged and split their weight equally, so a
/// flat objective returns the barycenter.
WeightVector solve_simplex_weights(const Matrix& logdens, const SolverOptions& options = {});

/// KKT residual of `w` for the stacking problem; zero at the optimum.
double stacking_kkt_residual(const Matrix& logdens, const Vector& w);

/// n x J matrix whose rows are the per-location weights at time tau.
Matrix individual_weights(const LogDensityHistory& history, int tau,
                          const SolverOptions& options = {}, int threads = 1);

WeightVector aggregate_global(const Matrix& per_location);

struct ConsensusWeights {
  WeightVector weights;
  Eigen::VectorXi counts;
};

/// Normalized counts of each row's argmax, ties going to the smallest index.
ConsensusWeights aggregate_consensus(const Matrix& per_location);

struct HyperparamEstimate {
  double alpha = 0;
  double phi = 0;
};

HyperparamEstimate hyperparam_estimate(const WeightVector& global_weights,
                                       const Vector& alphas, const Vector& phis);

bool is_probability_vector(const Vector& w, double tol = 1e-8);

enum class Aggregation { Global, Consensus };

/// Weights for every time 0..T. Rows of `global`, `consensus` and each
/// `per_location` slice are probability vectors.
struct WeightTrace {
  std::vector<Matrix> per_location;  // [t] n x J
  Matrix global;                     // (T+1) x J
  Matrix consensus;                  // (T+1) x J
  Eigen::MatrixXi counts;            // (T+1) x J

  Index times() const { return global.rows(); }
  WeightVector aggregated(int t, Aggregation how) const {
    return how == Aggregation::Global ? WeightVector(global.row(t).transpose())
                                      : WeightVector(consensus.row(t).transpose());
  }
};

}  // namespace dynbps

#endif  // DYNBPS_STACKING_HPP
