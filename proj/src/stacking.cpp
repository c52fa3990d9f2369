#include "dynbps/stacking.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dynbps/parallel.hpp"

namespace dynbps {

void LogDensityHistory::append(Matrix step) {
  require(step.rows() == models_ && step.cols() == locations_, ErrorKind::DimensionMismatch,
          "LogDensityHistory: step must be J x n");
  steps_.push_back(std::move(step));
}

Matrix LogDensityHistory::location_window(Index i, int tau) const {
  require(tau >= 2 && tau - 1 <= steps(), ErrorKind::InputError,
          "LogDensityHistory: tau=" + std::to_string(tau) + " outside the recorded history");
  require(i >= 0 && i < locations_, ErrorKind::InputError, "LogDensityHistory: bad location");
  Matrix out(tau - 1, models_);
  for (int k = 0; k < tau - 1; ++k) out.row(k) = steps_[static_cast<std::size_t>(k)].col(i).transpose();
  return out;
}

namespace {

void check_logdens(const Matrix& logdens) {
  require(logdens.rows() >= 1 && logdens.cols() >= 1, ErrorKind::InputError,
          "stacking: need at least one time point and one model");
  for (Index t = 0; t < logdens.rows(); ++t)
    for (Index j = 0; j < logdens.cols(); ++j)
      require(std::isfinite(logdens(t, j)), ErrorKind::InputError,
              "stacking: non-finite log density at row " + std::to_string(t) + ", model " +
                  std::to_string(j));
}

// Densities rescaled per row by exp(-max_j logdens_tj).
Matrix shifted_densities(const Matrix& logdens) {
  Matrix p(logdens.rows(), logdens.cols());
  for (Index t = 0; t < logdens.rows(); ++t) {
    const double top = logdens.row(t).maxCoeff();
    p.row(t) = (logdens.row(t).array() - top).exp();
  }
  return p;
}

Vector gradient(const Matrix& p, const Vector& w) {
  const Vector mix = p * w;
  return (p.array().colwise() / mix.array()).colwise().mean().transpose();
}

double kkt_residual(const Vector& w, const Vector& g) {
  double res = 0.0;
  for (Index j = 0; j < w.size(); ++j) {
    res = std::max(res, w(j) * std::abs(g(j) - 1.0));
    res = std::max(res, g(j) - 1.0);
  }
  return res;
}

}  // namespace

double stacking_objective(const Matrix& logdens, const Vector& w) {
  check_logdens(logdens);
  require(w.size() == logdens.cols(), ErrorKind::DimensionMismatch,
          "stacking_objective: weight length mismatch");
  double total = 0.0;
  for (Index t = 0; t < logdens.rows(); ++t) {
    const double top = logdens.row(t).maxCoeff();
    const double mix = (logdens.row(t).array() - top).exp().matrix().dot(w);
    total += top + std::log(mix);
  }
  return total / static_cast<double>(logdens.rows());
}

double stacking_kkt_residual(const Matrix& logdens, const Vector& w) {
  check_logdens(logdens);
  const Matrix p = shifted_densities(logdens);
  return kkt_residual(w, gradient(p, w));
}

namespace {

// Log-barrier Newton ascent. For barrier weight mu the iterate maximizes
//   mean_t log(p_t' w) + mu sum_j log w_j   over sum_j w_j = 1,
// where w_j (g_j - 1) = J mu w_j - mu, so the KKT residual is O(J mu).
// mu shrinks tenfold until the residual reaches `tol`.
Vector barrier_simplex(const Matrix& p, const SolverOptions& options) {
  const Index J = p.cols();
  const double rows = static_cast<double>(p.rows());
  Vector w = Vector::Constant(J, 1.0 / static_cast<double>(J));
  double mu = 0.1;
  double residual = 0.0;
  int iter = 0;
  auto barrier = [&](const Vector& v) {
    return (p * v).array().log().sum() / rows + mu * v.array().log().sum();
  };
  while (iter < options.max_iter) {
    const Vector mix = p * w;
    const Vector g = (p.array().colwise() / mix.array()).colwise().sum().transpose() / rows;
    residual = kkt_residual(w, g);
    if (residual <= options.tol) return w;
    // Newton iterations for the current mu.
    for (int inner = 0; inner < 100 && iter < options.max_iter; ++inner, ++iter) {
      const Vector m = p * w;
      const Matrix scaled = p.array().colwise() / m.array();
      const Vector grad = scaled.colwise().sum().transpose() / rows + mu * w.cwiseInverse();
      Matrix a = scaled.transpose() * scaled / rows;
      a.diagonal() += mu * w.cwiseInverse().cwiseAbs2();
      Eigen::LDLT<Matrix> ldlt(a);
      const Vector ag = ldlt.solve(grad);
      const Vector a1 = ldlt.solve(Vector::Ones(J));
      Vector dir = ag - (ag.sum() / a1.sum()) * a1;
      dir.array() -= dir.mean();  // keep the iterate on the simplex exactly
      const double decrement = grad.dot(dir);
      if (!(decrement > 1e-24)) break;
      double step = 1.0;
      for (Index j = 0; j < J; ++j)
        if (dir(j) < 0) step = std::min(step, -0.99 * w(j) / dir(j));
      const double f0 = barrier(w);
      Vector next = w;
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls) {
        next = w + step * dir;
        if ((next.array() > 0).all()) {
          const double f1 = barrier(next);
          if (std::isfinite(f1) && f1 >= f0 + 1e-4 * step * decrement) {
            accepted = true;
            break;
          }
        }
        step *= 0.5;
      }
      if (!accepted) break;
      w = next / next.sum();
      if (decrement < 1e-18) break;
    }
    if (mu < 1e-300) break;
    mu *= 0.1;
    ++iter;
  }
  throw NoConvergenceError("stacking solver did not converge in " + std::to_string(options.max_iter) +
                               " iterations (residual " + std::to_string(residual) + ")",
                           w, residual);
}

}  // namespace

WeightVector solve_simplex_weights(const Matrix& logdens, const SolverOptions& options) {
  check_logdens(logdens);
  const Index J = logdens.cols();
  if (J == 1) return Vector::Ones(1);
  // Bitwise-identical columns are merged and share their weight equally.
  std::vector<Index> group(static_cast<std::size_t>(J), -1);
  std::vector<Index> reps;
  for (Index j = 0; j < J; ++j) {
    for (std::size_t r = 0; r < reps.size(); ++r)
      if (logdens.col(j) == logdens.col(reps[r])) {
        group[static_cast<std::size_t>(j)] = static_cast<Index>(r);
        break;
      }
    if (group[static_cast<std::size_t>(j)] < 0) {
      group[static_cast<std::size_t>(j)] = static_cast<Index>(reps.size());
      reps.push_back(j);
    }
  }
  const auto U = static_cast<Index>(reps.size());
  Vector unique_w = Vector::Ones(1);
  if (U > 1) {
    Matrix reduced(logdens.rows(), U);
    for (Index u = 0; u < U; ++u) reduced.col(u) = logdens.col(reps[static_cast<std::size_t>(u)]);
    unique_w = barrier_simplex(shifted_densities(reduced), options);
  }
  Eigen::VectorXi sizes = Eigen::VectorXi::Zero(U);
  for (Index j = 0; j < J; ++j) ++sizes(group[static_cast<std::size_t>(j)]);
  Vector w(J);
  for (Index j = 0; j < J; ++j) {
    const Index u = group[static_cast<std::size_t>(j)];
    w(j) = unique_w(u) / static_cast<double>(sizes(u));
  }
  return w;
}

Matrix individual_weights(const LogDensityHistory& history, int tau, const SolverOptions& options,
                          int threads) {
  require(tau >= 2 && tau - 1 <= history.steps(), ErrorKind::InputError,
          "individual_weights: tau=" + std::to_string(tau) + " needs tau-1 recorded steps");
  const Index n = history.locations();
  Matrix out(n, history.models());
  parallel_for(n, threads, [&](Index i) {
    try {
      out.row(i) = solve_simplex_weights(history.location_window(i, tau), options).transpose();
    } catch (const Error& e) {
      rethrow_with_context(e, "location " + std::to_string(i));
    }
  });
  return out;
}

WeightVector aggregate_global(const Matrix& per_location) {
  require(per_location.rows() >= 1, ErrorKind::InputError, "aggregate_global: no rows");
  return per_location.colwise().mean().transpose();
}

ConsensusWeights aggregate_consensus(const Matrix& per_location) {
  require(per_location.rows() >= 1, ErrorKind::InputError, "aggregate_consensus: no rows");
  const Index n = per_location.rows(), J = per_location.cols();
  ConsensusWeights out;
  out.counts = Eigen::VectorXi::Zero(J);
  for (Index i = 0; i < n; ++i) {
    Index best = 0;
    for (Index j = 1; j < J; ++j)
      if (per_location(i, j) > per_location(i, best)) best = j;
    ++out.counts(best);
  }
  out.weights = out.counts.cast<double>() / static_cast<double>(n);
  return out;
}

HyperparamEstimate hyperparam_estimate(const WeightVector& global_weights, const Vector& alphas,
                                       const Vector& phis) {
  require(global_weights.size() == alphas.size() && alphas.size() == phis.size(),
          ErrorKind::DimensionMismatch, "hyperparam_estimate: length mismatch");
  return {global_weights.dot(alphas), global_weights.dot(phis)};
}

bool is_probability_vector(const Vector& w, double tol) {
  if (w.size() == 0) return false;
  if ((w.array() < 0.0).any() || (w.array() > 1.0).any()) return false;
  return std::abs(w.sum() - 1.0) <= tol;
}

}  // namespace dynbps
