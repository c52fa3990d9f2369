#include "dynbps/engine.hpp"

#include <cmath>
#include <set>
#include <string>
#include <utility>

#include "dynbps/parallel.hpp"
#include "dynbps/rng.hpp"

namespace dynbps {

ModelGrid ModelGrid::cross(const std::vector<double>& alphas, const std::vector<double>& phis) {
  ModelGrid grid;
  for (double a : alphas)
    for (double f : phis) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "alpha=%g,phi=%g", a, f);
      grid.models.push_back({a, f, buf});
    }
  return grid;
}

Vector ModelGrid::alphas() const {
  Vector out(size());
  for (Index j = 0; j < size(); ++j) out(j) = models[static_cast<std::size_t>(j)].alpha;
  return out;
}

Vector ModelGrid::phis() const {
  Vector out(size());
  for (Index j = 0; j < size(); ++j) out(j) = models[static_cast<std::size_t>(j)].phi;
  return out;
}

Index ModelGrid::find(double alpha, double phi) const {
  for (Index j = 0; j < size(); ++j) {
    const auto& m = models[static_cast<std::size_t>(j)];
    if (m.alpha == alpha && m.phi == phi) return j;
  }
  return -1;
}

void ModelGrid::validate() const {
  require(!models.empty(), ErrorKind::InputError, "model grid is empty");
  std::set<std::pair<double, double>> seen;
  for (const auto& m : models) {
    require(m.alpha > 0 && m.alpha < 1, ErrorKind::InvalidAlpha,
            "model grid: alpha must lie in (0, 1), got " + std::to_string(m.alpha));
    require(m.phi > 0 && std::isfinite(m.phi), ErrorKind::InvalidPhi,
            "model grid: phi must be positive, got " + std::to_string(m.phi));
    require(seen.insert({m.alpha, m.phi}).second, ErrorKind::InputError,
            "model grid: duplicated pair (" + std::to_string(m.alpha) + ", " +
                std::to_string(m.phi) + ")");
  }
}

void SpatioTemporalDataset::validate() const {
  locations.validate();
  require(!Y.empty(), ErrorKind::InputError, "dataset has no time points");
  require(X.size() == Y.size(), ErrorKind::DimensionMismatch,
          "dataset: design and outcome series differ in length");
  const Index n = locations.size(), q = Y.front().cols(), p = X.front().cols();
  require(q >= 1, ErrorKind::InputError, "dataset: need at least one outcome");
  for (std::size_t t = 0; t < Y.size(); ++t) {
    const std::string at = " at t=" + std::to_string(t + 1);
    require(Y[t].rows() == n && Y[t].cols() == q, ErrorKind::DimensionMismatch,
            "dataset: outcome has wrong shape" + at);
    require(X[t].rows() == n && X[t].cols() == p, ErrorKind::DimensionMismatch,
            "dataset: design has wrong shape" + at);
    require(Y[t].allFinite(), ErrorKind::InputError, "dataset: missing outcome values" + at);
    require(X[t].allFinite(), ErrorKind::InputError, "dataset: missing design values" + at);
  }
}

Prior Prior::standard(const LocationSet<double>& locations, Index p, Index q,
                      const PriorSpec& spec) {
  const Index n = locations.size();
  Prior prior;
  prior.m0 = Matrix::Zero(p + n, q);
  prior.C0 = Matrix::Zero(p + n, p + n);
  prior.C0.topLeftCorner(p, p).diagonal().setConstant(spec.coef_var);
  prior.C0.bottomRightCorner(n, n) =
      exp_correlation(pairwise_distances(locations, locations), spec.prior_phi).matrix;
  prior.nu0 = spec.nu0 ? *spec.nu0 : static_cast<double>(q + 1);
  prior.Psi0 = spec.psi_scale * Matrix::Identity(q, q);
  return prior;
}

SystemMatrices<double> FitResult::system(Index j, const Matrix& design) const {
  const auto& m = grid.models.at(static_cast<std::size_t>(j));
  auto corr = exp_correlation(pairwise_distances(locations, locations), m.phi);
  return build_spatiotemporal_system(design, corr, m.alpha, options.coef_state_scale);
}

Matrix FitResult::state_covariance(Index j) const {
  return system(j, Matrix::Zero(n(), p)).W;
}

std::vector<Matrix> PosteriorDraws::slot(Index s) const {
  std::vector<Matrix> out;
  out.reserve(draws.size());
  for (const auto& d : draws) out.push_back(d.at(static_cast<std::size_t>(s)));
  return out;
}

namespace {

WeightVector initial_weights(const EngineOptions& options, Index J) {
  if (!options.initial_weights) return Vector::Constant(J, 1.0 / static_cast<double>(J));
  const WeightVector& w = *options.initial_weights;
  require(w.size() == J, ErrorKind::DimensionMismatch,
          "initial weights must have one entry per model");
  require(is_probability_vector(w), ErrorKind::InputError,
          "initial weights must be a probability vector");
  return w;
}

std::vector<char> positive_mask(const WeightVector& w) {
  std::vector<char> out(static_cast<std::size_t>(w.size()));
  for (Index j = 0; j < w.size(); ++j) out[static_cast<std::size_t>(j)] = w(j) > 0.0;
  return out;
}

// Lower factor of the standard-form inverse-Wishart scale 2 Psi.
Matrix column_scale_lower(const FilterState<double>& st) {
  return chol_psd(to_standard(st.column()).scale).lower;
}

void check_draws(int draws) {
  require(draws >= 1, ErrorKind::InputError, "number of draws must be at least 1");
}

PosteriorDraws empty_draws(DrawKind kind, int draws, std::size_t slots) {
  PosteriorDraws out;
  out.kind = kind;
  out.draws.assign(static_cast<std::size_t>(draws), std::vector<Matrix>(slots));
  out.model_indices.assign(static_cast<std::size_t>(draws), std::vector<int>(slots, 0));
  return out;
}

}  // namespace

FitResult parallel_forward_filter(const SpatioTemporalDataset& data, const ModelGrid& grid,
                                  const Prior& prior, const EngineOptions& options) {
  data.validate();
  grid.validate();
  const Index n = data.n(), p = data.p(), q = data.q(), J = grid.size();
  const int T = data.T();
  require(prior.m0.rows() == p + n && prior.m0.cols() == q, ErrorKind::DimensionMismatch,
          "prior m0 must be (p+n) x q");

  FitResult fit;
  fit.grid = grid;
  fit.locations = data.locations;
  fit.prior = prior;
  fit.options = options;
  fit.p = p;
  fit.q = q;
  fit.T = T;
  fit.history = LogDensityHistory(J, n);

  const Matrix dist = pairwise_distances(data.locations, data.locations);
  std::vector<CorrelationBlock<double>> corr(static_cast<std::size_t>(J));
  for (Index j = 0; j < J; ++j)
    corr[static_cast<std::size_t>(j)] = exp_correlation(dist, grid.models[static_cast<std::size_t>(j)].phi);

  const auto start = initial_state<double>(prior.m0, prior.C0, prior.nu0, prior.Psi0);
  fit.states.assign(static_cast<std::size_t>(J), {});
  for (auto& flow : fit.states) {
    flow.reserve(static_cast<std::size_t>(T + 1));
    flow.push_back(start);
  }

  const WeightVector w0 = initial_weights(options, J);
  WeightTrace& trace = fit.weights;
  trace.per_location.reserve(static_cast<std::size_t>(T + 1));
  trace.global.resize(T + 1, J);
  trace.consensus.resize(T + 1, J);
  trace.counts.resize(T + 1, J);
  auto record = [&](int t, Matrix per_location, bool use_initial) {
    const auto cons = aggregate_consensus(per_location);
    trace.counts.row(t) = cons.counts.transpose();
    if (use_initial) {
      trace.global.row(t) = w0.transpose();
      trace.consensus.row(t) = w0.transpose();
    } else {
      trace.global.row(t) = aggregate_global(per_location).transpose();
      trace.consensus.row(t) = cons.weights.transpose();
    }
    trace.per_location.push_back(std::move(per_location));
  };
  const Matrix initial_rows = w0.transpose().replicate(n, 1);
  record(0, initial_rows, true);

  for (int t = 1; t <= T; ++t) {
    const Matrix& y = data.Y[static_cast<std::size_t>(t - 1)];
    const Matrix& x = data.X[static_cast<std::size_t>(t - 1)];
    parallel_for(J, options.threads, [&](Index j) {
      const auto& model = grid.models[static_cast<std::size_t>(j)];
      auto& flow = fit.states[static_cast<std::size_t>(j)];
      try {
        auto sys = build_spatiotemporal_system(x, corr[static_cast<std::size_t>(j)], model.alpha,
                                               options.coef_state_scale);
        flow.push_back(filter_step(flow.back(), y, sys, options.max_jitter));
      } catch (const Error& e) {
        rethrow_with_context(e, "model " + std::to_string(j + 1) + " (" + model.label + ")");
      }
    });

    if (t == 1) {
      record(t, initial_rows, true);
      continue;
    }
    Matrix step(J, n);
    for (Index j = 0; j < J; ++j) {
      const auto& flow = fit.states[static_cast<std::size_t>(j)];
      const auto& now = flow[static_cast<std::size_t>(t)];
      const auto& before = flow[static_cast<std::size_t>(t - 1)];
      step.row(j) = predictive_row_logdensities<double>(y, now.pred_q, now.pred_Q.diagonal(),
                                                        before.column())
                        .transpose();
    }
    fit.history.append(std::move(step));
    try {
      record(t, individual_weights(fit.history, t, options.solver, options.threads), false);
    } catch (const Error& e) {
      rethrow_with_context(e, "weights at t=" + std::to_string(t));
    }
  }
  return fit;
}

PosteriorDraws weighted_backward_sample(const FitResult& fit, int draws, std::uint64_t seed) {
  check_draws(draws);
  const Index J = fit.models();
  const int T = fit.T;
  const auto R = static_cast<std::size_t>(draws);
  const int threads = fit.options.threads;
  const double jitter = fit.options.max_jitter;
  PosteriorDraws out = empty_draws(DrawKind::SmoothedStates, draws, static_cast<std::size_t>(T + 1));

  const WeightVector w_T = fit.weights_at(T);
  const auto at_T = positive_mask(w_T);

  // Column law of every backward step uses the time-T posterior of the flow.
  std::vector<Matrix> col_lower(static_cast<std::size_t>(J));
  std::vector<Matrix> c_lower(static_cast<std::size_t>(J));
  std::vector<Matrix> w_state(static_cast<std::size_t>(J));
  parallel_for(J, threads, [&](Index j) {
    const auto& st = fit.states[static_cast<std::size_t>(j)][static_cast<std::size_t>(T)];
    col_lower[static_cast<std::size_t>(j)] = column_scale_lower(st);
    w_state[static_cast<std::size_t>(j)] = fit.state_covariance(j);
    if (at_T[static_cast<std::size_t>(j)]) c_lower[static_cast<std::size_t>(j)] = chol_psd(st.C, jitter).lower;
  });
  auto sigma_factor = [&](Index j, RandomStream& rng) {
    const auto& st = fit.states[static_cast<std::size_t>(j)][static_cast<std::size_t>(T)];
    return detail::draw_inverse_wishart_factor(2.0 * st.nu, col_lower[static_cast<std::size_t>(j)], rng);
  };

  std::vector<RandomStream> streams;
  streams.reserve(R);
  for (std::size_t r = 0; r < R; ++r)
    streams.push_back(RandomStream::keyed(seed, StreamKind::Backward, r));
  std::vector<Index> frozen(R, 0);

  parallel_for(draws, threads, [&](Index ri) {
    const auto r = static_cast<std::size_t>(ri);
    auto& rng = streams[r];
    const Index j = rng.categorical(w_T);
    frozen[r] = j;
    const auto& st = fit.states[static_cast<std::size_t>(j)][static_cast<std::size_t>(T)];
    const Matrix sig = sigma_factor(j, rng);
    out.draws[r][static_cast<std::size_t>(T)] =
        detail::draw_matrix_normal(st.m, c_lower[static_cast<std::size_t>(j)], sig, rng);
    out.model_indices[r][static_cast<std::size_t>(T)] = static_cast<int>(j + 1);
  });

  for (int t = T - 1; t >= 0; --t) {
    const auto ts = static_cast<std::size_t>(t);
    const WeightVector w_t = fit.weights_at(t);
    const auto needed = fit.options.freeze_model ? at_T : positive_mask(w_t);
    std::vector<Matrix> gain(static_cast<std::size_t>(J)), h_lower(static_cast<std::size_t>(J));
    parallel_for(J, threads, [&](Index j) {
      const auto js = static_cast<std::size_t>(j);
      if (!needed[js]) return;
      try {
        const auto& filtered = fit.states[js][ts];
        SystemMatrices<double> sys;
        const Index s = filtered.m.rows();
        sys.G = Matrix::Identity(s, s);
        sys.W = w_state[js];
        sys.F = Matrix::Zero(0, s);
        sys.V = Matrix::Zero(0, 0);
        auto g = smoother_gain(filtered, sys, jitter);
        gain[js] = std::move(g.gain);
        h_lower[js] = chol_psd(g.H, jitter).lower;
      } catch (const Error& e) {
        rethrow_with_context(e, "backward step t=" + std::to_string(t) + ", model " +
                                    std::to_string(j + 1));
      }
    });
    parallel_for(draws, threads, [&](Index ri) {
      const auto r = static_cast<std::size_t>(ri);
      auto& rng = streams[r];
      const Index j = fit.options.freeze_model ? frozen[r] : rng.categorical(w_t);
      const auto js = static_cast<std::size_t>(j);
      const auto& filtered = fit.states[js][ts];
      const Matrix& next = out.draws[r][ts + 1];
      const Matrix h = filtered.m + gain[js] * (next - filtered.m);
      const Matrix sig = sigma_factor(j, rng);
      out.draws[r][ts] = detail::draw_matrix_normal(h, h_lower[js], sig, rng);
      out.model_indices[r][ts] = static_cast<int>(j + 1);
    });
  }
  return out;
}

FfbsResult ffbs(const SpatioTemporalDataset& data, const ModelGrid& grid, const Prior& prior,
                int draws, const EngineOptions& options, std::uint64_t seed) {
  FfbsResult out;
  out.fit = parallel_forward_filter(data, grid, prior, options);
  out.draws = weighted_backward_sample(out.fit, draws, seed);
  return out;
}

PosteriorDraws forecast(const FitResult& fit, int horizon, const std::vector<Matrix>& future_designs,
                        int draws, std::uint64_t seed) {
  check_draws(draws);
  require(horizon >= 1, ErrorKind::InputError, "forecast horizon must be at least 1");
  require(static_cast<int>(future_designs.size()) >= horizon, ErrorKind::InputError,
          "forecast: need one design per horizon step");
  const Index n = fit.n(), J = fit.models();
  for (int k = 0; k < horizon; ++k) {
    const auto& x = future_designs[static_cast<std::size_t>(k)];
    require(x.rows() == n && x.cols() == fit.p, ErrorKind::DimensionMismatch,
            "forecast: design for k=" + std::to_string(k + 1) + " must be n x p");
    require(x.allFinite(), ErrorKind::InputError, "forecast: design has missing values");
  }
  const int T = fit.T;
  const double jitter = fit.options.max_jitter;
  const bool conditional = fit.options.forecast_mode == ForecastMode::Conditional;
  const auto K = static_cast<std::size_t>(horizon);
  const WeightVector w_T = fit.weights_at(T);
  const auto needed = positive_mask(w_T);

  // Per model: F and V factor per k, state factors (k = 1 and the W step for
  // the conditional mode, R_T(k) for every k in the marginal mode).
  struct ModelCache {
    std::vector<Matrix> F, v_lower, state_lower, state_mean;
    Matrix col_lower;
  };
  std::vector<ModelCache> cache(static_cast<std::size_t>(J));
  parallel_for(J, fit.options.threads, [&](Index j) {
    const auto js = static_cast<std::size_t>(j);
    if (!needed[js]) return;
    try {
      const auto& st = fit.states[js][static_cast<std::size_t>(T)];
      auto& c = cache[js];
      c.col_lower = column_scale_lower(st);
      Matrix a = st.m, r = st.C;
      Matrix w_lower;
      for (std::size_t k = 0; k < K; ++k) {
        auto sys = fit.system(j, future_designs[k]);
        c.F.push_back(sys.F);
        c.v_lower.push_back(chol_psd(sys.V, jitter).lower);
        if (conditional && k > 0) {
          if (w_lower.size() == 0) w_lower = chol_psd(symmetrized(sys.W), jitter).lower;
          c.state_lower.push_back(w_lower);
          c.state_mean.emplace_back();
          continue;
        }
        auto step = forecast_advance<double>(a, r, sys);
        c.state_lower.push_back(chol_psd(step.R, jitter).lower);
        c.state_mean.push_back(step.A);
        a = std::move(step.A);
        r = std::move(step.R);
      }
    } catch (const Error& e) {
      rethrow_with_context(e, "forecast, model " + std::to_string(j + 1));
    }
  });

  PosteriorDraws out = empty_draws(DrawKind::Forecast, draws, K);
  parallel_for(draws, fit.options.threads, [&](Index ri) {
    const auto r = static_cast<std::size_t>(ri);
    auto rng = RandomStream::keyed(seed, StreamKind::Forecast, r);
    const Index j = rng.categorical(w_T);
    const auto js = static_cast<std::size_t>(j);
    const auto& st = fit.states[js][static_cast<std::size_t>(T)];
    const auto& c = cache[js];
    Matrix theta;
    for (std::size_t k = 0; k < K; ++k) {
      const Matrix sig = detail::draw_inverse_wishart_factor(2.0 * st.nu, c.col_lower, rng);
      const Matrix& mean = (conditional && k > 0) ? theta : c.state_mean[k];
      theta = detail::draw_matrix_normal(mean, c.state_lower[k], sig, rng);
      const Matrix y = detail::draw_matrix_normal(Matrix(c.F[k] * theta), c.v_lower[k], sig, rng);
      Matrix joint(theta.rows() + y.rows(), theta.cols());
      joint << theta, y;
      out.draws[r][k] = std::move(joint);
      out.model_indices[r][k] = static_cast<int>(j + 1);
    }
  });
  return out;
}

PosteriorDraws spatial_predict(const FitResult& fit, int t, const LocationSet<double>& new_locations,
                               const Matrix& new_design, int draws, std::uint64_t seed) {
  check_draws(draws);
  require(t >= 1 && t <= fit.T, ErrorKind::InputError,
          "spatial_predict: time " + std::to_string(t) + " outside 1.." + std::to_string(fit.T));
  new_locations.validate();
  const Index m = new_locations.size(), n = fit.n(), p = fit.p, J = fit.models();
  require(new_design.rows() == m && new_design.cols() == p, ErrorKind::DimensionMismatch,
          "spatial_predict: design must be m x p");
  require(new_design.allFinite(), ErrorKind::InputError, "spatial_predict: design has missing values");
  const double jitter = fit.options.max_jitter;
  const WeightVector w_t = fit.weights_at(t);
  const auto needed = positive_mask(w_t);

  const Matrix d_ss = pairwise_distances(fit.locations, fit.locations);
  const Matrix d_us = pairwise_distances(new_locations, fit.locations);
  const Matrix d_uu = pairwise_distances(new_locations, new_locations);
  const auto coincident = coincident_sites(new_locations, fit.locations);

  struct ModelCache {
    Matrix mean, row_lower, col_lower;
  };
  std::vector<ModelCache> cache(static_cast<std::size_t>(J));
  parallel_for(J, fit.options.threads, [&](Index j) {
    const auto js = static_cast<std::size_t>(j);
    if (!needed[js]) return;
    try {
      const auto& model = fit.grid.models[js];
      const auto& st = fit.states[js][static_cast<std::size_t>(t)];
      auto schur = schur_predictive(exp_correlation(d_ss, model.phi, BlockKind::SS),
                                    exp_correlation(d_us, model.phi, BlockKind::US),
                                    exp_correlation(d_uu, model.phi, BlockKind::UU), coincident);
      Matrix chi = Matrix::Zero(2 * m, p + n);
      chi.topLeftCorner(m, p) = new_design;
      chi.topRightCorner(m, n) = schur.m_tilde;
      chi.bottomRightCorner(m, n) = schur.m_tilde;
      Matrix noise(2 * m, 2 * m);
      const Matrix& wt = schur.w_tilde;
      noise << wt + ((1.0 - model.alpha) / model.alpha) * Matrix::Identity(m, m), wt, wt, wt;
      auto& c = cache[js];
      c.mean = chi * st.m;
      c.row_lower = chol_psd(symmetrized(chi * st.C * chi.transpose() + noise), jitter).lower;
      c.col_lower = column_scale_lower(st);
    } catch (const Error& e) {
      rethrow_with_context(e, "spatial prediction t=" + std::to_string(t) + ", model " +
                                  std::to_string(j + 1));
    }
  });

  PosteriorDraws out = empty_draws(DrawKind::Interpolation, draws, 1);
  parallel_for(draws, fit.options.threads, [&](Index ri) {
    const auto r = static_cast<std::size_t>(ri);
    auto rng = RandomStream::keyed(seed, StreamKind::Interpolation, r);
    const Index j = rng.categorical(w_t);
    const auto js = static_cast<std::size_t>(j);
    const auto& st = fit.states[js][static_cast<std::size_t>(t)];
    const auto& c = cache[js];
    const Matrix sig = detail::draw_inverse_wishart_factor(2.0 * st.nu, c.col_lower, rng);
    out.draws[r][0] = detail::draw_matrix_normal(c.mean, c.row_lower, sig, rng);
    out.model_indices[r][0] = static_cast<int>(j + 1);
  });
  return out;
}

PosteriorDraws sample_sigma(const FitResult& fit, int t, int draws, std::uint64_t seed) {
  check_draws(draws);
  require(t >= 0 && t <= fit.T, ErrorKind::InputError,
          "sample_sigma: time " + std::to_string(t) + " outside 0.." + std::to_string(fit.T));
  const Index J = fit.models();
  const WeightVector w_t = fit.weights_at(t);
  const auto needed = positive_mask(w_t);
  std::vector<Matrix> col_lower(static_cast<std::size_t>(J));
  for (Index j = 0; j < J; ++j)
    if (needed[static_cast<std::size_t>(j)])
      col_lower[static_cast<std::size_t>(j)] =
          column_scale_lower(fit.states[static_cast<std::size_t>(j)][static_cast<std::size_t>(t)]);

  PosteriorDraws out = empty_draws(DrawKind::Sigma, draws, 1);
  parallel_for(draws, fit.options.threads, [&](Index ri) {
    const auto r = static_cast<std::size_t>(ri);
    auto rng = RandomStream::keyed(seed, StreamKind::Sigma, r);
    const Index j = rng.categorical(w_t);
    const auto js = static_cast<std::size_t>(j);
    const auto& st = fit.states[js][static_cast<std::size_t>(t)];
    const Matrix f = detail::draw_inverse_wishart_factor(2.0 * st.nu, col_lower[js], rng);
    out.draws[r][0] = f * f.transpose();
    out.model_indices[r][0] = static_cast<int>(j + 1);
  });
  return out;
}

}  // namespace dynbps
