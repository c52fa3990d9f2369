#include "dynbps/simulate.hpp"

#include <algorithm>
#include <cmath>

#include "dynbps/parallel.hpp"
#include "dynbps/rng.hpp"

namespace dynbps {

Matrix GeneratorSpec::default_sigma() {
  Matrix s(3, 3);
  s << 1.0, -0.3, 0.6, -0.3, 1.2, 0.4, 0.6, 0.4, 1.0;
  return s;
}

void GeneratorSpec::validate() const {
  require(n >= 1 && q >= 1 && T >= 1 && p >= 0, ErrorKind::InputError,
          "generator: dimensions must be positive");
  require(horizon >= 0, ErrorKind::InputError, "generator: horizon must be nonnegative");
  require(alpha > 0 && alpha < 1, ErrorKind::InvalidAlpha, "generator: alpha must lie in (0, 1)");
  require(phi > 0, ErrorKind::InvalidPhi, "generator: phi must be positive");
  if (sigma.size() > 0) {
    require(sigma.rows() == q && sigma.cols() == q, ErrorKind::DimensionMismatch,
            "generator: sigma must be q x q");
  } else {
    require(q == 3, ErrorKind::InputError, "generator: sigma is required unless q = 3");
  }
  if (layout == LocationLayout::Supplied)
    require(coords.rows() == n && coords.cols() == 2, ErrorKind::DimensionMismatch,
            "generator: supplied coordinates must be n x 2");
}

GeneratedData generate_dataset(const GeneratorSpec& spec) {
  spec.validate();
  auto rng = RandomStream::keyed(spec.seed, StreamKind::Generator, 0);
  const Index n = spec.n, p = spec.p, q = spec.q;
  const int total = spec.T + spec.horizon;

  Matrix xy = spec.coords;
  if (spec.layout == LocationLayout::UniformUnitSquare) {
    xy.resize(n, 2);
    for (Index i = 0; i < n; ++i) {
      xy(i, 0) = rng.uniform();
      xy(i, 1) = rng.uniform();
    }
  }
  auto locations = LocationSet<double>::from_coords(xy);
  locations.validate();

  const Matrix sigma = spec.sigma.size() > 0 ? spec.sigma : GeneratorSpec::default_sigma();
  const Matrix sigma_lower = chol_psd(sigma, 0.0).lower;
  const Prior prior = Prior::standard(locations, p, q, spec.prior);

  const auto corr = exp_correlation(pairwise_distances(locations, locations), spec.phi);
  const auto sys0 = build_spatiotemporal_system(Matrix(Matrix::Zero(n, p)), corr, spec.alpha,
                                                spec.coef_state_scale);
  const Matrix w_lower = chol_psd(sys0.W).lower;
  const Matrix v_lower = chol_psd(sys0.V).lower;

  GeneratedData out;
  out.truth.sigma = sigma;
  out.truth.theta.push_back(
      detail::draw_matrix_normal(prior.m0, chol_psd(prior.C0).lower, sigma_lower, rng));
  out.train.locations = locations;
  out.holdout.locations = locations;
  for (int t = 1; t <= total; ++t) {
    Matrix x(n, p);
    for (Index c = 0; c < p; ++c)
      for (Index i = 0; i < n; ++i) x(i, c) = rng.uniform();
    Matrix theta = detail::draw_matrix_normal(out.truth.theta.back(), w_lower, sigma_lower, rng);
    Matrix f(n, p + n);
    f << x, Matrix::Identity(n, n);
    Matrix y = detail::draw_matrix_normal(Matrix(f * theta), v_lower, sigma_lower, rng);
    out.truth.theta.push_back(std::move(theta));
    auto& target = t <= spec.T ? out.train : out.holdout;
    target.X.push_back(std::move(x));
    target.Y.push_back(std::move(y));
  }
  return out;
}

double empirical_quantile(std::vector<double>& sample, double prob) {
  require(!sample.empty(), ErrorKind::InputError, "empirical_quantile: empty sample");
  std::sort(sample.begin(), sample.end());
  const double h = prob * static_cast<double>(sample.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sample.size() - 1);
  return sample[lo] + (h - static_cast<double>(lo)) * (sample[hi] - sample[lo]);
}

EntryMetrics entry_metrics(const std::vector<Matrix>& draws, const Matrix& truth, double level) {
  require(!draws.empty(), ErrorKind::InputError, "metrics: no draws");
  require(level > 0 && level < 1, ErrorKind::InputError, "metrics: level must lie in (0, 1)");
  const Index rows = truth.rows(), cols = truth.cols();
  for (const auto& d : draws) require_same_shape(d, truth, "metrics: draw");
  const double R = static_cast<double>(draws.size());
  EntryMetrics m;
  m.mean = Matrix::Zero(rows, cols);
  m.mspe = Matrix::Zero(rows, cols);
  for (const auto& d : draws) {
    m.mean += d;
    m.mspe += (d - truth).cwiseAbs2();
  }
  m.mean /= R;
  m.mspe /= R;
  m.abs_bias = (m.mean - truth).cwiseAbs();
  m.variance = Matrix::Zero(rows, cols);
  for (const auto& d : draws) m.variance += (d - m.mean).cwiseAbs2();
  m.variance /= R;
  m.lower.resize(rows, cols);
  m.upper.resize(rows, cols);
  m.covered.resize(rows, cols);
  m.zero_width.resize(rows, cols);
  std::vector<double> sample(draws.size());
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) {
      for (std::size_t k = 0; k < draws.size(); ++k) sample[k] = draws[k](r, c);
      m.lower(r, c) = empirical_quantile(sample, 0.5 * (1 - level));
      m.upper(r, c) = empirical_quantile(sample, 0.5 * (1 + level));
      m.covered(r, c) = m.lower(r, c) <= truth(r, c) && truth(r, c) <= m.upper(r, c);
      m.zero_width(r, c) = m.upper(r, c) == m.lower(r, c);
    }
  m.width = m.upper - m.lower;
  return m;
}

namespace {

struct BlockCount {
  double hits = 0;
  double total = 0;
};

void count_block(BlockCount& acc, const EntryMetrics& e, Index row0, Index rows) {
  if (rows <= 0) return;
  auto block = e.covered.middleRows(row0, rows);
  acc.hits += static_cast<double>(block.count());
  acc.total += static_cast<double>(block.size());
}

}  // namespace

MetricPanel metrics(const PosteriorDraws& draws, const std::vector<Matrix>& truth, Index p,
                    double level) {
  const Index slots = draws.slots();
  require(draws.size() >= 1, ErrorKind::InputError, "metrics: no draws");
  require(static_cast<Index>(truth.size()) == slots, ErrorKind::DimensionMismatch,
          "metrics: need one truth matrix per slot");
  MetricPanel panel;
  const Index cols = truth.front().cols();
  panel.abs_bias.resize(slots, cols);
  panel.mspe.resize(slots, cols);
  panel.interval_width.resize(slots, cols);
  panel.pred_variance.resize(slots, cols);
  const bool with_b = draws.kind == DrawKind::SmoothedStates || draws.kind == DrawKind::Forecast;
  if (with_b) panel.frobenius.resize(slots);
  std::map<std::string, BlockCount> blocks;

  for (Index s = 0; s < slots; ++s) {
    const Matrix& tr = truth[static_cast<std::size_t>(s)];
    const auto e = entry_metrics(draws.slot(s), tr, level);
    const Index rows = tr.rows();
    Index t0 = 0, tn = rows;
    switch (draws.kind) {
      case DrawKind::SmoothedStates:
        require(rows >= p, ErrorKind::DimensionMismatch, "metrics: state has fewer rows than p");
        count_block(blocks["B"], e, 0, p);
        count_block(blocks["Omega"], e, p, rows - p);
        break;
      case DrawKind::Forecast: {
        const Index n = (rows - p) / 2;
        require(p + 2 * n == rows, ErrorKind::DimensionMismatch, "metrics: forecast block shape");
        count_block(blocks["B"], e, 0, p);
        count_block(blocks["Omega"], e, p, n);
        count_block(blocks["Y"], e, p + n, n);
        t0 = p + n;
        tn = n;
        break;
      }
      case DrawKind::Interpolation: {
        const Index m = rows / 2;
        require(2 * m == rows, ErrorKind::DimensionMismatch, "metrics: interpolation block shape");
        count_block(blocks["Y"], e, 0, m);
        count_block(blocks["Omega"], e, m, m);
        tn = m;
        break;
      }
      case DrawKind::Sigma:
        count_block(blocks["Sigma"], e, 0, rows);
        break;
    }
    panel.abs_bias.row(s) = e.abs_bias.middleRows(t0, tn).colwise().mean();
    panel.mspe.row(s) = e.mspe.middleRows(t0, tn).colwise().mean();
    panel.interval_width.row(s) = e.width.middleRows(t0, tn).colwise().mean();
    panel.pred_variance.row(s) = e.variance.middleRows(t0, tn).colwise().mean();
    panel.zero_width_entries += static_cast<int>(e.zero_width.count());
    if (with_b) panel.frobenius(s) = (e.mean.topRows(p) - tr.topRows(p)).norm();
  }
  for (const auto& [name, c] : blocks)
    if (c.total > 0) panel.coverage[name] = c.hits / c.total;
  return panel;
}

double ExperimentReport::mean_coverage(const std::string& panel, const std::string& block) const {
  double sum = 0;
  int count = 0;
  for (const auto& r : replicates) {
    if (!r.ok) continue;
    const MetricPanel& mp = panel == "states" ? r.states : panel == "sigma" ? r.sigma : r.forecast;
    auto it = mp.coverage.find(block);
    if (it == mp.coverage.end()) continue;
    sum += it->second;
    ++count;
  }
  return count ? sum / count : std::nan("");
}

double ExperimentReport::mean_forecast(const std::string& field) const {
  double sum = 0;
  int count = 0;
  for (const auto& r : replicates) {
    if (!r.ok) continue;
    const Matrix& m = field == "abs_bias"         ? r.forecast.abs_bias
                      : field == "mspe"           ? r.forecast.mspe
                      : field == "interval_width" ? r.forecast.interval_width
                                                  : r.forecast.pred_variance;
    sum += m.mean();
    ++count;
  }
  return count ? sum / count : std::nan("");
}

int ExperimentReport::top_k_count(int k) const {
  int c = 0;
  for (const auto& r : replicates)
    if (r.ok && r.true_model_rank >= 1 && r.true_model_rank <= k) ++c;
  return c;
}

ModelGrid closed_grid() { return ModelGrid::cross({0.7, 0.8, 0.9}, {2.0, 4.0, 6.0}); }

namespace {

std::uint64_t replicate_seed(std::uint64_t seed, int rep) {
  return RandomStream::keyed(seed, StreamKind::Replicate, static_cast<std::uint64_t>(rep)).engine()();
}

ReplicateOutcome run_replicate(GeneratorSpec spec, const ModelGrid& grid, const ExperimentOptions& opt,
                               std::uint64_t seed) {
  ReplicateOutcome out;
  out.seed = seed;
  out.grid = grid;
  try {
    spec.seed = seed;
    spec.horizon = std::max(spec.horizon, 1);
    const auto data = generate_dataset(spec);
    const Prior prior = Prior::standard(data.train.locations, spec.p, spec.q, spec.prior);
    EngineOptions engine = opt.engine;
    engine.coef_state_scale = spec.coef_state_scale;
    const auto result = ffbs(data.train, grid, prior, opt.draws, engine, seed);
    const FitResult& fit = result.fit;
    const int T = fit.T;

    out.final_weights = fit.weights_at(T);
    out.estimate = hyperparam_estimate(fit.weights.global.row(T).transpose(), grid.alphas(), grid.phis());
    out.true_model = grid.find(spec.alpha, spec.phi);
    if (out.true_model >= 0) {
      const double wt = out.final_weights(out.true_model);
      out.true_model_rank = 1 + static_cast<int>((out.final_weights.array() > wt).count());
    }

    std::vector<Matrix> theta_truth(data.truth.theta.begin(), data.truth.theta.begin() + T + 1);
    out.states = metrics(result.draws, theta_truth, spec.p);
    out.sigma = metrics(sample_sigma(fit, T, opt.draws, seed), {data.truth.sigma}, spec.p);

    const auto fc = forecast(fit, 1, {data.holdout.X.front()}, opt.draws, seed);
    const Matrix& theta_next = data.truth.theta[static_cast<std::size_t>(T + 1)];
    Matrix joint(theta_next.rows() + fit.n(), fit.q);
    joint << theta_next, data.holdout.Y.front();
    out.forecast = metrics(fc, {joint}, spec.p);
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

ExperimentReport collect(std::vector<ReplicateOutcome> reps) {
  ExperimentReport report;
  report.replicates = std::move(reps);
  for (const auto& r : report.replicates)
    if (!r.ok) ++report.failures;
  return report;
}

}  // namespace

ExperimentReport run_mclosed(const GeneratorSpec& spec, const ExperimentOptions& options,
                             const ModelGrid& grid) {
  require(options.replicates >= 1, ErrorKind::InputError, "experiment: replicates must be >= 1");
  grid.validate();
  std::vector<ReplicateOutcome> reps(static_cast<std::size_t>(options.replicates));
  parallel_for(options.replicates, options.replicate_threads, [&](Index r) {
    reps[static_cast<std::size_t>(r)] =
        run_replicate(spec, grid, options, replicate_seed(options.seed, static_cast<int>(r)));
  });
  return collect(std::move(reps));
}

ExperimentReport run_mopen(const GeneratorSpec& spec, const ExperimentOptions& options,
                           double alpha_lo, double alpha_hi, double phi_lo, double phi_hi) {
  require(options.replicates >= 1, ErrorKind::InputError, "experiment: replicates must be >= 1");
  require(alpha_lo > 0 && alpha_hi <= 1 && alpha_lo < alpha_hi, ErrorKind::InvalidAlpha,
          "experiment: alpha range must lie in (0, 1)");
  require(phi_lo > 0 && phi_lo < phi_hi, ErrorKind::InvalidPhi, "experiment: bad phi range");
  std::vector<ReplicateOutcome> reps(static_cast<std::size_t>(options.replicates));
  parallel_for(options.replicates, options.replicate_threads, [&](Index r) {
    auto rng = RandomStream::keyed(options.seed, StreamKind::Grid, static_cast<std::uint64_t>(r));
    std::vector<double> alphas, phis;
    for (int k = 0; k < 3; ++k) {
      double a = rng.uniform(alpha_lo, alpha_hi);
      while (!(a > 0 && a < 1)) a = rng.uniform(alpha_lo, alpha_hi);
      alphas.push_back(a);
    }
    for (int k = 0; k < 3; ++k) phis.push_back(rng.uniform(phi_lo, phi_hi));
    reps[static_cast<std::size_t>(r)] = run_replicate(spec, ModelGrid::cross(alphas, phis), options,
                                                      replicate_seed(options.seed, static_cast<int>(r)));
  });
  return collect(std::move(reps));
}

WeightsDynamics weights_dynamics_experiment(const GeneratorSpec& spec, const EngineOptions& engine,
                                            const ModelGrid& grid) {
  const auto data = generate_dataset(spec);
  const Prior prior = Prior::standard(data.train.locations, spec.p, spec.q, spec.prior);
  EngineOptions opts = engine;
  opts.coef_state_scale = spec.coef_state_scale;
  const FitResult fit = parallel_forward_filter(data.train, grid, prior, opts);
  WeightsDynamics out;
  out.trace = fit.weights;
  const int T = fit.T;
  out.estimates.resize(T + 1, 2);
  for (int t = 0; t <= T; ++t) {
    auto est = hyperparam_estimate(fit.weights.global.row(t).transpose(), grid.alphas(), grid.phis());
    out.estimates(t, 0) = est.alpha;
    out.estimates(t, 1) = est.phi;
  }
  // Times 0 and 1 carry the initial weights, so the comparison starts at 2.
  const int first = 2, count = std::max(0, T - 1);
  const int window = std::max(1, static_cast<int>(std::lround(0.2 * count)));
  auto variability = [&](int start) {
    const Matrix block = fit.weights.global.middleRows(start, window);
    const Eigen::RowVectorXd mean = block.colwise().mean();
    return (block.rowwise() - mean).cwiseAbs2().colwise().mean().sum();
  };
  if (count >= 2) {
    out.early_variability = variability(first);
    out.late_variability = variability(T + 1 - window);
    out.stabilized = out.late_variability < out.early_variability;
  }
  fit.weights.global.row(T).maxCoeff(&out.global_argmax);
  fit.weights.consensus.row(T).maxCoeff(&out.consensus_argmax);
  return out;
}

}  // namespace dynbps
