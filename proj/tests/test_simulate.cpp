#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "dynbps/simulate.hpp"

using namespace dynbps;

namespace {

GeneratorSpec tiny_spec(std::uint64_t seed) {
  GeneratorSpec spec;
  spec.n = 20;
  spec.T = 10;
  spec.seed = seed;
  return spec;
}

Matrix observation_residual(const GeneratedData& g, int t) {
  const auto& x = g.train.X[static_cast<std::size_t>(t - 1)];
  Matrix f(x.rows(), x.cols() + x.rows());
  f << x, Matrix::Identity(x.rows(), x.rows());
  return g.train.Y[static_cast<std::size_t>(t - 1)] - f * g.truth.theta[static_cast<std::size_t>(t)];
}

PosteriorDraws wrap(std::vector<Matrix> draws, DrawKind kind) {
  PosteriorDraws out;
  out.kind = kind;
  for (auto& d : draws) {
    out.draws.push_back({std::move(d)});
    out.model_indices.push_back({1});
  }
  return out;
}

}  // namespace

TEST(Generator, ReproducibleFromSeed) {
  auto a = generate_dataset(tiny_spec(3));
  auto b = generate_dataset(tiny_spec(3));
  auto c = generate_dataset(tiny_spec(4));
  EXPECT_EQ(a.train.locations.coords, b.train.locations.coords);
  EXPECT_EQ(a.train.Y, b.train.Y);
  EXPECT_EQ(a.train.X, b.train.X);
  EXPECT_EQ(a.truth.theta, b.truth.theta);
  EXPECT_NE(a.train.Y, c.train.Y);
}

TEST(Generator, DefaultSpecShapes) {
  GeneratorSpec spec;
  spec.horizon = 2;
  auto g = generate_dataset(spec);
  ASSERT_EQ(g.train.T(), 20);
  EXPECT_EQ(g.train.n(), 100);
  EXPECT_EQ(g.train.q(), 3);
  EXPECT_EQ(g.train.p(), 2);
  EXPECT_EQ(g.holdout.T(), 2);
  ASSERT_EQ(g.truth.theta.size(), 23u);
  EXPECT_EQ(g.truth.theta[0].rows(), 102);
  EXPECT_EQ(g.truth.sigma, GeneratorSpec::default_sigma());
  for (const auto& x : g.train.X) EXPECT_TRUE((x.array() >= 0).all() && (x.array() <= 1).all());
  EXPECT_TRUE((g.train.locations.coords.array() >= 0).all() && (g.train.locations.coords.array() <= 1).all());
  EXPECT_NO_THROW(g.train.validate());
}

TEST(Generator, NuggetLimit) {
  GeneratorSpec spec = tiny_spec(5);
  spec.alpha = 0.999;
  auto g = generate_dataset(spec);
  const double nugget = 0.001 / 0.999;
  for (int t = 1; t <= spec.T; ++t) {
    const Matrix e = observation_residual(g, t);
    EXPECT_LT(e.cwiseAbs().maxCoeff(), 6.0 * std::sqrt(nugget * 1.2));
  }
}

TEST(Generator, ResidualCorrelationSignsFollowSigma) {
  Matrix cov = Matrix::Zero(3, 3);
  double rows = 0;
  for (std::uint64_t rep = 0; rep < 25; ++rep) {
    auto g = generate_dataset(tiny_spec(100 + rep));
    for (int t = 1; t <= 10; ++t) {
      const Matrix e = observation_residual(g, t);
      cov += e.transpose() * e;
      rows += static_cast<double>(e.rows());
    }
  }
  cov /= rows;
  const Matrix sigma = GeneratorSpec::default_sigma();
  for (Index a = 0; a < 3; ++a)
    for (Index b = a + 1; b < 3; ++b) EXPECT_EQ(cov(a, b) > 0, sigma(a, b) > 0) << a << "," << b;
  // Residual rows are MN(0, (1-alpha)/alpha I, Sigma).
  EXPECT_LT((cov / 0.25 - sigma).cwiseAbs().maxCoeff(), 0.15);
}

TEST(Generator, SuppliedLayout) {
  GeneratorSpec spec = tiny_spec(6);
  spec.n = 3;
  spec.layout = LocationLayout::Supplied;
  spec.coords.resize(3, 2);
  spec.coords << 0, 0, 1, 0, 0, 1;
  auto g = generate_dataset(spec);
  EXPECT_EQ(g.train.locations.coords, spec.coords);
  spec.coords.resize(2, 2);
  EXPECT_THROW(generate_dataset(spec), Error);
}

TEST(Generator, Validation) {
  GeneratorSpec spec = tiny_spec(7);
  spec.q = 2;
  EXPECT_THROW(generate_dataset(spec), Error);
  spec.sigma = Matrix::Identity(2, 2);
  EXPECT_NO_THROW(generate_dataset(spec));
  spec.alpha = 1.0;
  try {
    generate_dataset(spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidAlpha);
  }
}

TEST(Metrics, Type7Quantile) {
  std::vector<double> s{4, 1, 3, 2};
  EXPECT_DOUBLE_EQ(empirical_quantile(s, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(empirical_quantile(s, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(empirical_quantile(s, 1.0), 4.0);
  std::vector<double> one{7};
  EXPECT_DOUBLE_EQ(empirical_quantile(one, 0.975), 7.0);
}

TEST(Metrics, MspeDominatesSquaredBias) {
  RandomStream rng(1);
  Matrix truth = rng.standard_normal(4, 3);
  std::vector<Matrix> draws;
  for (int r = 0; r < 50; ++r) draws.push_back(truth + 0.3 * Matrix::Ones(4, 3) + rng.standard_normal(4, 3));
  auto m = entry_metrics(draws, truth);
  EXPECT_TRUE((m.mspe.array() >= m.abs_bias.array().square() - 1e-12).all());
  EXPECT_LT((m.mspe - m.abs_bias.cwiseAbs2() - m.variance).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Metrics, DrawsEqualToTruth) {
  Matrix truth(2, 2);
  truth << 1, 2, 3, 4;
  auto panel = metrics(wrap(std::vector<Matrix>(20, truth), DrawKind::Sigma), {truth}, 0);
  EXPECT_EQ(panel.abs_bias.maxCoeff(), 0.0);
  EXPECT_EQ(panel.mspe.maxCoeff(), 0.0);
  EXPECT_EQ(panel.coverage.at("Sigma"), 1.0);
  EXPECT_EQ(panel.zero_width_entries, 4);
}

TEST(Metrics, SingleDraw) {
  RandomStream rng(2);
  Matrix truth = rng.standard_normal(3, 2);
  auto m = entry_metrics({truth + Matrix::Ones(3, 2)}, truth);
  EXPECT_EQ(m.variance.maxCoeff(), 0.0);
  EXPECT_EQ(m.width.maxCoeff(), 0.0);
  EXPECT_EQ(m.covered.count(), 0);
}

TEST(Metrics, GaussianDrawsCoverAtNominalLevel) {
  RandomStream rng(3);
  // The truth is an independent draw from the same N(center, 1) law.
  Matrix center = rng.standard_normal(50, 20);
  Matrix truth = center + rng.standard_normal(50, 20);
  std::vector<Matrix> draws;
  for (int r = 0; r < 10000; ++r) draws.push_back(center + rng.standard_normal(50, 20));
  auto m = entry_metrics(draws, truth);
  const double coverage = static_cast<double>(m.covered.count()) / 1000.0;
  EXPECT_NEAR(coverage, 0.95, 0.01);
  EXPECT_NEAR(m.width.mean(), 2 * 1.959964, 0.02);
}

TEST(Metrics, PanelBlocks) {
  RandomStream rng(4);
  const Index p = 2, n = 3, q = 2;
  Matrix truth = rng.standard_normal(p + 2 * n, q);
  std::vector<Matrix> draws;
  for (int r = 0; r < 200; ++r) draws.push_back(truth + rng.standard_normal(p + 2 * n, q));
  auto panel = metrics(wrap(draws, DrawKind::Forecast), {truth}, p);
  EXPECT_EQ(panel.coverage.count("B"), 1u);
  EXPECT_EQ(panel.coverage.count("Omega"), 1u);
  EXPECT_EQ(panel.coverage.count("Y"), 1u);
  EXPECT_EQ(panel.mspe.rows(), 1);
  EXPECT_EQ(panel.mspe.cols(), q);
  EXPECT_EQ(panel.frobenius.size(), 1);
  auto e = entry_metrics(draws, truth);
  EXPECT_NEAR(panel.mspe(0, 1), e.mspe.col(1).tail(n).mean(), 1e-14);
  EXPECT_THROW(metrics(wrap(draws, DrawKind::Forecast), {truth, truth}, p), Error);
  EXPECT_THROW(metrics(wrap(draws, DrawKind::Forecast), {Matrix(truth.topRows(5))}, p), Error);
}

TEST(Experiments, ClosedGridEffectiveRanges) {
  auto g = closed_grid();
  ASSERT_EQ(g.size(), 9);
  EXPECT_EQ(g.find(0.8, 4.0), 4);
}

TEST(Experiments, TinyClosedReplicate) {
  ExperimentOptions opts;
  opts.replicates = 1;
  opts.draws = 50;
  const auto start = std::chrono::steady_clock::now();
  auto report = run_mclosed(tiny_spec(1), opts);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(secs, 60.0);
  ASSERT_EQ(report.replicates.size(), 1u);
  const auto& r = report.replicates[0];
  ASSERT_TRUE(r.ok) << r.error;
  EXPECT_EQ(report.failures, 0);
  EXPECT_EQ(r.true_model, 4);
  EXPECT_GE(r.true_model_rank, 1);
  EXPECT_LE(r.true_model_rank, 9);
  EXPECT_TRUE(is_probability_vector(r.final_weights));
  EXPECT_EQ(r.states.abs_bias.rows(), 11);
  EXPECT_TRUE(r.states.coverage.count("B") && r.sigma.coverage.count("Sigma"));
  EXPECT_TRUE(std::isfinite(report.mean_forecast("mspe")));
  EXPECT_GE(r.estimate.alpha, 0.7);
  EXPECT_LE(r.estimate.alpha, 0.9);
}

TEST(Experiments, ReplicatesAreReproducible) {
  ExperimentOptions opts;
  opts.replicates = 2;
  opts.draws = 20;
  auto a = run_mclosed(tiny_spec(1), opts);
  opts.replicate_threads = 1;
  auto b = run_mclosed(tiny_spec(1), opts);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(a.replicates[k].seed, b.replicates[k].seed);
    EXPECT_EQ(a.replicates[k].final_weights, b.replicates[k].final_weights);
    EXPECT_EQ(a.replicates[k].forecast.mspe, b.replicates[k].forecast.mspe);
  }
  EXPECT_NE(a.replicates[0].seed, a.replicates[1].seed);
}

TEST(Experiments, OpenGridDraws) {
  ExperimentOptions opts;
  opts.replicates = 2;
  opts.draws = 20;
  auto report = run_mopen(tiny_spec(2), opts);
  for (const auto& r : report.replicates) {
    ASSERT_TRUE(r.ok) << r.error;
    ASSERT_EQ(r.grid.size(), 9);
    for (const auto& m : r.grid.models) {
      EXPECT_GT(m.alpha, 0.5);
      EXPECT_LT(m.alpha, 1.0);
      EXPECT_GE(m.phi, 1.0);
      EXPECT_LE(m.phi, 50.0);
    }
    EXPECT_EQ(r.true_model, -1);
    EXPECT_EQ(r.true_model_rank, 0);
  }
  EXPECT_NE(report.replicates[0].grid.models[0].alpha, report.replicates[1].grid.models[0].alpha);
}

TEST(Experiments, WeightsStabilizeOverTime) {
  int agree = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    GeneratorSpec spec;
    spec.T = 60;
    spec.seed = seed;
    auto dyn = weights_dynamics_experiment(spec);
    EXPECT_EQ(dyn.trace.global.rows(), 61);
    EXPECT_EQ(dyn.estimates.rows(), 61);
    EXPECT_TRUE(dyn.stabilized) << dyn.early_variability << " vs " << dyn.late_variability;
    EXPECT_GE(dyn.estimates(60, 0), 0.7 - 1e-12);
    EXPECT_LE(dyn.estimates(60, 0), 0.9 + 1e-12);
    EXPECT_GE(dyn.estimates(60, 1), 2.0 - 1e-12);
    EXPECT_LE(dyn.estimates(60, 1), 6.0 + 1e-12);
    agree += dyn.global_argmax == dyn.consensus_argmax;
  }
  // Global and consensus rankings agree at the final time in most datasets.
  EXPECT_GE(agree, 4);
}
