#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "dynbps/spatial.hpp"

using namespace dynbps;

namespace {

LocationSet<double> random_locations(Index n, std::uint64_t seed) {
  RandomStream rng(seed);
  Matrix xy(n, 2);
  for (Index i = 0; i < n; ++i) xy.row(i) << rng.uniform(), rng.uniform();
  return LocationSet<double>::from_coords(xy);
}

CorrelationBlock<double> block(const LocationSet<double>& a, const LocationSet<double>& b, double phi,
                               BlockKind kind) {
  return exp_correlation(pairwise_distances(a, b), phi, kind);
}

}  // namespace

TEST(Distances, SinglePoint) {
  auto s = LocationSet<double>::from_coords(Matrix::Constant(1, 2, 0.3));
  EXPECT_EQ(pairwise_distances(s, s)(0, 0), 0.0);
}

TEST(Distances, UnitSquareCorners) {
  Matrix xy(4, 2);
  xy << 0, 0, 1, 0, 0, 1, 1, 1;
  auto s = LocationSet<double>::from_coords(xy);
  EXPECT_NEAR(pairwise_distances(s, s).maxCoeff(), std::sqrt(2.0), 1e-15);
}

TEST(Distances, SymmetricWithZeroDiagonal) {
  auto s = random_locations(20, 1);
  Matrix d = pairwise_distances(s, s);
  EXPECT_EQ(d, d.transpose());
  EXPECT_EQ(d.diagonal().cwiseAbs().maxCoeff(), 0.0);
}

TEST(ExpCorrelation, AnalyticValues) {
  Matrix d(1, 2);
  d << 0.0, 0.25;
  auto c = exp_correlation(d, 4.0);
  EXPECT_EQ(c.matrix(0, 0), 1.0);
  EXPECT_NEAR(c.matrix(0, 1), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(c.matrix(0, 1), 0.367879, 1e-6);
}

TEST(ExpCorrelation, SpdOnUnitSquare) {
  auto s = random_locations(60, 2);
  Matrix r = block(s, s, 2.0, BlockKind::SS).matrix;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(r);
  EXPECT_GT(eig.eigenvalues().minCoeff(), -1e-8);
  auto f = chol_psd(r, 1e-8);
  EXPECT_LE(f.jitter_applied, 1e-8);
}

TEST(ExpCorrelation, MonotoneInDistanceAndPhi) {
  Vector d = Vector::LinSpaced(20, 0.01, 2.0);
  Matrix dm = d.transpose();
  for (double phi : {0.5, 2.0, 6.0}) {
    Matrix c = exp_correlation(dm, phi).matrix;
    Matrix c2 = exp_correlation(dm, phi * 1.5).matrix;
    for (Index k = 1; k < 20; ++k) EXPECT_LT(c(0, k), c(0, k - 1));
    EXPECT_TRUE((c2.array() < c.array()).all());
  }
}

TEST(ExpCorrelation, RejectsNonPositivePhi) {
  try {
    exp_correlation(Matrix(Matrix::Zero(1, 1)), 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidPhi);
  }
}

TEST(EffectiveRange, UnitSquarePercentages) {
  const double diag = std::sqrt(2.0);
  EXPECT_NEAR(effective_range(4.0), 0.74893, 1e-5);
  EXPECT_NEAR(effective_range(2.0), 1.49787, 1e-5);
  EXPECT_NEAR(effective_range(6.0), 0.49929, 1e-5);
  EXPECT_NEAR(100 * effective_range(4.0) / diag, 52.96, 0.01);
  EXPECT_NEAR(100 * effective_range(2.0) / diag, 105.9, 0.05);
  EXPECT_NEAR(100 * effective_range(6.0) / diag, 35.3, 0.05);
}

TEST(SchurPredictive, IdenticalSetsInterpolateExactly) {
  auto s = random_locations(8, 3);
  auto sp = schur_predictive(block(s, s, 3.0, BlockKind::SS), block(s, s, 3.0, BlockKind::US),
                             block(s, s, 3.0, BlockKind::UU));
  EXPECT_LT((sp.m_tilde - Matrix::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT(sp.w_tilde.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(SchurPredictive, FarLocationDecorrelates) {
  auto s = random_locations(6, 4);
  auto u = LocationSet<double>::from_coords(Matrix::Constant(1, 2, 50.0), "u");
  auto sp = schur_predictive(block(s, s, 2.0, BlockKind::SS), block(u, s, 2.0, BlockKind::US),
                             block(u, u, 2.0, BlockKind::UU));
  EXPECT_LT(sp.m_tilde.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(sp.w_tilde(0, 0), 1.0, 1e-12);
}

TEST(SchurPredictive, MatchesExplicitInverse) {
  auto s = random_locations(5, 5);
  Matrix uxy(2, 2);
  uxy << 0.2, 0.7, 0.9, 0.1;
  auto u = LocationSet<double>::from_coords(uxy, "u");
  const double phi = 3.0;
  auto rss = block(s, s, phi, BlockKind::SS), rus = block(u, s, phi, BlockKind::US),
       ruu = block(u, u, phi, BlockKind::UU);
  auto sp = schur_predictive(rss, rus, ruu);
  Matrix inv = rss.matrix.inverse();
  Matrix m = rus.matrix * inv;
  Matrix w = ruu.matrix - rus.matrix * inv * rus.matrix.transpose();
  EXPECT_LT((sp.m_tilde - m).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((sp.w_tilde - w).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(SchurPredictive, ConditionalVarianceBounded) {
  auto s = random_locations(30, 6);
  auto u = random_locations(15, 7);
  for (double phi : {0.5, 2.0, 10.0}) {
    auto sp = schur_predictive(block(s, s, phi, BlockKind::SS), block(u, s, phi, BlockKind::US),
                               block(u, u, phi, BlockKind::UU));
    EXPECT_GE(sp.w_tilde.diagonal().minCoeff(), -1e-8);
    EXPECT_LE(sp.w_tilde.diagonal().maxCoeff(), 1.0 + 1e-8);
  }
}

TEST(SchurPredictive, PermutationEquivariance) {
  auto s = random_locations(7, 8);
  auto u = random_locations(3, 9);
  std::vector<int> perm(7);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[1], perm[4]);
  LocationSet<double> sp_set;
  sp_set.coords.resize(7, 2);
  for (int i = 0; i < 7; ++i) {
    sp_set.coords.row(i) = s.coords.row(perm[static_cast<std::size_t>(i)]);
    sp_set.ids.push_back(s.ids[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
  }
  const double phi = 4.0;
  auto a = schur_predictive(block(s, s, phi, BlockKind::SS), block(u, s, phi, BlockKind::US),
                            block(u, u, phi, BlockKind::UU));
  auto b = schur_predictive(block(sp_set, sp_set, phi, BlockKind::SS),
                            block(u, sp_set, phi, BlockKind::US), block(u, u, phi, BlockKind::UU));
  EXPECT_LT((a.w_tilde - b.w_tilde).cwiseAbs().maxCoeff(), 1e-10);
  for (int i = 0; i < 7; ++i)
    EXPECT_LT((a.m_tilde.col(perm[static_cast<std::size_t>(i)]) - b.m_tilde.col(i)).cwiseAbs().maxCoeff(),
              1e-10);
}

TEST(SchurPredictive, CoincidentRowShortCircuits) {
  auto s = random_locations(6, 10);
  Matrix uxy(2, 2);
  uxy.row(0) = s.coords.row(3);
  uxy.row(1) << 0.5, 0.5;
  auto u = LocationSet<double>::from_coords(uxy, "u");
  auto match = coincident_sites(u, s);
  EXPECT_EQ(match[0], 3);
  EXPECT_EQ(match[1], -1);
  auto sp = schur_predictive(block(s, s, 4.0, BlockKind::SS), block(u, s, 4.0, BlockKind::US),
                             block(u, u, 4.0, BlockKind::UU), match);
  Vector basis = Vector::Zero(6);
  basis(3) = 1;
  EXPECT_EQ(Vector(sp.m_tilde.row(0).transpose()), basis);
  EXPECT_EQ(sp.w_tilde.row(0).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(sp.w_tilde.col(0).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(sp.w_tilde(1, 1), 0.0);
}
