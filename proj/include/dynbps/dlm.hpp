#ifndef DYNBPS_DLM_HPP
#define DYNBPS_DLM_HPP

// Single-flow conjugate machinery for the matrix-variate dynamic linear model
//
//   Y_t = F_t Theta_t + Upsilon_t,   Upsilon_t ~ MN(0, V_t, Sigma)
//   Theta_t = G_t Theta_{t-1} + Xi_t, Xi_t ~ MN(0, W_t, Sigma)
//   Sigma ~ IW_half(nu, Psi)
//
// All inverses are realized as Cholesky solves. The state update uses the
// Kalman-gain form with a Joseph-stabilized covariance, which is algebraically
// identical to the information form C_t = (R_t^{-1} + F' V^{-1} F)^{-1}.

#include <string>

#include "dynbps/common.hpp"
#include "dynbps/matvar.hpp"
#include "dynbps/spatial.hpp"

namespace dynbps {

template <typename Scalar = double>
struct SystemMatrices {
  Mat<Scalar> F;  // n x s
  Mat<Scalar> G;  // s x s
  Mat<Scalar> V;  // n x n
  Mat<Scalar> W;  // s x s

  Index n() const { return F.rows(); }
  Index s() const { return F.cols(); }
};

template <typename Scalar = double>
struct FilterState {
  int t = 0;
  Mat<Scalar> m;    // s x q
  Mat<Scalar> C;    // s x s
  Scalar nu = 0;
  Mat<Scalar> Psi;  // q x q
  Mat<Scalar> pred_q;  // n x q, one-step mean for step t (empty at t = 0)
  Mat<Scalar> pred_Q;  // n x n

  InverseWishartParams<Scalar> column() const { return {nu, Psi}; }
};

template <typename Scalar = double>
struct SmoothParams {
  Mat<Scalar> h;
  Mat<Scalar> H;
};

/// h_t = m_t + gain (Theta_{t+1} - G m_t); H_t does not depend on Theta_{t+1}.
template <typename Scalar = double>
struct SmootherGain {
  Mat<Scalar> gain;
  Mat<Scalar> H;
};

template <typename Scalar = double>
struct JointForecast {
  Mat<Scalar> A;  // state mean A_T(k)
  Mat<Scalar> R;  // state row covariance R_T(k)
  Mat<Scalar> q;  // observation mean q_T(k)
  Mat<Scalar> Q;  // observation row covariance Q_T(k)

  /// [A; q]
  Mat<Scalar> stacked_mean() const {
    Mat<Scalar> out(A.rows() + q.rows(), A.cols());
    out << A, q;
    return out;
  }
  /// [[R, R F'], [F R, Q]]
  Mat<Scalar> stacked_row_scale(const Mat<Scalar>& F) const {
    const Index s = R.rows(), n = Q.rows();
    Mat<Scalar> out(s + n, s + n);
    Mat<Scalar> fr = F * R;
    out.topLeftCorner(s, s) = R;
    out.topRightCorner(s, n) = fr.transpose();
    out.bottomLeftCorner(n, s) = fr;
    out.bottomRightCorner(n, n) = Q;
    return out;
  }
};

template <typename Derived>
Mat<typename Derived::Scalar> symmetrized(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  return Scalar(0.5) * (a + a.transpose());
}

/// F = [X : I_n], G = I, V = ((1 - alpha) / alpha) I_n,
/// W = blockdiag(coef_scale I_p, R(S, S; phi)).
template <typename Scalar>
SystemMatrices<Scalar> build_spatiotemporal_system(const Mat<Scalar>& x,
                                                   const CorrelationBlock<Scalar>& corr_ss,
                                                   Scalar alpha, Scalar coef_scale = Scalar(1)) {
  require(alpha > 0 && alpha < 1, ErrorKind::InvalidAlpha,
          "alpha must lie in (0, 1), got " + std::to_string(static_cast<double>(alpha)));
  require(coef_scale > 0, ErrorKind::InputError, "coefficient state scale must be positive");
  const Index n = x.rows(), p = x.cols();
  require(corr_ss.matrix.rows() == n && corr_ss.matrix.cols() == n,
          ErrorKind::DimensionMismatch, "spatial correlation does not match design rows");
  const Index s = p + n;
  SystemMatrices<Scalar> sys;
  sys.F.resize(n, s);
  sys.F << x, Mat<Scalar>::Identity(n, n);
  sys.G = Mat<Scalar>::Identity(s, s);
  sys.V = ((Scalar(1) - alpha) / alpha) * Mat<Scalar>::Identity(n, n);
  sys.W = Mat<Scalar>::Zero(s, s);
  sys.W.topLeftCorner(p, p).diagonal().setConstant(coef_scale);
  sys.W.bottomRightCorner(n, n) = corr_ss.matrix;
  return sys;
}

inline constexpr int kSeasonalDummies = 11;

/// Appends 11 monthly indicator columns (month 12 is the baseline). The
/// design must not carry an intercept column.
template <typename Scalar>
Mat<Scalar> build_seasonal_design(const Mat<Scalar>& x, int month) {
  require(month >= 1 && month <= 12, ErrorKind::InvalidMonth,
          "month must lie in 1..12, got " + std::to_string(month));
  Mat<Scalar> out = Mat<Scalar>::Zero(x.rows(), x.cols() + kSeasonalDummies);
  out.leftCols(x.cols()) = x;
  if (month <= kSeasonalDummies) out.col(x.cols() + month - 1).setOnes();
  return out;
}

template <typename Scalar>
FilterState<Scalar> initial_state(Mat<Scalar> m0, Mat<Scalar> c0, Scalar nu0, Mat<Scalar> psi0) {
  require(c0.rows() == m0.rows() && c0.cols() == m0.rows(), ErrorKind::DimensionMismatch,
          "prior: C0 does not match m0");
  require(psi0.rows() == m0.cols() && psi0.cols() == m0.cols(), ErrorKind::DimensionMismatch,
          "prior: Psi0 does not match m0 columns");
  require(nu0 > 0, ErrorKind::InvalidShape, "prior: nu0 must be positive");
  FilterState<Scalar> st;
  st.t = 0;
  st.m = std::move(m0);
  st.C = std::move(c0);
  st.nu = nu0;
  st.Psi = std::move(psi0);
  return st;
}

template <typename Scalar>
void check_conformable(const FilterState<Scalar>& prev, const SystemMatrices<Scalar>& sys) {
  const Index s = prev.m.rows();
  require(sys.G.rows() == s && sys.G.cols() == s && sys.W.rows() == s && sys.W.cols() == s &&
              sys.F.cols() == s && sys.V.rows() == sys.F.rows() && sys.V.cols() == sys.F.rows(),
          ErrorKind::DimensionMismatch, "system matrices do not conform with the state");
}

template <typename Scalar>
FilterState<Scalar> filter_step(const FilterState<Scalar>& prev, const Mat<Scalar>& y,
                                const SystemMatrices<Scalar>& sys,
                                Scalar max_jitter = kDefaultMaxJitter) {
  check_conformable(prev, sys);
  require(y.rows() == sys.n() && y.cols() == prev.m.cols(), ErrorKind::DimensionMismatch,
          "filter_step: observation has wrong shape");
  require(y.allFinite(), ErrorKind::InputError, "filter_step: observation has missing values");
  const int t = prev.t + 1;
  try {
    const Index s = sys.s();
    Mat<Scalar> a = sys.G * prev.m;
    Mat<Scalar> r = symmetrized(sys.G * prev.C * sys.G.transpose() + sys.W);

    FilterState<Scalar> next;
    next.t = t;
    next.pred_q = sys.F * a;
    Mat<Scalar> fr = sys.F * r;
    next.pred_Q = symmetrized(fr * sys.F.transpose() + sys.V);

    auto q_factor = chol_psd(next.pred_Q, max_jitter);
    Mat<Scalar> innovation = q_factor.solve_lower(y - next.pred_q);  // L^{-1}(Y - q)
    Mat<Scalar> gain = q_factor.solve(fr).transpose();                // R F' Q^{-1}

    next.m = a + gain * (y - next.pred_q);
    Mat<Scalar> ikf = Mat<Scalar>::Identity(s, s) - gain * sys.F;
    next.C = symmetrized(ikf * r * ikf.transpose() + gain * sys.V * gain.transpose());
    next.nu = prev.nu + Scalar(sys.n()) / Scalar(2);
    next.Psi = symmetrized(prev.Psi + Scalar(0.5) * innovation.transpose() * innovation);
    return next;
  } catch (const Error& e) {
    rethrow_with_context(e, "filter step t=" + std::to_string(t));
  }
}

/// Row-wise log densities of Y under the one-step predictive with mean
/// `pred_q`, row variances `pred_var` (diagonal of Q_t) and column law
/// IW_half(nu_prev, Psi_prev).
template <typename Scalar>
Vec<Scalar> predictive_row_logdensities(const Mat<Scalar>& y, const Mat<Scalar>& pred_q,
                                        const Vec<Scalar>& pred_var,
                                        const InverseWishartParams<Scalar>& column) {
  require_same_shape(y, pred_q, "predictive_row_logdensities");
  require(pred_var.size() == y.rows(), ErrorKind::DimensionMismatch,
          "predictive_row_logdensities: variance length mismatch");
  const Index n = y.rows(), c = y.cols();
  const auto standard = to_standard(column);
  auto col = chol_psd(standard.scale);
  const Scalar d = standard.dof;
  // |S + e e'/Q| = |S| (1 + e' S^{-1} e / Q)
  const Scalar constant =
      log_multivariate_gamma<Scalar>((d + Scalar(1)) / Scalar(2), c) -
      log_multivariate_gamma<Scalar>(d / Scalar(2), c) -
      static_cast<Scalar>(0.5 * static_cast<double>(c) * std::log(std::numbers::pi)) -
      Scalar(0.5) * col.log_det();
  Mat<Scalar> z = col.solve_lower(Mat<Scalar>((y - pred_q).transpose()));  // c x n
  Vec<Scalar> out(n);
  for (Index i = 0; i < n; ++i) {
    require(pred_var(i) > 0, ErrorKind::NotPositiveDefinite,
            "predictive_row_logdensities: nonpositive predictive variance");
    const Scalar quad = z.col(i).squaredNorm() / pred_var(i);
    out(i) = constant - Scalar(0.5) * Scalar(c) * std::log(pred_var(i)) -
             Scalar(0.5) * (d + Scalar(1)) * std::log1p(quad);
  }
  return out;
}

/// Per-location log p(Y_{t,i} | D_{t-1}) under the flow whose filtered state
/// at t-1 is `state_prev`.
template <typename Scalar>
Vec<Scalar> one_step_marginal_logdensity(const FilterState<Scalar>& state_prev,
                                         const SystemMatrices<Scalar>& sys,
                                         const Mat<Scalar>& y) {
  check_conformable(state_prev, sys);
  Mat<Scalar> a = sys.G * state_prev.m;
  Mat<Scalar> r = sys.G * state_prev.C * sys.G.transpose() + sys.W;
  Mat<Scalar> q = sys.F * a;
  Vec<Scalar> var = ((sys.F * r).cwiseProduct(sys.F)).rowwise().sum() + sys.V.diagonal();
  return predictive_row_logdensities<Scalar>(y, q, var, state_prev.column());
}

/// Backward gain from the filtered state at t and the system at t+1:
/// gain = C G' (G C G' + W)^{-1}, H = C - gain G C. Equal to the information
/// form H = (C^{-1} + G' W^{-1} G)^{-1}.
template <typename Scalar>
SmootherGain<Scalar> smoother_gain(const FilterState<Scalar>& filtered,
                                   const SystemMatrices<Scalar>& sys_next,
                                   Scalar max_jitter = kDefaultMaxJitter) {
  check_conformable(filtered, sys_next);
  Mat<Scalar> gc = sys_next.G * filtered.C;
  Mat<Scalar> r_next = symmetrized(gc * sys_next.G.transpose() + sys_next.W);
  auto factor = chol_psd(r_next, max_jitter);
  SmootherGain<Scalar> out;
  out.gain = factor.solve(gc).transpose();
  Mat<Scalar> z = factor.solve_lower(gc);
  out.H = symmetrized(filtered.C - z.transpose() * z);
  return out;
}

template <typename Scalar>
SmoothParams<Scalar> smooth_step(const FilterState<Scalar>& filtered,
                                 const SystemMatrices<Scalar>& sys_next,
                                 const Mat<Scalar>& theta_next) {
  require_same_shape(theta_next, filtered.m, "smooth_step: theta_next");
  auto g = smoother_gain(filtered, sys_next);
  SmoothParams<Scalar> out;
  out.h = filtered.m + g.gain * (theta_next - sys_next.G * filtered.m);
  out.H = std::move(g.H);
  return out;
}

/// One step of the forecast recursion from (A_T(k-1), R_T(k-1)).
template <typename Scalar>
JointForecast<Scalar> forecast_advance(const Mat<Scalar>& a_prev, const Mat<Scalar>& r_prev,
                                       const SystemMatrices<Scalar>& sys) {
  JointForecast<Scalar> out;
  out.A = sys.G * a_prev;
  out.R = symmetrized(sys.G * r_prev * sys.G.transpose() + sys.W);
  out.q = sys.F * out.A;
  out.Q = symmetrized(sys.F * out.R * sys.F.transpose() + sys.V);
  return out;
}

/// k-step joint forecast parameters starting from A_T(0) = m_T, R_T(0) = C_T,
/// holding the system fixed over the horizon.
template <typename Scalar>
JointForecast<Scalar> forecast_recursion(const FilterState<Scalar>& state_T,
                                         const SystemMatrices<Scalar>& sys_future, int k) {
  require(k >= 1, ErrorKind::InputError, "forecast_recursion: horizon must be at least 1");
  check_conformable(state_T, sys_future);
  JointForecast<Scalar> out = forecast_advance(state_T.m, state_T.C, sys_future);
  for (int step = 2; step <= k; ++step) out = forecast_advance(out.A, out.R, sys_future);
  return out;
}

}  // namespace dynbps

#endif  // DYNBPS_DLM_HPP
