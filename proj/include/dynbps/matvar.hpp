#ifndef DYNBPS_MATVAR_HPP
#define DYNBPS_MATVAR_HPP

// Matrix-variate normal, inverse-Wishart and matrix-t distributions.
//
// Inverse-Wishart parameters are stored in the "half" convention used by the
// filter recursions: the shape grows by n/2 per step and the scale by one half
// of a quadratic form. For a 1x1 matrix, IW_half(nu, Psi) is exactly the
// inverse-gamma with shape nu and rate Psi. The standard-form equivalent
// (density proportional to |S|^{-(d+c+1)/2} exp(-tr(Psi S^{-1})/2)) has
// degrees of freedom d = 2 nu and scale 2 Psi; `to_standard` is the only place
// that conversion happens.
//
// Matrix-t parameters are held in standard form. X ~ MT(d, M, U, S) is the
// marginal of X | Sigma ~ MN(M, U, Sigma) with Sigma ~ IW(d, S), and has log
// density
//
//   log Gamma_c((d+r)/2) - log Gamma_c(d/2) - (rc/2) log(pi)
//     - (c/2) log|U| + (d/2) log|S| - ((d+r)/2) log|S + E' U^{-1} E|,
//
// with E = X - M of size r x c. The density is invariant under
// (U, S) -> (k U, S / k) for any k > 0.

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "dynbps/common.hpp"
#include "dynbps/rng.hpp"

namespace dynbps {

inline constexpr double kDefaultMaxJitter = 1e-6;

template <typename Scalar = double>
struct SpdFactor {
  Index dim = 0;
  Mat<Scalar> lower;
  Scalar jitter_applied = 0;

  Mat<Scalar> reconstruct() const { return lower * lower.transpose(); }

  Scalar log_det() const {
    return Scalar(2) * lower.diagonal().array().log().sum();
  }

  /// L^{-1} B
  template <typename Derived>
  Mat<Scalar> solve_lower(const Eigen::MatrixBase<Derived>& b) const {
    return lower.template triangularView<Eigen::Lower>().solve(b);
  }

  /// A^{-1} B
  template <typename Derived>
  Mat<Scalar> solve(const Eigen::MatrixBase<Derived>& b) const {
    Mat<Scalar> x = solve_lower(b);
    lower.transpose().template triangularView<Eigen::Upper>().solveInPlace(x);
    return x;
  }
};

/// Cholesky factor of a symmetric PSD matrix. When the plain factorization
/// fails, diagonal jitter is added starting at 1e-10 and multiplied by ten
/// until it succeeds or exceeds `max_jitter`.
template <typename Derived>
SpdFactor<typename Derived::Scalar> chol_psd(
    const Eigen::MatrixBase<Derived>& a,
    typename Derived::Scalar max_jitter = kDefaultMaxJitter) {
  using Scalar = typename Derived::Scalar;
  require(a.rows() == a.cols(), ErrorKind::DimensionMismatch,
          "chol_psd: matrix is not square");
  require(max_jitter >= 0, ErrorKind::InputError,
          "chol_psd: max_jitter must be nonnegative");
  const Index n = a.rows();
  const Scalar scale = std::max<Scalar>(a.cwiseAbs().maxCoeff(), Scalar(1e-300));
  const Scalar asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  require(asym <= Scalar(1e-9) * scale, ErrorKind::InputError,
          "chol_psd: matrix is not symmetric (max asymmetry " +
              std::to_string(static_cast<double>(asym)) + ")");
  Mat<Scalar> sym = Scalar(0.5) * (a + a.transpose());

  auto attempt = [&](Scalar jitter, SpdFactor<Scalar>& out) {
    Mat<Scalar> shifted = sym;
    if (jitter > 0) shifted.diagonal().array() += jitter;
    Eigen::LLT<Mat<Scalar>> llt(shifted);
    if (llt.info() != Eigen::Success) return false;
    Mat<Scalar> l = llt.matrixL();
    for (Index i = 0; i < n; ++i)
      if (!(l(i, i) > 0) || !std::isfinite(static_cast<double>(l(i, i))))
        return false;
    out.dim = n;
    out.lower = std::move(l);
    out.jitter_applied = jitter;
    return true;
  };

  SpdFactor<Scalar> out;
  if (attempt(Scalar(0), out)) return out;
  for (Scalar jitter = Scalar(1e-10); jitter <= max_jitter * Scalar(1 + 1e-9);
       jitter *= Scalar(10)) {
    if (attempt(jitter, out)) return out;
  }
  throw Error(ErrorKind::NotPositiveDefinite,
              "chol_psd: matrix of size " + std::to_string(n) +
                  " is not positive definite within jitter " +
                  std::to_string(static_cast<double>(max_jitter)));
}

template <typename Scalar = double>
struct MatrixNormalParams {
  Mat<Scalar> mean;
  Mat<Scalar> row_cov;
  Mat<Scalar> col_cov;
};

/// Inverse-Wishart in the half convention (see file comment).
template <typename Scalar = double>
struct InverseWishartParams {
  Scalar shape = 0;
  Mat<Scalar> scale;
};

template <typename Scalar = double>
struct StandardInverseWishart {
  Scalar dof = 0;
  Mat<Scalar> scale;
};

/// The one conversion between the half convention and standard form.
template <typename Scalar>
StandardInverseWishart<Scalar> to_standard(const InverseWishartParams<Scalar>& iw) {
  return {Scalar(2) * iw.shape, Scalar(2) * iw.scale};
}

/// E[Sigma] = Psi / (nu - (c+1)/2); requires nu > (c+1)/2.
template <typename Scalar>
Mat<Scalar> inverse_wishart_mean(const InverseWishartParams<Scalar>& iw) {
  const Index c = iw.scale.rows();
  const Scalar denom = iw.shape - Scalar(c + 1) / Scalar(2);
  require(denom > 0, ErrorKind::InvalidShape,
          "inverse_wishart_mean: shape too small for a finite mean");
  return iw.scale / denom;
}

template <typename Scalar = double>
struct MatrixTParams {
  Scalar dof = 0;  // standard form
  Mat<Scalar> mean;
  Mat<Scalar> row_scale;
  Mat<Scalar> col_scale;  // standard form
};

/// Matrix-t marginal of MN(mean, row_scale, Sigma) with Sigma ~ IW_half(nu, Psi).
template <typename Scalar>
MatrixTParams<Scalar> matrix_t(const InverseWishartParams<Scalar>& column,
                               Mat<Scalar> mean, Mat<Scalar> row_scale) {
  auto standard = to_standard(column);
  return {standard.dof, std::move(mean), std::move(row_scale),
          std::move(standard.scale)};
}

template <typename Scalar>
Scalar log_multivariate_gamma(Scalar a, Index dim) {
  double out = 0.25 * static_cast<double>(dim * (dim - 1)) *
               std::log(std::numbers::pi);
  for (Index i = 0; i < dim; ++i)
    out += std::lgamma(static_cast<double>(a) - 0.5 * static_cast<double>(i));
  return static_cast<Scalar>(out);
}

namespace detail {

/// mean + L_row Z L_col' with Z drawn column-major from `rng`.
template <typename Scalar>
Mat<Scalar> draw_matrix_normal(const Mat<Scalar>& mean, const Mat<Scalar>& row_lower,
                               const Mat<Scalar>& col_lower, RandomStream& rng) {
  Mat<Scalar> z = rng.standard_normal<Scalar>(mean.rows(), mean.cols());
  Mat<Scalar> draw = mean;
  draw.noalias() += row_lower.template triangularView<Eigen::Lower>() *
                    (z * col_lower.transpose().template triangularView<Eigen::Upper>());
  return draw;
}

/// Bartlett draw of Sigma ~ IW(dof, S) in standard form given S = L L'.
/// Returns a lower-triangular factor of the draw.
template <typename Scalar>
Mat<Scalar> draw_inverse_wishart_factor(Scalar dof, const Mat<Scalar>& scale_lower,
                                        RandomStream& rng) {
  const Index c = scale_lower.rows();
  require(dof > Scalar(c - 1), ErrorKind::InvalidShape,
          "inverse-Wishart: degrees of freedom " +
              std::to_string(static_cast<double>(dof)) + " not above " +
              std::to_string(c - 1));
  // Wishart(dof, I) = A A' with A lower triangular (Bartlett).
  Mat<Scalar> bartlett = Mat<Scalar>::Zero(c, c);
  for (Index i = 0; i < c; ++i) {
    bartlett(i, i) = static_cast<Scalar>(
        std::sqrt(rng.chi_squared(static_cast<double>(dof) - static_cast<double>(i))));
    for (Index k = 0; k < i; ++k) bartlett(i, k) = static_cast<Scalar>(rng.normal());
  }
  // Sigma = (L A^{-T})(L A^{-T})'; with X' = A^{-1} L'.
  Mat<Scalar> xt = bartlett.template triangularView<Eigen::Lower>().solve(
      Mat<Scalar>(scale_lower.transpose()));
  Mat<Scalar> sigma = xt.transpose() * xt;
  sigma = Scalar(0.5) * (sigma + sigma.transpose());
  return chol_psd(sigma).lower;
}

}  // namespace detail

template <typename Scalar>
Mat<Scalar> mn_sample(const MatrixNormalParams<Scalar>& params, RandomStream& rng,
                      Scalar max_jitter = kDefaultMaxJitter) {
  require(params.row_cov.rows() == params.mean.rows() &&
              params.col_cov.rows() == params.mean.cols(),
          ErrorKind::DimensionMismatch, "mn_sample: covariance sizes do not match mean");
  auto row = chol_psd(params.row_cov, max_jitter);
  auto col = chol_psd(params.col_cov, max_jitter);
  return detail::draw_matrix_normal(params.mean, row.lower, col.lower, rng);
}

template <typename Scalar>
Scalar mn_logdensity(const Mat<Scalar>& x, const MatrixNormalParams<Scalar>& params) {
  require_same_shape(x, params.mean, "mn_logdensity");
  const Index r = x.rows(), c = x.cols();
  auto row = chol_psd(params.row_cov);
  auto col = chol_psd(params.col_cov);
  // tr(V^{-1} E' U^{-1} E) = ||L_U^{-1} E L_V^{-T}||_F^2
  Mat<Scalar> z = row.solve_lower(x - params.mean);
  Mat<Scalar> zt = col.solve_lower(Mat<Scalar>(z.transpose()));
  return static_cast<Scalar>(-0.5 * static_cast<double>(r * c) *
                             std::log(2.0 * std::numbers::pi)) -
         Scalar(0.5) * Scalar(c) * row.log_det() - Scalar(0.5) * Scalar(r) * col.log_det() -
         Scalar(0.5) * zt.squaredNorm();
}

/// Draws Sigma from an inverse-Wishart given in the half convention.
template <typename Scalar>
Mat<Scalar> iw_sample(const InverseWishartParams<Scalar>& params, RandomStream& rng) {
  const Index c = params.scale.rows();
  require(params.scale.cols() == c, ErrorKind::DimensionMismatch,
          "iw_sample: scale is not square");
  require(params.shape > Scalar(c - 1) / Scalar(2), ErrorKind::InvalidShape,
          "iw_sample: shape must exceed (c-1)/2");
  auto standard = to_standard(params);
  auto lower = chol_psd(standard.scale).lower;
  Mat<Scalar> f = detail::draw_inverse_wishart_factor(standard.dof, lower, rng);
  return f * f.transpose();
}

template <typename Scalar>
Scalar mt_logdensity(const Mat<Scalar>& y, const MatrixTParams<Scalar>& params) {
  require_same_shape(y, params.mean, "mt_logdensity");
  require(params.dof > 0, ErrorKind::InvalidShape, "mt_logdensity: dof must be positive");
  const Index r = y.rows(), c = y.cols();
  auto row = chol_psd(params.row_scale);
  auto col = chol_psd(params.col_scale);
  Mat<Scalar> z = row.solve_lower(y - params.mean);
  Mat<Scalar> post = params.col_scale;
  post.noalias() += z.transpose() * z;
  auto post_factor = chol_psd(post);
  const Scalar d = params.dof;
  return log_multivariate_gamma<Scalar>((d + Scalar(r)) / Scalar(2), c) -
         log_multivariate_gamma<Scalar>(d / Scalar(2), c) -
         static_cast<Scalar>(0.5 * static_cast<double>(r * c) * std::log(std::numbers::pi)) -
         Scalar(0.5) * Scalar(c) * row.log_det() + Scalar(0.5) * d * col.log_det() -
         Scalar(0.5) * (d + Scalar(r)) * post_factor.log_det();
}

/// Composition draw: Sigma ~ IW(dof, col_scale), then MN(mean, row_scale, Sigma).
template <typename Scalar>
Mat<Scalar> mt_sample(const MatrixTParams<Scalar>& params, RandomStream& rng,
                      Scalar max_jitter = kDefaultMaxJitter) {
  require(params.row_scale.rows() == params.mean.rows() &&
              params.col_scale.rows() == params.mean.cols(),
          ErrorKind::DimensionMismatch, "mt_sample: scale sizes do not match mean");
  auto row = chol_psd(params.row_scale, max_jitter);
  auto col = chol_psd(params.col_scale, max_jitter);
  Mat<Scalar> sigma_lower =
      detail::draw_inverse_wishart_factor(params.dof, col.lower, rng);
  return detail::draw_matrix_normal(params.mean, row.lower, sigma_lower, rng);
}

}  // namespace dynbps

#endif  // DYNBPS_MATVAR_HPP
