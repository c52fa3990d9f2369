#ifndef DYNBPS_SPATIAL_HPP
#define DYNBPS_SPATIAL_HPP

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "dynbps/common.hpp"
#include "dynbps/matvar.hpp"

namespace dynbps {

/// Locations with planar coordinates. Longitude/latitude input is treated as
/// planar; no geodesic metric is applied.
template <typename Scalar = double>
struct LocationSet {
  std::vector<std::string> ids;
  Mat<Scalar> coords;  // n x 2

  Index size() const { return coords.rows(); }

  void validate() const {
    require(coords.rows() >= 1 && coords.cols() == 2, ErrorKind::InputError,
            "LocationSet: need at least one location with two coordinates");
    require(static_cast<Index>(ids.size()) == coords.rows(), ErrorKind::InputError,
            "LocationSet: id count does not match coordinate rows");
    require(coords.allFinite(), ErrorKind::InputError,
            "LocationSet: coordinates must be finite");
    std::set<std::string> seen(ids.begin(), ids.end());
    require(seen.size() == ids.size(), ErrorKind::InputError,
            "LocationSet: location ids must be unique");
  }

  /// Locations named "s1".."sn" at the given coordinates.
  static LocationSet from_coords(Mat<Scalar> xy, const std::string& prefix = "s") {
    LocationSet out;
    out.coords = std::move(xy);
    for (Index i = 0; i < out.coords.rows(); ++i)
      out.ids.push_back(prefix + std::to_string(i + 1));
    return out;
  }
};

enum class BlockKind { SS, US, UU };

template <typename Scalar = double>
struct CorrelationBlock {
  Mat<Scalar> matrix;
  Scalar phi = 0;
  BlockKind kind = BlockKind::SS;
};

template <typename Scalar = double>
struct SchurPredictive {
  Mat<Scalar> m_tilde;  // m x n
  Mat<Scalar> w_tilde;  // m x m
};

inline constexpr double kCoincidenceDistance = 1e-12;

template <typename Scalar>
Mat<Scalar> pairwise_distances(const LocationSet<Scalar>& a, const LocationSet<Scalar>& b) {
  require(a.size() >= 1 && b.size() >= 1, ErrorKind::InputError,
          "pairwise_distances: empty location set");
  Mat<Scalar> d(a.size(), b.size());
  for (Index j = 0; j < b.size(); ++j)
    for (Index i = 0; i < a.size(); ++i)
      d(i, j) = (a.coords.row(i) - b.coords.row(j)).norm();
  return d;
}

/// exp(-phi d) entrywise. Other kernels plug in with the same (distances, phi)
/// signature.
template <typename Scalar>
CorrelationBlock<Scalar> exp_correlation(const Mat<Scalar>& distances, Scalar phi,
                                         BlockKind kind = BlockKind::SS) {
  require(phi > 0 && std::isfinite(static_cast<double>(phi)), ErrorKind::InvalidPhi,
          "exp_correlation: phi must be positive, got " +
              std::to_string(static_cast<double>(phi)));
  require((distances.array() >= 0).all(), ErrorKind::InputError,
          "exp_correlation: distances must be nonnegative");
  return {(-phi * distances.array()).exp().matrix(), phi, kind};
}

/// Distance at which the exponential correlation drops to `threshold`.
inline double effective_range(double phi, double threshold = 0.05) {
  require(phi > 0, ErrorKind::InvalidPhi, "effective_range: phi must be positive");
  require(threshold > 0 && threshold < 1, ErrorKind::InputError,
          "effective_range: threshold must lie in (0, 1)");
  return -std::log(threshold) / phi;
}

/// Conditional mean operator and covariance of the latent field at U given S:
/// m_tilde = R_US R_SS^{-1}, w_tilde = R_UU - m_tilde R_SU.
/// `coincident` (optional, size m) maps a row of U to the index of an S
/// location it coincides with, or -1; such rows short-circuit to a basis row.
template <typename Scalar>
SchurPredictive<Scalar> schur_predictive(const CorrelationBlock<Scalar>& r_ss,
                                         const CorrelationBlock<Scalar>& r_us,
                                         const CorrelationBlock<Scalar>& r_uu,
                                         const std::vector<Index>& coincident = {}) {
  const Index n = r_ss.matrix.rows();
  const Index m = r_uu.matrix.rows();
  require(r_ss.matrix.cols() == n && r_uu.matrix.cols() == m &&
              r_us.matrix.rows() == m && r_us.matrix.cols() == n,
          ErrorKind::DimensionMismatch, "schur_predictive: blocks are not conformable");
  require(r_ss.phi == r_us.phi && r_us.phi == r_uu.phi, ErrorKind::InputError,
          "schur_predictive: blocks built with different phi");
  auto factor = chol_psd(r_ss.matrix);
  SchurPredictive<Scalar> out;
  out.m_tilde = factor.solve(Mat<Scalar>(r_us.matrix.transpose())).transpose();
  Mat<Scalar> w = r_uu.matrix;
  w.noalias() -= out.m_tilde * r_us.matrix.transpose();
  out.w_tilde = Scalar(0.5) * (w + w.transpose());

  std::vector<Index> match = coincident;
  if (match.empty()) {
    // Coincidence is read off the correlation: exp(-phi d) == 1 iff d == 0.
    match.assign(static_cast<std::size_t>(m), -1);
    const Scalar one_minus = Scalar(1) - static_cast<Scalar>(kCoincidenceDistance) * r_ss.phi;
    for (Index i = 0; i < m; ++i) {
      Index j;
      if (r_us.matrix.row(i).maxCoeff(&j) >= one_minus) match[static_cast<std::size_t>(i)] = j;
    }
  }
  for (Index i = 0; i < m; ++i) {
    const Index j = match[static_cast<std::size_t>(i)];
    if (j < 0) continue;
    out.m_tilde.row(i).setZero();
    out.m_tilde(i, j) = Scalar(1);
    out.w_tilde.row(i).setZero();
    out.w_tilde.col(i).setZero();
  }
  return out;
}

/// Index in `sites` of a location coinciding with each row of `targets`, or -1.
template <typename Scalar>
std::vector<Index> coincident_sites(const LocationSet<Scalar>& targets,
                                    const LocationSet<Scalar>& sites) {
  std::vector<Index> out(static_cast<std::size_t>(targets.size()), -1);
  for (Index i = 0; i < targets.size(); ++i)
    for (Index j = 0; j < sites.size(); ++j)
      if ((targets.coords.row(i) - sites.coords.row(j)).norm() < kCoincidenceDistance) {
        out[static_cast<std::size_t>(i)] = j;
        break;
      }
  return out;
}

}  // namespace dynbps

#endif  // DYNBPS_SPATIAL_HPP
