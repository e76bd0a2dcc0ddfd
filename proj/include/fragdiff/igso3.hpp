// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include <Eigen/Dense>

#include "fragdiff/errors.hpp"
#include "fragdiff/rng.hpp"
#include "fragdiff/types.hpp"

namespace fragdiff::igso3 {

/// Build parameters for the cached IGSO(3) table.  The sigma grid is
/// geometric (log-uniform) on [sigma_min, sigma_max]; the omega grid is
/// uniform on (0, pi] with n_omega points; the series is truncated at l_max
/// terms (with an additional early break once the exponential decay factor
/// makes the remaining tail negligible).
struct TableParams {
  double sigma_min = 0.01;
  double sigma_max = 10.0;
  int n_sigma = 256;
  int n_omega = 2048;
  int l_max = 2000;

  friend bool operator==(const TableParams&, const TableParams&) = default;
};

/// Thrown by build_table when a density row carries negative mass below
/// -1e-6, i.e. the series truncation is too aggressive for the smallest
/// sigma in the table.
class TruncationInsufficient : public NumericError {
 public:
  TruncationInsufficient(double neg_mass, double sigma);
};

/// Thrown by table lookups when sigma falls outside the tabulated range.
class OutOfRange : public NumericError {
 public:
  OutOfRange(double sigma, double lo, double hi);
};

/// Cached isotropic Gaussian on SO(3).
///
/// Rows index sigma, columns index omega.  `density` holds the angle
/// density f(omega, sigma) (with respect to domega, including the Haar
/// angle factor p(omega) = (1 - cos omega)/pi); each row integrates to
/// 1 +/- 1e-3 by the trapezoid rule.  `cdf` is the trapezoid cumulative of
/// the density, renormalized so every row ends at exactly 1.  `score_coeff`
/// holds c(omega, sigma) = d/domega log f0, where f0 = f/p is the density on
/// the group with respect to Haar measure.  `loss_weight` holds
/// lambda_hat(sigma) = E_{omega~f}[c^2], the expected squared norm of the
/// conditional rotational score.
struct Table {
  TableParams params;
  Eigen::VectorXd sigma_grid;
  Eigen::VectorXd omega_grid;
  Eigen::MatrixXd density;
  Eigen::MatrixXd cdf;
  Eigen::MatrixXd score_coeff;
  Eigen::VectorXd loss_weight;
};

Table build_table(const TableParams& params = {});
Table build_table(double sigma_min, double sigma_max, int n_sigma,
                  int n_omega, int l_max);

/// Bilinear interpolation in (omega, log sigma).  Below the first omega
/// knot the table is extended with the exact limit values f -> 0 and
/// c -> 0 at omega = 0.  Throws OutOfRange for sigma outside the table.
double density(const Table& table, double omega, double sigma);
double score_coeff(const Table& table, double omega, double sigma);

/// c(omega, sigma)/omega, evaluated stably: below the first omega knot the
/// ratio is held at its knot value (c is linear through the origin there).
double score_coeff_over_omega(const Table& table, double omega, double sigma);

/// Inverse-transform sample of the angle density at sigma (CDF rows of the
/// two bracketing grid sigmas are blended linearly in log sigma, which
/// inverts exactly the interpolated density).  Consumes one uniform draw.
double sample_angle(const Table& table, double sigma, RandomStream& rng);

/// IGSO(3) perturbation of R0: R = exp([omega u]_x) R0 with omega from
/// sample_angle and u uniform on the sphere.  Consumes one uniform draw
/// followed by three normal draws.
Mat3 sample_igso3(const Table& table, const Mat3& R0, double sigma,
                  RandomStream& rng);

/// Haar-distributed rotation: angle from p(omega) = (1 - cos omega)/pi by
/// inverse transform, axis uniform.  Same draw discipline as sample_igso3.
Mat3 sample_uniform_so3(RandomStream& rng);

/// CDF of the Haar angle density, (omega - sin omega)/pi on [0, pi].
double uniform_angle_cdf(double omega);

/// Inverse of uniform_angle_cdf at a fresh uniform draw.
double sample_uniform_angle(RandomStream& rng);

/// Rotational loss weight c_r / lambda_hat(sigma) with lambda_hat from the
/// table (quadrature over the omega grid).
double loss_weight_rotation(const Table& table, double sigma,
                            double c_r = 1.0);

/// Translational loss weight c_p * (1 - alpha_t^2), the reciprocal of the
/// expected squared norm of the conditional translational score per axis.
double loss_weight_translation(double alpha_t, double c_p = 1.0);

/// Direct truncated-series evaluation, independent of any table.  f0 is the
/// density with respect to Haar measure; df0 its omega derivative; abs_sum
/// bounds the accumulated cancellation noise (sum of absolute term values
/// for f0).
struct SeriesEval {
  double f0;
  double df0;
  double abs_sum;
};
SeriesEval series_f0(double omega, double sigma, int l_max = 2000);
double series_density(double omega, double sigma, int l_max = 2000);
double series_score_coeff(double omega, double sigma, int l_max = 2000);
double series_score_coeff_over_omega(double omega, double sigma,
                                     int l_max = 2000);

/// Binary cache with a version header; load_table returns false when the
/// file is missing, malformed, or was built with different parameters.
void save_table(const Table& table, const std::string& path);
bool load_table(Table& table, const std::string& path);

/// Loads the cache at `cache_path` if it matches `params`, otherwise builds
/// the table (and tries to refresh the cache; failures to write are
/// ignored).  An empty path disables caching.
Table load_or_build(const TableParams& params, const std::string& cache_path);

}  // namespace fragdiff::igso3
