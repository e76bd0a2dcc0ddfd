// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#include "fragdiff/igso3.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include "fragdiff/liegroup.hpp"

namespace fragdiff::igso3 {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Beyond this exponent the series tail is below 1e-43 of the leading term.
constexpr double kExponentCutoff = 100.0;

// Entries whose series value is within this factor of the accumulated
// rounding noise are treated as pure cancellation noise (deep tail of a
// small-sigma density) and replaced by the Gaussian-tail continuation.
constexpr double kNoiseFactor = 1e3;

double haar_angle_density(double omega) {
  return (1.0 - std::cos(omega)) / kPi;
}

// Per-sigma series coefficients w[l] = (2l+1) exp(-l(l+1) sigma^2 / 2),
// truncated where the exponent passes the cutoff.
struct SigmaSeries {
  std::vector<double> w;
};

SigmaSeries make_sigma_series(double sigma, int l_max) {
  SigmaSeries s;
  s.w.reserve(64);
  const double half_sigma2 = 0.5 * sigma * sigma;
  for (int l = 0; l <= l_max; ++l) {
    const double exponent = l * (l + 1.0) * half_sigma2;
    if (exponent > kExponentCutoff) break;
    s.w.push_back((2.0 * l + 1.0) * std::exp(-exponent));
  }
  return s;
}

struct RawEval {
  double f0;
  double df0;
  double abs_f;   // sum of |terms| of f0, for the cancellation-noise bound
};

// Evaluates f0(omega) = sum_l w_l sin((l+1/2) omega) / sin(omega/2) and its
// derivative with three-term sine/cosine recurrences (step omega).
RawEval eval_series(const SigmaSeries& series, double omega) {
  const double sh = std::sin(0.5 * omega);
  const double ch = std::cos(0.5 * omega);
  const double half_cot = 0.5 * ch / sh;
  const double k = 2.0 * std::cos(omega);
  // s_l = sin((l+1/2) omega), c_l = cos((l+1/2) omega).
  double s_prev = -sh;  // l = -1
  double s_cur = sh;    // l = 0
  double c_prev = ch;   // l = -1
  double c_cur = ch;    // l = 0
  double f_sum = 0.0, d_sum = 0.0, abs_f = 0.0;
  const int n = static_cast<int>(series.w.size());
  for (int l = 0; l < n; ++l) {
    const double term = series.w[l] * s_cur;
    f_sum += term;
    abs_f += std::abs(term);
    // d/domega [s_l / sh] = [(l+1/2) c_l - (1/2) cot(omega/2) s_l] / sh.
    // Summed per term, and the l = 0 contribution (identically zero, since
    // s_0 = sin(omega/2)) is skipped outright: the near-uniform regime
    // (large sigma) then keeps its exponentially small derivative instead
    // of losing it to cancellation between two O(1) sums.
    if (l > 0) d_sum += series.w[l] * ((l + 0.5) * c_cur - half_cot * s_cur);
    const double s_next = k * s_cur - s_prev;
    const double c_next = k * c_cur - c_prev;
    s_prev = s_cur;
    s_cur = s_next;
    c_prev = c_cur;
    c_cur = c_next;
  }
  RawEval out;
  out.f0 = f_sum / sh;
  out.df0 = d_sum / sh;
  out.abs_f = abs_f / std::abs(sh);
  return out;
}

// Gaussian-tail score continuation used where the series is pure noise.
double gaussian_tail_score(double omega, double sigma) {
  return -omega / (sigma * sigma);
}

double trapezoid_mass(const Eigen::VectorXd& f, double h) {
  // Includes the virtual knot (omega = 0, f = 0) before the first entry.
  double mass = 0.5 * f(0) * h;
  for (int j = 0; j + 1 < f.size(); ++j) mass += 0.5 * (f(j) + f(j + 1)) * h;
  return mass;
}

void check_sigma_range(const Table& table, double sigma) {
  const double lo = table.params.sigma_min;
  const double hi = table.params.sigma_max;
  if (!(sigma >= lo * (1.0 - 1e-12)) || !(sigma <= hi * (1.0 + 1e-12)))
    throw OutOfRange(sigma, lo, hi);
}

// Fractional row index of sigma on the geometric grid.
double sigma_position(const Table& table, double sigma) {
  const int n = table.params.n_sigma;
  if (n == 1) return 0.0;
  const double lo = std::log(table.params.sigma_min);
  const double hi = std::log(table.params.sigma_max);
  const double x = (std::log(sigma) - lo) / (hi - lo) * (n - 1);
  return std::clamp(x, 0.0, static_cast<double>(n - 1));
}

// Linear interpolation along an omega row, with the virtual zero-valued
// knot at omega = 0.
double interp_row(const Eigen::MatrixXd& m, int row,
                  const Eigen::VectorXd& omega_grid, double omega) {
  const int n = static_cast<int>(omega_grid.size());
  const double h = omega_grid(0);  // uniform spacing; first knot is at h
  if (omega >= omega_grid(n - 1)) return m(row, n - 1);
  if (omega <= omega_grid(0)) {
    const double t = std::max(omega, 0.0) / h;
    return t * m(row, 0);
  }
  const int j = static_cast<int>(omega / h) - 1;  // knot j at (j+1) h
  const double t = omega / h - (j + 1);
  return (1.0 - t) * m(row, j) + t * m(row, j + 1);
}

double bilinear(const Table& table, const Eigen::MatrixXd& m, double omega,
                double sigma) {
  check_sigma_range(table, sigma);
  const double x = sigma_position(table, sigma);
  const int i = std::min(static_cast<int>(x), table.params.n_sigma - 2);
  const double w = std::clamp(x - i, 0.0, 1.0);
  const double lo = interp_row(m, i, table.omega_grid, omega);
  if (w == 0.0 || table.params.n_sigma == 1) return lo;
  const double hi = interp_row(m, i + 1, table.omega_grid, omega);
  return (1.0 - w) * lo + w * hi;
}

// CDF knot value at column j with rows i and i+1 blended by weight w.
double blended_cdf(const Table& table, int i, double w, int j) {
  const double lo = table.cdf(i, j);
  if (w == 0.0 || i + 1 >= table.params.n_sigma) return lo;
  return (1.0 - w) * lo + w * table.cdf(i + 1, j);
}

Vec3 uniform_axis(RandomStream& rng) { return rng.normal3().normalized(); }

}  // namespace

TruncationInsufficient::TruncationInsufficient(double neg_mass, double sigma)
    : NumericError([&] {
        std::ostringstream os;
        os << "series truncation insufficient: density row at sigma=" << sigma
           << " has negative mass " << neg_mass << " (below -1e-6); "
           << "increase the truncation level";
        return os.str();
      }()) {}

OutOfRange::OutOfRange(double sigma, double lo, double hi)
    : NumericError([&] {
        std::ostringstream os;
        os << "sigma=" << sigma << " outside tabulated range [" << lo << ", "
           << hi << "]";
        return os.str();
      }()) {}

Table build_table(const TableParams& params) {
  if (!(params.sigma_min > 0.0) || !(params.sigma_min < params.sigma_max))
    throw InputError("igso3: require 0 < sigma_min < sigma_max");
  if (params.n_omega < 512)
    throw InputError("igso3: require n_omega >= 512");
  if (params.n_sigma < 1 || params.l_max < 1)
    throw InputError("igso3: require n_sigma >= 1 and l_max >= 1");

  Table t;
  t.params = params;
  const int ns = params.n_sigma;
  const int nw = params.n_omega;
  const double h = kPi / nw;

  t.sigma_grid.resize(ns);
  const double log_lo = std::log(params.sigma_min);
  const double log_hi = std::log(params.sigma_max);
  for (int i = 0; i < ns; ++i) {
    const double f = ns == 1 ? 0.0 : static_cast<double>(i) / (ns - 1);
    t.sigma_grid(i) = std::exp(log_lo + f * (log_hi - log_lo));
  }
  t.sigma_grid(ns - 1) = params.sigma_max;  // exact endpoints
  t.sigma_grid(0) = params.sigma_min;

  t.omega_grid.resize(nw);
  for (int j = 0; j < nw; ++j) t.omega_grid(j) = (j + 1) * h;

  t.density.resize(ns, nw);
  t.cdf.resize(ns, nw);
  t.score_coeff.resize(ns, nw);
  t.loss_weight.resize(ns);

  const double eps = std::numeric_limits<double>::epsilon();
  for (int i = 0; i < ns; ++i) {
    const double sigma = t.sigma_grid(i);
    const SigmaSeries series = make_sigma_series(sigma, params.l_max);
    for (int j = 0; j < nw; ++j) {
      const double omega = t.omega_grid(j);
      const RawEval e = eval_series(series, omega);
      t.density(i, j) = haar_angle_density(omega) * e.f0;
      const bool noise = !(e.f0 > kNoiseFactor * eps * e.abs_f);
      t.score_coeff(i, j) =
          noise ? gaussian_tail_score(omega, sigma) : e.df0 / e.f0;
    }

    // Negative lobes signal an under-truncated series; noise-level dips are
    // clamped away.
    double neg_mass = 0.0;
    for (int j = 0; j < nw; ++j) {
      const double f = t.density(i, j);
      if (f < 0.0) neg_mass += f * h;
    }
    if (neg_mass < -1e-6) throw TruncationInsufficient(neg_mass, sigma);
    for (int j = 0; j < nw; ++j)
      t.density(i, j) = std::max(t.density(i, j), 0.0);

    const double mass = trapezoid_mass(t.density.row(i).transpose(), h);
    if (std::abs(mass - 1.0) > 1e-3) {
      std::ostringstream os;
      os << "igso3: density row at sigma=" << sigma << " integrates to "
         << mass << ", outside 1 +/- 1e-3";
      throw NumericError(os.str());
    }

    double run = 0.5 * t.density(i, 0) * h;  // from the virtual omega=0 knot
    t.cdf(i, 0) = run;
    for (int j = 1; j < nw; ++j) {
      run += 0.5 * (t.density(i, j - 1) + t.density(i, j)) * h;
      t.cdf(i, j) = run;
    }
    for (int j = 0; j < nw; ++j) t.cdf(i, j) /= run;
    t.cdf(i, nw - 1) = 1.0;

    // lambda_hat = E_f[c^2] by the same trapezoid quadrature (virtual knot
    // contributes zero: f -> 0 and c -> 0 at omega = 0).
    Eigen::VectorXd fc2 =
        (t.density.row(i).array() * t.score_coeff.row(i).array().square())
            .transpose();
    t.loss_weight(i) = trapezoid_mass(fc2, h) / mass;
  }
  return t;
}

Table build_table(double sigma_min, double sigma_max, int n_sigma,
                  int n_omega, int l_max) {
  TableParams p;
  p.sigma_min = sigma_min;
  p.sigma_max = sigma_max;
  p.n_sigma = n_sigma;
  p.n_omega = n_omega;
  p.l_max = l_max;
  return build_table(p);
}

double density(const Table& table, double omega, double sigma) {
  return bilinear(table, table.density, omega, sigma);
}

double score_coeff(const Table& table, double omega, double sigma) {
  return bilinear(table, table.score_coeff, omega, sigma);
}

double score_coeff_over_omega(const Table& table, double omega,
                              double sigma) {
  const double h = table.omega_grid(0);
  // Below the first knot c is interpolated linearly through the origin, so
  // the ratio is the constant c(h)/h; evaluating there avoids 0/0.
  const double at = std::max(omega, h);
  return score_coeff(table, at, sigma) / at;
}

double sample_angle(const Table& table, double sigma, RandomStream& rng) {
  check_sigma_range(table, sigma);
  const double u = rng.uniform();
  const double x = sigma_position(table, sigma);
  const int i = std::min(static_cast<int>(x), table.params.n_sigma - 2);
  const double w =
      table.params.n_sigma == 1 ? 0.0 : std::clamp(x - i, 0.0, 1.0);

  const int nw = table.params.n_omega;
  const double h = table.omega_grid(0);
  // Smallest knot j with blended cdf >= u.
  int lo = 0, hi = nw - 1;
  if (u <= blended_cdf(table, i, w, 0)) {
    hi = 0;
  } else {
    while (hi - lo > 1) {
      const int mid = (lo + hi) / 2;
      if (blended_cdf(table, i, w, mid) >= u)
        hi = mid;
      else
        lo = mid;
    }
  }
  const double c_hi = blended_cdf(table, i, w, hi);
  const double c_lo = hi == 0 ? 0.0 : blended_cdf(table, i, w, hi - 1);
  const double w_lo = hi == 0 ? 0.0 : table.omega_grid(hi - 1);
  const double span = c_hi - c_lo;
  const double frac = span > 0.0 ? (u - c_lo) / span : 0.5;
  return std::min(w_lo + frac * h, kPi);
}

Mat3 sample_igso3(const Table& table, const Mat3& R0, double sigma,
                  RandomStream& rng) {
  const double omega = sample_angle(table, sigma, rng);
  const Vec3 axis = uniform_axis(rng);
  return liegroup::exp_so3(omega * axis) * R0;
}

double uniform_angle_cdf(double omega) {
  return (omega - std::sin(omega)) / kPi;
}

double sample_uniform_angle(RandomStream& rng) {
  const double u = rng.uniform();
  // Invert (omega - sin omega)/pi by bisection-safeguarded Newton.
  double lo = 0.0, hi = kPi;
  double x = kPi * u;  // the CDF is below the diagonal, so start inside
  for (int iter = 0; iter < 100; ++iter) {
    const double g = x - std::sin(x) - kPi * u;
    if (g > 0.0)
      hi = x;
    else
      lo = x;
    const double dg = 1.0 - std::cos(x);
    double next = dg > 1e-12 ? x - g / dg : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) < 1e-13) return next;
    x = next;
  }
  return x;
}

Mat3 sample_uniform_so3(RandomStream& rng) {
  const double omega = sample_uniform_angle(rng);
  const Vec3 axis = uniform_axis(rng);
  return liegroup::exp_so3(omega * axis);
}

double loss_weight_rotation(const Table& table, double sigma, double c_r) {
  check_sigma_range(table, sigma);
  const double x = sigma_position(table, sigma);
  const int i = std::min(static_cast<int>(x), table.params.n_sigma - 2);
  const double w =
      table.params.n_sigma == 1 ? 0.0 : std::clamp(x - i, 0.0, 1.0);
  // lambda_hat varies smoothly in log sigma; interpolate the cached rows.
  double lam = table.loss_weight(i);
  if (w > 0.0 && i + 1 < table.params.n_sigma)
    lam = (1.0 - w) * lam + w * table.loss_weight(i + 1);
  return c_r / lam;
}

double loss_weight_translation(double alpha_t, double c_p) {
  return c_p * (1.0 - alpha_t * alpha_t);
}

SeriesEval series_f0(double omega, double sigma, int l_max) {
  const SigmaSeries s = make_sigma_series(sigma, l_max);
  const RawEval e = eval_series(s, omega);
  return SeriesEval{e.f0, e.df0, e.abs_f};
}

double series_density(double omega, double sigma, int l_max) {
  return haar_angle_density(omega) * series_f0(omega, sigma, l_max).f0;
}

double series_score_coeff(double omega, double sigma, int l_max) {
  const double eps = std::numeric_limits<double>::epsilon();
  const SeriesEval e = series_f0(omega, sigma, l_max);
  if (!(e.f0 > kNoiseFactor * eps * e.abs_sum))
    return gaussian_tail_score(omega, sigma);
  return e.df0 / e.f0;
}

double series_score_coeff_over_omega(double omega, double sigma, int l_max) {
  // The ratio has a finite limit at omega = 0 (c is odd in omega), so the
  // evaluation point is floored; the introduced error is O(omega^2).
  const double at = std::max(omega, 1e-4);
  return series_score_coeff(at, sigma, l_max) / at;
}

namespace {

constexpr std::uint32_t kCacheMagic = 0x46444947;  // "FDIG"
constexpr std::uint32_t kCacheVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool get(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return static_cast<bool>(is);
}

void put_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put(os, m(r, c));
}

bool get_matrix(std::istream& is, Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      if (!get(is, m(r, c))) return false;
  return true;
}

}  // namespace

void save_table(const Table& t, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("igso3: cannot open cache file for writing: " + path);
  put(os, kCacheMagic);
  put(os, kCacheVersion);
  put(os, t.params.sigma_min);
  put(os, t.params.sigma_max);
  put(os, static_cast<std::int32_t>(t.params.n_sigma));
  put(os, static_cast<std::int32_t>(t.params.n_omega));
  put(os, static_cast<std::int32_t>(t.params.l_max));
  for (Eigen::Index i = 0; i < t.sigma_grid.size(); ++i)
    put(os, t.sigma_grid(i));
  for (Eigen::Index j = 0; j < t.omega_grid.size(); ++j)
    put(os, t.omega_grid(j));
  put_matrix(os, t.density);
  put_matrix(os, t.cdf);
  put_matrix(os, t.score_coeff);
  for (Eigen::Index i = 0; i < t.loss_weight.size(); ++i)
    put(os, t.loss_weight(i));
  if (!os) throw InputError("igso3: failed writing cache file: " + path);
}

bool load_table(Table& t, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return false;
  std::uint32_t magic = 0, version = 0;
  if (!get(is, magic) || magic != kCacheMagic) return false;
  if (!get(is, version) || version != kCacheVersion) return false;
  TableParams p;
  std::int32_t ns = 0, nw = 0, lm = 0;
  if (!get(is, p.sigma_min) || !get(is, p.sigma_max) || !get(is, ns) ||
      !get(is, nw) || !get(is, lm))
    return false;
  p.n_sigma = ns;
  p.n_omega = nw;
  p.l_max = lm;
  if (ns < 1 || nw < 1) return false;

  Table loaded;
  loaded.params = p;
  loaded.sigma_grid.resize(ns);
  loaded.omega_grid.resize(nw);
  loaded.density.resize(ns, nw);
  loaded.cdf.resize(ns, nw);
  loaded.score_coeff.resize(ns, nw);
  loaded.loss_weight.resize(ns);
  for (int i = 0; i < ns; ++i)
    if (!get(is, loaded.sigma_grid(i))) return false;
  for (int j = 0; j < nw; ++j)
    if (!get(is, loaded.omega_grid(j))) return false;
  if (!get_matrix(is, loaded.density) || !get_matrix(is, loaded.cdf) ||
      !get_matrix(is, loaded.score_coeff))
    return false;
  for (int i = 0; i < ns; ++i)
    if (!get(is, loaded.loss_weight(i))) return false;
  t = std::move(loaded);
  return true;
}

Table load_or_build(const TableParams& params, const std::string& cache_path) {
  if (!cache_path.empty()) {
    Table t;
    if (load_table(t, cache_path) && t.params == params) return t;
  }
  Table t = build_table(params);
  if (!cache_path.empty()) {
    try {
      save_table(t, cache_path);
    } catch (const Error&) {
      // A read-only or missing cache directory is not an error.
    }
  }
  return t;
}

}  // namespace fragdiff::igso3
