// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include <doctest.h>

#include "fragdiff/diffusion.hpp"
#include "fragdiff/errors.hpp"
#include "fragdiff/fragment.hpp"
#include "fragdiff/igso3.hpp"
#include "fragdiff/liegroup.hpp"
#include "fragdiff/rng.hpp"
#include "fragdiff/types.hpp"
#include "support/oracles.hpp"

namespace {

using fragdiff::Mat3;
using fragdiff::RandomStream;
using fragdiff::Vec3;
namespace df = fragdiff::diffusion;
namespace fr = fragdiff::fragment;
namespace ig = fragdiff::igso3;
namespace lg = fragdiff::liegroup;

const ig::Table& default_table() {
  static const ig::Table table = ig::build_table();
  return table;
}

df::DiffusionSchedule default_schedule() { return df::DiffusionSchedule{}; }

fr::PoseState make_pose(const std::vector<Vec3>& ps,
                        const std::vector<Vec3>& axes) {
  fr::PoseState z;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    lg::RigidTransform x;
    x.p = ps[i];
    x.R = lg::exp_so3(axes[i]);
    z.transforms.push_back(x);
  }
  return z;
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("alpha_t closed form matches quadrature of beta") {
  const df::DiffusionSchedule sched = default_schedule();
  CHECK(df::alpha_t(sched, 0.0) == 1.0);

  df::DiffusionSchedule flat;
  flat.beta_min = flat.beta_max = 1.0;
  CHECK(df::alpha_t(flat, 1.0) ==
        doctest::Approx(std::exp(-0.5)).epsilon(1e-14));

  // Composite trapezoid integrates the linear beta exactly, so this pins
  // the closed-form algebra independently.
  for (int i = 1; i <= 100; ++i) {
    const double t = i / 100.0;
    const int n = 2000;
    double integral = 0.0;
    for (int j = 0; j < n; ++j) {
      const double a = t * j / n;
      const double b = t * (j + 1) / n;
      integral += 0.5 * (df::beta_t(sched, a) + df::beta_t(sched, b)) * (b - a);
    }
    CHECK(std::abs(df::alpha_t(sched, t) - std::exp(-0.5 * integral)) < 1e-10);
  }
}

TEST_CASE("schedule endpoints, monotonicity, and positivity") {
  const df::DiffusionSchedule sched = default_schedule();
  CHECK(df::sigma_t(sched, 0.0) ==
        doctest::Approx(sched.sigma_min).epsilon(1e-12));
  CHECK(df::sigma_t(sched, 1.0) ==
        doctest::Approx(sched.sigma_max).epsilon(1e-12));

  double prev_sigma = df::sigma_t(sched, 0.0);
  double prev_alpha = df::alpha_t(sched, 0.0);
  for (int i = 1; i <= 200; ++i) {
    const double t = i / 200.0;
    const double s = df::sigma_t(sched, t);
    const double a = df::alpha_t(sched, t);
    CHECK(s > prev_sigma);
    CHECK(a < prev_alpha);
    CHECK(a > 0.0);
    CHECK(df::beta_t(sched, t) > 0.0);
    CHECK(df::g_t(sched, t) > 0.0);
    prev_sigma = s;
    prev_alpha = a;
  }
}

TEST_CASE("g_t matches a central difference of sigma squared") {
  const df::DiffusionSchedule sched = default_schedule();
  const double h = 1e-6;
  for (double t : {0.05, 0.2, 0.5, 0.8, 0.95}) {
    const double sp = df::sigma_t(sched, t + h);
    const double sm = df::sigma_t(sched, t - h);
    const double fd = (sp * sp - sm * sm) / (2.0 * h);
    CHECK(df::g_t(sched, t) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("schedule and time validation") {
  const df::DiffusionSchedule sched = default_schedule();
  CHECK_THROWS_AS(df::alpha_t(sched, -0.1), fragdiff::InputError);
  CHECK_THROWS_AS(df::sigma_t(sched, 1.1), fragdiff::InputError);
  df::DiffusionSchedule bad = sched;
  bad.sigma_max = bad.sigma_min;
  CHECK_THROWS_AS(df::sigma_t(bad, 0.5), fragdiff::InputError);

  RandomStream rng(1);
  const fr::PoseState z0 = make_pose({Vec3::Zero()}, {Vec3::Zero()});
  CHECK_THROWS_AS(
      df::forward_sample(sched, default_table(), z0, 0.0, rng),
      fragdiff::InputError);
  CHECK_THROWS_AS(df::conditional_score(sched, default_table(), z0,
                                        make_pose({}, {}), 0.5),
                  fragdiff::InputError);
}

TEST_CASE("forward samples stay near the start for small t") {
  const df::DiffusionSchedule sched = default_schedule();
  const fr::PoseState z0 =
      make_pose({Vec3(1.0, -0.5, 0.3)}, {Vec3(0.2, 0.1, -0.4)});
  RandomStream rng(21);
  for (int i = 0; i < 50; ++i) {
    const fr::PoseState zt =
        df::forward_sample(sched, default_table(), z0, 1e-4, rng);
    CHECK((zt.transforms[0].p - z0.transforms[0].p).norm() < 0.1);
    CHECK(lg::geodesic_angle(z0.transforms[0].R.transpose() *
                             zt.transforms[0].R) < 0.1);
  }
}

TEST_CASE("translational covariance matches the VP kernel") {
  const df::DiffusionSchedule sched = default_schedule();
  const Vec3 p0(0.3, -0.2, 0.5);
  const fr::PoseState z0 = make_pose({p0}, {Vec3(0.1, 0.0, 0.0)});

  for (double t : {0.3, 1.0}) {
    const double alpha = df::alpha_t(sched, t);
    const double var = 1.0 - alpha * alpha;
    RandomStream rng(97);
    const int n = 10000;
    Eigen::Matrix3Xd samples(3, n);
    for (int i = 0; i < n; ++i)
      samples.col(i) =
          df::forward_sample(sched, default_table(), z0, t, rng)
              .transforms[0]
              .p;
    const Vec3 mean = samples.rowwise().mean();
    CHECK((mean - alpha * p0).norm() < 5.0 * std::sqrt(var / n) * 3.0);
    const Eigen::Matrix3d cov =
        (samples.colwise() - mean) *
        (samples.colwise() - mean).transpose() / (n - 1);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        const double want = (r == c) ? var : 0.0;
        CHECK(std::abs(cov(r, c) - want) < 0.05 * var);
      }
  }
}

TEST_CASE("fragments are noised independently") {
  const df::DiffusionSchedule sched = default_schedule();
  const fr::PoseState z0 = make_pose({Vec3(0.5, 0.0, 0.0), Vec3(-0.5, 0.0, 0.0)},
                                     {Vec3::Zero(), Vec3(0.0, 0.3, 0.0)});
  RandomStream rng(55);
  const int n = 4000;
  std::vector<double> a(n), b(n);
  for (int i = 0; i < n; ++i) {
    const fr::PoseState zt =
        df::forward_sample(sched, default_table(), z0, 0.7, rng);
    a[i] = zt.transforms[0].p.x();
    b[i] = zt.transforms[1].p.x();
  }
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (int i = 0; i < n; ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  CHECK(std::abs(cov / std::sqrt(va * vb)) < 3.0 / std::sqrt(double(n)));
}

TEST_CASE("t = 1 marginals reach the stationary laws") {
  const df::DiffusionSchedule sched = default_schedule();
  const fr::PoseState z0 =
      make_pose({Vec3(0.4, -1.0, 0.2)}, {Vec3(0.9, -0.3, 1.2)});
  RandomStream rng(131);
  const int n = 20000;
  std::vector<std::vector<double>> coords(3, std::vector<double>(n));
  std::vector<double> angles(n);
  for (int i = 0; i < n; ++i) {
    const fr::PoseState zt =
        df::forward_sample(sched, default_table(), z0, 1.0, rng);
    for (int r = 0; r < 3; ++r) coords[r][i] = zt.transforms[0].p(r);
    angles[i] = lg::geodesic_angle(zt.transforms[0].R);
  }
  for (int r = 0; r < 3; ++r)
    CHECK(testsupport::ks_statistic(coords[r], std_normal_cdf) < 0.02);
  CHECK(testsupport::ks_statistic(angles, ig::uniform_angle_cdf) < 0.02);
}

TEST_CASE("conditional score at the start pose for small t") {
  // At z_t = z_0 the rotational score is exactly zero.  The translational
  // kernel mean is alpha p_0, so the score there is -p_0/(1 + alpha):
  // bounded, and negligible against the 1/sqrt(1 - alpha^2) magnitude of
  // typical small-t scores.
  const df::DiffusionSchedule sched = default_schedule();
  const double t = 0.01;
  const Vec3 p0(0.2, 0.1, -0.7);
  const fr::PoseState z0 = make_pose({p0}, {Vec3(0.3, -0.2, 0.5)});
  const df::TangentScore s =
      df::conditional_score(sched, default_table(), z0, z0, t);
  CHECK(s.rotation[0].norm() == 0.0);

  const double alpha = df::alpha_t(sched, t);
  CHECK((s.translation[0] + p0 / (1.0 + alpha)).norm() < 1e-12);
  const double typical = std::sqrt(3.0 / (1.0 - alpha * alpha));
  CHECK(s.translation[0].norm() < 0.02 * typical);

  // At the kernel mean the translational score is exactly zero.
  fr::PoseState zmean = z0;
  zmean.transforms[0].p = alpha * p0;
  const df::TangentScore sm =
      df::conditional_score(sched, default_table(), zmean, z0, t);
  CHECK(sm.translation[0].norm() == 0.0);
}

TEST_CASE("translational score matches the Gaussian log-density slope") {
  const df::DiffusionSchedule sched = default_schedule();
  const double t = 0.4;
  const double alpha = df::alpha_t(sched, t);
  const double var = 1.0 - alpha * alpha;
  const Vec3 p0(0.6, -0.1, 0.9);
  const Vec3 pt(0.1, 0.4, 0.5);
  const df::TangentScore s = df::conditional_score(
      sched, default_table(), make_pose({pt}, {Vec3::Zero()}),
      make_pose({p0}, {Vec3::Zero()}), t);

  const double h = 1e-5;
  for (int r = 0; r < 3; ++r) {
    auto logpdf = [&](double x) {
      const double d = x - alpha * p0(r);
      return -0.5 * d * d / var;
    };
    const double fd = (logpdf(pt(r) + h) - logpdf(pt(r) - h)) / (2.0 * h);
    CHECK(s.translation[0](r) == doctest::Approx(fd).epsilon(1e-8));
  }
}

TEST_CASE("rotational score matches directional derivatives of the series") {
  const df::DiffusionSchedule sched = default_schedule();
  const ig::Table& table = default_table();
  const Mat3 r0 = lg::exp_so3(Vec3(0.4, -0.7, 0.2));

  for (double sigma : {0.3, 0.8, 1.5}) {
    // Pick t so that sigma(t) = sigma: invert the log schedule.
    const double t = (std::exp(sigma) - std::exp(sched.sigma_min)) /
                     (std::exp(sched.sigma_max) - std::exp(sched.sigma_min));
    REQUIRE(df::sigma_t(sched, t) == doctest::Approx(sigma).epsilon(1e-12));
    for (double omega : {0.4, 1.2}) {
      const Vec3 axis = Vec3(1.0, 2.0, -0.5).normalized();
      const Mat3 rt = r0 * lg::exp_so3(omega * axis);

      fr::PoseState z0 = make_pose({Vec3::Zero()}, {Vec3::Zero()});
      z0.transforms[0].R = r0;
      fr::PoseState zt = z0;
      zt.transforms[0].R = rt;
      const Vec3 v =
          df::conditional_score(sched, table, zt, z0, t).rotation[0];

      const double eps = 1e-5;
      for (int i = 0; i < 3; ++i) {
        Vec3 e = Vec3::Zero();
        e(i) = 1.0;
        auto logf = [&](double x) {
          const Mat3 q = r0.transpose() * rt * lg::exp_so3(x * e);
          return std::log(
              ig::series_f0(lg::geodesic_angle(q), sigma).f0);
        };
        const double fd = (logf(eps) - logf(-eps)) / (2.0 * eps);
        CHECK(v(i) == doctest::Approx(fd).epsilon(1e-2));
      }
    }
  }
}

TEST_CASE("conditional score is covariant under a global frame rotation") {
  const df::DiffusionSchedule sched = default_schedule();
  const ig::Table& table = default_table();
  const fr::PoseState z0 = make_pose(
      {Vec3(0.3, 0.2, -0.1), Vec3(-0.6, 0.4, 0.8)},
      {Vec3(0.2, -0.5, 0.9), Vec3(1.0, 0.0, -0.3)});
  const fr::PoseState zt = make_pose(
      {Vec3(0.9, -0.4, 0.2), Vec3(0.1, 0.5, -0.2)},
      {Vec3(0.5, 0.1, 0.7), Vec3(-0.4, 0.8, 0.2)});
  const double t = 0.6;

  const Mat3 frame = lg::exp_so3(Vec3(-0.8, 0.33, 1.7));
  fr::PoseState z0r = z0, ztr = zt;
  for (std::size_t i = 0; i < z0.size(); ++i) {
    z0r.transforms[i].p = frame * z0.transforms[i].p;
    z0r.transforms[i].R = frame * z0.transforms[i].R;
    ztr.transforms[i].p = frame * zt.transforms[i].p;
    ztr.transforms[i].R = frame * zt.transforms[i].R;
  }

  const df::TangentScore s = df::conditional_score(sched, table, zt, z0, t);
  const df::TangentScore sr =
      df::conditional_score(sched, table, ztr, z0r, t);
  for (std::size_t i = 0; i < z0.size(); ++i) {
    CHECK((sr.translation[i] - frame * s.translation[i]).norm() < 1e-10);
    // Left-trivialized coefficients are invariant; the tangent matrices
    // map by the left action.
    CHECK((sr.rotation[i] - s.rotation[i]).norm() < 1e-10);
    const Mat3 tangent = zt.transforms[i].R * lg::hat(s.rotation[i]);
    const Mat3 tangent_r = ztr.transforms[i].R * lg::hat(sr.rotation[i]);
    CHECK((tangent_r - frame * tangent).norm() < 1e-10);
  }
}

TEST_CASE("score matching loss: zero at match, quadratic scaling, metric") {
  const df::DiffusionSchedule sched = default_schedule();
  const ig::Table& table = default_table();
  const double t = 0.5;

  df::TangentScore cond;
  cond.translation = {Vec3(0.1, -0.2, 0.3), Vec3(0.0, 0.5, -0.1)};
  cond.rotation = {Vec3(-0.4, 0.2, 0.6), Vec3(0.3, 0.3, -0.2)};
  CHECK(df::score_matching_loss(cond, cond, t, sched, table) == 0.0);

  df::TangentScore model = cond;
  const Vec3 dp(0.05, -0.02, 0.01);
  const Vec3 dv(-0.03, 0.04, 0.02);
  model.translation[0] += dp;
  model.rotation[1] += dv;
  const double l1 = df::score_matching_loss(model, cond, t, sched, table);

  df::TangentScore model2 = cond;
  model2.translation[0] += 2.0 * dp;
  model2.rotation[1] += 2.0 * dv;
  const double l2 = df::score_matching_loss(model2, cond, t, sched, table);
  CHECK(l2 == doctest::Approx(4.0 * l1).epsilon(1e-12));

  // Hand-assembled weighted form.
  const double alpha = df::alpha_t(sched, t);
  const double sigma = df::sigma_t(sched, t);
  const double expect =
      ig::loss_weight_translation(alpha) * dp.squaredNorm() +
      ig::loss_weight_rotation(table, sigma) * dv.squaredNorm();
  CHECK(l1 == doctest::Approx(expect).epsilon(1e-12));

  // Canonical metric: 1/2 tr(S S^T) for S = R hat(v) equals |v|^2.
  const Mat3 r = lg::exp_so3(Vec3(0.7, -0.1, 0.4));
  const Mat3 s_mat = r * lg::hat(dv);
  CHECK(lg::so3_inner(s_mat, s_mat) ==
        doctest::Approx(dv.squaredNorm()).epsilon(1e-12));

  df::TangentScore short_model = model;
  short_model.translation.pop_back();
  short_model.rotation.pop_back();
  CHECK_THROWS_AS(
      df::score_matching_loss(short_model, cond, t, sched, table),
      fragdiff::InputError);
}
