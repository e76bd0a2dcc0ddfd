// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#include "fragdiff/diffusion.hpp"

#include <cmath>
#include <string>

#include "fragdiff/errors.hpp"
#include "fragdiff/liegroup.hpp"

namespace fragdiff::diffusion {
namespace {

void check_schedule(const DiffusionSchedule& s) {
  if (!(s.beta_min > 0.0) || !(s.beta_max >= s.beta_min))
    throw InputError("beta schedule requires 0 < beta_min <= beta_max");
  if (!(s.sigma_min > 0.0) || !(s.sigma_max > s.sigma_min))
    throw InputError("sigma schedule requires 0 < sigma_min < sigma_max");
}

void check_unit_interval(double t, bool exclude_zero) {
  if (!(t >= 0.0) || t > 1.0 || (exclude_zero && t == 0.0))
    throw InputError("diffusion time t = " + std::to_string(t) +
                     " outside " + (exclude_zero ? "(0, 1]" : "[0, 1]"));
}

}  // namespace

double beta_t(const DiffusionSchedule& sched, double t) {
  check_schedule(sched);
  check_unit_interval(t, false);
  return sched.beta_min + t * (sched.beta_max - sched.beta_min);
}

double alpha_t(const DiffusionSchedule& sched, double t) {
  check_schedule(sched);
  check_unit_interval(t, false);
  const double integral =
      sched.beta_min * t + 0.5 * t * t * (sched.beta_max - sched.beta_min);
  return std::exp(-0.5 * integral);
}

double sigma_t(const DiffusionSchedule& sched, double t) {
  check_schedule(sched);
  check_unit_interval(t, false);
  return std::log(t * std::exp(sched.sigma_max) +
                  (1.0 - t) * std::exp(sched.sigma_min));
}

double g_t(const DiffusionSchedule& sched, double t) {
  check_schedule(sched);
  check_unit_interval(t, false);
  const double hi = std::exp(sched.sigma_max);
  const double lo = std::exp(sched.sigma_min);
  const double denom = t * hi + (1.0 - t) * lo;
  const double dsigma = (hi - lo) / denom;
  return 2.0 * std::log(denom) * dsigma;
}

fragment::PoseState forward_sample(const DiffusionSchedule& sched,
                                   const igso3::Table& table,
                                   const fragment::PoseState& z0, double t,
                                   RandomStream& rng) {
  check_unit_interval(t, true);
  const double alpha = alpha_t(sched, t);
  const double trans_sd = std::sqrt(1.0 - alpha * alpha);
  const double sigma = sigma_t(sched, t);

  fragment::PoseState zt;
  zt.transforms.reserve(z0.size());
  for (const liegroup::RigidTransform& x0 : z0.transforms) {
    liegroup::RigidTransform xt;
    xt.p = alpha * x0.p + trans_sd * rng.normal3();
    xt.R = igso3::sample_igso3(table, x0.R, sigma, rng);
    zt.transforms.push_back(xt);
  }
  return zt;
}

TangentScore conditional_score(const DiffusionSchedule& sched,
                               const igso3::Table& table,
                               const fragment::PoseState& zt,
                               const fragment::PoseState& z0, double t) {
  check_unit_interval(t, true);
  if (zt.size() != z0.size())
    throw InputError("conditional_score: pose states of size " +
                     std::to_string(zt.size()) + " and " +
                     std::to_string(z0.size()));
  const double alpha = alpha_t(sched, t);
  const double var = 1.0 - alpha * alpha;
  const double sigma = sigma_t(sched, t);

  TangentScore s;
  s.translation.reserve(zt.size());
  s.rotation.reserve(zt.size());
  for (std::size_t i = 0; i < zt.size(); ++i) {
    const liegroup::RigidTransform& x0 = z0.transforms[i];
    const liegroup::RigidTransform& xt = zt.transforms[i];
    s.translation.push_back(-(xt.p - alpha * x0.p) / var);

    const Vec3 delta = liegroup::log_so3(x0.R.transpose() * xt.R);
    const double omega = delta.norm();
    s.rotation.push_back(igso3::score_coeff_over_omega(table, omega, sigma) *
                         delta);
  }
  return s;
}

double score_matching_loss(const TangentScore& model,
                           const TangentScore& conditional, double t,
                           const DiffusionSchedule& sched,
                           const igso3::Table& table) {
  if (model.size() != conditional.size() ||
      model.rotation.size() != model.size() ||
      conditional.rotation.size() != conditional.size())
    throw InputError("score_matching_loss: fragment count mismatch");
  const double alpha = alpha_t(sched, t);
  const double sigma = sigma_t(sched, t);
  const double lambda_p = igso3::loss_weight_translation(alpha);
  const double lambda_r = igso3::loss_weight_rotation(table, sigma);

  double trans = 0.0;
  double rot = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    trans += (model.translation[i] - conditional.translation[i]).squaredNorm();
    // 1/2 tr(S S^T) for S = R hat(dv) collapses to |dv|^2.
    rot += (model.rotation[i] - conditional.rotation[i]).squaredNorm();
  }
  return lambda_p * trans + lambda_r * rot;
}

}  // namespace fragdiff::diffusion
