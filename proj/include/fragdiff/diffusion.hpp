// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "fragdiff/fragment.hpp"
#include "fragdiff/igso3.hpp"
#include "fragdiff/rng.hpp"
#include "fragdiff/types.hpp"

namespace fragdiff::diffusion {

/// Forward-process schedules on [0, 1]: a variance-preserving translation
/// schedule with linear beta(t) and a logarithmic rotation noise scale.
struct DiffusionSchedule {
  double beta_min = 0.1;
  double beta_max = 20.0;
  double sigma_min = 0.01;
  double sigma_max = 2.5;
};

/// beta(t) = beta_min + t (beta_max - beta_min).
double beta_t(const DiffusionSchedule& sched, double t);

/// alpha_t = exp(-1/2 int_0^t beta) in closed form.
double alpha_t(const DiffusionSchedule& sched, double t);

/// sigma(t) = log(t e^{sigma_max} + (1 - t) e^{sigma_min}).
double sigma_t(const DiffusionSchedule& sched, double t);

/// g(t) = d sigma^2 / dt = 2 sigma(t) sigma'(t), the rotational diffusion
/// coefficient.
double g_t(const DiffusionSchedule& sched, double t);

/// Score in the tangent space at z_t.  The rotational entry stores the
/// left-trivialized coefficient v of the tangent matrix R_i hat(v).
struct TangentScore {
  std::vector<Vec3> translation;
  std::vector<Vec3> rotation;

  std::size_t size() const { return translation.size(); }
};

/// Draws z_t from the forward kernel given z_0, independently per
/// fragment: p_t ~ Normal(alpha_t p_0, (1 - alpha_t^2) I) and
/// R_t ~ IGSO3(R_0, sigma(t)).  Per fragment the translation noise is
/// drawn before the rotation, so the stream layout is reproducible.
fragment::PoseState forward_sample(const DiffusionSchedule& sched,
                                   const igso3::Table& table,
                                   const fragment::PoseState& z0, double t,
                                   RandomStream& rng);

/// Exact conditional score of the forward kernel at z_t given z_0:
/// translational part -(p_t - alpha_t p_0)/(1 - alpha_t^2), rotational
/// coefficient log(R_0^T R_t) scaled by f0'/f0 over the angle.
TangentScore conditional_score(const DiffusionSchedule& sched,
                               const igso3::Table& table,
                               const fragment::PoseState& zt,
                               const fragment::PoseState& z0, double t);

/// Weighted score-matching objective
/// lambda_p(t) sum |dp|^2 + lambda_R(t) sum |dv|^2, where the rotational
/// norm is the canonical 1/2 tr(S S^T) metric (equal to |v|^2 for the
/// coefficient vector).
double score_matching_loss(const TangentScore& model,
                           const TangentScore& conditional, double t,
                           const DiffusionSchedule& sched,
                           const igso3::Table& table);

}  // namespace fragdiff::diffusion
