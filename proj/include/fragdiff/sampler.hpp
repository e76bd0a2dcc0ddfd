// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fragdiff/diffusion.hpp"
#include "fragdiff/errors.hpp"
#include "fragdiff/fragment.hpp"
#include "fragdiff/igso3.hpp"
#include "fragdiff/liegroup.hpp"
#include "fragdiff/rng.hpp"
#include "fragdiff/scorehead.hpp"
#include "fragdiff/types.hpp"

namespace fragdiff::sampler {

/// Realized reverse-time discretization.  `times` has `n` knots, strictly
/// decreasing from `t_max` down to `t_min`; step k integrates from
/// `times[k]` to `times[k + 1]`.
struct TimeGrid {
  int n = 0;
  double t_min = 0.0;
  double t_max = 0.0;
  double rho = 0.0;
  std::vector<double> times;
};

/// Power-law interpolated grid
///   t_k = (t_max^{1/rho} + k/(n-1) (t_min^{1/rho} - t_max^{1/rho}))^rho.
/// rho = 1 gives uniform spacing; larger rho concentrates knots near
/// t_min.  Requires n >= 2, 0 < t_min < t_max and rho > 0.
TimeGrid karras_grid(int n, double t_min, double t_max, double rho);

/// Per-step noise amplitude schedule.  The gammas follow the same
/// power-law interpolation as the time grid and are matched index-wise to
/// its knots, so the largest gamma is applied at the largest t and the
/// amplitude anneals toward gamma_min as t approaches t_min.
struct AnnealSchedule {
  double gamma_min = 0.0;
  double gamma_max = 0.5;
  double rho_gamma = 2.0;
};

/// gamma_k for k = 0..n-1, aligned with the knots of a TimeGrid of the
/// same length.  Requires n >= 2, 0 <= gamma_min <= gamma_max and
/// rho_gamma > 0.
std::vector<double> anneal_gammas(const AnnealSchedule& anneal, int n);

/// One ancestral update of a fragment centroid from time t to t - dt:
///   p' = p + dt (beta(t)/2 p + beta(t) s_p) + gamma sqrt(dt beta(t)) n,
/// with n the supplied standard-normal draw.  Requires dt > 0 and
/// gamma >= 0.
Vec3 reverse_translation_update(const Vec3& p, const Vec3& score, double t,
                                double dt, double gamma,
                                const diffusion::DiffusionSchedule& sched,
                                const Vec3& noise);

/// As reverse_translation_update, drawing the noise from `rng`.
Vec3 reverse_translation_step(const Vec3& p, const Vec3& score, double t,
                              double dt, double gamma,
                              const diffusion::DiffusionSchedule& sched,
                              RandomStream& rng);

/// One ancestral update of a fragment orientation.  `score` is the
/// left-trivialized tangent coefficient v (the spatial tangent is
/// R hat(v)); the update walks along the group,
///   R' = R exp(hat(dt g(t) v + gamma sqrt(dt g(t)) n)),
/// and re-orthonormalizes only when the result drifts from SO(3) by more
/// than 1e-10.  Requires dt > 0 and gamma >= 0.
liegroup::Rotation reverse_rotation_update(
    const liegroup::Rotation& R, const Vec3& score, double t, double dt,
    double gamma, const diffusion::DiffusionSchedule& sched,
    const Vec3& noise);

/// As reverse_rotation_update, drawing the noise from `rng`.
liegroup::Rotation reverse_rotation_step(
    const liegroup::Rotation& R, const Vec3& score, double t, double dt,
    double gamma, const diffusion::DiffusionSchedule& sched,
    RandomStream& rng);

/// Supplier of every random draw one trajectory consumes.  The sampler
/// requests, in order: the prior translation then prior rotation for each
/// fragment, then for each step (outer) and fragment (inner) a translation
/// draw followed by a rotation draw.  Splitting this out lets tests feed a
/// second run transported copies of a first run's draws and check the
/// samplers' equivariances pathwise.
class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  virtual Vec3 prior_translation(int fragment) = 0;
  virtual liegroup::Rotation prior_rotation(int fragment) = 0;
  virtual Vec3 step_translation(int step, int fragment) = 0;
  virtual Vec3 step_rotation(int step, int fragment) = 0;
};

/// Production noise source: standard-normal and uniform-SO(3) draws from
/// one counter-derived stream, ignoring the index arguments.
class StreamNoise final : public NoiseSource {
 public:
  explicit StreamNoise(RandomStream& stream) : stream_(stream) {}

  Vec3 prior_translation(int) override { return stream_.normal3(); }
  liegroup::Rotation prior_rotation(int) override {
    return igso3::sample_uniform_so3(stream_);
  }
  Vec3 step_translation(int, int) override { return stream_.normal3(); }
  Vec3 step_rotation(int, int) override { return stream_.normal3(); }

 private:
  RandomStream& stream_;
};

/// Runs one reverse trajectory: draws the prior (p ~ Normal(0, I), R
/// uniform on SO(3), per fragment), then walks the grid from t_max to
/// t_min applying the annealed reverse updates, evaluating the model once
/// per step at the pre-update state.  Returns the pose at t_min in the
/// scaled frame.  Model outputs of the wrong arity raise InputError.
fragment::PoseState sample_trajectory(const scorehead::ScoreModel& model,
                                      const fragment::FragmentSet& fs,
                                      const scorehead::DockContext& ctx,
                                      const TimeGrid& grid,
                                      const AnnealSchedule& anneal,
                                      const diffusion::DiffusionSchedule& sched,
                                      NoiseSource& noise);

/// Outcome of one seed.  On success `state` holds the final pose in the
/// scaled frame and `coords` the assembled ligand coordinates mapped back
/// to angstroms; on failure `error` carries the message and the pose
/// members are empty.
struct SeedResult {
  int seed = 0;
  bool ok = false;
  std::string error;
  fragment::PoseState state;
  Coords coords;
  double wall_ms = 0.0;  ///< wall-clock time the trajectory took
};

struct SampleOptions {
  TimeGrid grid;
  AnnealSchedule anneal;
  int n_seeds = 3;
  std::uint64_t master_seed = 0;
  int workers = 1;
};

/// Draws `n_seeds` independent poses.  Each seed's stream is derived from
/// the master seed by counter (seed i uses derive_seed(master_seed,
/// 1 + i)), so results are bitwise reproducible for a fixed master seed
/// and independent of `workers`.  A NumericError or InputError raised
/// inside one trajectory marks only that seed failed; the others still
/// complete.
std::vector<SeedResult> sample(const scorehead::ScoreModel& model,
                               const fragment::FragmentSet& fs,
                               const scorehead::DockContext& ctx,
                               const diffusion::DiffusionSchedule& sched,
                               const SampleOptions& opts);

/// Maps angstrom coordinates into the pose frame of `ctx`:
/// (x - pocket_center)/scale, column-wise.
Coords to_internal(const Coords& x, const scorehead::DockContext& ctx);

/// Inverse of to_internal: x * scale + pocket_center.
Coords to_angstrom(const Coords& x, const scorehead::DockContext& ctx);

/// Builds a context from pocket atoms in angstroms.  The center is the
/// pocket centroid, optionally jittered by Normal(0, sigma_com^2 I) when
/// sigma_com > 0 and a stream is supplied; the stored pocket coordinates
/// are pre-scaled into the pose frame.  Requires at least one pocket atom
/// and scale > 0.
scorehead::DockContext make_context(const Coords& pocket, double scale = 2.7,
                                    double sigma_com = 0.0,
                                    RandomStream* rng = nullptr);

}  // namespace fragdiff::sampler
