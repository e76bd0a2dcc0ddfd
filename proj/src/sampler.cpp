// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#include "fragdiff/sampler.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <thread>
#include <utility>

#include "fragdiff/liegroup.hpp"

namespace fragdiff::sampler {

namespace {

constexpr double kDriftTol = 1e-10;

/// Shared power-law interpolation between two nonnegative endpoints.
std::vector<double> power_knots(int n, double lo, double hi, double rho) {
  const double hi_r = std::pow(hi, 1.0 / rho);
  const double lo_r = std::pow(lo, 1.0 / rho);
  std::vector<double> knots(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double frac = static_cast<double>(k) / static_cast<double>(n - 1);
    knots[static_cast<std::size_t>(k)] =
        std::pow(hi_r + frac * (lo_r - hi_r), rho);
  }
  // Pin the endpoints so round trips through pow cannot shave the
  // boundary values.
  knots.front() = hi;
  knots.back() = lo;
  return knots;
}

void check_step_args(double dt, double gamma) {
  if (!(dt > 0.0)) {
    throw InputError("reverse step requires dt > 0");
  }
  if (!(gamma >= 0.0)) {
    throw InputError("reverse step requires gamma >= 0");
  }
}

/// Run-level argument checks shared by sample() and sample_trajectory();
/// these throw to the caller instead of failing individual seeds.
void check_run_inputs(const fragment::FragmentSet& fs,
                      const scorehead::DockContext& ctx,
                      const TimeGrid& grid) {
  if (fs.m() < 1) {
    throw InputError("fragment set is empty");
  }
  if (grid.n < 2 || grid.times.size() != static_cast<std::size_t>(grid.n)) {
    throw InputError("time grid is inconsistent");
  }
  for (std::size_t k = 1; k < grid.times.size(); ++k) {
    if (!(grid.times[k] < grid.times[k - 1])) {
      throw InputError("time grid must be strictly decreasing");
    }
  }
  scorehead::check_context(ctx);
}

}  // namespace

TimeGrid karras_grid(int n, double t_min, double t_max, double rho) {
  if (n < 2) {
    throw InputError("time grid needs at least two knots");
  }
  if (!(t_min > 0.0) || !(t_min < t_max)) {
    throw InputError("time grid requires 0 < t_min < t_max");
  }
  if (!(rho > 0.0)) {
    throw InputError("time grid requires rho > 0");
  }
  TimeGrid grid;
  grid.n = n;
  grid.t_min = t_min;
  grid.t_max = t_max;
  grid.rho = rho;
  grid.times = power_knots(n, t_min, t_max, rho);
  return grid;
}

std::vector<double> anneal_gammas(const AnnealSchedule& anneal, int n) {
  if (n < 2) {
    throw InputError("anneal schedule needs at least two knots");
  }
  if (!(anneal.gamma_min >= 0.0) || !(anneal.gamma_max >= anneal.gamma_min)) {
    throw InputError("anneal schedule requires 0 <= gamma_min <= gamma_max");
  }
  if (!(anneal.rho_gamma > 0.0)) {
    throw InputError("anneal schedule requires rho_gamma > 0");
  }
  if (anneal.gamma_max == anneal.gamma_min) {
    return std::vector<double>(static_cast<std::size_t>(n), anneal.gamma_min);
  }
  return power_knots(n, anneal.gamma_min, anneal.gamma_max, anneal.rho_gamma);
}

Vec3 reverse_translation_update(const Vec3& p, const Vec3& score, double t,
                                double dt, double gamma,
                                const diffusion::DiffusionSchedule& sched,
                                const Vec3& noise) {
  check_step_args(dt, gamma);
  const double beta = diffusion::beta_t(sched, t);
  return p + dt * (0.5 * beta * p + beta * score) +
         gamma * std::sqrt(dt * beta) * noise;
}

Vec3 reverse_translation_step(const Vec3& p, const Vec3& score, double t,
                              double dt, double gamma,
                              const diffusion::DiffusionSchedule& sched,
                              RandomStream& rng) {
  return reverse_translation_update(p, score, t, dt, gamma, sched,
                                    rng.normal3());
}

liegroup::Rotation reverse_rotation_update(
    const liegroup::Rotation& R, const Vec3& score, double t, double dt,
    double gamma, const diffusion::DiffusionSchedule& sched,
    const Vec3& noise) {
  check_step_args(dt, gamma);
  const double g = diffusion::g_t(sched, t);
  const Vec3 delta = dt * g * score + gamma * std::sqrt(dt * g) * noise;
  return liegroup::renormalize(R * liegroup::exp_so3(delta), kDriftTol);
}

liegroup::Rotation reverse_rotation_step(
    const liegroup::Rotation& R, const Vec3& score, double t, double dt,
    double gamma, const diffusion::DiffusionSchedule& sched,
    RandomStream& rng) {
  return reverse_rotation_update(R, score, t, dt, gamma, sched, rng.normal3());
}

fragment::PoseState sample_trajectory(const scorehead::ScoreModel& model,
                                      const fragment::FragmentSet& fs,
                                      const scorehead::DockContext& ctx,
                                      const TimeGrid& grid,
                                      const AnnealSchedule& anneal,
                                      const diffusion::DiffusionSchedule& sched,
                                      NoiseSource& noise) {
  check_run_inputs(fs, ctx, grid);
  const int m = fs.m();
  const std::vector<double> gammas = anneal_gammas(anneal, grid.n);

  fragment::PoseState z;
  z.transforms.resize(static_cast<std::size_t>(m));
  for (int f = 0; f < m; ++f) {
    z.transforms[static_cast<std::size_t>(f)].p = noise.prior_translation(f);
    z.transforms[static_cast<std::size_t>(f)].R = noise.prior_rotation(f);
  }

  for (int k = 0; k + 1 < grid.n; ++k) {
    const double t = grid.times[static_cast<std::size_t>(k)];
    const double dt = t - grid.times[static_cast<std::size_t>(k) + 1];
    const double gamma = gammas[static_cast<std::size_t>(k)];
    const diffusion::TangentScore s = model(z, t, fs, ctx);
    if (s.translation.size() != static_cast<std::size_t>(m) ||
        s.rotation.size() != static_cast<std::size_t>(m)) {
      throw InputError("score model returned the wrong fragment count");
    }
    for (int f = 0; f < m; ++f) {
      auto& tf = z.transforms[static_cast<std::size_t>(f)];
      tf.p = reverse_translation_update(
          tf.p, s.translation[static_cast<std::size_t>(f)], t, dt, gamma,
          sched, noise.step_translation(k, f));
      tf.R = reverse_rotation_update(tf.R,
                                     s.rotation[static_cast<std::size_t>(f)],
                                     t, dt, gamma, sched,
                                     noise.step_rotation(k, f));
    }
  }
  return z;
}

std::vector<SeedResult> sample(const scorehead::ScoreModel& model,
                               const fragment::FragmentSet& fs,
                               const scorehead::DockContext& ctx,
                               const diffusion::DiffusionSchedule& sched,
                               const SampleOptions& opts) {
  if (opts.n_seeds < 1) {
    throw InputError("sample requires n_seeds >= 1");
  }
  if (opts.workers < 1) {
    throw InputError("sample requires workers >= 1");
  }
  check_run_inputs(fs, ctx, opts.grid);
  anneal_gammas(opts.anneal, opts.grid.n);  // reject bad schedules up front
  std::vector<SeedResult> results(static_cast<std::size_t>(opts.n_seeds));

  auto run_seed = [&](int i) {
    SeedResult r;
    r.seed = i;
    const auto start = std::chrono::steady_clock::now();
    RandomStream stream(
        derive_seed(opts.master_seed, 1 + static_cast<std::uint64_t>(i)));
    StreamNoise noise(stream);
    try {
      r.state = sample_trajectory(model, fs, ctx, opts.grid, opts.anneal,
                                  sched, noise);
      r.coords = to_angstrom(fragment::phi(r.state, fs), ctx);
      r.ok = true;
    } catch (const std::exception& e) {
      r = SeedResult{};
      r.seed = i;
      r.error = e.what();
    }
    r.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - start)
                    .count();
    return r;
  };

  const int workers = std::min(opts.workers, opts.n_seeds);
  if (workers <= 1) {
    for (int i = 0; i < opts.n_seeds; ++i) {
      results[static_cast<std::size_t>(i)] = run_seed(i);
    }
    return results;
  }

  std::atomic<int> next{0};
  auto drain = [&]() {
    for (int i = next.fetch_add(1); i < opts.n_seeds;
         i = next.fetch_add(1)) {
      results[static_cast<std::size_t>(i)] = run_seed(i);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back(drain);
  }
  for (auto& th : pool) {
    th.join();
  }
  return results;
}

Coords to_internal(const Coords& x, const scorehead::DockContext& ctx) {
  if (!(ctx.scale > 0.0)) {
    throw InputError("context scale must be positive");
  }
  return (x.colwise() - ctx.pocket_center) / ctx.scale;
}

Coords to_angstrom(const Coords& x, const scorehead::DockContext& ctx) {
  if (!(ctx.scale > 0.0)) {
    throw InputError("context scale must be positive");
  }
  return (x * ctx.scale).colwise() + ctx.pocket_center;
}

scorehead::DockContext make_context(const Coords& pocket, double scale,
                                    double sigma_com, RandomStream* rng) {
  if (pocket.cols() < 1) {
    throw InputError("pocket must contain at least one atom");
  }
  if (!(scale > 0.0)) {
    throw InputError("context scale must be positive");
  }
  if (!(sigma_com >= 0.0)) {
    throw InputError("center jitter sigma must be nonnegative");
  }
  if (sigma_com > 0.0 && rng == nullptr) {
    throw InputError("center jitter requires a random stream");
  }
  Vec3 center = pocket.rowwise().mean();
  if (sigma_com > 0.0) {
    center += sigma_com * rng->normal3();
  }
  scorehead::DockContext ctx;
  ctx.pocket_center = center;
  ctx.scale = scale;
  ctx.pocket = (pocket.colwise() - center) / scale;
  return ctx;
}

}  // namespace fragdiff::sampler
