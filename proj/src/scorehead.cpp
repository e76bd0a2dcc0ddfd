// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#include "fragdiff/scorehead.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>
#include <utility>

namespace fragdiff::scorehead {
namespace {

constexpr double kInertiaCutoffRel = 1e-8;
// Below this angle the curvature term of dv/dw is dropped; it scales with
// omega^2 and the series ratio is evaluated at its small-angle limit.
constexpr double kSmallOmega = 1e-3;

// -(f0'/f0)/omega from the truncated series; smooth in omega, which keeps
// the analytic training gradient consistent with finite differences.
double q_ratio(double omega, double sigma) {
  return -igso3::series_score_coeff_over_omega(omega, sigma);
}

double q_ratio_derivative(double omega, double sigma) {
  const double h = 1e-6 * std::max(1.0, omega);
  return (q_ratio(omega + h, sigma) - q_ratio(omega - h, sigma)) / (2.0 * h);
}

// Inertia pseudo-inverse with relative eigenvalue cutoff; reports whether
// any direction was dropped.
std::pair<Mat3, bool> inertia_pinv(const Mat3& inertia) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(inertia);
  const Vec3 ev = es.eigenvalues();
  const double cutoff = kInertiaCutoffRel * ev.cwiseAbs().maxCoeff();
  Vec3 inv = Vec3::Zero();
  bool singular = false;
  for (int i = 0; i < 3; ++i) {
    if (ev(i) > cutoff) {
      inv(i) = 1.0 / ev(i);
    } else {
      singular = true;
    }
  }
  return {es.eigenvectors() * inv.asDiagonal() *
              es.eigenvectors().transpose(),
          singular};
}

Eigen::VectorXd radial_features(const ToyFeatureSpec& spec, double d) {
  Eigen::VectorXd out(spec.n_radial);
  const double denom = 2.0 * spec.width * spec.width;
  for (int k = 0; k < spec.n_radial; ++k) {
    const double center = spec.r_max * k / (spec.n_radial - 1);
    out(k) = std::exp(-(d - center) * (d - center) / denom);
  }
  return out;
}

Eigen::VectorXd time_features(const ToyFeatureSpec& spec, double t) {
  Eigen::VectorXd out(spec.time_dim());
  out(0) = 1.0;
  for (int j = 1; j <= spec.n_fourier; ++j) {
    out(2 * j - 1) = std::sin(2.0 * M_PI * j * t);
    out(2 * j) = std::cos(2.0 * M_PI * j * t);
  }
  return out;
}

// 3 x dim linear map from weights to the force on one site.  Channel
// layout: pocket-pair block first, centroid block second; within a block
// the radial index is major and the time index minor.
Eigen::MatrixXd site_linear_map(const ToyFeatureSpec& spec,
                                const DockContext& ctx, const Vec3& site,
                                const Vec3& centroid,
                                const Eigen::VectorXd& tfeat) {
  const int block = spec.n_radial * spec.time_dim();
  Eigen::MatrixXd map = Eigen::MatrixXd::Zero(3, 2 * block);

  auto add_pair = [&](int offset, const Vec3& diff) {
    const double dist = diff.norm();
    if (dist < 1e-12) return;
    const Eigen::VectorXd radial =
        radial_features(spec, dist * ctx.scale);
    const Vec3 dir = diff / dist;
    for (int r = 0; r < spec.n_radial; ++r)
      for (int s = 0; s < spec.time_dim(); ++s)
        map.col(offset + r * spec.time_dim() + s) +=
            dir * (radial(r) * tfeat(s));
  };

  for (Eigen::Index j = 0; j < ctx.pocket.cols(); ++j)
    add_pair(0, site - Vec3(ctx.pocket.col(j)));
  add_pair(block, site - centroid);
  return map;
}

Vec3 site_force(const ToyFeatureSpec& spec, const Eigen::VectorXd& weights,
                const DockContext& ctx, const Vec3& site,
                const Vec3& centroid, const Eigen::VectorXd& tfeat) {
  const int td = spec.time_dim();
  using WMap = Eigen::Map<const Eigen::Matrix<
      double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  const WMap wp(weights.data(), spec.n_radial, td);
  const WMap wc(weights.data() + spec.n_radial * td, spec.n_radial, td);

  Vec3 f = Vec3::Zero();
  auto add_pair = [&](const WMap& w, const Vec3& diff) {
    const double dist = diff.norm();
    if (dist < 1e-12) return;
    const Eigen::VectorXd radial =
        radial_features(spec, dist * ctx.scale);
    f += (diff / dist) * radial.dot(w * tfeat);
  };
  for (Eigen::Index j = 0; j < ctx.pocket.cols(); ++j)
    add_pair(wp, site - Vec3(ctx.pocket.col(j)));
  add_pair(wc, site - centroid);
  return f;
}

std::vector<Vec3> fragment_sites(const fragment::Fragment& f,
                                 const liegroup::RigidTransform& pose) {
  std::vector<Vec3> sites;
  sites.reserve(static_cast<std::size_t>(f.num_sites()));
  for (Eigen::Index c = 0; c < f.local.cols(); ++c)
    sites.push_back(pose.p + pose.R * f.local.col(c));
  return sites;
}

}  // namespace

void check_context(const DockContext& ctx) {
  if (ctx.pocket.cols() < 1)
    throw InputError("dock context needs at least one pocket atom");
  if (!(ctx.scale > 0.0))
    throw InputError("dock context scale must be positive");
}

Divergence::Divergence(double loss, double initial)
    : NumericError("training diverged: loss " + std::to_string(loss) +
                   " exceeds 10x initial " + std::to_string(initial)) {}

HeadResult newton_euler_head(const std::vector<Vec3>& forces,
                             const std::vector<Vec3>& coords,
                             const liegroup::RigidTransform& pose, double t,
                             const diffusion::DiffusionSchedule& sched,
                             const igso3::Table& table) {
  (void)table;  // the reference head evaluates the series ratio directly
  if (forces.empty() || forces.size() != coords.size())
    throw InputError("newton_euler_head: need matching non-empty arrays");

  Vec3 force = Vec3::Zero();
  Vec3 torque = Vec3::Zero();
  Mat3 inertia = Mat3::Zero();
  for (std::size_t i = 0; i < forces.size(); ++i) {
    const Vec3 r = coords[i] - pose.p;
    force += forces[i];
    torque += r.cross(forces[i]);
    inertia += r.squaredNorm() * Mat3::Identity() - r * r.transpose();
  }

  const double alpha = diffusion::alpha_t(sched, t);
  const double sigma = diffusion::sigma_t(sched, t);

  HeadResult out;
  // The epsilon-style prefactor is 1/sqrt(1 - alpha_t) as written, not the
  // kernel standard deviation sqrt(1 - alpha_t^2); learned force weights
  // absorb the ratio.
  out.translation = force / (static_cast<double>(forces.size()) *
                             std::sqrt(1.0 - alpha));

  const auto [pinv, singular] = inertia_pinv(inertia);
  out.singular_inertia = singular;
  const Vec3 spin = pinv * torque;
  const double omega = spin.norm();
  // Spatial coefficient q(omega) * spin; left-trivialized at the pose.
  out.rotation = q_ratio(omega, sigma) * (pose.R.transpose() * spin);
  return out;
}

ScoreModel oracle_score(const fragment::PoseState& z0,
                        const diffusion::DiffusionSchedule& sched,
                        const igso3::Table& table) {
  const igso3::Table* table_ptr = &table;
  return [z0, sched, table_ptr](const fragment::PoseState& zt, double t,
                                const fragment::FragmentSet&,
                                const DockContext&) {
    return diffusion::conditional_score(sched, *table_ptr, zt, z0, t);
  };
}

ScoreModel ToyModel::as_score_model(
    const diffusion::DiffusionSchedule& sched,
    const igso3::Table& table) const {
  ToyModel copy = *this;
  const igso3::Table* table_ptr = &table;
  return [copy, sched, table_ptr](const fragment::PoseState& z, double t,
                                  const fragment::FragmentSet& fs,
                                  const DockContext& ctx) {
    check_context(ctx);
    if (z.size() != fs.fragments.size())
      throw InputError("toy model: pose/fragment count mismatch");
    const Eigen::VectorXd tfeat = time_features(copy.spec, t);
    diffusion::TangentScore s;
    for (std::size_t fi = 0; fi < fs.fragments.size(); ++fi) {
      const liegroup::RigidTransform& pose = z.transforms[fi];
      const std::vector<Vec3> sites =
          fragment_sites(fs.fragments[fi], pose);
      std::vector<Vec3> forces;
      forces.reserve(sites.size());
      for (const Vec3& x : sites)
        forces.push_back(
            site_force(copy.spec, copy.weights, ctx, x, pose.p, tfeat));
      const HeadResult head =
          newton_euler_head(forces, sites, pose, t, sched, *table_ptr);
      s.translation.push_back(head.translation);
      s.rotation.push_back(head.rotation);
    }
    return s;
  };
}

nlohmann::json ToyModel::to_json() const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["feature_spec"] = {{"n_radial", spec.n_radial},
                       {"r_max", spec.r_max},
                       {"width", spec.width},
                       {"n_fourier", spec.n_fourier},
                       {"channels", {"pocket_pairs", "fragment_centroid"}}};
  j["weights"] = std::vector<double>(weights.data(),
                                     weights.data() + weights.size());
  return j;
}

ToyModel ToyModel::from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != 1)
      throw InputError("unsupported toy-model schema version");
    ToyModel m;
    const nlohmann::json& fs = j.at("feature_spec");
    m.spec.n_radial = fs.at("n_radial").get<int>();
    m.spec.r_max = fs.at("r_max").get<double>();
    m.spec.width = fs.at("width").get<double>();
    m.spec.n_fourier = fs.at("n_fourier").get<int>();
    const auto w = j.at("weights").get<std::vector<double>>();
    if (static_cast<int>(w.size()) != m.spec.dim())
      throw InputError("toy-model weight count does not match feature spec");
    m.weights = Eigen::Map<const Eigen::VectorXd>(
        w.data(), static_cast<Eigen::Index>(w.size()));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed toy-model JSON: ") + e.what());
  }
}

ToyBatch make_toy_batch(const std::vector<ToyDatum>& dataset, int per_datum,
                        const diffusion::DiffusionSchedule& sched,
                        const igso3::Table& table, RandomStream& rng,
                        const ToyFeatureSpec& spec) {
  if (dataset.empty()) throw InputError("toy training needs >= 1 datum");
  if (per_datum < 1) throw InputError("per_datum must be >= 1");

  ToyBatch batch;
  batch.spec = spec;
  for (const ToyDatum& datum : dataset) {
    check_context(datum.ctx);
    for (int j = 0; j < per_datum; ++j) {
      const double t = 0.01 + 0.99 * rng.uniform();
      const fragment::PoseState zt =
          diffusion::forward_sample(sched, table, datum.z0, t, rng);
      const diffusion::TangentScore cond =
          diffusion::conditional_score(sched, table, zt, datum.z0, t);

      const double alpha = diffusion::alpha_t(sched, t);
      ToyBatchEntry entry;
      entry.t = t;
      entry.sigma = diffusion::sigma_t(sched, t);
      entry.lambda_p = igso3::loss_weight_translation(alpha);
      entry.lambda_r = igso3::loss_weight_rotation(table, entry.sigma);

      const Eigen::VectorXd tfeat = time_features(spec, t);
      const double inv_eps = 1.0 / std::sqrt(1.0 - alpha);  // as in the head
      for (std::size_t fi = 0; fi < datum.fs.fragments.size(); ++fi) {
        const liegroup::RigidTransform& pose = zt.transforms[fi];
        const std::vector<Vec3> sites =
            fragment_sites(datum.fs.fragments[fi], pose);

        Eigen::MatrixXd sum_b =
            Eigen::MatrixXd::Zero(3, spec.dim());
        Eigen::MatrixXd torque_map =
            Eigen::MatrixXd::Zero(3, spec.dim());
        Mat3 inertia = Mat3::Zero();
        for (const Vec3& x : sites) {
          const Eigen::MatrixXd b =
              site_linear_map(spec, datum.ctx, x, pose.p, tfeat);
          const Vec3 r = x - pose.p;
          sum_b += b;
          torque_map += liegroup::hat(r) * b;
          inertia += r.squaredNorm() * Mat3::Identity() - r * r.transpose();
        }
        entry.trans_lin.push_back(
            sum_b * (inv_eps / static_cast<double>(sites.size())));
        entry.rot_lin.push_back(inertia_pinv(inertia).first * torque_map);
        entry.r_t.push_back(pose.R);
        entry.target_trans.push_back(cond.translation[fi]);
        entry.target_rot.push_back(cond.rotation[fi]);
      }
      batch.entries.push_back(std::move(entry));
    }
  }
  return batch;
}

double toy_batch_loss(const ToyBatch& batch, const Eigen::VectorXd& weights,
                      Eigen::VectorXd* grad) {
  if (weights.size() != batch.spec.dim())
    throw InputError("toy weights do not match the feature spec");
  if (grad) grad->setZero(weights.size());

  double loss = 0.0;
  for (const ToyBatchEntry& entry : batch.entries) {
    for (std::size_t fi = 0; fi < entry.trans_lin.size(); ++fi) {
      const Vec3 sp = entry.trans_lin[fi] * weights;
      const Vec3 dp = sp - entry.target_trans[fi];
      loss += entry.lambda_p * dp.squaredNorm();
      if (grad)
        *grad += 2.0 * entry.lambda_p *
                 (entry.trans_lin[fi].transpose() * dp);

      const Vec3 u = entry.rot_lin[fi] * weights;
      const double omega = u.norm();
      const double q = q_ratio(omega, entry.sigma);
      const Vec3 v = q * (entry.r_t[fi].transpose() * u);
      const Vec3 dv = v - entry.target_rot[fi];
      loss += entry.lambda_r * dv.squaredNorm();
      if (grad) {
        const Vec3 y = entry.r_t[fi] * dv;
        Eigen::VectorXd gv =
            q * (entry.rot_lin[fi].transpose() * y);
        if (omega > kSmallOmega) {
          const double qp = q_ratio_derivative(omega, entry.sigma);
          gv += (qp / omega) * (entry.rot_lin[fi].transpose() * u) *
                u.dot(y);
        }
        *grad += 2.0 * entry.lambda_r * gv;
      }
    }
  }
  const double n = static_cast<double>(batch.entries.size());
  if (grad) *grad /= n;
  return loss / n;
}

ToyModel toy_model_train(const std::vector<ToyDatum>& dataset, int steps,
                         double lr,
                         const diffusion::DiffusionSchedule& sched,
                         const igso3::Table& table, RandomStream& rng,
                         std::vector<double>* loss_history) {
  const ToyFeatureSpec spec;
  const ToyBatch batch = make_toy_batch(dataset, 64, sched, table, rng, spec);

  Eigen::VectorXd w = Eigen::VectorXd::Zero(spec.dim());
  Eigen::VectorXd grad(spec.dim());
  double initial = -1.0;
  for (int step = 0; step < steps; ++step) {
    const double loss = toy_batch_loss(batch, w, &grad);
    if (step == 0) initial = loss;
    if (loss_history) loss_history->push_back(loss);
    if (loss > 10.0 * initial) throw Divergence(loss, initial);
    w -= lr * grad;
  }
  const double final_loss = toy_batch_loss(batch, w, nullptr);
  if (loss_history) loss_history->push_back(final_loss);
  if (initial >= 0.0 && final_loss > 10.0 * initial)
    throw Divergence(final_loss, initial);

  ToyModel model;
  model.spec = spec;
  model.weights = std::move(w);
  return model;
}

}  // namespace fragdiff::scorehead
