// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include <json.hpp>

#include "fragdiff/diffusion.hpp"
#include "fragdiff/errors.hpp"
#include "fragdiff/fragment.hpp"
#include "fragdiff/igso3.hpp"
#include "fragdiff/liegroup.hpp"
#include "fragdiff/rng.hpp"
#include "fragdiff/types.hpp"

namespace fragdiff::scorehead {

/// Receptor context for score models: pocket atom coordinates in the same
/// pre-scaled frame as the poses, the pocket center in that frame, and the
/// length scale (Å per unit) used for the pre-scaling.
struct DockContext {
  Coords pocket;
  Vec3 pocket_center = Vec3::Zero();
  double scale = 2.7;
};

void check_context(const DockContext& ctx);

/// Per-fragment output of the Newton-Euler head.  `rotation` stores the
/// left-trivialized tangent coefficient (the matrix form is
/// R_F hat(rotation)).  `singular_inertia` records that the inertia matrix
/// was rank-deficient and the pseudo-inverse fallback was used.
struct HeadResult {
  Vec3 translation = Vec3::Zero();
  Vec3 rotation = Vec3::Zero();
  bool singular_inertia = false;
};

/// Reduces per-atom forces to a fragment score: total force F, torque tau
/// about the centroid pose.p, inertia pseudo-inverse solve w = I^+ tau,
/// translational score F/(n sqrt(1 - alpha_t)) and rotational tangent
/// -(f0'/f0)(|w|, sigma(t))/|w| . hat(w) R_F, returned as its
/// left-trivialized coefficient.
HeadResult newton_euler_head(const std::vector<Vec3>& forces,
                             const std::vector<Vec3>& coords,
                             const liegroup::RigidTransform& pose, double t,
                             const diffusion::DiffusionSchedule& sched,
                             const igso3::Table& table);

/// Pluggable score-model contract.
using ScoreModel = std::function<diffusion::TangentScore(
    const fragment::PoseState&, double, const fragment::FragmentSet&,
    const DockContext&)>;

/// Exact score model for a single known datum: delegates to the
/// conditional score of the forward kernel at z0.  The schedule is copied;
/// the table must outlive the returned callable.
ScoreModel oracle_score(const fragment::PoseState& z0,
                        const diffusion::DiffusionSchedule& sched,
                        const igso3::Table& table);

/// Training loss grew past 10x its initial value.
class Divergence : public NumericError {
 public:
  Divergence(double loss, double initial);
};

/// Fixed feature basis of the toy score model: Gaussian bumps over an
/// Å distance range, outer-multiplied with [1, Fourier features of t],
/// two radial channels (pocket-atom pairs and own-fragment centroid).
struct ToyFeatureSpec {
  int n_radial = 16;
  double r_max = 12.0;
  double width = 1.2;
  int n_fourier = 4;  ///< sin/cos pairs; time features = 1 + 2 n_fourier

  int time_dim() const { return 1 + 2 * n_fourier; }
  int dim() const { return 2 * n_radial * time_dim(); }
};

/// Linear-in-features per-atom force model routed through the
/// Newton-Euler head.
struct ToyModel {
  ToyFeatureSpec spec;
  Eigen::VectorXd weights;  // spec.dim()

  /// Score-model closure; schedule copied, table must outlive it.
  ScoreModel as_score_model(const diffusion::DiffusionSchedule& sched,
                            const igso3::Table& table) const;

  nlohmann::json to_json() const;
  static ToyModel from_json(const nlohmann::json& j);
};

struct ToyDatum {
  fragment::FragmentSet fs;
  DockContext ctx;
  fragment::PoseState z0;
};

/// One frozen (t, z_t) draw of one datum, reduced to the per-fragment
/// linear maps the head induces on the weight vector: translation
/// d s_p/dw and the inertia-solved torque map M = I^+ T with d v/dw
/// following from it.  Kept public so the analytic gradient can be
/// finite-difference checked.
struct ToyBatchEntry {
  double t = 0.0;
  double sigma = 0.0;
  double lambda_p = 0.0;
  double lambda_r = 0.0;
  std::vector<Eigen::MatrixXd> trans_lin;  // per fragment, 3 x dim
  std::vector<Eigen::MatrixXd> rot_lin;    // per fragment, 3 x dim
  std::vector<Mat3> r_t;
  std::vector<Vec3> target_trans;
  std::vector<Vec3> target_rot;
};

struct ToyBatch {
  ToyFeatureSpec spec;
  std::vector<ToyBatchEntry> entries;
};

/// Draws `per_datum` (t, z_t) pairs per datum from the forward process
/// (t uniform on [0.01, 1)) and freezes their head linearizations and
/// conditional-score targets.
ToyBatch make_toy_batch(const std::vector<ToyDatum>& dataset, int per_datum,
                        const diffusion::DiffusionSchedule& sched,
                        const igso3::Table& table, RandomStream& rng,
                        const ToyFeatureSpec& spec = ToyFeatureSpec{});

/// Mean weighted score-matching loss of the linear model over the frozen
/// batch; optionally its analytic gradient.
double toy_batch_loss(const ToyBatch& batch, const Eigen::VectorXd& weights,
                      Eigen::VectorXd* grad = nullptr);

/// Gradient descent on the frozen-batch objective from zero weights.
/// Deterministic given (dataset order, rng).  Throws Divergence when the
/// loss exceeds 10x its initial value.
ToyModel toy_model_train(const std::vector<ToyDatum>& dataset, int steps,
                         double lr,
                         const diffusion::DiffusionSchedule& sched,
                         const igso3::Table& table, RandomStream& rng,
                         std::vector<double>* loss_history = nullptr);

}  // namespace fragdiff::scorehead
