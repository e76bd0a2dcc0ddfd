// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "fragdiff/errors.hpp"
#include "fragdiff/types.hpp"

namespace fragdiff::liegroup {

using Rotation = Mat3;

/// Rigid transform (p, R) acting on points as x -> p + R x.
struct RigidTransform {
  Vec3 p = Vec3::Zero();
  Rotation R = Rotation::Identity();
};

struct AxisAngle {
  Vec3 u;        ///< unit axis
  double omega;  ///< angle in [0, pi]
};

/// Thrown by log_so3 inside the guard band of the cut locus
/// (trace(R) <= -1 + 1e-9), where the rotation axis is ill-conditioned.
class AngleNearPi : public NumericError {
 public:
  explicit AngleNearPi(double trace);
};

/// [v]_x, the skew matrix with hat(v) w = v x w.
Mat3 hat(const Vec3& v);

/// Inverse of hat; reads the three independent entries directly.
Vec3 vee(const Mat3& S);

/// Rodrigues' formula; second-order series below |v| = 1e-6.
Rotation exp_so3(const Vec3& v);

/// Logarithmic map as a tangent vector (axis times angle).
/// Throws AngleNearPi near the cut locus.
Vec3 log_so3(const Rotation& R);

/// Rotation angle of R in [0, pi], from trace(R) = 1 + 2 cos(theta);
/// well-defined at pi (does not need the axis).
double geodesic_angle(const Rotation& R);

AxisAngle to_axis_angle(const Vec3& log_vec);

bool is_rotation(const Rotation& R, double tol = 1e-9);

/// Nearest rotation by polar projection (SVD, reflection-corrected).
Rotation project_rotation(const Mat3& M);

/// Re-projects onto SO(3) only when ||R^T R - I||_inf exceeds drift_tol.
Rotation renormalize(const Rotation& R, double drift_tol = 1e-10);

Vec3 apply(const RigidTransform& t, const Vec3& x);
std::vector<Vec3> apply(const RigidTransform& t, const std::vector<Vec3>& xs);

/// Group operation (pa + Ra pb, Ra Rb).
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

/// Group inverse (-R^-1 p, R^-1).
RigidTransform inverse(const RigidTransform& a);

/// Canonical so(3) inner product <S, S'> = 1/2 tr(S S'^T); the squared norm
/// of hat(v) under it equals |v|^2.
double so3_inner(const Mat3& S1, const Mat3& S2);

}  // namespace fragdiff::liegroup
