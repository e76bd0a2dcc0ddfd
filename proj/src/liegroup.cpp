// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#include "fragdiff/liegroup.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fragdiff::liegroup {

namespace {
constexpr double kSmallAngle = 1e-6;   // series branch threshold for exp/log
constexpr double kPiTraceGuard = 1e-9; // cut-locus guard on trace(R) + 1
}  // namespace

AngleNearPi::AngleNearPi(double trace)
    : NumericError("log_so3: rotation angle within guard band of pi "
                   "(trace = " +
                   std::to_string(trace) + "); axis ill-conditioned") {}

Mat3 hat(const Vec3& v) {
  Mat3 S;
  S << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return S;
}

Vec3 vee(const Mat3& S) { return Vec3(S(2, 1), S(0, 2), S(1, 0)); }

Rotation exp_so3(const Vec3& v) {
  const double w2 = v.squaredNorm();
  const double w = std::sqrt(w2);
  double a, b;  // R = I + a [v]x + b [v]x^2
  if (w < kSmallAngle) {
    a = 1.0 - w2 / 6.0;
    b = 0.5 - w2 / 24.0;
  } else {
    a = std::sin(w) / w;
    b = (1.0 - std::cos(w)) / w2;
  }
  const Mat3 S = hat(v);
  return Mat3::Identity() + a * S + b * (S * S);
}

Vec3 log_so3(const Rotation& R) {
  const double tr = R.trace();
  if (tr <= -1.0 + kPiTraceGuard) throw AngleNearPi(tr);
  const double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
  const double theta = std::acos(c);
  // log(R) = theta / (2 sin theta) (R - R^T); series for the prefactor near 0.
  double factor;
  if (theta < kSmallAngle) {
    factor = 0.5 * (1.0 + theta * theta / 6.0);
  } else {
    factor = 0.5 * theta / std::sin(theta);
  }
  return factor * vee(R - R.transpose());
}

double geodesic_angle(const Rotation& R) {
  const double c = std::clamp((R.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

AxisAngle to_axis_angle(const Vec3& log_vec) {
  const double w = log_vec.norm();
  if (w < 1e-300) return AxisAngle{Vec3::UnitX(), 0.0};
  return AxisAngle{log_vec / w, w};
}

bool is_rotation(const Rotation& R, double tol) {
  const double ortho = (R.transpose() * R - Mat3::Identity())
                           .cwiseAbs()
                           .maxCoeff();
  return ortho < tol && std::abs(R.determinant() - 1.0) < tol;
}

Rotation project_rotation(const Mat3& M) {
  Eigen::JacobiSVD<Mat3> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 U = svd.matrixU();
  const Mat3 V = svd.matrixV();
  Mat3 D = Mat3::Identity();
  if ((U * V.transpose()).determinant() < 0.0) D(2, 2) = -1.0;
  return U * D * V.transpose();
}

Rotation renormalize(const Rotation& R, double drift_tol) {
  const double drift =
      (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (drift <= drift_tol) return R;
  return project_rotation(R);
}

Vec3 apply(const RigidTransform& t, const Vec3& x) { return t.p + t.R * x; }

std::vector<Vec3> apply(const RigidTransform& t, const std::vector<Vec3>& xs) {
  std::vector<Vec3> out;
  out.reserve(xs.size());
  for (const Vec3& x : xs) out.push_back(apply(t, x));
  return out;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return RigidTransform{a.p + a.R * b.p, a.R * b.R};
}

RigidTransform inverse(const RigidTransform& a) {
  const Mat3 Rt = a.R.transpose();
  return RigidTransform{-(Rt * a.p), Rt};
}

double so3_inner(const Mat3& S1, const Mat3& S2) {
  return 0.5 * (S1 * S2.transpose()).trace();
}

}  // namespace fragdiff::liegroup
