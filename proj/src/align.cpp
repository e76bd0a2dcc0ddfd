// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#include "fragdiff/align.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <vector>

namespace fragdiff::align {
namespace {

constexpr double kDegenerateRel = 1e-9;   // 2nd singular value vs 1st
constexpr double kCollinearSin = 1e-9;    // |b1 x b2| vs |b1||b2|
constexpr double kRoundImprovement = 1e-4;

double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * M_PI);
  if (a > M_PI) a -= 2.0 * M_PI;
  if (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

void check_same_shape(const Coords& p, const Coords& q) {
  if (p.cols() != q.cols())
    throw InputError("point sets differ in size");
}

/// Atoms of the connected component containing `start` after deleting the
/// bond (b, c).
std::vector<int> rotating_side(const molio::MolecularGraph& g, int b, int c,
                               int start) {
  std::vector<char> seen(static_cast<std::size_t>(g.num_atoms()), 0);
  std::vector<int> stack = {start}, out;
  seen[static_cast<std::size_t>(start)] = 1;
  while (!stack.empty()) {
    const int at = stack.back();
    stack.pop_back();
    out.push_back(at);
    for (int nb : g.neighbors(at)) {
      if ((at == b && nb == c) || (at == c && nb == b)) continue;
      if (!seen[static_cast<std::size_t>(nb)]) {
        seen[static_cast<std::size_t>(nb)] = 1;
        stack.push_back(nb);
      }
    }
  }
  return out;
}

Coords apply_transform(const liegroup::RigidTransform& t, const Coords& x) {
  return (t.R * x).colwise() + t.p;
}

/// RMSD after an optimal rigid fit; falls back to the plain RMSD when the
/// fit is degenerate.
double fitted_rmsd(const Coords& p, const Coords& q) {
  try {
    return rmsd(apply_transform(kabsch(p, q), p), q);
  } catch (const DegenerateConfiguration&) {
    return rmsd(p, q);
  }
}

}  // namespace

DegenerateConfiguration::DegenerateConfiguration()
    : NumericError("point set is degenerate (collinear after centering)") {}

UndefinedDihedral::UndefinedDihedral()
    : NumericError("dihedral undefined: three consecutive atoms collinear") {}

DihedralSpec make_dihedral_spec(const molio::MolecularGraph& g,
                                int bond_index) {
  if (bond_index < 0 || bond_index >= g.num_bonds())
    throw InputError("bond index out of range");
  const molio::Bond& bond = g.bonds[static_cast<std::size_t>(bond_index)];
  if (!bond.rotatable)
    throw InputError("dihedral requires a torsional bond");
  DihedralSpec spec;
  spec.b = bond.i;
  spec.c = bond.j;
  for (int nb : g.neighbors(spec.b))
    if (nb != spec.c) {
      spec.a = nb;
      break;
    }
  for (int nb : g.neighbors(spec.c))
    if (nb != spec.b) {
      spec.d = nb;
      break;
    }
  check_dihedral_spec(g, spec);
  return spec;
}

void check_dihedral_spec(const molio::MolecularGraph& g,
                         const DihedralSpec& spec) {
  const int ids[4] = {spec.a, spec.b, spec.c, spec.d};
  for (int id : ids)
    if (id < 0 || id >= g.num_atoms())
      throw InputError("dihedral atom index out of range");
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      if (ids[i] == ids[j]) throw InputError("dihedral atoms must differ");

  bool torsional = false;
  for (const molio::Bond& bond : g.bonds)
    if (bond.rotatable && ((bond.i == spec.b && bond.j == spec.c) ||
                           (bond.i == spec.c && bond.j == spec.b)))
      torsional = true;
  if (!torsional)
    throw InputError("dihedral axis is not a detected torsional bond");

  auto bonded = [&](int x, int y) {
    const auto& nb = g.neighbors(x);
    return std::find(nb.begin(), nb.end(), y) != nb.end();
  };
  if (!bonded(spec.a, spec.b) || !bonded(spec.c, spec.d))
    throw InputError("dihedral outer atoms must bond to the axis");
}

liegroup::RigidTransform kabsch(const Coords& p, const Coords& q) {
  check_same_shape(p, q);
  if (p.cols() < 3) throw InputError("rigid fit needs at least 3 points");

  const Vec3 pc = p.rowwise().mean();
  const Vec3 qc = q.rowwise().mean();
  const Mat3 h = (p.colwise() - pc) * (q.colwise() - qc).transpose();

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!(sv(1) > kDegenerateRel * sv(0)))
    throw DegenerateConfiguration();

  Mat3 correction = Mat3::Identity();
  correction(2, 2) =
      (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0
                                                                      : 1.0;
  liegroup::RigidTransform out;
  out.R = svd.matrixV() * correction * svd.matrixU().transpose();
  out.p = qc - out.R * pc;
  return out;
}

double rmsd(const Coords& p, const Coords& q) {
  check_same_shape(p, q);
  if (p.cols() == 0) throw InputError("RMSD of empty point sets");
  return std::sqrt((p - q).colwise().squaredNorm().mean());
}

double measure_dihedral(const Coords& coords, const DihedralSpec& spec) {
  const Vec3 b1 = coords.col(spec.b) - coords.col(spec.a);
  const Vec3 b2 = coords.col(spec.c) - coords.col(spec.b);
  const Vec3 b3 = coords.col(spec.d) - coords.col(spec.c);
  const Vec3 n1 = b1.cross(b2);
  const Vec3 n2 = b2.cross(b3);
  if (n1.norm() <= kCollinearSin * b1.norm() * b2.norm() ||
      n2.norm() <= kCollinearSin * b2.norm() * b3.norm())
    throw UndefinedDihedral();
  const Vec3 m = n1.cross(b2.normalized());
  return std::atan2(m.dot(n2), n1.dot(n2));
}

Coords set_dihedral(const molio::MolecularGraph& g, const Coords& coords,
                    const DihedralSpec& spec, double angle) {
  check_dihedral_spec(g, spec);
  if (coords.cols() != g.num_atoms())
    throw InputError("coordinate count does not match the graph");
  const double current = measure_dihedral(coords, spec);
  const double delta = wrap_angle(angle - current);

  const Vec3 pivot = coords.col(spec.b);
  const Vec3 axis = (coords.col(spec.c) - pivot).normalized();
  // Right-handed rotation of the D side about B->C by +delta decreases the
  // measured angle by delta, hence the sign flip.
  const Mat3 rot = liegroup::exp_so3(-delta * axis);

  Coords out = coords;
  for (int at : rotating_side(g, spec.b, spec.c, spec.d))
    out.col(at) = pivot + rot * (coords.col(at) - pivot);
  return out;
}

AlignResult joint_align(const molio::MolecularGraph& g,
                        const Coords& conformer, const Coords& target,
                        const std::vector<DihedralSpec>& torsions,
                        int max_rounds) {
  if (conformer.cols() != g.num_atoms() || target.cols() != g.num_atoms())
    throw InputError("coordinate count does not match the graph");
  if (max_rounds < 1) throw InputError("max_rounds must be >= 1");
  for (const DihedralSpec& spec : torsions) check_dihedral_spec(g, spec);

  Coords work = conformer;
  AlignResult result;
  double previous = fitted_rmsd(work, target);

  for (int round = 0; round < max_rounds; ++round) {
    for (const DihedralSpec& spec : torsions) {
      const double base = measure_dihedral(work, spec);
      auto objective = [&](double offset) {
        return fitted_rmsd(set_dihedral(g, work, spec, base + offset),
                           target);
      };

      // Coarse scan of the full circle, then a golden-section refinement
      // of the best bracket.
      const int coarse = 24;
      const double unmoved = objective(0.0);
      double best_offset = 0.0;
      double best_value = unmoved;
      for (int i = 0; i < coarse; ++i) {
        const double offset = -M_PI + (2.0 * M_PI * i) / coarse;
        const double value = objective(offset);
        if (value < best_value) {
          best_value = value;
          best_offset = offset;
        }
      }
      const double half = M_PI / coarse;
      double lo = best_offset - half, hi = best_offset + half;
      const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
      double x1 = hi - ratio * (hi - lo), x2 = lo + ratio * (hi - lo);
      double f1 = objective(x1), f2 = objective(x2);
      while (hi - lo > 1e-4) {
        if (f1 < f2) {
          hi = x2;
          x2 = x1;
          f2 = f1;
          x1 = hi - ratio * (hi - lo);
          f1 = objective(x1);
        } else {
          lo = x1;
          x1 = x2;
          f1 = f2;
          x2 = lo + ratio * (hi - lo);
          f2 = objective(x2);
        }
      }
      const double refined = f1 < f2 ? x1 : x2;
      const double refined_value = std::min(f1, f2);
      if (refined_value < best_value) {
        best_value = refined_value;
        best_offset = refined;
      }
      if (best_value < unmoved)
        work = set_dihedral(g, work, spec, base + best_offset);
    }

    try {
      work = apply_transform(kabsch(work, target), work);
    } catch (const DegenerateConfiguration&) {
      // Keep the current placement; the torsional sweep still applies.
    }
    const double current = rmsd(work, target);
    result.round_rmsd.push_back(current);
    if (previous - current < kRoundImprovement) break;
    previous = current;
  }

  result.aligned = std::move(work);
  result.rmsd = result.round_rmsd.back();
  return result;
}

}  // namespace fragdiff::align
