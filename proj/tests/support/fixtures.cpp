// SPDX-License-Identifier: Apache-2.0

#include "support/fixtures.hpp"

#include <cmath>
#include <sstream>

namespace testsupport {

using fragdiff::Coords;
using fragdiff::Vec3;
using fragdiff::molio::Atom;
using fragdiff::molio::Bond;
using fragdiff::molio::MolecularGraph;
using fragdiff::molio::Pocket;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kCC = 1.54;          // single-bond carbon-carbon length
constexpr double kHalfAngle = 56.0 * kPi / 180.0;  // bond angle 112 degrees

void finalize(MolecularGraph& g) {
  fragdiff::molio::detect_rings(g);
  fragdiff::molio::detect_torsional_bonds(g);
}

Vec3 chain_direction(int step) {
  // Alternating directions produce the classic zigzag with 112 degree
  // bond angles.
  const double s = std::sin(kHalfAngle);
  const double c = std::cos(kHalfAngle);
  return step % 2 == 0 ? Vec3(s, 0.0, c) : Vec3(s, 0.0, -c);
}

}  // namespace

MolecularGraph make_chain(int n) {
  MolecularGraph g;
  Vec3 pos = Vec3::Zero();
  for (int a = 0; a < n; ++a) {
    g.atoms.push_back(Atom{"C", 0, pos});
    if (a + 1 < n) pos += kCC * chain_direction(a);
  }
  for (int a = 0; a + 1 < n; ++a) g.bonds.push_back(Bond{a, a + 1, 1});
  finalize(g);
  return g;
}

MolecularGraph make_benzene() {
  MolecularGraph g;
  const double r = 1.39;
  for (int k = 0; k < 6; ++k) {
    const double phi = kPi / 3.0 * k;
    g.atoms.push_back(
        Atom{"C", 0, Vec3(r * std::cos(phi), r * std::sin(phi), 0.0)});
  }
  for (int k = 0; k < 6; ++k) g.bonds.push_back(Bond{k, (k + 1) % 6, 4});
  finalize(g);
  return g;
}

MolecularGraph make_biphenyl() {
  MolecularGraph g;
  const double r = 1.39;
  const double half_bridge = 0.74;  // bridge bond length 1.48
  const double twist = 40.0 * kPi / 180.0;
  // Ring A in the xy plane, attachment atom at (-half_bridge, 0, 0).
  const Vec3 center_a(-half_bridge - r, 0.0, 0.0);
  for (int k = 0; k < 6; ++k) {
    const double phi = kPi / 3.0 * k;
    g.atoms.push_back(Atom{
        "C", 0, center_a + Vec3(r * std::cos(phi), r * std::sin(phi), 0.0)});
  }
  // Ring B twisted about the bridge (x) axis; attachment at k = 0.
  const Vec3 center_b(half_bridge + r, 0.0, 0.0);
  for (int k = 0; k < 6; ++k) {
    const double phi = kPi + kPi / 3.0 * k;  // k = 0 points back at the bridge
    const Vec3 local(r * std::cos(phi), r * std::sin(phi) * std::cos(twist),
                     r * std::sin(phi) * std::sin(twist));
    g.atoms.push_back(Atom{"C", 0, center_b + local});
  }
  for (int k = 0; k < 6; ++k) g.bonds.push_back(Bond{k, (k + 1) % 6, 4});
  for (int k = 0; k < 6; ++k) g.bonds.push_back(Bond{6 + k, 6 + (k + 1) % 6, 4});
  g.bonds.push_back(Bond{0, 6, 1});  // the bridge
  finalize(g);
  return g;
}

MolecularGraph make_branched_chain(int n, int branch_at) {
  MolecularGraph g = make_chain(n);
  const int methyl = g.num_atoms();
  const Vec3 at = g.atoms[branch_at].pos;
  // Tilt the methyl out of the zigzag plane, bisecting the chain bonds.
  Vec3 away = Vec3(0.0, 0.8, 0.0);
  if (branch_at > 0) away -= (g.atoms[branch_at - 1].pos - at).normalized();
  if (branch_at + 1 < n)
    away -= (g.atoms[branch_at + 1].pos - at).normalized();
  g.atoms.push_back(Atom{"C", 0, at + kCC * away.normalized()});
  g.bonds.push_back(Bond{branch_at, methyl, 1});
  finalize(g);
  return g;
}

MolecularGraph make_2_methylpentane() { return make_branched_chain(5, 1); }

MolecularGraph make_3_methylpentane() { return make_branched_chain(5, 2); }

std::string chain_sdf(int n) {
  MolecularGraph g = make_chain(n);
  std::ostringstream title;
  title << "chain" << n;
  return fragdiff::molio::write_sdf(g, title.str());
}

Pocket make_pocket_shell(const Coords& ligand) {
  Pocket p;
  const double spacing = 1.2;
  const Vec3 lo = ligand.rowwise().minCoeff() - Vec3::Constant(5.5);
  const Vec3 hi = ligand.rowwise().maxCoeff() + Vec3::Constant(5.5);
  std::vector<Vec3> points;
  for (double x = lo.x(); x <= hi.x(); x += spacing)
    for (double y = lo.y(); y <= hi.y(); y += spacing)
      for (double z = lo.z(); z <= hi.z(); z += spacing) {
        const Vec3 q(x, y, z);
        double best = 1e30;
        for (Eigen::Index c = 0; c < ligand.cols(); ++c)
          best = std::min(best, (ligand.col(c) - q).norm());
        if (best >= 2.5 && best <= 5.0) points.push_back(q);
      }
  p.coords.resize(3, static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    p.coords.col(static_cast<Eigen::Index>(i)) = points[i];
    p.elements.push_back(i % 4 == 0 ? "N" : "C");
  }
  return p;
}

std::vector<MolecularGraph> make_chain_corpus() {
  std::vector<MolecularGraph> corpus;
  for (int n = 4; n <= 18; ++n) corpus.push_back(make_chain(n));
  corpus.push_back(make_2_methylpentane());
  corpus.push_back(make_3_methylpentane());
  corpus.push_back(make_branched_chain(6, 1));
  corpus.push_back(make_branched_chain(7, 2));
  corpus.push_back(make_branched_chain(8, 3));
  return corpus;
}

}  // namespace testsupport
