// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#include "fragdiff/audit.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <utility>

#include "fragdiff/liegroup.hpp"

namespace fragdiff::audit {
namespace {

constexpr double kFdStep = 1e-5;
constexpr double kBondRelTol = 0.25;
constexpr double kAngleTol = 25.0 * M_PI / 180.0;
constexpr double kIntraClash = 1.7;
constexpr double kPocketClash = 1.5;
constexpr double kEnergyCutoff = 8.0;

Eigen::VectorXd flatten(const Coords& x) {
  return Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
}

std::pair<int, int> block_range(const GramReport& report, int block) {
  int start = 0;
  for (int i = 0; i < block; ++i) start += report.block_sizes[i];
  return {start, report.block_sizes[static_cast<std::size_t>(block)]};
}

GramReport finalize(std::string label, Eigen::MatrixXd gram,
                    std::vector<int> blocks, std::string summary) {
  GramReport report;
  report.label = std::move(label);
  report.gram = std::move(gram);
  report.block_sizes = std::move(blocks);
  report.block_summary = std::move(summary);
  const int nb = static_cast<int>(report.block_sizes.size());
  for (int i = 0; i < nb; ++i)
    for (int j = 0; j < nb; ++j)
      if (i != j)
        report.off_block_max =
            std::max(report.off_block_max, block_abs_max(report, i, j));
  return report;
}

double angle_at(const Coords& x, int left, int center, int right) {
  const Vec3 u = (x.col(left) - x.col(center)).normalized();
  const Vec3 v = (x.col(right) - x.col(center)).normalized();
  return std::acos(std::clamp(u.dot(v), -1.0, 1.0));
}

}  // namespace

double block_abs_max(const GramReport& report, int block_row, int block_col) {
  const auto [r0, rn] = block_range(report, block_row);
  const auto [c0, cn] = block_range(report, block_col);
  return report.gram.block(r0, c0, rn, cn).cwiseAbs().maxCoeff();
}

nlohmann::json gram_report_to_json(const GramReport& report) {
  nlohmann::json j;
  j["label"] = report.label;
  j["size"] = report.gram.rows();
  j["block_sizes"] = report.block_sizes;
  j["off_block_max"] = report.off_block_max;
  j["block_summary"] = report.block_summary;
  std::vector<std::vector<double>> rows;
  for (Eigen::Index r = 0; r < report.gram.rows(); ++r) {
    rows.emplace_back();
    for (Eigen::Index c = 0; c < report.gram.cols(); ++c)
      rows.back().push_back(report.gram(r, c));
  }
  j["gram"] = rows;
  return j;
}

GramReport torsional_gram(const molio::MolecularGraph& g,
                          const Coords& conformer,
                          const std::vector<align::DihedralSpec>& torsions) {
  if (torsions.size() < 2)
    throw InputError("torsional Gram audit needs at least two torsions");
  if (conformer.cols() != g.num_atoms())
    throw InputError("coordinate count does not match the graph");
  const int k = static_cast<int>(torsions.size());
  const Eigen::Index n3 = conformer.size();

  Eigen::MatrixXd jac(n3, k + 6);
  for (int i = 0; i < k; ++i) {
    const double base = align::measure_dihedral(conformer, torsions[i]);
    const Coords plus =
        align::set_dihedral(g, conformer, torsions[i], base + kFdStep);
    const Coords minus =
        align::set_dihedral(g, conformer, torsions[i], base - kFdStep);
    jac.col(i) = flatten(plus - minus) / (2.0 * kFdStep);
  }
  for (int j = 0; j < 3; ++j) {
    Coords col = Coords::Zero(3, conformer.cols());
    col.row(j).setOnes();
    jac.col(k + j) = flatten(col);
  }
  const Vec3 centroid = conformer.rowwise().mean();
  for (int j = 0; j < 3; ++j) {
    Coords col(3, conformer.cols());
    for (Eigen::Index a = 0; a < conformer.cols(); ++a)
      col.col(a) = Vec3::Unit(j).cross(Vec3(conformer.col(a)) - centroid);
    jac.col(k + 3 + j) = flatten(col);
  }

  std::vector<int> blocks(static_cast<std::size_t>(k), 1);
  blocks.push_back(3);  // translations
  blocks.push_back(3);  // rotations about the centroid
  std::ostringstream summary;
  summary << k << " torsion columns + 3 translation + 3 rotation";
  return finalize("torsional", jac.transpose() * jac, std::move(blocks),
                  summary.str());
}

GramReport fragment_gram(const fragment::FragmentSet& fs,
                         const fragment::PoseState& z) {
  if (z.size() != fs.fragments.size())
    throw InputError("pose/fragment count mismatch");
  const int m = static_cast<int>(fs.fragments.size());
  const Eigen::Index n3 = 3 * static_cast<Eigen::Index>(fs.n_atoms);

  Eigen::MatrixXd jac(n3, 6 * m);
  for (int fi = 0; fi < m; ++fi) {
    for (int j = 0; j < 3; ++j) {  // translations
      fragment::PoseState plus = z, minus = z;
      plus.transforms[static_cast<std::size_t>(fi)].p += kFdStep * Vec3::Unit(j);
      minus.transforms[static_cast<std::size_t>(fi)].p -= kFdStep * Vec3::Unit(j);
      jac.col(6 * fi + j) =
          flatten(fragment::phi(plus, fs) - fragment::phi(minus, fs)) /
          (2.0 * kFdStep);
    }
    for (int j = 0; j < 3; ++j) {  // body-frame rotations
      fragment::PoseState plus = z, minus = z;
      const Mat3 twist = liegroup::exp_so3(kFdStep * Vec3::Unit(j));
      auto& rp = plus.transforms[static_cast<std::size_t>(fi)].R;
      auto& rm = minus.transforms[static_cast<std::size_t>(fi)].R;
      rp = rp * twist;
      rm = rm * twist.transpose();
      jac.col(6 * fi + 3 + j) =
          flatten(fragment::phi(plus, fs) - fragment::phi(minus, fs)) /
          (2.0 * kFdStep);
    }
  }

  std::ostringstream summary;
  summary << m << " fragments x 6 parameters; disjoint atom support";
  return finalize("fragment", jac.transpose() * jac,
                  std::vector<int>(static_cast<std::size_t>(m), 6),
                  summary.str());
}

PoseChecks pose_checks(const Coords& coords, const molio::MolecularGraph& g,
                       const Coords& reference, const Coords& pocket) {
  if (coords.cols() != g.num_atoms() || reference.cols() != g.num_atoms())
    throw InputError("coordinate count does not match the graph");

  PoseChecks out;
  out.bond_lengths = true;
  for (const molio::Bond& bond : g.bonds) {
    const double ref = (reference.col(bond.i) - reference.col(bond.j)).norm();
    const double cur = (coords.col(bond.i) - coords.col(bond.j)).norm();
    if (std::abs(cur - ref) > kBondRelTol * ref) out.bond_lengths = false;
  }

  out.bond_angles = true;
  for (int center = 0; center < g.num_atoms(); ++center) {
    const std::vector<int> nb = g.neighbors(center);
    for (std::size_t i = 0; i < nb.size(); ++i)
      for (std::size_t j = i + 1; j < nb.size(); ++j) {
        const double ref = angle_at(reference, nb[i], center, nb[j]);
        const double cur = angle_at(coords, nb[i], center, nb[j]);
        if (std::abs(cur - ref) > kAngleTol) out.bond_angles = false;
      }
  }

  // Nonbonded pairs exclude direct bonds and pairs sharing a neighbor.
  std::set<std::pair<int, int>> excluded;
  for (const molio::Bond& bond : g.bonds)
    excluded.insert({std::min(bond.i, bond.j), std::max(bond.i, bond.j)});
  for (int center = 0; center < g.num_atoms(); ++center) {
    const std::vector<int> nb = g.neighbors(center);
    for (std::size_t i = 0; i < nb.size(); ++i)
      for (std::size_t j = i + 1; j < nb.size(); ++j)
        excluded.insert({std::min(nb[i], nb[j]), std::max(nb[i], nb[j])});
  }
  out.intra_clash_free = true;
  for (int i = 0; i < g.num_atoms(); ++i)
    for (int j = i + 1; j < g.num_atoms(); ++j)
      if (!excluded.count({i, j}) &&
          (coords.col(i) - coords.col(j)).norm() < kIntraClash)
        out.intra_clash_free = false;

  out.pocket_clash_free = true;
  for (Eigen::Index i = 0; i < coords.cols(); ++i)
    for (Eigen::Index j = 0; j < pocket.cols(); ++j)
      if ((coords.col(i) - pocket.col(j)).norm() < kPocketClash)
        out.pocket_clash_free = false;

  out.fraction = (static_cast<double>(out.bond_lengths) +
                  static_cast<double>(out.bond_angles) +
                  static_cast<double>(out.intra_clash_free) +
                  static_cast<double>(out.pocket_clash_free)) /
                 4.0;
  return out;
}

double pseudo_energy(const Coords& coords, const Coords& pocket) {
  if (pocket.cols() < 1)
    throw InputError("pseudo energy needs at least one pocket atom");
  double energy = 0.0;
  for (Eigen::Index i = 0; i < coords.cols(); ++i)
    for (Eigen::Index j = 0; j < pocket.cols(); ++j) {
      const double d = (coords.col(i) - pocket.col(j)).norm();
      if (d < kPocketClash)
        energy += 10.0 * (kPocketClash - d) * (kPocketClash - d);
      else if (d <= kEnergyCutoff)
        energy -= std::exp(-0.5 * (d - 3.5) * (d - 3.5));
    }
  return energy;
}

std::vector<RankedSample> rank(std::vector<RankedSample> samples,
                               double beta) {
  if (beta < 0.0) throw InputError("rank exponent beta must be >= 0");
  for (RankedSample& s : samples) {
    if (s.checks < 0.0 || s.checks > 1.0)
      throw InputError("check fraction must lie in [0, 1]");
    s.score = -s.binding * std::pow(s.checks, beta);
  }
  std::stable_sort(samples.begin(), samples.end(),
                   [](const RankedSample& a, const RankedSample& b) {
                     return a.score > b.score;
                   });
  return samples;
}

}  // namespace fragdiff::audit
