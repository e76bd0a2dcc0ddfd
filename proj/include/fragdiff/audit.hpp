// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fragdiff/align.hpp"
#include "fragdiff/errors.hpp"
#include "fragdiff/fragment.hpp"
#include "fragdiff/molio.hpp"
#include "fragdiff/types.hpp"
#include "json.hpp"

namespace fragdiff::audit {

/// Gram matrix J^T J of a parametrization's coordinate Jacobian, with the
/// column partition into parameter blocks.
struct GramReport {
  std::string label;
  Eigen::MatrixXd gram;
  std::vector<int> block_sizes;   ///< column partition, in order
  double off_block_max = 0.0;     ///< max |entry| between distinct blocks
  std::string block_summary;
};

/// Max |entry| of the (block_row, block_col) block.
double block_abs_max(const GramReport& report, int block_row, int block_col);

nlohmann::json gram_report_to_json(const GramReport& report);

/// Gram of the torsional parametrization at the given conformer: one
/// finite-difference column per dihedral (step 1e-5 rad) plus six rigid
/// columns (translations and infinitesimal rotations about the centroid).
/// Blocks: k singleton torsion blocks, then translation (3), rotation (3).
GramReport torsional_gram(const molio::MolecularGraph& g,
                          const Coords& conformer,
                          const std::vector<align::DihedralSpec>& torsions);

/// Gram of the rigid-fragment parametrization at pose z: six
/// finite-difference columns per fragment through phi.  Blocks: one of
/// size 6 per fragment.
GramReport fragment_gram(const fragment::FragmentSet& fs,
                         const fragment::PoseState& z);

/// Holonomic pose checks against a reference conformer.
struct PoseChecks {
  bool bond_lengths = false;      ///< all within 25% of reference
  bool bond_angles = false;       ///< all within 25 degrees of reference
  bool intra_clash_free = false;  ///< no nonbonded pair closer than 1.7 A
  bool pocket_clash_free = false; ///< no ligand-pocket pair under 1.5 A
  double fraction = 0.0;          ///< share of the four checks passed
};

PoseChecks pose_checks(const Coords& coords, const molio::MolecularGraph& g,
                       const Coords& reference, const Coords& pocket);

/// Deterministic stand-in interaction energy: quadratic clash penalty
/// below 1.5 A, Gaussian contact reward centred at 3.5 A, zero past 8 A.
double pseudo_energy(const Coords& coords, const Coords& pocket);

struct RankedSample {
  Coords coords;
  double binding = 0.0;  ///< pseudo binding energy b, lower is better
  double checks = 0.0;   ///< check fraction p in [0, 1]
  double score = 0.0;    ///< mixed score s = -b * p^beta
};

/// Orders samples by descending mixed score s = -b * p^beta; ties keep
/// input order.
std::vector<RankedSample> rank(std::vector<RankedSample> samples,
                               double beta = 4.0);

}  // namespace fragdiff::audit
