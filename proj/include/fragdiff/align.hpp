// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "fragdiff/errors.hpp"
#include "fragdiff/liegroup.hpp"
#include "fragdiff/molio.hpp"
#include "fragdiff/types.hpp"

namespace fragdiff::align {

/// Point sets too degenerate (collinear after centering) for a unique
/// rigid fit.
class DegenerateConfiguration : public NumericError {
 public:
  DegenerateConfiguration();
};

/// Dihedral angle undefined: three consecutive atoms are collinear.
class UndefinedDihedral : public NumericError {
 public:
  UndefinedDihedral();
};

/// Dihedral A-B-C-D about a torsional bond B-C.  The rotating side is the
/// connected component containing D after deleting the bond B-C.
struct DihedralSpec {
  int a = -1;
  int b = -1;
  int c = -1;
  int d = -1;
};

/// Builds the canonical spec for a torsional bond: A is the smallest
/// neighbor of B other than C, D the smallest neighbor of C other than B.
DihedralSpec make_dihedral_spec(const molio::MolecularGraph& g,
                                int bond_index);

/// Validates a spec against the graph: B-C must be a detected torsional
/// bond, A bonded to B, D bonded to C, all four atoms distinct.
void check_dihedral_spec(const molio::MolecularGraph& g,
                         const DihedralSpec& spec);

/// Least-squares rigid fit: minimizes sum |(p + R P_i) - Q_i|^2 with
/// det(R) = +1 (reflections corrected).
liegroup::RigidTransform kabsch(const Coords& p, const Coords& q);

/// Root-mean-square deviation in the coordinate units (no refit).
double rmsd(const Coords& p, const Coords& q);

/// Signed dihedral angle in (-pi, pi].
double measure_dihedral(const Coords& coords, const DihedralSpec& spec);

/// Returns coordinates with the dihedral set to `angle`; only the rotating
/// side moves (atoms on the B-C axis stay put).
Coords set_dihedral(const molio::MolecularGraph& g, const Coords& coords,
                    const DihedralSpec& spec, double angle);

struct AlignResult {
  Coords aligned;
  double rmsd = 0.0;
  std::vector<double> round_rmsd;  ///< after each coordinate-descent round
};

/// Joint rigid + torsional registration of `conformer` onto `target`
/// (same molecular graph): per round, a golden-section line search over
/// each dihedral on RMSD-after-Kabsch, then a rigid re-fit.  Stops when a
/// round improves RMSD by less than 1e-4 or after `max_rounds`.
AlignResult joint_align(const molio::MolecularGraph& g,
                        const Coords& conformer, const Coords& target,
                        const std::vector<DihedralSpec>& torsions,
                        int max_rounds = 50);

}  // namespace fragdiff::align
