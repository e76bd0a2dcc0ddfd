// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "fragdiff/molio.hpp"
#include "fragdiff/types.hpp"

namespace testsupport {

/// n-carbon zigzag alkane chain (1.54 A bonds, 112 degree angles), with
/// rings and torsional bonds detected.
fragdiff::molio::MolecularGraph make_chain(int n);

/// Benzene: a flat aromatic hexagon, no rotatable bonds.
fragdiff::molio::MolecularGraph make_benzene();

/// Biphenyl: two hexagons joined by a single bond, rings twisted by
/// 40 degrees.  Exactly one rotatable bond (the bridge).
fragdiff::molio::MolecularGraph make_biphenyl();

/// 2-methylpentane: pentane chain with a methyl branch on atom 1 (C2).
fragdiff::molio::MolecularGraph make_2_methylpentane();

/// 3-methylpentane: pentane chain with a methyl branch on atom 2 (C3).
fragdiff::molio::MolecularGraph make_3_methylpentane();

/// Chain with a methyl branch at chain position `branch_at` (0-based).
fragdiff::molio::MolecularGraph make_branched_chain(int n, int branch_at);

/// Minimal V2000 text for a hand-rolled graph (carbons, single bonds).
std::string chain_sdf(int n);

/// Cubic-lattice pocket shell: grid points (spacing ~1.2 A) whose distance
/// to the nearest ligand atom lies in [2.5, 5.0] A.
fragdiff::molio::Pocket make_pocket_shell(const fragdiff::Coords& ligand);

/// Corpus of >= 20 flexible acyclic molecules (linear chains C4..C18 plus
/// five methyl-branched variants).
std::vector<fragdiff::molio::MolecularGraph> make_chain_corpus();

}  // namespace testsupport
