// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "fragdiff/errors.hpp"
#include "fragdiff/liegroup.hpp"
#include "fragdiff/molio.hpp"
#include "fragdiff/types.hpp"

namespace fragdiff::fragment {

/// The operation needs a conformer but the graph has no coordinates.
class NoCoordinates : public InputError {
 public:
  NoCoordinates();
};

/// The valid cut-set family exceeds the configured enumeration bound.
class CombinatorialLimit : public InputError {
 public:
  explicit CombinatorialLimit(std::size_t limit);
};

/// Pose/fragment count disagreement in the phi mapping.
class DimensionMismatch : public InputError {
 public:
  DimensionMismatch(std::size_t got, std::size_t want);
};

/// A dummy site mirroring a real atom across a cut torsional bond.  Dummies
/// surviving construction are free; over-constrained ones (whose owning
/// bond was merged into the fragment) are never materialized and are
/// accounted for in FragmentSet::pruned_dummies.
struct DummyRecord {
  int mirrored_atom = -1;  ///< parent atom index this dummy copies
  int torsion_bond = -1;   ///< owning torsional bond (parent bond index)
  bool over_constrained = false;
};

/// A rigid fragment: member atoms plus dummy sites, with local coordinates
/// centered on the origin.  Column layout of `local`: the real atoms in
/// `atoms` order, then the dummies in `dummies` order.
struct Fragment {
  std::vector<int> atoms;  ///< parent atom indices, ascending
  std::vector<DummyRecord> dummies;
  Coords local;  ///< 3 x (atoms + dummies), mean zero

  int num_sites() const {
    return static_cast<int>(atoms.size() + dummies.size());
  }
};

/// Registry entry for one torsional bond of the parent graph.
struct TorsionRecord {
  int bond = -1;    ///< parent bond index
  int b = -1;       ///< first endpoint atom
  int c = -1;       ///< second endpoint atom
  int frag_b = -1;  ///< fragment owning b
  int frag_c = -1;  ///< fragment owning c (== frag_b when merged)
  bool cut = false; ///< true when the bond separates two fragments
};

/// Cross-fragment distance constraint with its conformer reference value.
struct TriangulationEdge {
  int a_atom = -1;
  int c_atom = -1;
  int frag_a = -1;
  int frag_c = -1;
  double ref_distance = 0.0;
};

struct FragmentSet {
  std::vector<Fragment> fragments;
  std::vector<TorsionRecord> torsions;  ///< all k bonds, ascending bond id
  std::vector<int> cut_bonds;           ///< ascending parent bond indices
  std::vector<TriangulationEdge> edges;
  int pruned_dummies = 0;  ///< 2 x (merged torsional bonds)
  int n_atoms = 0;         ///< parent heavy-atom count

  int m() const { return static_cast<int>(fragments.size()); }
  int k() const { return static_cast<int>(torsions.size()); }
};

/// Poses of the m fragments; phi maps them to ligand coordinates.
struct PoseState {
  std::vector<liegroup::RigidTransform> transforms;

  std::size_t size() const { return transforms.size(); }
};

/// Connected components after removing the cut bonds, each with a dummy
/// copy of the opposite endpoint for every incident cut bond.  `cuts` must
/// be a subset of the detected torsional bonds; requires a conformer.
std::vector<Fragment> cut_fragments(const molio::MolecularGraph& g,
                                    const std::vector<int>& cuts);

/// True iff every fragment under `cuts` is free of residual internal
/// torsional bonds whenever it has more than 3 sites (dummies included).
/// Residual detection reruns the rotatable rule on the fragment's real
/// subgraph.
bool valid_state(const molio::MolecularGraph& g, const std::vector<int>& cuts);

/// Every valid cut set reachable from the full set by dropping cuts while
/// validity holds (validity is preserved by adding cuts, so this is exactly
/// the valid up-set).  Deterministic order; throws CombinatorialLimit when
/// the family grows past `limit`.
std::vector<std::vector<int>> rec_merge(const molio::MolecularGraph& g,
                                        const std::vector<int>& all_cuts,
                                        std::size_t limit = 1000000);
std::vector<std::vector<int>> rec_merge(const molio::MolecularGraph& g,
                                        std::size_t limit = 1000000);

/// Deterministic fragment-set construction for a given cut set: fragments,
/// torsion registry, triangulation edges, and pruning bookkeeping.
FragmentSet build_fragment_set(const molio::MolecularGraph& g,
                               const std::vector<int>& cuts);

/// Samples a cut set uniformly from the rec_merge family with the given
/// seed and builds its FragmentSet.
FragmentSet fr3d(const molio::MolecularGraph& g, std::uint64_t seed,
                 std::size_t limit = 1000000);

/// Triangulation edges for the unmerged torsional bonds: for bond (B, C),
/// the lexicographically smallest real-neighbor pair on each side, with
/// conformer reference distances, deduplicated across bonds.
std::vector<TriangulationEdge> triangulation_edges(
    const FragmentSet& fs, const molio::MolecularGraph& g,
    const Coords& conformer);

/// Places every fragment by x = p_i + R_i x_local and assembles the real
/// atoms into parent order.  Dummy sites are dropped.
Coords phi(const PoseState& z, const FragmentSet& fs);

/// Centers each fragment's local coordinates on its site centroid (dummies
/// included) and returns the pose that reproduces `coords` exactly:
/// p_i = centroid, R_i = identity.  Mutates fs.
PoseState phi_inverse(const Coords& coords, FragmentSet& fs);

nlohmann::json fragment_set_to_json(const FragmentSet& fs);
FragmentSet fragment_set_from_json(const nlohmann::json& j);

}  // namespace fragdiff::fragment
