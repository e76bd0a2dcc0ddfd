// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "fragdiff/errors.hpp"
#include "fragdiff/types.hpp"

namespace fragdiff::molio {

struct Atom {
  std::string element;
  int charge = 0;
  Vec3 pos = Vec3::Zero();
};

/// order is 1, 2, 3, or 4 for aromatic.  Aromatic bonds are never
/// rotatable regardless of ring flags.
struct Bond {
  int i = 0;
  int j = 0;
  int order = 1;
  bool in_ring = false;
  bool rotatable = false;
};

/// Heavy-atom molecular graph.  Hydrogens are stripped on parse; the graph
/// is always a single connected component.
struct MolecularGraph {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  std::vector<bool> atom_in_ring;

  int num_atoms() const { return static_cast<int>(atoms.size()); }
  int num_bonds() const { return static_cast<int>(bonds.size()); }

  /// Heavy-atom degree of atom a.
  int degree(int a) const;

  /// Neighbor atom indices of a.
  std::vector<int> neighbors(int a) const;

  /// 3 x n matrix of atom positions.
  Coords coords() const;

  /// False when every coordinate is exactly zero (a connection table
  /// without a conformer).
  bool has_conformer() const;

  /// Indices of bonds flagged rotatable, ascending.
  std::vector<int> torsional_bonds() const;
};

/// Malformed input; line is 1-based into the parsed text, 0 for
/// document-level problems.
class ParseError : public InputError {
 public:
  ParseError(int line, const std::string& what);
  int line() const { return line_; }

 private:
  int line_;
};

/// The heavy-atom graph has more than one connected component.
class DisconnectedError : public InputError {
 public:
  explicit DisconnectedError(int components);
};

/// Parses one SDF/MOL V2000 record (counts line, atom block, bond block,
/// M CHG properties).  Hydrogens are stripped, ring flags are detected, and
/// the heavy-atom graph is validated.
MolecularGraph parse_sdf(const std::string& text);

/// V2000 serialization of the graph, optionally overriding coordinates.
std::string write_sdf(const MolecularGraph& g, const std::string& title = "");
std::string write_sdf(const MolecularGraph& g, const Coords& coords,
                      const std::string& title);

/// Recomputes in-ring flags from the cycle structure: a bond is in a ring
/// iff it is not a bridge, an atom iff it touches such a bond.
void detect_rings(MolecularGraph& g);

/// Flags and returns the torsional bonds: single order, not in a ring, and
/// heavy-atom degree >= 2 on both endpoints.  Requires ring flags.
std::vector<int> detect_torsional_bonds(MolecularGraph& g);

nlohmann::json graph_to_json(const MolecularGraph& g);
MolecularGraph graph_from_json(const nlohmann::json& j);

/// Pre-extracted protein pocket: a flat list of heavy atoms.
struct Pocket {
  std::vector<std::string> elements;
  Coords coords;
};

Pocket pocket_from_json(const nlohmann::json& j);
nlohmann::json pocket_to_json(const Pocket& p);

}  // namespace fragdiff::molio
