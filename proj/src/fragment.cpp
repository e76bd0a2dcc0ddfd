// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#include "fragdiff/fragment.hpp"

#include <algorithm>
#include <cstddef>
#include <set>
#include <string>
#include <utility>

#include "fragdiff/rng.hpp"

namespace fragdiff::fragment {
namespace {

// Component labels on the real atoms after deleting the cut bonds.  Labels
// are assigned in order of each component's smallest atom index, so label 0
// always contains atom 0.
struct Components {
  std::vector<int> label;  // per atom
  int count = 0;
};

Components components_after_cuts(const molio::MolecularGraph& g,
                                 const std::vector<int>& cuts) {
  const int n = static_cast<int>(g.num_atoms());
  std::vector<char> is_cut(g.num_bonds(), 0);
  for (int b : cuts) is_cut[static_cast<std::size_t>(b)] = 1;

  std::vector<std::vector<int>> adj(n);
  for (std::size_t bi = 0; bi < g.num_bonds(); ++bi) {
    if (is_cut[bi]) continue;
    adj[g.bonds[bi].i].push_back(g.bonds[bi].j);
    adj[g.bonds[bi].j].push_back(g.bonds[bi].i);
  }

  Components comps;
  comps.label.assign(n, -1);
  for (int start = 0; start < n; ++start) {
    if (comps.label[start] >= 0) continue;
    const int id = comps.count++;
    std::vector<int> stack{start};
    comps.label[start] = id;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int w : adj[v]) {
        if (comps.label[w] < 0) {
          comps.label[w] = id;
          stack.push_back(w);
        }
      }
    }
  }
  return comps;
}

void check_cuts_are_torsional(const molio::MolecularGraph& g,
                              const std::vector<int>& cuts) {
  for (int b : cuts) {
    if (b < 0 || static_cast<std::size_t>(b) >= g.num_bonds())
      throw InputError("cut bond index " + std::to_string(b) +
                       " out of range");
    if (!g.bonds[static_cast<std::size_t>(b)].rotatable)
      throw InputError("cut bond " + std::to_string(b) +
                       " is not a torsional bond");
  }
  std::set<int> uniq(cuts.begin(), cuts.end());
  if (uniq.size() != cuts.size())
    throw InputError("duplicate cut bond index");
}

}  // namespace

NoCoordinates::NoCoordinates()
    : InputError("molecular graph carries no conformer coordinates") {}

CombinatorialLimit::CombinatorialLimit(std::size_t limit)
    : InputError("valid cut-set family exceeds the enumeration bound of " +
                 std::to_string(limit)) {}

DimensionMismatch::DimensionMismatch(std::size_t got, std::size_t want)
    : InputError("pose state has " + std::to_string(got) +
                 " transforms but the fragment set has " +
                 std::to_string(want) + " fragments") {}

std::vector<Fragment> cut_fragments(const molio::MolecularGraph& g,
                                    const std::vector<int>& cuts) {
  if (!g.has_conformer()) throw NoCoordinates();
  check_cuts_are_torsional(g, cuts);

  const Components comps = components_after_cuts(g, cuts);
  std::vector<Fragment> frags(static_cast<std::size_t>(comps.count));
  for (int a = 0; a < static_cast<int>(g.num_atoms()); ++a)
    frags[static_cast<std::size_t>(comps.label[a])].atoms.push_back(a);

  // Each cut bond (B, C) mirrors C into B's fragment and B into C's.
  // Processing cuts in ascending bond order keeps dummy order deterministic.
  std::vector<int> sorted_cuts = cuts;
  std::sort(sorted_cuts.begin(), sorted_cuts.end());
  for (int b : sorted_cuts) {
    const molio::Bond& bond = g.bonds[static_cast<std::size_t>(b)];
    frags[static_cast<std::size_t>(comps.label[bond.i])].dummies.push_back(
        DummyRecord{bond.j, b, false});
    frags[static_cast<std::size_t>(comps.label[bond.j])].dummies.push_back(
        DummyRecord{bond.i, b, false});
  }

  const Coords x = g.coords();
  for (Fragment& f : frags) {
    f.local.resize(3, f.num_sites());
    int col = 0;
    for (int a : f.atoms) f.local.col(col++) = x.col(a);
    for (const DummyRecord& d : f.dummies)
      f.local.col(col++) = x.col(d.mirrored_atom);
    f.local.colwise() -= Vec3(f.local.rowwise().mean());
  }
  return frags;
}

bool valid_state(const molio::MolecularGraph& g,
                 const std::vector<int>& cuts) {
  check_cuts_are_torsional(g, cuts);
  const Components comps = components_after_cuts(g, cuts);

  // Sites per component: real members plus one dummy per incident cut bond.
  std::vector<int> sites(static_cast<std::size_t>(comps.count), 0);
  for (int lbl : comps.label) ++sites[static_cast<std::size_t>(lbl)];
  std::vector<char> is_cut(g.num_bonds(), 0);
  for (int b : cuts) {
    is_cut[static_cast<std::size_t>(b)] = 1;
    const molio::Bond& bond = g.bonds[static_cast<std::size_t>(b)];
    ++sites[static_cast<std::size_t>(comps.label[bond.i])];
    ++sites[static_cast<std::size_t>(comps.label[bond.j])];
  }

  // Degree of each atom within its own component's real subgraph.
  std::vector<int> comp_degree(g.num_atoms(), 0);
  for (std::size_t bi = 0; bi < g.num_bonds(); ++bi) {
    if (is_cut[bi]) continue;
    const molio::Bond& bond = g.bonds[bi];
    if (comps.label[bond.i] == comps.label[bond.j]) {
      ++comp_degree[static_cast<std::size_t>(bond.i)];
      ++comp_degree[static_cast<std::size_t>(bond.j)];
    }
  }

  // A fragment larger than 3 sites must not contain a residual torsional
  // bond.  Rerunning the rotatable rule on the real subgraph can only lose
  // candidates relative to the parent (degrees shrink, ring and order
  // status are inherited), so parent-rotatable uncut bonds are the exact
  // candidate set.
  std::vector<char> big(static_cast<std::size_t>(comps.count), 0);
  for (int c = 0; c < comps.count; ++c)
    big[static_cast<std::size_t>(c)] = sites[static_cast<std::size_t>(c)] > 3;

  for (std::size_t bi = 0; bi < g.num_bonds(); ++bi) {
    const molio::Bond& bond = g.bonds[bi];
    if (!bond.rotatable || is_cut[bi]) continue;
    const int lbl = comps.label[bond.i];
    if (lbl != comps.label[bond.j] || !big[static_cast<std::size_t>(lbl)])
      continue;
    if (comp_degree[static_cast<std::size_t>(bond.i)] >= 2 &&
        comp_degree[static_cast<std::size_t>(bond.j)] >= 2)
      return false;
  }
  return true;
}

namespace {

// Depth-first enumeration of the valid up-set.  Dropping cuts in ascending
// index order gives each subset a unique path from the full set, and since
// adding a cut never invalidates a state, every intermediate superset of a
// valid subset is valid; each valid subset is therefore visited exactly
// once without a seen-set.
void enumerate_valid(const molio::MolecularGraph& g,
                     std::vector<int>& current, std::size_t start,
                     std::size_t limit,
                     std::vector<std::vector<int>>& out) {
  if (out.size() >= limit) throw CombinatorialLimit(limit);
  out.push_back(current);
  for (std::size_t i = start; i < current.size(); ++i) {
    std::vector<int> next = current;
    next.erase(next.begin() + static_cast<std::ptrdiff_t>(i));
    if (valid_state(g, next)) {
      enumerate_valid(g, next, i, limit, out);
    }
  }
}

}  // namespace

std::vector<std::vector<int>> rec_merge(const molio::MolecularGraph& g,
                                        const std::vector<int>& all_cuts,
                                        std::size_t limit) {
  std::vector<int> sorted = all_cuts;
  std::sort(sorted.begin(), sorted.end());
  if (sorted != g.torsional_bonds())
    throw InputError(
        "rec_merge must start from the full torsional-bond set");

  std::vector<std::vector<int>> out;
  enumerate_valid(g, sorted, 0, limit, out);
  return out;
}

std::vector<std::vector<int>> rec_merge(const molio::MolecularGraph& g,
                                        std::size_t limit) {
  return rec_merge(g, g.torsional_bonds(), limit);
}

FragmentSet build_fragment_set(const molio::MolecularGraph& g,
                               const std::vector<int>& cuts) {
  FragmentSet fs;
  fs.fragments = cut_fragments(g, cuts);
  fs.n_atoms = static_cast<int>(g.num_atoms());
  fs.cut_bonds = cuts;
  std::sort(fs.cut_bonds.begin(), fs.cut_bonds.end());

  std::vector<int> owner(g.num_atoms(), -1);
  for (std::size_t fi = 0; fi < fs.fragments.size(); ++fi)
    for (int a : fs.fragments[fi].atoms)
      owner[static_cast<std::size_t>(a)] = static_cast<int>(fi);

  std::vector<char> is_cut(g.num_bonds(), 0);
  for (int b : fs.cut_bonds) is_cut[static_cast<std::size_t>(b)] = 1;

  for (int b : g.torsional_bonds()) {
    const molio::Bond& bond = g.bonds[static_cast<std::size_t>(b)];
    fs.torsions.push_back(TorsionRecord{
        b, bond.i, bond.j, owner[static_cast<std::size_t>(bond.i)],
        owner[static_cast<std::size_t>(bond.j)],
        is_cut[static_cast<std::size_t>(b)] != 0});
  }
  fs.pruned_dummies =
      2 * (fs.k() - static_cast<int>(fs.cut_bonds.size()));
  fs.edges = triangulation_edges(fs, g, g.coords());
  return fs;
}

FragmentSet fr3d(const molio::MolecularGraph& g, std::uint64_t seed,
                 std::size_t limit) {
  const std::vector<std::vector<int>> valid = rec_merge(g, limit);
  const std::uint64_t idx =
      bounded_uniform(splitmix64(seed), valid.size());
  return build_fragment_set(g, valid[static_cast<std::size_t>(idx)]);
}

std::vector<TriangulationEdge> triangulation_edges(
    const FragmentSet& fs, const molio::MolecularGraph& g,
    const Coords& conformer) {
  std::vector<int> owner(g.num_atoms(), -1);
  for (std::size_t fi = 0; fi < fs.fragments.size(); ++fi)
    for (int a : fs.fragments[fi].atoms)
      owner[static_cast<std::size_t>(a)] = static_cast<int>(fi);

  // For cut bond (B, C): one edge (A*, C) with A* the smallest real
  // neighbor of B besides C, and symmetrically (B, D*).  Edges are stored
  // with ascending atom pairs and deduplicated across bonds, since
  // consecutive cut bonds can nominate the same pair from both sides.
  std::set<std::pair<int, int>> seen;
  std::vector<TriangulationEdge> edges;
  auto add_side = [&](int pivot, int far) {
    int best = -1;
    for (int nbr : g.neighbors(pivot)) {  // ascending
      if (nbr != far) {
        best = nbr;
        break;
      }
    }
    if (best < 0) return;  // pivot has no other neighbor
    const std::pair<int, int> key{std::min(best, far), std::max(best, far)};
    if (!seen.insert(key).second) return;
    TriangulationEdge e;
    e.a_atom = best;
    e.c_atom = far;
    e.frag_a = owner[static_cast<std::size_t>(best)];
    e.frag_c = owner[static_cast<std::size_t>(far)];
    e.ref_distance = (conformer.col(best) - conformer.col(far)).norm();
    edges.push_back(e);
  };

  for (int b : fs.cut_bonds) {
    const molio::Bond& bond = g.bonds[static_cast<std::size_t>(b)];
    add_side(bond.i, bond.j);
    add_side(bond.j, bond.i);
  }
  return edges;
}

Coords phi(const PoseState& z, const FragmentSet& fs) {
  if (z.size() != fs.fragments.size())
    throw DimensionMismatch(z.size(), fs.fragments.size());
  Coords out(3, fs.n_atoms);
  for (std::size_t fi = 0; fi < fs.fragments.size(); ++fi) {
    const Fragment& f = fs.fragments[fi];
    const liegroup::RigidTransform& t = z.transforms[fi];
    for (std::size_t c = 0; c < f.atoms.size(); ++c)
      out.col(f.atoms[c]) =
          t.p + t.R * f.local.col(static_cast<Eigen::Index>(c));
  }
  return out;
}

PoseState phi_inverse(const Coords& coords, FragmentSet& fs) {
  if (coords.cols() != fs.n_atoms)
    throw DimensionMismatch(static_cast<std::size_t>(coords.cols()),
                            static_cast<std::size_t>(fs.n_atoms));
  PoseState z;
  z.transforms.resize(fs.fragments.size());
  for (std::size_t fi = 0; fi < fs.fragments.size(); ++fi) {
    Fragment& f = fs.fragments[fi];
    Coords sites(3, f.num_sites());
    int col = 0;
    for (int a : f.atoms) sites.col(col++) = coords.col(a);
    for (const DummyRecord& d : f.dummies)
      sites.col(col++) = coords.col(d.mirrored_atom);
    const Vec3 centroid = sites.rowwise().mean();
    f.local = sites.colwise() - centroid;
    z.transforms[fi].p = centroid;
    z.transforms[fi].R = Mat3::Identity();
  }
  return z;
}

nlohmann::json fragment_set_to_json(const FragmentSet& fs) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["n_atoms"] = fs.n_atoms;
  j["pruned_dummies"] = fs.pruned_dummies;
  j["cut_bonds"] = fs.cut_bonds;

  j["fragments"] = nlohmann::json::array();
  for (const Fragment& f : fs.fragments) {
    nlohmann::json jf;
    jf["atoms"] = f.atoms;
    jf["dummies"] = nlohmann::json::array();
    for (const DummyRecord& d : f.dummies)
      jf["dummies"].push_back({{"mirrored_atom", d.mirrored_atom},
                               {"torsion_bond", d.torsion_bond},
                               {"over_constrained", d.over_constrained}});
    std::vector<std::vector<double>> local;
    for (Eigen::Index c = 0; c < f.local.cols(); ++c)
      local.push_back({f.local(0, c), f.local(1, c), f.local(2, c)});
    jf["local"] = local;
    j["fragments"].push_back(std::move(jf));
  }

  j["torsions"] = nlohmann::json::array();
  for (const TorsionRecord& t : fs.torsions)
    j["torsions"].push_back({{"bond", t.bond},
                             {"b", t.b},
                             {"c", t.c},
                             {"frag_b", t.frag_b},
                             {"frag_c", t.frag_c},
                             {"cut", t.cut}});

  j["edges"] = nlohmann::json::array();
  for (const TriangulationEdge& e : fs.edges)
    j["edges"].push_back({{"a_atom", e.a_atom},
                          {"c_atom", e.c_atom},
                          {"frag_a", e.frag_a},
                          {"frag_c", e.frag_c},
                          {"ref_distance", e.ref_distance}});
  return j;
}

FragmentSet fragment_set_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != 1)
      throw InputError("unsupported fragment-set schema version");
    FragmentSet fs;
    fs.n_atoms = j.at("n_atoms").get<int>();
    fs.pruned_dummies = j.at("pruned_dummies").get<int>();
    fs.cut_bonds = j.at("cut_bonds").get<std::vector<int>>();

    for (const nlohmann::json& jf : j.at("fragments")) {
      Fragment f;
      f.atoms = jf.at("atoms").get<std::vector<int>>();
      for (const nlohmann::json& jd : jf.at("dummies"))
        f.dummies.push_back(
            DummyRecord{jd.at("mirrored_atom").get<int>(),
                        jd.at("torsion_bond").get<int>(),
                        jd.at("over_constrained").get<bool>()});
      const auto local = jf.at("local").get<std::vector<std::vector<double>>>();
      if (local.size() != static_cast<std::size_t>(f.num_sites()))
        throw InputError("fragment local coordinate count mismatch");
      f.local.resize(3, static_cast<Eigen::Index>(local.size()));
      for (std::size_t c = 0; c < local.size(); ++c) {
        if (local[c].size() != 3)
          throw InputError("fragment local coordinates must be 3-vectors");
        for (int r = 0; r < 3; ++r)
          f.local(r, static_cast<Eigen::Index>(c)) = local[c][r];
      }
      fs.fragments.push_back(std::move(f));
    }

    for (const nlohmann::json& jt : j.at("torsions"))
      fs.torsions.push_back(TorsionRecord{
          jt.at("bond").get<int>(), jt.at("b").get<int>(),
          jt.at("c").get<int>(), jt.at("frag_b").get<int>(),
          jt.at("frag_c").get<int>(), jt.at("cut").get<bool>()});

    for (const nlohmann::json& je : j.at("edges"))
      fs.edges.push_back(TriangulationEdge{
          je.at("a_atom").get<int>(), je.at("c_atom").get<int>(),
          je.at("frag_a").get<int>(), je.at("frag_c").get<int>(),
          je.at("ref_distance").get<double>()});
    return fs;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed fragment-set JSON: ") + e.what());
  }
}

}  // namespace fragdiff::fragment
