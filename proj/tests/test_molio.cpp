// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "fragdiff/molio.hpp"
#include "support/fixtures.hpp"

using namespace fragdiff;
using namespace fragdiff::molio;

namespace {

// Exhaustive cycle oracle: a bond is on a cycle iff removing it leaves its
// endpoints connected.  Independent of the bridge-finding implementation.
bool on_cycle_oracle(const MolecularGraph& g, int bond) {
  const int n = g.num_atoms();
  std::vector<std::vector<int>> adj(n);
  for (int b = 0; b < g.num_bonds(); ++b) {
    if (b == bond) continue;
    adj[g.bonds[b].i].push_back(g.bonds[b].j);
    adj[g.bonds[b].j].push_back(g.bonds[b].i);
  }
  std::vector<bool> seen(n, false);
  std::vector<int> stack = {g.bonds[bond].i};
  seen[g.bonds[bond].i] = true;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v : adj[u])
      if (!seen[v]) {
        seen[v] = true;
        stack.push_back(v);
      }
  }
  return seen[g.bonds[bond].j];
}

std::string benzene_sdf() {
  MolecularGraph g = testsupport::make_benzene();
  return write_sdf(g, "benzene");
}

}  // namespace

TEST_CASE("benzene parses to six ring atoms with no rotatable bonds") {
  MolecularGraph g = parse_sdf(benzene_sdf());
  CHECK(g.num_atoms() == 6);
  CHECK(g.num_bonds() == 6);
  detect_torsional_bonds(g);
  for (const Bond& b : g.bonds) {
    CHECK(b.in_ring);
    CHECK_FALSE(b.rotatable);
  }
  for (int a = 0; a < 6; ++a) CHECK(g.atom_in_ring[a]);
  CHECK(g.torsional_bonds().empty());
}

TEST_CASE("n-butane has exactly the central rotatable bond") {
  MolecularGraph g = parse_sdf(testsupport::chain_sdf(4));
  CHECK(g.num_atoms() == 4);
  CHECK(g.num_bonds() == 3);
  const std::vector<int> torsions = detect_torsional_bonds(g);
  REQUIRE(torsions.size() == 1);
  const Bond& b = g.bonds[torsions[0]];
  CHECK(std::minmax(b.i, b.j) == std::minmax(1, 2));
}

TEST_CASE("empty molecule is rejected") {
  const std::string sdf =
      "empty\n  test\n\n  0  0  0  0  0  0  0  0  0  0999 V2000\nM  END\n";
  CHECK_THROWS_AS(parse_sdf(sdf), ParseError);
}

TEST_CASE("malformed lines report their line number") {
  // Bad atom count field.
  CHECK_THROWS_WITH_AS(
      parse_sdf("t\n\n\n  X  0  0  0  0  0  0  0  0  0999 V2000\n"),
      doctest::Contains("line 4"), ParseError);
  // Bad coordinate on the first atom line (line 5).
  std::string sdf = testsupport::chain_sdf(4);
  const std::size_t atom0 = sdf.find("\n", sdf.find("V2000")) + 1;
  std::string broken = sdf;
  broken.replace(atom0, 10, "    xx.yyy");
  try {
    parse_sdf(broken);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 5);
  }
  // Bond atom index out of range.
  MolecularGraph g = testsupport::make_chain(3);
  std::string bad_bond = write_sdf(g);
  const std::size_t pos = bad_bond.find("\n  2  3");
  REQUIRE(pos != std::string::npos);
  bad_bond.replace(pos + 1, 6, "  2  9");
  try {
    parse_sdf(bad_bond);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 9);  // header 4 + 3 atoms + bond 2
  }
}

TEST_CASE("hydrogens are stripped before validation") {
  // Ethanol with explicit hydrogens: C C O + 6 H.
  std::ostringstream os;
  os << "ethanol\n  test\n\n  9  8  0  0  0  0  0  0  0  0999 V2000\n";
  auto atom = [&](double x, const char* el) {
    char buf[96];
    std::snprintf(buf, sizeof(buf),
                  "%10.4f%10.4f%10.4f %-3s 0  0  0  0  0  0  0  0  0  0  0  0\n",
                  x, 0.0, 0.0, el);
    os << buf;
  };
  atom(0.0, "C");
  atom(1.5, "C");
  atom(2.9, "O");
  for (int h = 0; h < 6; ++h) atom(4.0 + h, "H");
  os << "  1  2  1  0\n  2  3  1  0\n";
  // Hydrogens attached across the heavy skeleton.
  os << "  1  4  1  0\n  1  5  1  0\n  1  6  1  0\n  2  7  1  0\n"
     << "  2  8  1  0\n  3  9  1  0\nM  END\n";
  const MolecularGraph g = parse_sdf(os.str());
  CHECK(g.num_atoms() == 3);
  CHECK(g.num_bonds() == 2);
  CHECK(g.atoms[2].element == "O");
}

TEST_CASE("disconnected heavy-atom graphs are rejected") {
  std::ostringstream os;
  os << "pair\n  test\n\n  4  2  0  0  0  0  0  0  0  0999 V2000\n";
  char buf[96];
  for (int a = 0; a < 4; ++a) {
    std::snprintf(buf, sizeof(buf),
                  "%10.4f%10.4f%10.4f %-3s 0  0  0  0  0  0  0  0  0  0  0  0\n",
                  a * 1.5, 0.0, 0.0, "C");
    os << buf;
  }
  os << "  1  2  1  0\n  3  4  1  0\nM  END\n";
  CHECK_THROWS_AS(parse_sdf(os.str()), DisconnectedError);
}

TEST_CASE("formal charges are read from M CHG") {
  MolecularGraph g = testsupport::make_chain(3);
  g.atoms[0].charge = -1;
  g.atoms[2].charge = 1;
  const MolecularGraph back = parse_sdf(write_sdf(g, "charged"));
  CHECK(back.atoms[0].charge == -1);
  CHECK(back.atoms[1].charge == 0);
  CHECK(back.atoms[2].charge == 1);
}

TEST_CASE("ring flags match the exhaustive cycle oracle") {
  const MolecularGraph cases[] = {
      testsupport::make_chain(6), testsupport::make_benzene(),
      testsupport::make_biphenyl(), testsupport::make_2_methylpentane()};
  for (const MolecularGraph& g : cases) {
    for (int b = 0; b < g.num_bonds(); ++b)
      CHECK(g.bonds[b].in_ring == on_cycle_oracle(g, b));
  }
}

TEST_CASE("tree graphs carry no ring flags") {
  const MolecularGraph g = testsupport::make_chain(8);
  for (const Bond& b : g.bonds) CHECK_FALSE(b.in_ring);
  for (int a = 0; a < g.num_atoms(); ++a) CHECK_FALSE(g.atom_in_ring[a]);
}

TEST_CASE("biphenyl: bridge out of ring, rings flagged, one torsion") {
  MolecularGraph g = testsupport::make_biphenyl();
  int bridge = -1;
  for (int b = 0; b < g.num_bonds(); ++b) {
    const auto [lo, hi] = std::minmax(g.bonds[b].i, g.bonds[b].j);
    if (lo == 0 && hi == 6) bridge = b;
  }
  REQUIRE(bridge >= 0);
  CHECK_FALSE(g.bonds[bridge].in_ring);
  for (int b = 0; b < g.num_bonds(); ++b)
    if (b != bridge) CHECK(g.bonds[b].in_ring);
  const std::vector<int> torsions = g.torsional_bonds();
  REQUIRE(torsions.size() == 1);
  CHECK(torsions[0] == bridge);
}

TEST_CASE("rotatable bonds are never ring bonds") {
  const MolecularGraph cases[] = {testsupport::make_biphenyl(),
                                  testsupport::make_benzene(),
                                  testsupport::make_3_methylpentane()};
  for (const MolecularGraph& g : cases) {
    int non_ring_single = 0;
    for (const Bond& b : g.bonds) {
      if (b.rotatable) CHECK_FALSE(b.in_ring);
      if (!b.in_ring && b.order == 1) ++non_ring_single;
    }
    CHECK(static_cast<int>(g.torsional_bonds().size()) <= non_ring_single);
  }
}

TEST_CASE("branched fixtures expose two interior torsions") {
  for (const MolecularGraph& g : {testsupport::make_2_methylpentane(),
                                  testsupport::make_3_methylpentane()}) {
    CHECK(g.num_atoms() == 6);
    CHECK(g.torsional_bonds().size() == 2);
  }
}

TEST_CASE("parse-serialize-parse is the identity") {
  for (const MolecularGraph& g :
       {testsupport::make_biphenyl(), testsupport::make_2_methylpentane()}) {
    const MolecularGraph once = parse_sdf(write_sdf(g, "roundtrip"));
    const MolecularGraph twice = parse_sdf(write_sdf(once, "roundtrip"));
    REQUIRE(once.num_atoms() == g.num_atoms());
    REQUIRE(once.num_bonds() == g.num_bonds());
    for (int a = 0; a < g.num_atoms(); ++a) {
      CHECK(once.atoms[a].element == g.atoms[a].element);
      CHECK((once.atoms[a].pos - g.atoms[a].pos).cwiseAbs().maxCoeff() <=
            1e-4);
      // Serialization is exact at 4 decimals, so the second pass is
      // bit-identical to the first.
      CHECK(twice.atoms[a].pos == once.atoms[a].pos);
    }
    for (int b = 0; b < g.num_bonds(); ++b) {
      CHECK(once.bonds[b].i == g.bonds[b].i);
      CHECK(once.bonds[b].j == g.bonds[b].j);
      CHECK(once.bonds[b].order == g.bonds[b].order);
      CHECK(once.bonds[b].in_ring == g.bonds[b].in_ring);
    }
  }
}

TEST_CASE("graph json roundtrip preserves everything") {
  const MolecularGraph g = testsupport::make_biphenyl();
  const MolecularGraph back = graph_from_json(graph_to_json(g));
  REQUIRE(back.num_atoms() == g.num_atoms());
  REQUIRE(back.num_bonds() == g.num_bonds());
  for (int a = 0; a < g.num_atoms(); ++a) {
    CHECK(back.atoms[a].pos == g.atoms[a].pos);
    CHECK(back.atom_in_ring[a] == g.atom_in_ring[a]);
  }
  for (int b = 0; b < g.num_bonds(); ++b) {
    CHECK(back.bonds[b].rotatable == g.bonds[b].rotatable);
    CHECK(back.bonds[b].in_ring == g.bonds[b].in_ring);
  }
  CHECK_THROWS_AS(graph_from_json({{"schema_version", 2}}), InputError);
}

TEST_CASE("pocket json roundtrip and validation") {
  const MolecularGraph lig = testsupport::make_chain(4);
  const Pocket p = testsupport::make_pocket_shell(lig.coords());
  REQUIRE(p.coords.cols() > 0);
  const Pocket back = pocket_from_json(pocket_to_json(p));
  CHECK(back.elements == p.elements);
  CHECK((back.coords - p.coords).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(
      pocket_from_json({{"schema_version", 1},
                        {"atoms", nlohmann::json::array()}}),
      InputError);
}

TEST_CASE("conformer presence is detected") {
  MolecularGraph g = testsupport::make_chain(4);
  CHECK(g.has_conformer());
  for (Atom& a : g.atoms) a.pos = Vec3::Zero();
  CHECK_FALSE(g.has_conformer());
}
