// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#include "fragdiff/molio.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>
#include <utility>

namespace fragdiff::molio {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      lines.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) lines.push_back(std::move(cur));
  return lines;
}

int parse_int_field(const std::string& line, std::size_t pos, std::size_t len,
                    int line_no, const char* what) {
  if (line.size() < pos)
    throw ParseError(line_no, std::string("line too short for ") + what);
  const std::string field = trim(line.substr(pos, len));
  if (field.empty())
    throw ParseError(line_no, std::string("missing ") + what);
  try {
    std::size_t used = 0;
    const int v = std::stoi(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw ParseError(line_no,
                     std::string("invalid ") + what + ": '" + field + "'");
  }
}

double parse_real_field(const std::string& line, std::size_t pos,
                        std::size_t len, int line_no, const char* what) {
  if (line.size() < pos)
    throw ParseError(line_no, std::string("line too short for ") + what);
  const std::string field = trim(line.substr(pos, len));
  if (field.empty())
    throw ParseError(line_no, std::string("missing ") + what);
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw ParseError(line_no,
                     std::string("invalid ") + what + ": '" + field + "'");
  }
}

bool is_hydrogen(const std::string& element) {
  return element == "H" || element == "D" || element == "T";
}

void validate_bonds(const std::vector<Bond>& bonds, int n_atoms) {
  std::set<std::pair<int, int>> seen;
  for (const Bond& b : bonds) {
    if (b.i < 0 || b.j < 0 || b.i >= n_atoms || b.j >= n_atoms || b.i == b.j)
      throw InputError("bond endpoints out of range or degenerate");
    const auto key = std::minmax(b.i, b.j);
    if (!seen.insert(key).second) throw InputError("duplicate bond");
  }
}

void check_connected(const MolecularGraph& g) {
  const int n = g.num_atoms();
  if (n == 0) return;
  std::vector<std::vector<int>> adj(n);
  for (const Bond& b : g.bonds) {
    adj[b.i].push_back(b.j);
    adj[b.j].push_back(b.i);
  }
  std::vector<bool> seen(n, false);
  std::vector<int> stack = {0};
  seen[0] = true;
  int visited = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v : adj[u])
      if (!seen[v]) {
        seen[v] = true;
        ++visited;
        stack.push_back(v);
      }
  }
  if (visited != n) {
    int components = 1;
    for (int a = 0; a < n; ++a)
      if (!seen[a]) {
        ++components;
        // Flood the rest of this component so it is counted once.
        std::vector<int> s2 = {a};
        seen[a] = true;
        while (!s2.empty()) {
          const int u = s2.back();
          s2.pop_back();
          for (int v : adj[u])
            if (!seen[v]) {
              seen[v] = true;
              s2.push_back(v);
            }
        }
      }
    throw DisconnectedError(components);
  }
}

}  // namespace

ParseError::ParseError(int line, const std::string& what)
    : InputError("parse error at line " + std::to_string(line) + ": " + what),
      line_(line) {}

DisconnectedError::DisconnectedError(int components)
    : InputError("heavy-atom graph has " + std::to_string(components) +
                 " components; expected a single connected molecule") {}

int MolecularGraph::degree(int a) const {
  int d = 0;
  for (const Bond& b : bonds)
    if (b.i == a || b.j == a) ++d;
  return d;
}

std::vector<int> MolecularGraph::neighbors(int a) const {
  std::vector<int> out;
  for (const Bond& b : bonds) {
    if (b.i == a) out.push_back(b.j);
    if (b.j == a) out.push_back(b.i);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Coords MolecularGraph::coords() const {
  Coords c(3, num_atoms());
  for (int a = 0; a < num_atoms(); ++a) c.col(a) = atoms[a].pos;
  return c;
}

bool MolecularGraph::has_conformer() const {
  for (const Atom& a : atoms)
    if (a.pos != Vec3::Zero()) return true;
  return false;
}

std::vector<int> MolecularGraph::torsional_bonds() const {
  std::vector<int> out;
  for (int b = 0; b < num_bonds(); ++b)
    if (bonds[b].rotatable) out.push_back(b);
  return out;
}

MolecularGraph parse_sdf(const std::string& text) {
  const std::vector<std::string> lines = split_lines(text);
  if (lines.size() < 4) throw ParseError(0, "fewer than 4 lines");

  const int counts_line = 4;  // after the three header lines
  const std::string& counts = lines[3];
  const int n_atoms = parse_int_field(counts, 0, 3, counts_line, "atom count");
  const int n_bonds = parse_int_field(counts, 3, 3, counts_line, "bond count");
  if (n_atoms < 1) throw ParseError(counts_line, "molecule has no atoms");
  if (n_bonds < 0) throw ParseError(counts_line, "negative bond count");
  if (lines.size() < static_cast<std::size_t>(4 + n_atoms + n_bonds))
    throw ParseError(static_cast<int>(lines.size()),
                     "truncated atom/bond block");

  struct RawAtom {
    Vec3 pos;
    std::string element;
    int charge = 0;
  };
  std::vector<RawAtom> raw(n_atoms);
  for (int a = 0; a < n_atoms; ++a) {
    const int line_no = 5 + a;
    const std::string& line = lines[4 + a];
    raw[a].pos.x() = parse_real_field(line, 0, 10, line_no, "x coordinate");
    raw[a].pos.y() = parse_real_field(line, 10, 10, line_no, "y coordinate");
    raw[a].pos.z() = parse_real_field(line, 20, 10, line_no, "z coordinate");
    if (line.size() < 32)
      throw ParseError(line_no, "line too short for element symbol");
    raw[a].element = trim(line.substr(31, 3));
    if (raw[a].element.empty() ||
        !std::isalpha(static_cast<unsigned char>(raw[a].element[0])))
      throw ParseError(line_no, "invalid element symbol");
  }

  struct RawBond {
    int i, j, order, line_no;
  };
  std::vector<RawBond> raw_bonds(n_bonds);
  for (int b = 0; b < n_bonds; ++b) {
    const int line_no = 5 + n_atoms + b;
    const std::string& line = lines[4 + n_atoms + b];
    RawBond& rb = raw_bonds[b];
    rb.line_no = line_no;
    rb.i = parse_int_field(line, 0, 3, line_no, "bond atom 1") - 1;
    rb.j = parse_int_field(line, 3, 3, line_no, "bond atom 2") - 1;
    rb.order = parse_int_field(line, 6, 3, line_no, "bond order");
    if (rb.i < 0 || rb.i >= n_atoms || rb.j < 0 || rb.j >= n_atoms)
      throw ParseError(line_no, "bond atom index out of range");
    if (rb.i == rb.j) throw ParseError(line_no, "bond joins an atom to itself");
    if (rb.order < 1 || rb.order > 4)
      throw ParseError(line_no, "bond order must be 1, 2, 3, or 4");
  }

  // Property block: only "M  CHG" is interpreted; "M  END" terminates.
  for (std::size_t idx = 4 + n_atoms + n_bonds; idx < lines.size(); ++idx) {
    const std::string& line = lines[idx];
    const int line_no = static_cast<int>(idx) + 1;
    if (line.rfind("M  END", 0) == 0 || line.rfind("$$$$", 0) == 0) break;
    if (line.rfind("M  CHG", 0) != 0) continue;
    std::istringstream ss(line.substr(6));
    int count = 0;
    if (!(ss >> count) || count < 1)
      throw ParseError(line_no, "malformed M  CHG count");
    for (int e = 0; e < count; ++e) {
      int atom = 0, charge = 0;
      if (!(ss >> atom >> charge))
        throw ParseError(line_no, "malformed M  CHG entry");
      if (atom < 1 || atom > n_atoms)
        throw ParseError(line_no, "M  CHG atom index out of range");
      raw[atom - 1].charge = charge;
    }
  }

  // Strip hydrogens and reindex.
  std::vector<int> remap(n_atoms, -1);
  MolecularGraph g;
  for (int a = 0; a < n_atoms; ++a) {
    if (is_hydrogen(raw[a].element)) continue;
    remap[a] = g.num_atoms();
    g.atoms.push_back(Atom{raw[a].element, raw[a].charge, raw[a].pos});
  }
  if (g.atoms.empty()) throw ParseError(0, "no heavy atoms after stripping");
  std::set<std::pair<int, int>> seen;
  for (const RawBond& rb : raw_bonds) {
    const int i = remap[rb.i];
    const int j = remap[rb.j];
    if (i < 0 || j < 0) continue;
    if (!seen.insert(std::minmax(i, j)).second)
      throw ParseError(rb.line_no, "duplicate bond");
    g.bonds.push_back(Bond{i, j, rb.order, false, false});
  }

  check_connected(g);
  detect_rings(g);
  return g;
}

std::string write_sdf(const MolecularGraph& g, const std::string& title) {
  return write_sdf(g, g.coords(), title);
}

std::string write_sdf(const MolecularGraph& g, const Coords& coords,
                      const std::string& title) {
  if (coords.cols() != g.num_atoms())
    throw InputError("write_sdf: coordinate count does not match the graph");
  std::ostringstream os;
  os << title << "\n  fragdiff\n\n";
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%3d%3d  0  0  0  0  0  0  0  0999 V2000\n",
                g.num_atoms(), g.num_bonds());
  os << buf;
  for (int a = 0; a < g.num_atoms(); ++a) {
    std::snprintf(buf, sizeof(buf),
                  "%10.4f%10.4f%10.4f %-3s 0  0  0  0  0  0  0  0  0  0  0  0\n",
                  coords(0, a), coords(1, a), coords(2, a),
                  g.atoms[a].element.c_str());
    os << buf;
  }
  for (const Bond& b : g.bonds) {
    std::snprintf(buf, sizeof(buf), "%3d%3d%3d  0\n", b.i + 1, b.j + 1,
                  b.order);
    os << buf;
  }
  std::vector<int> charged;
  for (int a = 0; a < g.num_atoms(); ++a)
    if (g.atoms[a].charge != 0) charged.push_back(a);
  for (std::size_t start = 0; start < charged.size(); start += 8) {
    const std::size_t n = std::min<std::size_t>(8, charged.size() - start);
    os << "M  CHG" << std::setw(3) << n;
    for (std::size_t e = 0; e < n; ++e) {
      const int a = charged[start + e];
      os << std::setw(4) << a + 1 << std::setw(4) << g.atoms[a].charge;
    }
    os << "\n";
  }
  os << "M  END\n";
  return os.str();
}

void detect_rings(MolecularGraph& g) {
  const int n = g.num_atoms();
  // Adjacency as (neighbor, bond index) pairs.
  std::vector<std::vector<std::pair<int, int>>> adj(n);
  for (int b = 0; b < g.num_bonds(); ++b) {
    adj[g.bonds[b].i].push_back({g.bonds[b].j, b});
    adj[g.bonds[b].j].push_back({g.bonds[b].i, b});
  }

  // Bridge finding: a bond lies on a cycle iff it is not a bridge.
  std::vector<int> disc(n, -1), low(n, 0);
  std::vector<bool> is_bridge(g.num_bonds(), false);
  int timer = 0;
  std::function<void(int, int)> dfs = [&](int u, int parent_bond) {
    disc[u] = low[u] = timer++;
    for (const auto& [v, bond] : adj[u]) {
      if (bond == parent_bond) continue;
      if (disc[v] == -1) {
        dfs(v, bond);
        low[u] = std::min(low[u], low[v]);
        if (low[v] > disc[u]) is_bridge[bond] = true;
      } else {
        low[u] = std::min(low[u], disc[v]);
      }
    }
  };
  for (int a = 0; a < n; ++a)
    if (disc[a] == -1) dfs(a, -1);

  g.atom_in_ring.assign(n, false);
  for (int b = 0; b < g.num_bonds(); ++b) {
    g.bonds[b].in_ring = !is_bridge[b];
    if (g.bonds[b].in_ring) {
      g.atom_in_ring[g.bonds[b].i] = true;
      g.atom_in_ring[g.bonds[b].j] = true;
    }
  }
}

std::vector<int> detect_torsional_bonds(MolecularGraph& g) {
  std::vector<int> degree(g.num_atoms(), 0);
  for (const Bond& b : g.bonds) {
    ++degree[b.i];
    ++degree[b.j];
  }
  std::vector<int> out;
  for (int b = 0; b < g.num_bonds(); ++b) {
    Bond& bond = g.bonds[b];
    bond.rotatable = bond.order == 1 && !bond.in_ring &&
                     degree[bond.i] >= 2 && degree[bond.j] >= 2;
    if (bond.rotatable) out.push_back(b);
  }
  return out;
}

nlohmann::json graph_to_json(const MolecularGraph& g) {
  nlohmann::json atoms = nlohmann::json::array();
  for (const Atom& a : g.atoms) {
    atoms.push_back({{"element", a.element},
                     {"charge", a.charge},
                     {"xyz", {a.pos.x(), a.pos.y(), a.pos.z()}}});
  }
  nlohmann::json bonds = nlohmann::json::array();
  for (const Bond& b : g.bonds) {
    bonds.push_back({{"i", b.i},
                     {"j", b.j},
                     {"order", b.order},
                     {"in_ring", b.in_ring},
                     {"rotatable", b.rotatable}});
  }
  nlohmann::json ring = nlohmann::json::array();
  for (bool f : g.atom_in_ring) ring.push_back(f);
  return {{"schema_version", 1},
          {"atoms", atoms},
          {"bonds", bonds},
          {"atom_in_ring", ring}};
}

MolecularGraph graph_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != 1)
      throw InputError("graph json: unsupported schema_version");
    MolecularGraph g;
    for (const auto& a : j.at("atoms")) {
      Atom atom;
      atom.element = a.at("element").get<std::string>();
      atom.charge = a.value("charge", 0);
      const auto& xyz = a.at("xyz");
      atom.pos = Vec3(xyz.at(0).get<double>(), xyz.at(1).get<double>(),
                      xyz.at(2).get<double>());
      g.atoms.push_back(std::move(atom));
    }
    if (g.atoms.empty()) throw InputError("graph json: no atoms");
    for (const auto& b : j.at("bonds")) {
      Bond bond;
      bond.i = b.at("i").get<int>();
      bond.j = b.at("j").get<int>();
      bond.order = b.at("order").get<int>();
      bond.in_ring = b.value("in_ring", false);
      bond.rotatable = b.value("rotatable", false);
      g.bonds.push_back(bond);
    }
    validate_bonds(g.bonds, g.num_atoms());
    if (j.contains("atom_in_ring")) {
      g.atom_in_ring.clear();
      for (const auto& f : j.at("atom_in_ring"))
        g.atom_in_ring.push_back(f.get<bool>());
      if (g.atom_in_ring.size() != g.atoms.size())
        throw InputError("graph json: atom_in_ring length mismatch");
    } else {
      detect_rings(g);
    }
    check_connected(g);
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("graph json: ") + e.what());
  }
}

Pocket pocket_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != 1)
      throw InputError("pocket json: unsupported schema_version");
    const auto& atoms = j.at("atoms");
    if (atoms.empty()) throw InputError("pocket json: no atoms");
    Pocket p;
    p.coords.resize(3, static_cast<Eigen::Index>(atoms.size()));
    Eigen::Index col = 0;
    for (const auto& a : atoms) {
      p.elements.push_back(a.at("element").get<std::string>());
      const auto& xyz = a.at("xyz");
      p.coords.col(col++) = Vec3(xyz.at(0).get<double>(),
                                 xyz.at(1).get<double>(),
                                 xyz.at(2).get<double>());
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("pocket json: ") + e.what());
  }
}

nlohmann::json pocket_to_json(const Pocket& p) {
  nlohmann::json atoms = nlohmann::json::array();
  for (Eigen::Index c = 0; c < p.coords.cols(); ++c) {
    atoms.push_back({{"element", p.elements[c]},
                     {"xyz",
                      {p.coords(0, c), p.coords(1, c), p.coords(2, c)}}});
  }
  return {{"schema_version", 1}, {"atoms", atoms}};
}

}  // namespace fragdiff::molio
