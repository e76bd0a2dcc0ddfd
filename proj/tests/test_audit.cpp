// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#include "fragdiff/audit.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "fragdiff/fragment.hpp"
#include "fragdiff/liegroup.hpp"
#include "support/fixtures.hpp"

using namespace fragdiff;

namespace {

std::vector<align::DihedralSpec> canonical_torsions(
    const molio::MolecularGraph& g) {
  std::vector<align::DihedralSpec> specs;
  for (int b = 0; b < g.num_bonds(); ++b)
    if (g.bonds[static_cast<std::size_t>(b)].rotatable)
      specs.push_back(align::make_dihedral_spec(g, b));
  return specs;
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  return es.eigenvalues().minCoeff();
}

double max_torsion_cross(const audit::GramReport& r, int k) {
  double best = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      if (i != j) best = std::max(best, audit::block_abs_max(r, i, j));
  return best;
}

}  // namespace

TEST_CASE("nested chain torsions are entangled in the torsional Gram") {
  const molio::MolecularGraph g = testsupport::make_chain(5);
  const std::vector<align::DihedralSpec> torsions = canonical_torsions(g);
  REQUIRE(torsions.size() == 2);

  const audit::GramReport r = audit::torsional_gram(g, g.coords(), torsions);
  CHECK(r.label == "torsional");
  REQUIRE(r.gram.rows() == 8);
  CHECK((r.gram - r.gram.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(min_eigenvalue(r.gram) > -1e-8);
  CHECK(max_torsion_cross(r, 2) > 1e-3);
  CHECK(r.off_block_max > 1e-3);
}

TEST_CASE("torsions with disjoint rotating sides decouple") {
  const molio::MolecularGraph g = testsupport::make_chain(5);
  // Orient the two dihedrals outward: bond 1-2 rotating {0, 1}, bond 2-3
  // rotating {3, 4}.  The moving atom sets are disjoint.
  align::DihedralSpec left;
  left.a = 3;
  left.b = 2;
  left.c = 1;
  left.d = 0;
  align::DihedralSpec right;
  right.a = 1;
  right.b = 2;
  right.c = 3;
  right.d = 4;

  const audit::GramReport r =
      audit::torsional_gram(g, g.coords(), {left, right});
  CHECK(max_torsion_cross(r, 2) < 1e-8);
  // The rigid columns still couple to everything, so the overall
  // cross-block max is not small.
  CHECK(r.off_block_max > 1e-3);
}

TEST_CASE("torsional Gram input validation and error propagation") {
  const molio::MolecularGraph g = testsupport::make_chain(5);
  const std::vector<align::DihedralSpec> torsions = canonical_torsions(g);
  CHECK_THROWS_AS(audit::torsional_gram(g, g.coords(), {torsions[0]}),
                  InputError);

  Coords collinear = g.coords();
  for (int i = 0; i < 5; ++i) collinear.col(i) = i * Vec3(1.54, 0.0, 0.0);
  CHECK_THROWS_AS(audit::torsional_gram(g, collinear, torsions),
                  align::UndefinedDihedral);
}

TEST_CASE("fragment Gram has exactly zero cross blocks") {
  const molio::MolecularGraph g = testsupport::make_chain(6);
  fragment::FragmentSet fs = fragment::build_fragment_set(g, {1, 3});
  REQUIRE(fs.m() == 3);
  Coords conformer = g.coords();
  const fragment::PoseState z = fragment::phi_inverse(conformer, fs);

  const audit::GramReport r = audit::fragment_gram(fs, z);
  CHECK(r.label == "fragment");
  REQUIRE(r.gram.rows() == 18);
  CHECK((r.gram - r.gram.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(min_eigenvalue(r.gram) > -1e-8);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) CHECK(audit::block_abs_max(r, i, j) == 0.0);
  CHECK(r.off_block_max < 1e-12);

  // Two-atom fragments are rotation-degenerate about their axis, so both
  // the full determinant and the block product vanish together.
  double product = 1.0;
  for (int i = 0; i < 3; ++i)
    product *= r.gram.block(6 * i, 6 * i, 6, 6).determinant();
  CHECK(r.gram.determinant() == 0.0);
  CHECK(product == 0.0);
}

TEST_CASE("fragment Gram determinant factorizes over blocks") {
  // Three-atom fragments: every 6x6 block has full rank.
  const molio::MolecularGraph g = testsupport::make_chain(9);
  fragment::FragmentSet fs = fragment::build_fragment_set(g, {2, 5});
  REQUIRE(fs.m() == 3);
  Coords conformer = g.coords();
  const fragment::PoseState z = fragment::phi_inverse(conformer, fs);

  const audit::GramReport r = audit::fragment_gram(fs, z);
  double product = 1.0;
  for (int i = 0; i < 3; ++i)
    product *= r.gram.block(6 * i, 6 * i, 6, 6).determinant();
  const double whole = r.gram.determinant();
  REQUIRE(std::abs(product) > 0.0);
  CHECK(std::abs(whole - product) < 1e-6 * std::abs(product));
}

TEST_CASE("single-fragment Gram is one block") {
  const molio::MolecularGraph g = testsupport::make_benzene();
  fragment::FragmentSet fs = fragment::build_fragment_set(g, {});
  Coords conformer = g.coords();
  const fragment::PoseState z = fragment::phi_inverse(conformer, fs);
  const audit::GramReport r = audit::fragment_gram(fs, z);
  CHECK(r.gram.rows() == 6);
  CHECK(r.block_sizes == std::vector<int>{6});
  CHECK(r.off_block_max == 0.0);
  CHECK(min_eigenvalue(r.gram) > -1e-8);
}

TEST_CASE("coupled torsional vs clean fragment Gram on shared fixtures") {
  const std::vector<molio::MolecularGraph> fixtures = {
      testsupport::make_chain(5), testsupport::make_chain(6),
      testsupport::make_2_methylpentane()};
  for (const molio::MolecularGraph& g : fixtures) {
    const std::vector<align::DihedralSpec> torsions = canonical_torsions(g);
    REQUIRE(torsions.size() >= 2);
    const audit::GramReport rt =
        audit::torsional_gram(g, g.coords(), torsions);
    CHECK(max_torsion_cross(rt, static_cast<int>(torsions.size())) > 1e-3);

    fragment::FragmentSet fs =
        fragment::build_fragment_set(g, g.torsional_bonds());
    Coords conformer = g.coords();
    const fragment::PoseState z = fragment::phi_inverse(conformer, fs);
    const audit::GramReport rf = audit::fragment_gram(fs, z);
    CHECK(rf.off_block_max < 1e-12);
  }
}

TEST_CASE("gram report serializes") {
  const molio::MolecularGraph g = testsupport::make_chain(5);
  const audit::GramReport r =
      audit::torsional_gram(g, g.coords(), canonical_torsions(g));
  const nlohmann::json j = audit::gram_report_to_json(r);
  CHECK(j.at("label") == "torsional");
  CHECK(j.at("size") == 8);
  CHECK(j.at("gram").size() == 8);
  CHECK(j.at("off_block_max").get<double>() == r.off_block_max);
}

TEST_CASE("pose checks pass on the reference pose") {
  const molio::MolecularGraph g = testsupport::make_chain(5);
  const Coords ref = g.coords();

  Coords far_pocket(3, 1);
  far_pocket.col(0) = Vec3(100.0, 100.0, 100.0);
  const audit::PoseChecks far = audit::pose_checks(ref, g, ref, far_pocket);
  CHECK(far.bond_lengths);
  CHECK(far.bond_angles);
  CHECK(far.intra_clash_free);
  CHECK(far.pocket_clash_free);
  CHECK(far.fraction == 1.0);

  const audit::PoseChecks empty =
      audit::pose_checks(ref, g, ref, Coords(3, 0));
  CHECK(empty.fraction == 1.0);
}

TEST_CASE("pose checks flag constructed violations") {
  const molio::MolecularGraph g = testsupport::make_chain(5);
  const Coords ref = g.coords();
  const Coords pocket(3, 0);

  SUBCASE("collapsed nonbonded pair") {
    Coords bad = ref;
    bad.col(4) = ref.col(0) + Vec3(0.1, 0.0, 0.0);
    const audit::PoseChecks c = audit::pose_checks(bad, g, ref, pocket);
    CHECK_FALSE(c.intra_clash_free);
  }

  SUBCASE("stretched bond") {
    Coords bad = ref;
    bad.col(4) = ref.col(3) + 1.5 * (ref.col(4) - ref.col(3));
    const audit::PoseChecks c = audit::pose_checks(bad, g, ref, pocket);
    CHECK_FALSE(c.bond_lengths);
    CHECK(c.bond_angles);
    CHECK(c.intra_clash_free);
    CHECK(c.fraction == 0.75);
  }

  SUBCASE("bent angle, bond lengths intact") {
    Coords bad = ref;
    const Vec3 arm = ref.col(4) - ref.col(3);
    const Vec3 normal =
        (Vec3(ref.col(2) - ref.col(3))).cross(arm).normalized();
    bad.col(4) = ref.col(3) + liegroup::exp_so3(0.52 * normal) * arm;
    const audit::PoseChecks c = audit::pose_checks(bad, g, ref, pocket);
    CHECK(c.bond_lengths);
    CHECK_FALSE(c.bond_angles);
    CHECK(c.fraction == 0.75);
  }

  SUBCASE("pocket clash") {
    Coords near(3, 1);
    near.col(0) = ref.col(2) + Vec3(0.5, 0.0, 0.0);
    const audit::PoseChecks c = audit::pose_checks(ref, g, ref, near);
    CHECK_FALSE(c.pocket_clash_free);
    CHECK(c.fraction == 0.75);
  }

  CHECK_THROWS_AS(audit::pose_checks(ref.leftCols(4), g, ref, pocket),
                  InputError);
}

TEST_CASE("pseudo energy branches") {
  Coords atom(3, 1);
  atom.col(0) = Vec3::Zero();

  Coords pocket(3, 1);
  pocket.col(0) = Vec3(100.0, 0.0, 0.0);
  CHECK(audit::pseudo_energy(atom, pocket) == 0.0);

  pocket.col(0) = Vec3(3.5, 0.0, 0.0);
  CHECK(audit::pseudo_energy(atom, pocket) ==
        doctest::Approx(-1.0).epsilon(1e-12));

  pocket.col(0) = Vec3(1.0, 0.0, 0.0);
  const double clash = audit::pseudo_energy(atom, pocket);
  CHECK(clash == doctest::Approx(2.5).epsilon(1e-12));
  pocket.col(0) = Vec3(1.25, 0.0, 0.0);
  const double nearer = audit::pseudo_energy(atom, pocket);
  pocket.col(0) = Vec3(1.5, 0.0, 0.0);
  const double edge = audit::pseudo_energy(atom, pocket);
  CHECK(clash > nearer);
  CHECK(nearer > edge);

  CHECK_THROWS_AS(audit::pseudo_energy(atom, Coords(3, 0)), InputError);
}

TEST_CASE("mixed-score ranking") {
  auto sample = [](double b, double p, double tag) {
    audit::RankedSample s;
    s.coords = Coords::Constant(3, 1, tag);
    s.binding = b;
    s.checks = p;
    return s;
  };

  SUBCASE("arithmetic and ordering") {
    const auto out =
        audit::rank({sample(-8.0, 1.0, 0), sample(-5.0, 1.0, 1),
                     sample(-10.0, 0.5, 2), sample(3.0, 0.0, 3)});
    REQUIRE(out.size() == 4);
    CHECK(out[0].score == doctest::Approx(8.0).epsilon(1e-12));
    CHECK(out[0].coords(0, 0) == 0.0);
    CHECK(out[1].score == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(out[2].score == doctest::Approx(0.625).epsilon(1e-12));
    CHECK(out[2].coords(0, 0) == 2.0);
    CHECK(out[3].score == 0.0);  // p = 0 zeroes any binding energy
  }

  SUBCASE("stable ties keep input order") {
    const auto out = audit::rank(
        {sample(-4.0, 1.0, 10), sample(-4.0, 1.0, 11), sample(-4.0, 1.0, 12)});
    CHECK(out[0].coords(0, 0) == 10.0);
    CHECK(out[1].coords(0, 0) == 11.0);
    CHECK(out[2].coords(0, 0) == 12.0);
  }

  SUBCASE("ordering is invariant to a positive scale on b") {
    std::vector<audit::RankedSample> base = {
        sample(-8.0, 0.9, 0), sample(-5.0, 1.0, 1), sample(-10.0, 0.6, 2),
        sample(-1.0, 0.95, 3)};
    std::vector<audit::RankedSample> scaled = base;
    for (auto& s : scaled) s.binding *= 3.0;
    const auto a = audit::rank(base);
    const auto b = audit::rank(scaled);
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(a[i].coords(0, 0) == b[i].coords(0, 0));
  }

  SUBCASE("validation") {
    CHECK_THROWS_AS(audit::rank({sample(-1.0, 1.5, 0)}), InputError);
    CHECK_THROWS_AS(audit::rank({sample(-1.0, 0.5, 0)}, -1.0), InputError);
  }
}
