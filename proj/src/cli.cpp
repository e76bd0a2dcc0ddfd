// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#include "fragdiff/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <cxxabi.h>
#include <json.hpp>

#include "fragdiff/align.hpp"
#include "fragdiff/audit.hpp"
#include "fragdiff/config.hpp"
#include "fragdiff/diffusion.hpp"
#include "fragdiff/errors.hpp"
#include "fragdiff/fragment.hpp"
#include "fragdiff/igso3.hpp"
#include "fragdiff/liegroup.hpp"
#include "fragdiff/molio.hpp"
#include "fragdiff/rng.hpp"
#include "fragdiff/sampler.hpp"
#include "fragdiff/scorehead.hpp"
#include "fragdiff/types.hpp"

namespace fragdiff::cli {

namespace {

using nlohmann::json;

// --------------------------------------------------------------------
// File and JSON plumbing.

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("cannot read '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw InputError("cannot write '" + path + "'");
  }
  out << content;
  if (!out) {
    throw InputError("write to '" + path + "' failed");
  }
}

json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw InputError("malformed JSON in " + origin + ": " + e.what());
  }
}

molio::MolecularGraph load_graph(const std::string& path) {
  molio::MolecularGraph g = molio::parse_sdf(read_file(path));
  molio::detect_torsional_bonds(g);
  return g;
}

molio::Pocket load_pocket(const std::string& path) {
  try {
    return molio::pocket_from_json(parse_json_text(read_file(path), path));
  } catch (const json::exception& e) {
    throw InputError("malformed pocket in " + path + ": " + e.what());
  }
}

json meta_json(const config::RunConfig& cfg) {
  return {{"artifact_version", config::kArtifactVersion},
          {"config_hash", config::config_hash_hex(cfg)},
          {"master_seed", cfg.master_seed}};
}

std::string csv_stamp(const config::RunConfig& cfg) {
  std::ostringstream os;
  os << "# artifact_version=" << config::kArtifactVersion
     << " config_hash=" << config::config_hash_hex(cfg)
     << " master_seed=" << cfg.master_seed << "\n";
  return os.str();
}

json coords_to_json(const Coords& x) {
  json rows = json::array();
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    rows.push_back({x(0, c), x(1, c), x(2, c)});
  }
  return rows;
}

Coords coords_from_json(const json& j, const std::string& origin) {
  if (!j.is_array()) {
    throw InputError(origin + ": coordinates must be an array");
  }
  Coords x(3, static_cast<Eigen::Index>(j.size()));
  for (std::size_t c = 0; c < j.size(); ++c) {
    const json& row = j[c];
    if (!row.is_array() || row.size() != 3) {
      throw InputError(origin + ": each coordinate needs three components");
    }
    for (int r = 0; r < 3; ++r) {
      x(r, static_cast<Eigen::Index>(c)) = row[static_cast<std::size_t>(r)]
                                               .get<double>();
    }
  }
  return x;
}

json mat3_to_json(const Mat3& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) {
    rows.push_back({m(r, 0), m(r, 1), m(r, 2)});
  }
  return rows;
}

std::string type_name(const std::exception& e) {
  int status = 0;
  char* demangled =
      abi::__cxa_demangle(typeid(e).name(), nullptr, nullptr, &status);
  std::string name =
      (status == 0 && demangled != nullptr) ? demangled : typeid(e).name();
  std::free(demangled);
  return name;
}

// --------------------------------------------------------------------
// Rotation-table cache.  When FRAGDIFF_CACHE_DIR is set, built tables
// are dumped to and restored from a parameter-keyed binary file; any
// read problem falls back to a fresh build.

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
bool read_pod(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return static_cast<bool>(is);
}

void write_array(std::ostream& os, const double* data, std::int64_t n) {
  os.write(reinterpret_cast<const char*>(data),
           static_cast<std::streamsize>(n * sizeof(double)));
}

bool read_array(std::istream& is, double* data, std::int64_t n) {
  is.read(reinterpret_cast<char*>(data),
          static_cast<std::streamsize>(n * sizeof(double)));
  return static_cast<bool>(is);
}

constexpr std::uint64_t kTableMagic = 0x66646967736f3331ULL;  // "fdigso31"

std::string table_cache_path(const std::string& dir,
                             const igso3::TableParams& p) {
  std::ostringstream key;
  key << p.sigma_min << ':' << p.sigma_max << ':' << p.n_sigma << ':'
      << p.n_omega << ':' << p.l_max;
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : key.str()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char name[64];
  std::snprintf(name, sizeof(name), "igso3_%016llx.tab",
                static_cast<unsigned long long>(h));
  return (std::filesystem::path(dir) / name).string();
}

bool load_table_file(const std::string& path, const igso3::TableParams& want,
                     igso3::Table& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    return false;
  }
  std::uint64_t magic = 0;
  igso3::TableParams p;
  if (!read_pod(in, magic) || magic != kTableMagic || !read_pod(in, p) ||
      !(p == want)) {
    return false;
  }
  out.params = p;
  out.sigma_grid.resize(p.n_sigma);
  out.omega_grid.resize(p.n_omega);
  out.density.resize(p.n_sigma, p.n_omega);
  out.cdf.resize(p.n_sigma, p.n_omega);
  out.score_coeff.resize(p.n_sigma, p.n_omega);
  out.loss_weight.resize(p.n_sigma);
  const std::int64_t grid = static_cast<std::int64_t>(p.n_sigma) * p.n_omega;
  return read_array(in, out.sigma_grid.data(), p.n_sigma) &&
         read_array(in, out.omega_grid.data(), p.n_omega) &&
         read_array(in, out.density.data(), grid) &&
         read_array(in, out.cdf.data(), grid) &&
         read_array(in, out.score_coeff.data(), grid) &&
         read_array(in, out.loss_weight.data(), p.n_sigma);
}

void store_table_file(const std::string& path, const igso3::Table& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    return;  // cache is best effort
  }
  write_pod(out, kTableMagic);
  write_pod(out, table.params);
  const std::int64_t grid =
      static_cast<std::int64_t>(table.params.n_sigma) * table.params.n_omega;
  write_array(out, table.sigma_grid.data(), table.params.n_sigma);
  write_array(out, table.omega_grid.data(), table.params.n_omega);
  write_array(out, table.density.data(), grid);
  write_array(out, table.cdf.data(), grid);
  write_array(out, table.score_coeff.data(), grid);
  write_array(out, table.loss_weight.data(), table.params.n_sigma);
}

igso3::Table acquire_table(const config::RunConfig& cfg) {
  const igso3::TableParams params = cfg.table_params();
  const char* dir = std::getenv("FRAGDIFF_CACHE_DIR");
  if (dir == nullptr || *dir == '\0') {
    return igso3::build_table(params);
  }
  const std::string path = table_cache_path(dir, params);
  igso3::Table table;
  if (load_table_file(path, params, table)) {
    return table;
  }
  table = igso3::build_table(params);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  store_table_file(path, table);
  return table;
}

// --------------------------------------------------------------------
// Shared argument plumbing.

struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

void add_config_options(CLI::App* sc, ConfigArgs& args) {
  sc->add_option("--config", args.config_path,
                 "key=value configuration file");
  sc->add_option("--set", args.sets,
                 "override one configuration entry (key=value); repeatable");
  sc->add_option("--seed", args.seed, "master seed (overrides the config)")
      ->each([&args](const std::string&) { args.seed_given = true; });
}

config::RunConfig resolve_config(const ConfigArgs& args) {
  config::RunConfig cfg;
  if (!args.config_path.empty()) {
    cfg = config::parse_config_file(args.config_path);
  }
  for (const std::string& kv : args.sets) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw InputError("--set expects key=value, got '" + kv + "'");
    }
    config::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (args.seed_given) {
    cfg.master_seed = args.seed;
  }
  return cfg;
}

std::vector<align::DihedralSpec> torsion_specs(
    const molio::MolecularGraph& g, const std::vector<int>& bonds) {
  std::vector<int> use = bonds;
  if (use.empty()) {
    use = g.torsional_bonds();
  }
  std::vector<align::DihedralSpec> specs;
  specs.reserve(use.size());
  for (int b : use) {
    specs.push_back(align::make_dihedral_spec(g, b));
  }
  return specs;
}

// --------------------------------------------------------------------
// Subcommands.

int cmd_fragment(const config::RunConfig& cfg, const std::string& ligand,
                 const std::string& out) {
  const molio::MolecularGraph g = load_graph(ligand);
  const fragment::FragmentSet fs = fragment::fr3d(g, cfg.master_seed);
  json doc = {{"meta", meta_json(cfg)},
              {"fragment_set", fragment::fragment_set_to_json(fs)}};
  const std::string text = doc.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file(out, text);
  }
  std::cerr << "fragmented " << ligand << ": " << fs.m() << " fragments, "
            << fs.cut_bonds.size() << " cuts\n";
  return 0;
}

int cmd_align(const config::RunConfig& cfg, const std::string& target_path,
              const std::string& conformer_path,
              const std::vector<int>& bonds, const std::string& out,
              const std::string& report) {
  const molio::MolecularGraph target = load_graph(target_path);
  const molio::MolecularGraph conformer = load_graph(conformer_path);
  if (conformer.num_atoms() != target.num_atoms()) {
    throw InputError("conformer and target atom counts differ");
  }
  const std::vector<align::DihedralSpec> specs =
      torsion_specs(target, bonds);
  const align::AlignResult res = align::joint_align(
      target, conformer.coords(), target.coords(), specs);
  if (!out.empty()) {
    write_file(out, molio::write_sdf(target, res.aligned, "aligned"));
  }
  if (!report.empty()) {
    json doc = {{"meta", meta_json(cfg)},
                {"rmsd", res.rmsd},
                {"rounds", res.round_rmsd.size()},
                {"round_rmsd", res.round_rmsd},
                {"torsions", specs.size()}};
    write_file(report, doc.dump(2) + "\n");
  }
  std::cout << "aligned with " << specs.size() << " torsions over "
            << res.round_rmsd.size() << " rounds, rmsd " << res.rmsd
            << "\n";
  return 0;
}

json seed_result_json(const sampler::SeedResult& r, double final_t,
                      int steps) {
  json rec = {{"seed", r.seed},
              {"ok", r.ok},
              {"final_t", final_t},
              {"steps", steps}};
  if (r.ok) {
    rec["coords"] = coords_to_json(r.coords);
    json frags = json::array();
    for (const auto& tf : r.state.transforms) {
      frags.push_back({{"p", {tf.p.x(), tf.p.y(), tf.p.z()}},
                       {"R", mat3_to_json(tf.R)}});
    }
    rec["fragments"] = frags;
  } else {
    rec["error"] = r.error;
  }
  return rec;
}

int cmd_sample(const config::RunConfig& cfg, const std::string& ligand,
               const std::string& pocket_path, const std::string& model_path,
               const std::string& out_dir, int workers) {
  const molio::MolecularGraph g = load_graph(ligand);
  const molio::Pocket pocket = load_pocket(pocket_path);
  const igso3::Table table = acquire_table(cfg);
  const diffusion::DiffusionSchedule sched = cfg.schedule();
  const fragment::FragmentSet fs = fragment::fr3d(g, cfg.master_seed);

  // One jitter draw for the pocket center, taken from the stream slot
  // below the per-seed streams.
  RandomStream jitter(derive_seed(cfg.master_seed, 0));
  const scorehead::DockContext ctx = sampler::make_context(
      pocket.coords, cfg.scale, cfg.sigma_com, &jitter);

  scorehead::ScoreModel model;
  fragment::FragmentSet fs_mut = fs;
  if (model_path.empty()) {
    // Self-conditioned run: the exact conditional score of the input
    // pose, useful for smoke tests and fixture generation.
    const fragment::PoseState z0 = fragment::phi_inverse(
        sampler::to_internal(g.coords(), ctx), fs_mut);
    model = scorehead::oracle_score(z0, sched, table);
  } else {
    const json j = parse_json_text(read_file(model_path), model_path);
    const scorehead::ToyModel toy = scorehead::ToyModel::from_json(
        j.contains("model") ? j["model"] : j);
    model = toy.as_score_model(sched, table);
  }

  sampler::SampleOptions opts;
  opts.grid = cfg.grid();
  opts.anneal = cfg.anneal();
  opts.n_seeds = cfg.n_seeds;
  opts.master_seed = cfg.master_seed;
  opts.workers = workers;

  const std::vector<sampler::SeedResult> results =
      sampler::sample(model, fs_mut, ctx, sched, opts);

  std::filesystem::create_directories(out_dir);
  const auto out = [&out_dir](const std::string& name) {
    return (std::filesystem::path(out_dir) / name).string();
  };
  const double final_t = opts.grid.t_min;
  const int steps = opts.grid.n - 1;

  json combined = json::array();
  std::ostringstream sdf;
  std::ostringstream csv;
  csv << csv_stamp(cfg) << "seed,ok,final_t,steps,wall_ms\n";
  int n_ok = 0;
  for (const auto& r : results) {
    const json rec = seed_result_json(r, final_t, steps);
    json doc = {{"meta", meta_json(cfg)}};
    doc.update(rec);
    char name[32];
    std::snprintf(name, sizeof(name), "pose_%03d.json", r.seed);
    write_file(out(name), doc.dump(2) + "\n");
    combined.push_back(rec);
    if (r.ok) {
      ++n_ok;
      std::ostringstream title;
      title << "seed " << r.seed;
      sdf << molio::write_sdf(g, r.coords, title.str()) << "$$$$\n";
    }
    csv << r.seed << ',' << (r.ok ? 1 : 0) << ',' << final_t << ','
        << steps << ',' << r.wall_ms << "\n";
  }
  json poses_doc = {{"meta", meta_json(cfg)}, {"poses", combined}};
  write_file(out("poses.json"), poses_doc.dump(2) + "\n");
  write_file(out("poses.sdf"), sdf.str());
  write_file(out("diagnostics.csv"), csv.str());
  json meta_doc = {{"meta", meta_json(cfg)},
                   {"config", config::config_to_text(cfg)}};
  write_file(out("metadata.json"), meta_doc.dump(2) + "\n");

  std::cout << n_ok << "/" << results.size() << " seeds completed into "
            << out_dir << "\n";
  return 0;
}

int cmd_train_toy(const config::RunConfig& cfg, const std::string& ligand,
                  const std::string& pocket_path, int steps, double lr,
                  const std::string& out, const std::string& loss_csv) {
  const molio::MolecularGraph g = load_graph(ligand);
  const molio::Pocket pocket = load_pocket(pocket_path);
  const igso3::Table table = acquire_table(cfg);
  const diffusion::DiffusionSchedule sched = cfg.schedule();

  scorehead::ToyDatum datum;
  datum.fs = fragment::fr3d(g, cfg.master_seed);
  datum.ctx = sampler::make_context(pocket.coords, cfg.scale);
  datum.z0 = fragment::phi_inverse(
      sampler::to_internal(g.coords(), datum.ctx), datum.fs);

  RandomStream rng(derive_seed(cfg.master_seed, 0));
  std::vector<double> history;
  const scorehead::ToyModel model = scorehead::toy_model_train(
      {datum}, steps, lr, sched, table, rng, &history);

  json doc = {{"meta", meta_json(cfg)},
              {"model", model.to_json()},
              {"initial_loss", history.front()},
              {"final_loss", history.back()}};
  write_file(out, doc.dump(2) + "\n");
  if (!loss_csv.empty()) {
    std::ostringstream csv;
    csv << csv_stamp(cfg) << "step,loss\n";
    for (std::size_t i = 0; i < history.size(); ++i) {
      csv << i << ',' << history[i] << "\n";
    }
    write_file(loss_csv, csv.str());
  }
  std::cout << "trained " << steps << " steps: loss " << history.front()
            << " -> " << history.back() << "\n";
  return 0;
}

int cmd_audit_gram(const config::RunConfig& cfg, const std::string& ligand,
                   const std::string& mode, const std::string& out) {
  const molio::MolecularGraph g = load_graph(ligand);
  audit::GramReport report;
  if (mode == "torsional") {
    report = audit::torsional_gram(g, g.coords(),
                                   torsion_specs(g, {}));
  } else if (mode == "fragment") {
    fragment::FragmentSet fs = fragment::fr3d(g, cfg.master_seed);
    const fragment::PoseState z = fragment::phi_inverse(g.coords(), fs);
    report = audit::fragment_gram(fs, z);
  } else {
    throw InputError("unknown gram mode '" + mode +
                     "' (expected torsional or fragment)");
  }
  json doc = {{"meta", meta_json(cfg)},
              {"gram", audit::gram_report_to_json(report)}};
  const std::string text = doc.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file(out, text);
  }
  std::cerr << "gram '" << report.label << "': max off-block coupling "
            << report.off_block_max << "\n";
  return 0;
}

int cmd_rank(const config::RunConfig& cfg, const std::string& poses_path,
             const std::string& ligand, const std::string& pocket_path,
             const std::string& out, const std::string& csv_path) {
  const molio::MolecularGraph g = load_graph(ligand);
  const molio::Pocket pocket = load_pocket(pocket_path);
  const json j = parse_json_text(read_file(poses_path), poses_path);
  if (!j.contains("poses") || !j["poses"].is_array()) {
    throw InputError(poses_path + ": expected a 'poses' array");
  }

  std::vector<audit::RankedSample> samples;
  std::vector<int> seeds;
  std::vector<audit::PoseChecks> details;
  for (const json& rec : j["poses"]) {
    if (rec.contains("ok") && !rec["ok"].get<bool>()) {
      continue;
    }
    audit::RankedSample s;
    s.coords = coords_from_json(rec.at("coords"), poses_path);
    if (s.coords.cols() != g.num_atoms()) {
      throw InputError(poses_path + ": pose atom count differs from ligand");
    }
    const audit::PoseChecks pc =
        audit::pose_checks(s.coords, g, g.coords(), pocket.coords);
    s.binding = audit::pseudo_energy(s.coords, pocket.coords);
    s.checks = pc.fraction;
    samples.push_back(std::move(s));
    details.push_back(pc);
    seeds.push_back(rec.contains("seed") ? rec["seed"].get<int>()
                                         : static_cast<int>(seeds.size()));
  }
  if (samples.empty()) {
    throw InputError(poses_path + ": no usable poses");
  }

  const std::vector<audit::RankedSample> ranked =
      audit::rank(samples, cfg.rank_beta);

  // rank() returns reordered copies; recover each pose's input slot by
  // matching the (bitwise identical) coordinates back to the inputs.
  std::vector<bool> used(samples.size(), false);
  const auto slot_of = [&](const audit::RankedSample& r) -> std::size_t {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (!used[i] && samples[i].coords.size() == r.coords.size() &&
          (samples[i].coords - r.coords).norm() == 0.0) {
        used[i] = true;
        return i;
      }
    }
    throw NumericError("ranked pose does not match any input pose");
  };

  json rows = json::array();
  std::ostringstream csv;
  csv << csv_stamp(cfg) << "rank,seed,score,binding,checks_fraction\n";
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const audit::RankedSample& r = ranked[i];
    const std::size_t slot = slot_of(r);
    const int seed = seeds[slot];
    const audit::PoseChecks& pc = details[slot];
    rows.push_back({{"rank", i},
                    {"seed", seed},
                    {"score", r.score},
                    {"binding", r.binding},
                    {"checks",
                     {{"bond_lengths", pc.bond_lengths},
                      {"bond_angles", pc.bond_angles},
                      {"intra_clash_free", pc.intra_clash_free},
                      {"pocket_clash_free", pc.pocket_clash_free},
                      {"fraction", pc.fraction}}}});
    csv << i << ',' << seed << ',' << r.score << ',' << r.binding << ','
        << pc.fraction << "\n";
  }
  json doc = {{"meta", meta_json(cfg)}, {"ranked", rows}};
  const std::string text = doc.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file(out, text);
  }
  if (!csv_path.empty()) {
    write_file(csv_path, csv.str());
  }
  std::cerr << "ranked " << ranked.size() << " poses\n";
  return 0;
}

// --------------------------------------------------------------------
// verify: built-in invariant suites over a bundled fixture molecule.

struct Suite {
  std::string name;
  int passed = 0;
  int total = 0;

  void check(bool ok) {
    ++total;
    if (ok) {
      ++passed;
    }
  }
};

/// Bundled fixture: an n-carbon zigzag chain with ideal geometry.
molio::MolecularGraph bundled_chain(int n) {
  molio::MolecularGraph g;
  const double half = 56.0 * M_PI / 180.0;
  Vec3 pos = Vec3::Zero();
  for (int a = 0; a < n; ++a) {
    g.atoms.push_back(molio::Atom{"C", 0, pos});
    const Vec3 dir = a % 2 == 0 ? Vec3(std::sin(half), 0.0, std::cos(half))
                                : Vec3(std::sin(half), 0.0, -std::cos(half));
    pos += 1.54 * dir;
  }
  for (int a = 0; a + 1 < n; ++a) {
    g.bonds.push_back(molio::Bond{a, a + 1, 1});
  }
  molio::detect_rings(g);
  molio::detect_torsional_bonds(g);
  return g;
}

Coords bundled_pocket(const Coords& ligand) {
  // Sparse shell of probe atoms around the ligand.
  std::vector<Vec3> points;
  const Vec3 lo = ligand.rowwise().minCoeff() - Vec3::Constant(5.0);
  const Vec3 hi = ligand.rowwise().maxCoeff() + Vec3::Constant(5.0);
  for (double x = lo.x(); x <= hi.x(); x += 2.0) {
    for (double y = lo.y(); y <= hi.y(); y += 2.0) {
      for (double z = lo.z(); z <= hi.z(); z += 2.0) {
        const Vec3 q(x, y, z);
        double best = 1e30;
        for (Eigen::Index c = 0; c < ligand.cols(); ++c) {
          best = std::min(best, (ligand.col(c) - q).norm());
        }
        if (best >= 2.5 && best <= 5.0) {
          points.push_back(q);
        }
      }
    }
  }
  Coords coords(3, static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    coords.col(static_cast<Eigen::Index>(i)) = points[i];
  }
  return coords;
}

Suite verify_rotations() {
  Suite s{"rotations"};
  RandomStream rng(11);
  bool roundtrip = true, orthonormal = true;
  for (int i = 0; i < 50; ++i) {
    const Vec3 v = rng.normal3();  // norm stays well below 2 pi
    const Mat3 R = liegroup::exp_so3(v);
    orthonormal = orthonormal &&
                  (R.transpose() * R - Mat3::Identity()).norm() < 1e-12;
    const Vec3 back = liegroup::log_so3(R);
    const double angle = v.norm();
    // log returns the principal axis-angle vector.
    const Vec3 principal =
        angle > M_PI ? Vec3(-(2.0 * M_PI - angle) * v / angle) : v;
    roundtrip = roundtrip && (back - principal).norm() < 1e-9;
  }
  s.check(roundtrip);
  s.check(orthonormal);
  const Mat3 noisy = liegroup::exp_so3(Vec3(0.3, 0.1, -0.2)) +
                     0.05 * Mat3::Identity();
  const Mat3 proj = liegroup::project_rotation(noisy);
  s.check((proj.transpose() * proj - Mat3::Identity()).norm() < 1e-12);
  s.check(std::abs(proj.determinant() - 1.0) < 1e-12);
  return s;
}

Suite verify_rotation_law(const igso3::Table& table) {
  Suite s{"rotation-law"};
  bool monotone = true, ends_at_one = true;
  for (Eigen::Index r = 0; r < table.cdf.rows(); r += 17) {
    for (Eigen::Index c = 1; c < table.cdf.cols(); ++c) {
      monotone = monotone && table.cdf(r, c) >= table.cdf(r, c - 1) - 1e-12;
    }
    ends_at_one =
        ends_at_one && std::abs(table.cdf(r, table.cdf.cols() - 1) - 1.0) <
                           1e-12;
  }
  s.check(monotone);
  s.check(ends_at_one);
  RandomStream rng(7);
  const Mat3 R = igso3::sample_igso3(table, Mat3::Identity(), 0.5, rng);
  s.check((R.transpose() * R - Mat3::Identity()).norm() < 1e-10);
  s.check(igso3::density(table, 1.0, 0.5) > 0.0);
  return s;
}

Suite verify_mol_io() {
  Suite s{"mol-io"};
  const molio::MolecularGraph g = bundled_chain(6);
  molio::MolecularGraph back =
      molio::parse_sdf(molio::write_sdf(g, "chain6"));
  molio::detect_torsional_bonds(back);
  s.check(back.num_atoms() == 6 && back.num_bonds() == 5);
  s.check((back.coords() - g.coords()).cwiseAbs().maxCoeff() < 1e-4);
  s.check(back.torsional_bonds() == g.torsional_bonds());
  s.check(g.torsional_bonds().size() == 3);
  return s;
}

Suite verify_fragmentation() {
  Suite s{"fragmentation"};
  const molio::MolecularGraph g = bundled_chain(6);
  fragment::FragmentSet a = fragment::fr3d(g, 7);
  fragment::FragmentSet b = fragment::fr3d(g, 7);
  s.check(fragment::fragment_set_to_json(a).dump() ==
          fragment::fragment_set_to_json(b).dump());
  s.check(a.m() >= 1 && a.n_atoms == 6);
  const fragment::PoseState z = fragment::phi_inverse(g.coords(), a);
  s.check((fragment::phi(z, a) - g.coords()).cwiseAbs().maxCoeff() < 1e-9);
  s.check(a.pruned_dummies % 2 == 0);
  return s;
}

Suite verify_diffusion(const igso3::Table& table) {
  Suite s{"diffusion"};
  const diffusion::DiffusionSchedule sched{};
  const molio::MolecularGraph g = bundled_chain(6);
  fragment::FragmentSet fs = fragment::fr3d(g, 7);
  const fragment::PoseState z0 = fragment::phi_inverse(g.coords(), fs);
  const double t = 0.5;
  const double alpha = diffusion::alpha_t(sched, t);
  const diffusion::TangentScore sc =
      diffusion::conditional_score(sched, table, z0, z0, t);
  bool start_pose = true;
  for (std::size_t f = 0; f < z0.size(); ++f) {
    const Vec3 expect = -z0.transforms[f].p / (1.0 + alpha);
    start_pose =
        start_pose && (sc.translation[f] - expect).norm() < 1e-10;
  }
  s.check(start_pose);
  RandomStream rng(3);
  const fragment::PoseState zt =
      diffusion::forward_sample(sched, table, z0, t, rng);
  s.check(zt.size() == z0.size());
  bool on_group = true;
  for (const auto& tf : zt.transforms) {
    on_group = on_group && (tf.R.transpose() * tf.R - Mat3::Identity())
                                   .norm() < 1e-10;
  }
  s.check(on_group);
  return s;
}

Suite verify_alignment() {
  Suite s{"alignment"};
  const molio::MolecularGraph g = bundled_chain(6);
  const Coords p = g.coords();
  const Mat3 R = liegroup::exp_so3(Vec3(0.4, -0.8, 0.2));
  const Vec3 tr(1.0, -2.0, 0.5);
  const Coords q = (R * p).colwise() + tr;
  const liegroup::RigidTransform fit = align::kabsch(p, q);
  s.check((fit.R - R).norm() < 1e-10);
  s.check((fit.p - tr).norm() < 1e-10);
  const Coords moved = (fit.R * p).colwise() + fit.p;
  s.check(align::rmsd(moved, q) < 1e-10);
  return s;
}

Suite verify_sampling(const igso3::Table& table) {
  Suite s{"sampling"};
  const sampler::TimeGrid grid = sampler::karras_grid(25, 0.002, 1.0, 3.0);
  s.check(grid.times.front() == 1.0 && grid.times.back() == 0.002);
  bool decreasing = true;
  for (std::size_t k = 1; k < grid.times.size(); ++k) {
    decreasing = decreasing && grid.times[k] < grid.times[k - 1];
  }
  s.check(decreasing);

  const diffusion::DiffusionSchedule sched{};
  const molio::MolecularGraph g = bundled_chain(6);
  fragment::FragmentSet fs = fragment::fr3d(g, 7);
  const scorehead::DockContext ctx =
      sampler::make_context(bundled_pocket(g.coords()), 2.7);
  const fragment::PoseState z0 = fragment::phi_inverse(
      sampler::to_internal(g.coords(), ctx), fs);
  sampler::SampleOptions opts;
  opts.grid = grid;
  opts.anneal = {0.0, 0.0, 2.0};
  opts.n_seeds = 2;
  opts.master_seed = 5;
  const auto res = sampler::sample(
      scorehead::oracle_score(z0, sched, table), fs, ctx, sched, opts);
  bool recovered = true;
  for (const auto& r : res) {
    recovered = recovered && r.ok;
    if (!r.ok) {
      continue;
    }
    for (std::size_t f = 0; f < z0.size(); ++f) {
      recovered = recovered &&
                  (r.state.transforms[f].p - z0.transforms[f].p).norm() <
                      0.1 &&
                  liegroup::geodesic_angle(z0.transforms[f].R.transpose() *
                                           r.state.transforms[f].R) < 0.1;
    }
  }
  s.check(recovered);
  return s;
}

Suite verify_audit() {
  Suite s{"audit"};
  const molio::MolecularGraph g = bundled_chain(6);
  const Coords pocket = bundled_pocket(g.coords());
  const audit::PoseChecks checks =
      audit::pose_checks(g.coords(), g, g.coords(), pocket);
  s.check(checks.fraction == 1.0);
  s.check(std::isfinite(audit::pseudo_energy(g.coords(), pocket)));
  const audit::GramReport rep =
      audit::torsional_gram(g, g.coords(), torsion_specs(g, {}));
  s.check(rep.gram.rows() == 3 + 6);
  s.check(rep.gram.isApprox(rep.gram.transpose(), 1e-9));
  return s;
}

int cmd_verify(const config::RunConfig& cfg) {
  const igso3::Table table = acquire_table(cfg);
  std::vector<Suite> suites;
  const auto run_suite = [&suites](const std::string& name, auto fn) {
    try {
      suites.push_back(fn());
    } catch (const std::exception& e) {
      Suite failed{name};
      failed.check(false);
      std::cerr << name << ": exception: " << e.what() << "\n";
      suites.push_back(failed);
    }
  };
  run_suite("rotations", [] { return verify_rotations(); });
  run_suite("rotation-law", [&] { return verify_rotation_law(table); });
  run_suite("mol-io", [] { return verify_mol_io(); });
  run_suite("fragmentation", [] { return verify_fragmentation(); });
  run_suite("diffusion", [&] { return verify_diffusion(table); });
  run_suite("alignment", [] { return verify_alignment(); });
  run_suite("sampling", [&] { return verify_sampling(table); });
  run_suite("audit", [] { return verify_audit(); });

  bool all_ok = true;
  for (const Suite& s : suites) {
    std::cout << s.name << ": " << s.passed << "/" << s.total << "\n";
    all_ok = all_ok && s.passed == s.total;
  }
  if (!all_ok) {
    std::cerr << "verification failed\n";
    return 3;
  }
  std::cout << "all suites passed\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"fragment-level rigid-body diffusion toolkit"};
  app.require_subcommand(1);

  // fragment
  ConfigArgs frag_cfg;
  std::string frag_ligand, frag_out;
  CLI::App* frag = app.add_subcommand(
      "fragment", "split a ligand into rigid fragments");
  frag->add_option("--ligand", frag_ligand, "ligand SDF")->required();
  frag->add_option("--out", frag_out, "output JSON (default: stdout)");
  add_config_options(frag, frag_cfg);

  // align
  ConfigArgs align_cfg;
  std::string align_target, align_conf, align_out, align_report;
  std::vector<int> align_bonds;
  CLI::App* aln = app.add_subcommand(
      "align", "torsion-aware alignment of a conformer onto a target");
  aln->add_option("--target", align_target, "target SDF")->required();
  aln->add_option("--conformer", align_conf, "conformer SDF")->required();
  aln->add_option("--bonds", align_bonds,
                  "parent bond indices to search (default: all torsional)");
  aln->add_option("--out", align_out, "aligned SDF output");
  aln->add_option("--report", align_report, "JSON report output");
  add_config_options(aln, align_cfg);

  // sample
  ConfigArgs sample_cfg;
  std::string sample_ligand, sample_pocket, sample_model, sample_out;
  int sample_workers =
      std::max(1u, std::thread::hardware_concurrency());
  CLI::App* smp = app.add_subcommand(
      "sample", "draw docked poses by reverse diffusion");
  smp->add_option("--ligand", sample_ligand, "ligand SDF")->required();
  smp->add_option("--pocket", sample_pocket, "pocket JSON")->required();
  smp->add_option("--model", sample_model,
                  "trained toy model JSON (default: self-conditioned "
                  "oracle)");
  smp->add_option("--out-dir", sample_out, "output directory")->required();
  smp->add_option("--workers", sample_workers,
                  "seed worker threads (default: machine parallelism)");
  add_config_options(smp, sample_cfg);

  // train-toy
  ConfigArgs train_cfg;
  std::string train_ligand, train_pocket, train_out, train_csv;
  int train_steps = 400;
  double train_lr = 1e-6;
  CLI::App* trn = app.add_subcommand(
      "train-toy", "fit the linear toy score model on one complex");
  trn->add_option("--ligand", train_ligand, "ligand SDF")->required();
  trn->add_option("--pocket", train_pocket, "pocket JSON")->required();
  trn->add_option("--steps", train_steps, "gradient steps");
  trn->add_option("--lr", train_lr, "learning rate");
  trn->add_option("--out", train_out, "model JSON output")->required();
  trn->add_option("--loss-csv", train_csv, "per-step loss CSV output");
  add_config_options(trn, train_cfg);

  // audit-gram
  ConfigArgs gram_cfg;
  std::string gram_ligand, gram_mode = "torsional", gram_out;
  CLI::App* grm = app.add_subcommand(
      "audit-gram", "tangent-space Gram matrix audit");
  grm->add_option("--ligand", gram_ligand, "ligand SDF")->required();
  grm->add_option("--mode", gram_mode, "torsional or fragment");
  grm->add_option("--out", gram_out, "output JSON (default: stdout)");
  add_config_options(grm, gram_cfg);

  // rank
  ConfigArgs rank_cfg;
  std::string rank_poses, rank_ligand, rank_pocket, rank_out, rank_csv;
  CLI::App* rnk = app.add_subcommand(
      "rank", "order sampled poses by plausibility-weighted binding");
  rnk->add_option("--poses", rank_poses, "poses JSON (from sample)")
      ->required();
  rnk->add_option("--ligand", rank_ligand, "ligand SDF")->required();
  rnk->add_option("--pocket", rank_pocket, "pocket JSON")->required();
  rnk->add_option("--out", rank_out, "ranked JSON (default: stdout)");
  rnk->add_option("--csv", rank_csv, "ranked CSV output");
  add_config_options(rnk, rank_cfg);

  // verify
  ConfigArgs verify_cfg;
  CLI::App* vrf = app.add_subcommand(
      "verify", "run the built-in invariant suites");
  add_config_options(vrf, verify_cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (frag->parsed()) {
      return cmd_fragment(resolve_config(frag_cfg), frag_ligand, frag_out);
    }
    if (aln->parsed()) {
      return cmd_align(resolve_config(align_cfg), align_target, align_conf,
                       align_bonds, align_out, align_report);
    }
    if (smp->parsed()) {
      return cmd_sample(resolve_config(sample_cfg), sample_ligand,
                        sample_pocket, sample_model, sample_out,
                        sample_workers);
    }
    if (trn->parsed()) {
      return cmd_train_toy(resolve_config(train_cfg), train_ligand,
                           train_pocket, train_steps, train_lr, train_out,
                           train_csv);
    }
    if (grm->parsed()) {
      return cmd_audit_gram(resolve_config(gram_cfg), gram_ligand, gram_mode,
                            gram_out);
    }
    if (rnk->parsed()) {
      return cmd_rank(resolve_config(rank_cfg), rank_poses, rank_ligand,
                      rank_pocket, rank_out, rank_csv);
    }
    if (vrf->parsed()) {
      return cmd_verify(resolve_config(verify_cfg));
    }
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure (" << type_name(e) << "): " << e.what()
              << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace fragdiff::cli
