// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "fragdiff/diffusion.hpp"
#include "fragdiff/igso3.hpp"
#include "fragdiff/sampler.hpp"

namespace fragdiff::config {

/// Version string stamped into every artifact the tools emit.
inline constexpr const char* kArtifactVersion = "0.1.0";

/// Flat run configuration covering every tunable the tools expose.  Field
/// validity is owned by the modules the values are handed to; the parser
/// only enforces the key set and scalar syntax.
struct RunConfig {
  // Forward-process schedule.
  double beta_min = 0.1;
  double beta_max = 20.0;
  double sigma_min = 0.01;
  double sigma_max = 2.5;
  // Rotation-law table.
  double table_sigma_min = 0.01;
  double table_sigma_max = 10.0;
  int table_n_sigma = 256;
  int table_n_omega = 2048;
  int table_l_max = 2000;
  // Reverse-time grid.
  int n_steps = 25;
  double t_min = 0.002;
  double t_max = 1.0;
  double rho = 3.0;
  // Noise annealing.
  double gamma_min = 0.0;
  double gamma_max = 0.5;
  double rho_gamma = 2.0;
  // Sampling frame and seeds.
  double scale = 2.7;
  double sigma_com = 0.5;
  int n_seeds = 3;
  std::uint64_t master_seed = 0;
  // Ranking.
  double rank_beta = 4.0;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;

  diffusion::DiffusionSchedule schedule() const;
  igso3::TableParams table_params() const;
  sampler::TimeGrid grid() const;
  sampler::AnnealSchedule anneal() const;
};

/// Parses `key=value` lines.  Blank lines and lines starting with `#` are
/// skipped; whitespace around keys and values is trimmed; later lines win
/// on repeats.  Unknown keys and malformed scalars raise InputError.
RunConfig parse_config(const std::string& text);

/// parse_config over the contents of `path`; a missing or unreadable file
/// raises InputError.
RunConfig parse_config_file(const std::string& path);

/// Sets one field by key name, same syntax rules as the file parser.
void apply_override(RunConfig& cfg, const std::string& key,
                    const std::string& value);

/// Canonical emission: one `key=value` line per field, keys sorted, with
/// round-trippable number formatting.  parse_config(config_to_text(c))
/// compares equal to c.
std::string config_to_text(const RunConfig& cfg);

/// FNV-1a hash of the canonical text; stable across runs and platforms
/// with IEEE doubles.
std::uint64_t config_hash(const RunConfig& cfg);

/// config_hash as a fixed-width hex string for stamping artifacts.
std::string config_hash_hex(const RunConfig& cfg);

}  // namespace fragdiff::config
