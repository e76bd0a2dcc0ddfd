// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#include "fragdiff/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fragdiff/errors.hpp"

namespace fragdiff::config {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) {
      throw InputError("trailing characters");
    }
    return v;
  } catch (const InputError&) {
    throw InputError("config key '" + key + "': bad number '" + value + "'");
  } catch (const std::exception&) {
    throw InputError("config key '" + key + "': bad number '" + value + "'");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(value, &pos);
    if (pos != value.size()) {
      throw InputError("trailing characters");
    }
    return v;
  } catch (const std::exception&) {
    throw InputError("config key '" + key + "': bad integer '" + value +
                     "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    if (!value.empty() && value.front() == '-') {
      throw InputError("negative");
    }
    std::size_t pos = 0;
    const std::uint64_t v = std::stoull(value, &pos);
    if (pos != value.size()) {
      throw InputError("trailing characters");
    }
    return v;
  } catch (const std::exception&) {
    throw InputError("config key '" + key + "': bad unsigned integer '" +
                     value + "'");
  }
}

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

Field field(const char* key, double RunConfig::*m) {
  return {key, [m](const RunConfig& c) { return format_double(c.*m); },
          [m, key](RunConfig& c, const std::string& v) {
            c.*m = parse_double(key, v);
          }};
}

Field field(const char* key, int RunConfig::*m) {
  return {key, [m](const RunConfig& c) { return std::to_string(c.*m); },
          [m, key](RunConfig& c, const std::string& v) {
            c.*m = parse_int(key, v);
          }};
}

Field field(const char* key, std::uint64_t RunConfig::*m) {
  return {key, [m](const RunConfig& c) { return std::to_string(c.*m); },
          [m, key](RunConfig& c, const std::string& v) {
            c.*m = parse_u64(key, v);
          }};
}

/// Field table in canonical (sorted-key) order; emission and hashing walk
/// it front to back.
const std::vector<Field>& registry() {
  static const std::vector<Field> fields = {
      field("beta_max", &RunConfig::beta_max),
      field("beta_min", &RunConfig::beta_min),
      field("gamma_max", &RunConfig::gamma_max),
      field("gamma_min", &RunConfig::gamma_min),
      field("master_seed", &RunConfig::master_seed),
      field("n_seeds", &RunConfig::n_seeds),
      field("n_steps", &RunConfig::n_steps),
      field("rank_beta", &RunConfig::rank_beta),
      field("rho", &RunConfig::rho),
      field("rho_gamma", &RunConfig::rho_gamma),
      field("scale", &RunConfig::scale),
      field("sigma_com", &RunConfig::sigma_com),
      field("sigma_max", &RunConfig::sigma_max),
      field("sigma_min", &RunConfig::sigma_min),
      field("t_max", &RunConfig::t_max),
      field("t_min", &RunConfig::t_min),
      field("table_l_max", &RunConfig::table_l_max),
      field("table_n_omega", &RunConfig::table_n_omega),
      field("table_n_sigma", &RunConfig::table_n_sigma),
      field("table_sigma_max", &RunConfig::table_sigma_max),
      field("table_sigma_min", &RunConfig::table_sigma_min),
  };
  return fields;
}

std::string trim(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) {
    return "";
  }
  const std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

diffusion::DiffusionSchedule RunConfig::schedule() const {
  diffusion::DiffusionSchedule s;
  s.beta_min = beta_min;
  s.beta_max = beta_max;
  s.sigma_min = sigma_min;
  s.sigma_max = sigma_max;
  return s;
}

igso3::TableParams RunConfig::table_params() const {
  igso3::TableParams p;
  p.sigma_min = table_sigma_min;
  p.sigma_max = table_sigma_max;
  p.n_sigma = table_n_sigma;
  p.n_omega = table_n_omega;
  p.l_max = table_l_max;
  return p;
}

sampler::TimeGrid RunConfig::grid() const {
  return sampler::karras_grid(n_steps, t_min, t_max, rho);
}

sampler::AnnealSchedule RunConfig::anneal() const {
  return {gamma_min, gamma_max, rho_gamma};
}

void apply_override(RunConfig& cfg, const std::string& key,
                    const std::string& value) {
  for (const Field& f : registry()) {
    if (key == f.key) {
      f.set(cfg, value);
      return;
    }
  }
  throw InputError("unknown config key '" + key + "'");
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') {
      continue;
    }
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw InputError("config line " + std::to_string(lineno) +
                       ": expected key=value");
    }
    apply_override(cfg, trim(stripped.substr(0, eq)),
                   trim(stripped.substr(eq + 1)));
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot read config file '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_to_text(const RunConfig& cfg) {
  std::string out;
  for (const Field& f : registry()) {
    out += f.key;
    out += '=';
    out += f.get(cfg);
    out += '\n';
  }
  return out;
}

std::uint64_t config_hash(const RunConfig& cfg) {
  const std::string text = config_to_text(cfg);
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string config_hash_hex(const RunConfig& cfg) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(config_hash(cfg)));
  return buf;
}

}  // namespace fragdiff::config
