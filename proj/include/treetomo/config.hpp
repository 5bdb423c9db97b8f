#pragma once

// Run configuration: a flat dotted-key text format with built-in defaults
// matching the characterized four-SPAD detector tree this tool ships
// constants for. Every key can also be overridden from the command line
// under the same dotted name.

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "treetomo/analysis.hpp"
#include "treetomo/detector.hpp"
#include "treetomo/errors.hpp"
#include "treetomo/probes.hpp"
#include "treetomo/reconstruct.hpp"
#include "treetomo/simulate.hpp"

namespace treetomo {

/// Calibration of the reference detector: per-branch efficiencies and
/// dark-click probabilities measured for the device as a whole, splitter
/// asymmetry folded into the efficiencies.
inline DetectorParams default_detector() {
  DetectorParams det;
  det.eta = {0.1270, 0.1375, 0.1410, 0.1270};
  det.dark = {1.20e-4, 1.25e-4, 1.13e-4, 2.52e-4};
  det.split = {0.25, 0.25, 0.25, 0.25};
  return det;
}

struct RunConfig {
  DetectorParams detector = default_detector();
  std::string probes = "geometric:18,0.5,46.8";
  double tail_epsilon = 1e-6;
  SimulationConfig simulation;
  ReconstructionConfig reconstruction;
  MeshSpec mesh;
  int theory_truncation = 60;
  std::string out_dir = "out";

  void validate() const {
    detector.validate();
    simulation.validate();
    reconstruction.validate();
    mesh.validate();
    if (!(tail_epsilon > 0.0 && tail_epsilon < 1.0))
      throw ConfigError("probes.tail_epsilon must be in (0,1)");
    if (theory_truncation < 0) throw ConfigError("theory.truncation must be >= 0");
    if (out_dir.empty()) throw ConfigError("output.dir must not be empty");
  }
};

/// Expand a probe descriptor into the probe list. Forms:
///   geometric:COUNT,MIN,MAX  - geometric ladder of means
///   list:M0,M1,...           - explicit means
inline std::vector<CoherentProbe> make_probes(const std::string& descriptor, long long pulses) {
  const auto colon = descriptor.find(':');
  if (colon == std::string::npos)
    throw ConfigError("probe spec '" + descriptor + "': expected geometric:... or list:...");
  const std::string kind = descriptor.substr(0, colon);
  const auto args = split_fields(descriptor.substr(colon + 1), ',');
  try {
    if (kind == "geometric") {
      if (args.size() != 3)
        throw ConfigError("probe spec 'geometric' needs COUNT,MIN,MAX");
      const int count = static_cast<int>(parse_integer(args[0], "probe spec"));
      return geometric_probe_ladder(count, parse_double(args[1], "probe spec"),
                                    parse_double(args[2], "probe spec"), pulses);
    }
    if (kind == "list") {
      if (args.empty()) throw ConfigError("probe spec 'list' needs at least one mean");
      std::vector<CoherentProbe> probes;
      for (const auto& a : args) {
        const double mean = parse_double(a, "probe spec");
        if (!(mean >= 0.0)) throw ConfigError("probe spec: negative mean '" + a + "'");
        probes.push_back({mean, pulses});
      }
      return probes;
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError("probe spec '" + descriptor + "': " + e.what());
  } catch (const IoError& e) {
    throw ConfigError("probe spec '" + descriptor + "': " + e.what());
  }
  throw ConfigError("probe spec '" + descriptor + "': unknown kind '" + kind + "'");
}

namespace detail {

inline double config_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || *end != '\0')
    throw ConfigError(key + ": not a number: '" + value + "'");
  return v;
}

inline long long config_integer(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const long long v = std::strtoll(value.c_str(), &end, 10);
  if (end == value.c_str() || *end != '\0')
    throw ConfigError(key + ": not an integer: '" + value + "'");
  return v;
}

inline bool config_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key + ": not a boolean: '" + value + "'");
}

inline int branch_index(const std::string& key) {
  const char c = key.back();
  if (c < 'a' || c > 'd') throw ConfigError("unknown key '" + key + "'");
  return c - 'a';
}

}  // namespace detail

/// Apply one dotted-key override. Throws ConfigError for unknown keys or
/// unparsable values.
inline void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  using detail::config_bool;
  using detail::config_double;
  using detail::config_integer;
  if (key.rfind("detector.eta.", 0) == 0 && key.size() == 14) {
    cfg.detector.eta[detail::branch_index(key)] = config_double(key, value);
  } else if (key.rfind("detector.dark.", 0) == 0 && key.size() == 15) {
    cfg.detector.dark[detail::branch_index(key)] = config_double(key, value);
  } else if (key == "detector.split") {
    const auto parts = split_fields(value, ',');
    if (parts.size() != kBranchCount)
      throw ConfigError(key + ": expected 4 comma-separated values");
    for (int g = 0; g < kBranchCount; ++g)
      cfg.detector.split[g] = config_double(key, parts[g]);
  } else if (key == "probes.spec") {
    cfg.probes = value;
  } else if (key == "probes.tail_epsilon") {
    cfg.tail_epsilon = config_double(key, value);
  } else if (key == "simulation.rep_rate") {
    cfg.simulation.rep_rate = config_double(key, value);
  } else if (key == "simulation.dead_time") {
    cfg.simulation.dead_time = static_cast<int>(config_integer(key, value));
  } else if (key == "simulation.gating") {
    try {
      cfg.simulation.gating = parse_gating(value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string(key) + ": " + e.what());
    }
  } else if (key == "simulation.seed") {
    cfg.simulation.seed = static_cast<std::uint64_t>(config_integer(key, value));
  } else if (key == "simulation.pulses_per_probe") {
    cfg.simulation.pulses_per_probe = config_integer(key, value);
  } else if (key == "simulation.shards") {
    cfg.simulation.shards = static_cast<int>(config_integer(key, value));
  } else if (key == "reconstruction.smoothing") {
    cfg.reconstruction.smoothing_weight = config_double(key, value);
  } else if (key == "reconstruction.regularizer") {
    try {
      cfg.reconstruction.regularizer = parse_regularizer(value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string(key) + ": " + e.what());
    }
  } else if (key == "reconstruction.weighted") {
    cfg.reconstruction.inverse_variance_weights = config_bool(key, value);
  } else if (key == "reconstruction.max_iterations") {
    cfg.reconstruction.max_iterations = config_integer(key, value);
  } else if (key == "reconstruction.kkt_tolerance") {
    cfg.reconstruction.kkt_tolerance = config_double(key, value);
  } else if (key == "reconstruction.truncation") {
    cfg.reconstruction.truncation = static_cast<int>(config_integer(key, value));
  } else if (key == "analysis.mesh_halfwidth") {
    cfg.mesh.half_width = config_double(key, value);
  } else if (key == "analysis.mesh_points") {
    cfg.mesh.points_per_axis = static_cast<int>(config_integer(key, value));
  } else if (key == "theory.truncation") {
    cfg.theory_truncation = static_cast<int>(config_integer(key, value));
  } else if (key == "output.dir") {
    cfg.out_dir = value;
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

/// Parse the dotted key/value text format: one `key = value` per line,
/// '#' comments, blank lines ignored. Later lines override earlier ones.
inline RunConfig parse_config_text(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto notblank = line.find_first_not_of(" \t\r");
    if (notblank == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value', got '" +
                        line + "'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    try {
      apply_override(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

inline RunConfig load_config_file(const std::string& path) {
  return parse_config_text(read_text_file(path), path);
}

/// Canonical serialization: sorted dotted keys, full-precision values. Used
/// both for the config echo and for the provenance hash.
inline std::vector<std::pair<std::string, std::string>> config_items(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> items;
  const char* branches = "abcd";
  for (int g = 0; g < kBranchCount; ++g) {
    items.emplace_back(std::string("detector.eta.") + branches[g], format_full(cfg.detector.eta[g]));
    items.emplace_back(std::string("detector.dark.") + branches[g],
                       format_full(cfg.detector.dark[g]));
  }
  std::string split = format_full(cfg.detector.split[0]);
  for (int g = 1; g < kBranchCount; ++g) split += "," + format_full(cfg.detector.split[g]);
  items.emplace_back("detector.split", split);
  items.emplace_back("probes.spec", cfg.probes);
  items.emplace_back("probes.tail_epsilon", format_full(cfg.tail_epsilon));
  items.emplace_back("simulation.rep_rate", format_full(cfg.simulation.rep_rate));
  items.emplace_back("simulation.dead_time", std::to_string(cfg.simulation.dead_time));
  items.emplace_back("simulation.gating", gating_name(cfg.simulation.gating));
  items.emplace_back("simulation.seed", std::to_string(cfg.simulation.seed));
  items.emplace_back("simulation.pulses_per_probe", std::to_string(cfg.simulation.pulses_per_probe));
  items.emplace_back("simulation.shards", std::to_string(cfg.simulation.shards));
  items.emplace_back("reconstruction.smoothing", format_full(cfg.reconstruction.smoothing_weight));
  items.emplace_back("reconstruction.regularizer", regularizer_name(cfg.reconstruction.regularizer));
  items.emplace_back("reconstruction.weighted",
                     cfg.reconstruction.inverse_variance_weights ? "true" : "false");
  items.emplace_back("reconstruction.max_iterations",
                     std::to_string(cfg.reconstruction.max_iterations));
  items.emplace_back("reconstruction.kkt_tolerance",
                     format_full(cfg.reconstruction.kkt_tolerance));
  items.emplace_back("reconstruction.truncation", std::to_string(cfg.reconstruction.truncation));
  items.emplace_back("analysis.mesh_halfwidth", format_full(cfg.mesh.half_width));
  items.emplace_back("analysis.mesh_points", std::to_string(cfg.mesh.points_per_axis));
  items.emplace_back("theory.truncation", std::to_string(cfg.theory_truncation));
  items.emplace_back("output.dir", cfg.out_dir);
  std::sort(items.begin(), items.end());
  return items;
}

inline std::string canonical_config_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_items(cfg)) out += k + " = " + v + "\n";
  return out;
}

/// FNV-1a over the canonical serialization; stable across runs.
inline std::uint64_t config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : canonical_config_text(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash_hex(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
  return std::string(buf);
}

}  // namespace treetomo
