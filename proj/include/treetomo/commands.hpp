#pragma once

// Pipeline commands shared by the CLI: each one reads/writes artifacts in
// the configured output directory. File formats are owned by the module
// that defines the data (povm.hpp, simulate.hpp, analysis.hpp); commands
// only add a provenance comment (tool version + config hash).

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "treetomo/analysis.hpp"
#include "treetomo/config.hpp"
#include "treetomo/detector.hpp"
#include "treetomo/errors.hpp"
#include "treetomo/reconstruct.hpp"
#include "treetomo/simulate.hpp"
#include "treetomo/version.hpp"

namespace treetomo {

inline constexpr const char* kTheoryPovmFile = "povm_theory.csv";
inline constexpr const char* kStatsCsvFile = "stats.csv";
inline constexpr const char* kStatsJsonFile = "stats.json";
inline constexpr const char* kReconPovmFile = "povm_recon.csv";
inline constexpr const char* kReconJsonFile = "reconstruction.json";
inline constexpr const char* kFidelityFile = "fidelity.json";
inline constexpr const char* kQGridFile = "qgrid.csv";
inline constexpr const char* kQOverlayFile = "qgrid_points.csv";

namespace detail {

inline std::vector<std::string> provenance(const RunConfig& cfg) {
  return {std::string("treetomo ") + kVersion + " config=" + config_hash_hex(cfg)};
}

inline std::filesystem::path out_path(const RunConfig& cfg, const char* name) {
  std::filesystem::create_directories(cfg.out_dir);
  return std::filesystem::path(cfg.out_dir) / name;
}

inline nlohmann::ordered_json config_echo(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  for (const auto& [k, v] : config_items(cfg)) j[k] = v;
  return j;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline PovmMatrix read_povm_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open POVM file: " + path);
  try {
    return PovmMatrix::read_csv(in);
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

inline OutcomeStats stats_from_json(const nlohmann::json& j) {
  OutcomeStats stats;
  for (const auto& entry : j.at("probes")) {
    const double mean = entry.at("mean_photons").get<double>();
    const long long gated = entry.at("gated_pulses").get<long long>();
    if (!(mean >= 0.0)) throw IoError("stats JSON: negative probe mean");
    std::array<long long, kOutcomeCount> counts{};
    const auto& arr = entry.at("counts");
    if (arr.size() != kOutcomeCount) throw IoError("stats JSON: expected 5 outcome counts");
    for (int n = 0; n < kOutcomeCount; ++n) counts[n] = arr.at(n).get<long long>();
    stats.mean_photons.push_back(mean);
    stats.gated_pulses.push_back(gated);
    stats.offered_pulses.push_back(
        entry.contains("offered_pulses") ? entry.at("offered_pulses").get<long long>() : gated);
    stats.counts.push_back(counts);
  }
  if (stats.probe_count() == 0) throw IoError("stats JSON: no probes");
  try {
    stats.validate();
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("stats JSON: ") + e.what());
  }
  return stats;
}

/// Stats come either as the counts CSV or as the JSON echo written by the
/// simulate command (selected by the .json extension).
inline OutcomeStats read_stats_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open stats file: " + path);
  try {
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("not valid JSON: ") + e.what());
      }
      return stats_from_json(j);
    }
    return OutcomeStats::read_csv(in);
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": malformed stats JSON: " + e.what());
  }
}

}  // namespace detail

/// Write the analytic response matrix of the configured detector.
inline std::filesystem::path cmd_theory(const RunConfig& cfg) {
  cfg.validate();
  const PovmMatrix povm = theoretical_povm(cfg.detector, cfg.theory_truncation);
  povm.validate(1e-12);
  const auto path = detail::out_path(cfg, kTheoryPovmFile);
  std::ostringstream out;
  povm.write_csv(out, detail::provenance(cfg));
  write_text_file(path, out.str());
  return path;
}

/// Simulate the pulse train for the configured probe ladder; writes the
/// counts CSV plus a JSON echo of the configuration and throughput.
inline std::filesystem::path cmd_simulate(const RunConfig& cfg) {
  cfg.validate();
  const auto probes = make_probes(cfg.probes, cfg.simulation.pulses_per_probe);
  const OutcomeStats stats = run_experiment(cfg.detector, probes, cfg.simulation);
  const auto fractions = throughput_report(cfg.simulation, stats);

  const auto csv_path = detail::out_path(cfg, kStatsCsvFile);
  std::ostringstream out;
  stats.write_csv(out, detail::provenance(cfg));
  write_text_file(csv_path, out.str());

  nlohmann::ordered_json j;
  j["tool"] = std::string("treetomo ") + kVersion;
  j["config_hash"] = config_hash_hex(cfg);
  j["config"] = detail::config_echo(cfg);
  auto& arr = j["probes"] = nlohmann::ordered_json::array();
  for (int p = 0; p < stats.probe_count(); ++p) {
    nlohmann::ordered_json entry;
    entry["j"] = p;
    entry["mean_photons"] = stats.mean_photons[p];
    entry["gated_pulses"] = stats.gated_pulses[p];
    entry["offered_pulses"] = stats.offered_pulses[p];
    entry["accepted_fraction"] = fractions[p];
    entry["counts"] = stats.counts[p];
    arr.push_back(entry);
  }
  detail::write_json(detail::out_path(cfg, kStatsJsonFile), j);
  return csv_path;
}

/// Reconstruct the response matrix from recorded statistics. The Fock
/// cutoff follows the configured truncation, or the brightest probe's tail
/// rule when unset.
inline std::filesystem::path cmd_reconstruct(const RunConfig& cfg, const std::string& stats_path) {
  cfg.validate();
  const OutcomeStats stats = detail::read_stats_file(stats_path);
  const auto probes = stats.probes();
  const int truncation = cfg.reconstruction.truncation >= 0
                             ? cfg.reconstruction.truncation
                             : choose_truncation(probes, cfg.tail_epsilon);
  const ProbeMatrix pm = build_probe_matrix(probes, truncation);
  ReconstructionConfig rcfg = cfg.reconstruction;
  rcfg.truncation = truncation;
  const QuadraticProgram qp = build_objective(pm, stats, rcfg);
  const ReconstructionResult result = solve(qp, rcfg);
  const PovmMatrix povm = result.povm();
  povm.validate(1e-9);

  const auto path = detail::out_path(cfg, kReconPovmFile);
  std::ostringstream out;
  povm.write_csv(out, detail::provenance(cfg));
  write_text_file(path, out.str());

  nlohmann::ordered_json j;
  j["tool"] = std::string("treetomo ") + kVersion;
  j["config_hash"] = config_hash_hex(cfg);
  j["stats_file"] = stats_path;
  j["truncation"] = truncation;
  j["smoothing_weight"] = cfg.reconstruction.smoothing_weight;
  j["smoothing_weight_effective"] = result.smoothing_weight_effective;
  j["regularizer"] = regularizer_name(cfg.reconstruction.regularizer);
  j["weighted"] = cfg.reconstruction.inverse_variance_weights;
  j["objective_value"] = result.objective_value;
  j["kkt_residual"] = result.kkt_residual;
  j["iterations"] = result.iterations;
  j["converged"] = result.converged;
  j["max_abs_residual"] = result.residuals.cwiseAbs().maxCoeff();
  j["rms_residual"] =
      std::sqrt(result.residuals.squaredNorm() / static_cast<double>(result.residuals.size()));
  detail::write_json(detail::out_path(cfg, kReconJsonFile), j);
  return path;
}

/// Compare a response matrix against recorded statistics: per-probe
/// fidelities plus Q surfaces with the measured overlay.
inline std::filesystem::path cmd_analyze(const RunConfig& cfg, const std::string& povm_path,
                                         const std::string& stats_path) {
  cfg.validate();
  const PovmMatrix povm = detail::read_povm_file(povm_path);
  const OutcomeStats stats = detail::read_stats_file(stats_path);
  const auto probes = stats.probes();
  const ProbeMatrix pm = build_probe_matrix(probes, povm.truncation());
  const Eigen::MatrixXd predicted = predicted_response(povm, pm);
  Eigen::MatrixXd measured(kOutcomeCount, stats.probe_count());
  for (int n = 0; n < kOutcomeCount; ++n)
    for (int j = 0; j < stats.probe_count(); ++j) measured(n, j) = stats.frequency(n, j);
  const FidelityReport report = fidelity_report(measured, predicted, stats.mean_photons);

  nlohmann::ordered_json j;
  j["tool"] = std::string("treetomo ") + kVersion;
  j["config_hash"] = config_hash_hex(cfg);
  j["povm_file"] = povm_path;
  j["stats_file"] = stats_path;
  j["truncation"] = povm.truncation();
  j["min_fidelity"] = report.min_fidelity;
  auto& arr = j["probes"] = nlohmann::ordered_json::array();
  for (std::size_t p = 0; p < report.fidelities.size(); ++p) {
    nlohmann::ordered_json entry;
    entry["j"] = p;
    entry["mean_photons"] = report.mean_photons[p];
    entry["F"] = report.fidelities[p];
    arr.push_back(entry);
  }
  const auto fidelity_path = detail::out_path(cfg, kFidelityFile);
  detail::write_json(fidelity_path, j);

  const QGrid grid = q_grid(povm, cfg.mesh);
  auto comments = detail::provenance(cfg);
  comments.push_back("max_tail_mass=" + format_full(grid.max_tail_mass) +
                     (grid.max_tail_mass > 1e-6 ? " (Fock cutoff truncates the corners)" : ""));
  std::ostringstream grid_out;
  grid.write_csv(grid_out, comments);
  write_text_file(detail::out_path(cfg, kQGridFile), grid_out.str());

  std::ostringstream overlay_out;
  write_q_overlay_csv(overlay_out, stats, detail::provenance(cfg));
  write_text_file(detail::out_path(cfg, kQOverlayFile), overlay_out.str());
  return fidelity_path;
}

/// theory + simulate + reconstruct + analyze against the fresh artifacts.
inline void cmd_pipeline(const RunConfig& cfg) {
  cmd_theory(cfg);
  const auto stats_path = cmd_simulate(cfg);
  const auto povm_path = cmd_reconstruct(cfg, stats_path.string());
  cmd_analyze(cfg, povm_path.string(), stats_path.string());
}

}  // namespace treetomo
