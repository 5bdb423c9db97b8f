// treetomo CLI: model, simulate, reconstruct and validate a four-SPAD
// beam-splitter-tree photon counter.
//
//   treetomo theory      write the analytic response matrix
//   treetomo simulate    run the Monte Carlo pulse train
//   treetomo reconstruct fit a response matrix to recorded statistics
//   treetomo analyze     fidelities and Q surfaces for a response matrix
//   treetomo pipeline    all four stages in sequence

#include <cstdio>
#include <exception>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "treetomo/treetomo.hpp"

namespace {

struct CliState {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;  // applied in CLI order
  std::string stats_path;
  std::string povm_path;
};

void add_common_options(CLI::App* cmd, CliState& state) {
  cmd->add_option("--config", state.config_path, "Configuration file (dotted key = value)")
      ->check(CLI::ExistingFile);
  // Convenience aliases for frequently used keys.
  const std::vector<std::pair<const char*, const char*>> aliases = {
      {"--seed", "simulation.seed"},
      {"--out", "output.dir"},
      {"--probes", "probes.spec"},
      {"--smoothing", "reconstruction.smoothing"},
      {"--truncation-eps", "probes.tail_epsilon"},
      {"--gating", "simulation.gating"},
  };
  for (const auto& [flag, key] : aliases) {
    const std::string dotted = key;
    cmd->add_option_function<std::string>(
        flag, [&state, dotted](const std::string& v) { state.overrides.emplace_back(dotted, v); },
        std::string("Sets ") + dotted);
  }
  // Every config key is also exposed under its own dotted name.
  for (const auto& [key, value] : treetomo::config_items(treetomo::RunConfig{})) {
    const std::string dotted = key;
    cmd->add_option_function<std::string>(
        "--" + dotted,
        [&state, dotted](const std::string& v) { state.overrides.emplace_back(dotted, v); },
        "Config override (default: " + value + ")");
  }
}

treetomo::RunConfig resolve_config(const CliState& state) {
  treetomo::RunConfig cfg = state.config_path.empty()
                                ? treetomo::RunConfig{}
                                : treetomo::load_config_file(state.config_path);
  for (const auto& [key, value] : state.overrides) treetomo::apply_override(cfg, key, value);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw treetomo::ConfigError(e.what());
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"treetomo: tomography toolkit for a four-SPAD tree photon counter"};
  app.set_version_flag("--version", std::string("treetomo ") + treetomo::kVersion);
  app.require_subcommand(1);

  CliState theory_state, simulate_state, reconstruct_state, analyze_state, pipeline_state;

  auto* theory = app.add_subcommand("theory", "Write the analytic response matrix");
  add_common_options(theory, theory_state);

  auto* simulate = app.add_subcommand("simulate", "Run the Monte Carlo pulse train");
  add_common_options(simulate, simulate_state);

  auto* reconstruct =
      app.add_subcommand("reconstruct", "Fit a response matrix to recorded statistics");
  add_common_options(reconstruct, reconstruct_state);
  reconstruct->add_option("--stats", reconstruct_state.stats_path,
                          "Statistics CSV (default: <out>/stats.csv)");

  auto* analyze = app.add_subcommand("analyze", "Fidelities and Q surfaces");
  add_common_options(analyze, analyze_state);
  analyze->add_option("--stats", analyze_state.stats_path,
                      "Statistics CSV (default: <out>/stats.csv)");
  analyze->add_option("--povm", analyze_state.povm_path,
                      "Response matrix CSV (default: <out>/povm_recon.csv)");

  auto* pipeline = app.add_subcommand("pipeline", "theory, simulate, reconstruct, analyze");
  add_common_options(pipeline, pipeline_state);

  CLI11_PARSE(app, argc, argv);

  try {
    if (theory->parsed()) {
      const auto cfg = resolve_config(theory_state);
      const auto path = treetomo::cmd_theory(cfg);
      std::printf("wrote %s\n", path.c_str());
    } else if (simulate->parsed()) {
      const auto cfg = resolve_config(simulate_state);
      const auto path = treetomo::cmd_simulate(cfg);
      std::printf("wrote %s\n", path.c_str());
    } else if (reconstruct->parsed()) {
      const auto cfg = resolve_config(reconstruct_state);
      std::string stats = reconstruct_state.stats_path.empty()
                              ? cfg.out_dir + "/" + treetomo::kStatsCsvFile
                              : reconstruct_state.stats_path;
      const auto path = treetomo::cmd_reconstruct(cfg, stats);
      std::printf("wrote %s\n", path.c_str());
    } else if (analyze->parsed()) {
      const auto cfg = resolve_config(analyze_state);
      std::string stats = analyze_state.stats_path.empty()
                              ? cfg.out_dir + "/" + treetomo::kStatsCsvFile
                              : analyze_state.stats_path;
      std::string povm = analyze_state.povm_path.empty()
                             ? cfg.out_dir + "/" + treetomo::kReconPovmFile
                             : analyze_state.povm_path;
      const auto path = treetomo::cmd_analyze(cfg, povm, stats);
      std::printf("wrote %s\n", path.c_str());
    } else if (pipeline->parsed()) {
      const auto cfg = resolve_config(pipeline_state);
      treetomo::cmd_pipeline(cfg);
      std::printf("pipeline artifacts in %s\n", cfg.out_dir.c_str());
    }
  } catch (const treetomo::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return treetomo::kExitConfig;
  } catch (const treetomo::SolverError& e) {
    std::fprintf(stderr, "solver error: %s\n", e.what());
    return treetomo::kExitSolver;
  } catch (const treetomo::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return treetomo::kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return treetomo::kExitOk;
}
