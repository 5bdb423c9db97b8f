#pragma once

// Monte Carlo pulse-train simulator. Photons of each gated pulse are routed
// per-photon to the four branches; a branch holding k photons clicks with
// probability 1 - (1-eta)^k (1-p_dark). A clicking branch is held off for a
// configurable number of pulse periods, and three gating policies control
// how hold-off interacts with data taking:
//   smart - a pulse is gated only when every branch is ready; skipped pulses
//           are offered but not recorded, so recorded pulses always see the
//           fully armed detector.
//   naive - every pulse is gated; branches in hold-off cannot click, which
//           biases the recorded statistics toward low counts.
//   ideal - hold-off is ignored entirely (zero dead time).

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "treetomo/detector.hpp"
#include "treetomo/io.hpp"
#include "treetomo/probes.hpp"

namespace treetomo {

enum class GatingPolicy { smart, naive, ideal };

inline const char* gating_name(GatingPolicy g) {
  switch (g) {
    case GatingPolicy::smart: return "smart";
    case GatingPolicy::naive: return "naive";
    case GatingPolicy::ideal: return "ideal";
  }
  throw std::invalid_argument("invalid gating policy");
}

inline GatingPolicy parse_gating(const std::string& s) {
  if (s == "smart") return GatingPolicy::smart;
  if (s == "naive") return GatingPolicy::naive;
  if (s == "ideal") return GatingPolicy::ideal;
  throw std::invalid_argument("unknown gating policy '" + s + "' (smart|naive|ideal)");
}

struct SimulationConfig {
  double rep_rate = 9.0e4;  // laser repetition rate [Hz]; bookkeeping only,
                            // the simulation advances in whole pulse periods
  int dead_time = 10;       // hold-off length in pulse periods
  GatingPolicy gating = GatingPolicy::smart;
  std::uint64_t seed = 20250810;
  long long pulses_per_probe = 100000;  // gated pulses collected per probe
  int shards = 1;  // independent RNG streams per probe; counts are merged

  void validate() const {
    if (!(rep_rate > 0.0)) throw std::invalid_argument("SimulationConfig: rep_rate must be > 0");
    if (dead_time < 0) throw std::invalid_argument("SimulationConfig: dead_time must be >= 0");
    if (pulses_per_probe < 1)
      throw std::invalid_argument("SimulationConfig: pulses_per_probe must be >= 1");
    if (shards < 1) throw std::invalid_argument("SimulationConfig: shards must be >= 1");
  }
};

/// Observed outcome statistics per probe. Counts over the five outcomes sum
/// to the gated pulse total; offered pulses additionally include the ones a
/// gating policy skipped.
struct OutcomeStats {
  std::vector<double> mean_photons;
  std::vector<long long> gated_pulses;
  std::vector<long long> offered_pulses;
  std::vector<std::array<long long, kOutcomeCount>> counts;

  int probe_count() const { return static_cast<int>(mean_photons.size()); }

  double frequency(int n, int j) const {
    return static_cast<double>(counts[j][n]) / static_cast<double>(gated_pulses[j]);
  }

  void validate() const {
    for (int j = 0; j < probe_count(); ++j) {
      long long total = 0;
      for (int n = 0; n < kOutcomeCount; ++n) total += counts[j][n];
      if (total != gated_pulses[j])
        throw std::invalid_argument("OutcomeStats: counts of probe " + std::to_string(j) +
                                    " do not sum to gated pulses");
      if (gated_pulses[j] < 1)
        throw std::invalid_argument("OutcomeStats: probe " + std::to_string(j) +
                                    " has no gated pulses");
      if (offered_pulses[j] < gated_pulses[j])
        throw std::invalid_argument("OutcomeStats: offered < gated for probe " +
                                    std::to_string(j));
    }
  }

  std::vector<CoherentProbe> probes() const {
    std::vector<CoherentProbe> out(probe_count());
    for (int j = 0; j < probe_count(); ++j) out[j] = {mean_photons[j], gated_pulses[j]};
    return out;
  }

  void write_csv(std::ostream& out, const std::vector<std::string>& comments = {}) const {
    for (const auto& c : comments) out << "# " << c << "\n";
    out << "j,mean_photons,gated_pulses,c0,c1,c2,c3,c4\n";
    for (int j = 0; j < probe_count(); ++j) {
      out << j << ',' << format_full(mean_photons[j]) << ',' << gated_pulses[j];
      for (int n = 0; n < kOutcomeCount; ++n) out << ',' << counts[j][n];
      out << "\n";
    }
  }

  static OutcomeStats read_csv(std::istream& in) {
    OutcomeStats stats;
    std::string line;
    bool header_seen = false;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      if (!header_seen) {
        if (line != "j,mean_photons,gated_pulses,c0,c1,c2,c3,c4")
          throw IoError("stats CSV line " + std::to_string(lineno) + ": unexpected header '" +
                        line + "'");
        header_seen = true;
        continue;
      }
      const std::string ctx = "stats CSV line " + std::to_string(lineno);
      const auto fields = split_fields(line, ',');
      if (fields.size() != 3 + kOutcomeCount)
        throw IoError(ctx + ": expected 8 fields, got " + std::to_string(fields.size()));
      const long long j = parse_integer(fields[0], ctx);
      if (j != stats.probe_count())
        throw IoError(ctx + ": expected probe index " + std::to_string(stats.probe_count()) +
                      ", got " + fields[0]);
      const double mean = parse_double(fields[1], ctx);
      if (!(mean >= 0.0)) throw IoError(ctx + ": negative probe mean");
      const long long gated = parse_integer(fields[2], ctx);
      if (gated < 1) throw IoError(ctx + ": gated pulse count must be >= 1");
      std::array<long long, kOutcomeCount> c{};
      long long total = 0;
      for (int n = 0; n < kOutcomeCount; ++n) {
        c[n] = parse_integer(fields[3 + n], ctx);
        if (c[n] < 0) throw IoError(ctx + ": negative count");
        total += c[n];
      }
      if (total != gated) throw IoError(ctx + ": outcome counts do not sum to gated pulses");
      stats.mean_photons.push_back(mean);
      stats.gated_pulses.push_back(gated);
      stats.offered_pulses.push_back(gated);  // skipped pulses are not serialized
      stats.counts.push_back(c);
    }
    if (!header_seen || stats.probe_count() == 0) throw IoError("stats CSV: no data rows");
    return stats;
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t probe, std::uint64_t shard) {
  return splitmix64(splitmix64(seed ^ (probe * 0x9e3779b97f4a7c15ULL)) ^ shard);
}

// Samples one gated pulse for a fixed probe mean; click tables are cached
// per occupancy up to a lazily grown limit.
class PulseSampler {
 public:
  PulseSampler(const DetectorParams& det, double mean_photons)
      : det_(det), poisson_(mean_photons > 0.0 ? mean_photons : 1.0), zero_mean_(mean_photons <= 0.0) {
    double cum = 0.0;
    for (int g = 0; g < kBranchCount; ++g) {
      cum += det.split[g];
      split_cum_[g] = cum;
    }
    split_cum_[kBranchCount - 1] = 1.0;
    for (int g = 0; g < kBranchCount; ++g) grow_click_table(g, 64);
  }

  /// Returns the click bitmask of one pulse; branches outside `ready_mask`
  /// cannot click and consume no randomness.
  unsigned sample(std::mt19937_64& rng, unsigned ready_mask) {
    std::array<int, kBranchCount> occupancy{};
    const int photons = zero_mean_ ? 0 : poisson_(rng);
    for (int p = 0; p < photons; ++p) {
      const double u = uniform_(rng);
      int g = 0;
      while (g < kBranchCount - 1 && u >= split_cum_[g]) ++g;
      ++occupancy[g];
    }
    unsigned clicked = 0;
    for (int g = 0; g < kBranchCount; ++g) {
      if (!(ready_mask & (1u << g))) continue;
      if (uniform_(rng) < click_probability(g, occupancy[g])) clicked |= 1u << g;
    }
    return clicked;
  }

 private:
  double click_probability(int g, int k) {
    if (k >= static_cast<int>(click_[g].size())) grow_click_table(g, 2 * k + 16);
    return click_[g][k];
  }

  void grow_click_table(int g, int upto) {
    const std::size_t old = click_[g].size();
    click_[g].resize(upto + 1);
    for (std::size_t k = old; k < click_[g].size(); ++k)
      click_[g][k] = 1.0 - std::pow(1.0 - det_.eta[g], static_cast<double>(k)) *
                               (1.0 - det_.dark[g]);
  }

  DetectorParams det_;
  std::poisson_distribution<int> poisson_;
  bool zero_mean_;
  std::array<double, kBranchCount> split_cum_{};
  std::array<std::vector<double>, kBranchCount> click_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

struct ShardResult {
  std::array<long long, kOutcomeCount> counts{};
  long long gated = 0;
  long long offered = 0;
};

inline ShardResult run_shard(const DetectorParams& det, double mean_photons,
                             const SimulationConfig& sim, long long gated_target,
                             std::uint64_t seed) {
  ShardResult result;
  std::mt19937_64 rng(seed);
  PulseSampler sampler(det, mean_photons);
  std::array<int, kBranchCount> hold{};
  const bool track_hold = sim.gating != GatingPolicy::ideal && sim.dead_time > 0;
  while (result.gated < gated_target) {
    ++result.offered;
    unsigned ready = 0;
    for (int g = 0; g < kBranchCount; ++g)
      if (hold[g] == 0) ready |= 1u << g;
    const bool gate = sim.gating == GatingPolicy::smart ? ready == 0xFu : true;
    unsigned clicked = 0;
    if (gate) {
      // ideal and smart pulses always see a fully armed detector
      clicked = sampler.sample(rng, sim.gating == GatingPolicy::naive ? ready : 0xFu);
      ++result.gated;
      ++result.counts[std::popcount(clicked)];
    }
    if (track_hold) {
      for (int g = 0; g < kBranchCount; ++g) {
        if (hold[g] > 0) --hold[g];
        if (clicked & (1u << g)) hold[g] = sim.dead_time;
      }
    }
  }
  return result;
}

}  // namespace detail

/// Outcome (number of clicking branches) of a single pulse seen by a fully
/// armed detector.
inline int simulate_pulse(const DetectorParams& det, double mean_photons, std::mt19937_64& rng) {
  det.validate();
  if (!(mean_photons >= 0.0)) throw std::invalid_argument("simulate_pulse: mean must be >= 0");
  detail::PulseSampler sampler(det, mean_photons);
  return std::popcount(sampler.sample(rng, 0xFu));
}

/// Run the pulse train for every probe until `pulses_per_probe` gated pulses
/// are recorded each. Deterministic given (seed, shards): each (probe,
/// shard) pair owns an RNG stream derived from them, and shard counts are
/// merged in fixed order.
inline OutcomeStats run_experiment(const DetectorParams& det,
                                   std::span<const CoherentProbe> probes,
                                   const SimulationConfig& sim) {
  det.validate();
  sim.validate();
  if (probes.empty()) throw std::invalid_argument("run_experiment: no probes");
  OutcomeStats stats;
  for (std::size_t j = 0; j < probes.size(); ++j) {
    if (!(probes[j].mean_photons >= 0.0))
      throw std::invalid_argument("run_experiment: negative probe mean");
    const long long target =
        probes[j].pulses > 0 ? probes[j].pulses : sim.pulses_per_probe;
    std::array<long long, kOutcomeCount> counts{};
    long long gated = 0, offered = 0;
    for (int shard = 0; shard < sim.shards; ++shard) {
      long long shard_target = target / sim.shards + (shard < target % sim.shards ? 1 : 0);
      if (shard_target == 0) continue;
      const auto r = detail::run_shard(det, probes[j].mean_photons, sim, shard_target,
                                       detail::stream_seed(sim.seed, j, shard));
      for (int n = 0; n < kOutcomeCount; ++n) counts[n] += r.counts[n];
      gated += r.gated;
      offered += r.offered;
    }
    stats.mean_photons.push_back(probes[j].mean_photons);
    stats.gated_pulses.push_back(gated);
    stats.offered_pulses.push_back(offered);
    stats.counts.push_back(counts);
  }
  stats.validate();
  return stats;
}

/// Accepted-gate fraction per probe: gated / offered. Equals 1 under the
/// ideal policy or when the hold-off is zero.
inline std::vector<double> throughput_report(const SimulationConfig&, const OutcomeStats& stats) {
  std::vector<double> fractions(stats.probe_count());
  for (int j = 0; j < stats.probe_count(); ++j)
    fractions[j] = static_cast<double>(stats.gated_pulses[j]) /
                   static_cast<double>(stats.offered_pulses[j]);
  return fractions;
}

}  // namespace treetomo
