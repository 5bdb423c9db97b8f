#pragma once

// Test-only oracles, independent of the library's evaluation paths.
//
// pattern_prob and theoretical_povm enumerate multinomial occupancy
// compositions; the oracles here take different routes entirely:
//  - per-photon enumeration walks all 4^m routing assignments (exact,
//    small m),
//  - the inclusion-exclusion form reduces the same probability to a sum of
//    16 closed-form terms via the multinomial theorem,
//  - the Monte Carlo oracle samples routings and clicks directly.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "treetomo/detector.hpp"

namespace oracles {

using treetomo::DetectorParams;
using treetomo::kBranchCount;

/// Exact pattern probability by enumerating every per-photon routing
/// assignment (4^m of them). Usable for m up to ~10.
inline double pattern_prob_per_photon(const DetectorParams& det, unsigned clicked_mask, int m) {
  double total = 0.0;
  std::vector<int> assign(m, 0);
  while (true) {
    double route_prob = 1.0;
    std::array<int, kBranchCount> occupancy{};
    for (int p = 0; p < m; ++p) {
      route_prob *= det.split[assign[p]];
      ++occupancy[assign[p]];
    }
    double term = route_prob;
    for (int g = 0; g < kBranchCount; ++g) {
      const double noclick =
          std::pow(1.0 - det.eta[g], occupancy[g]) * (1.0 - det.dark[g]);
      term *= (clicked_mask & (1u << g)) ? 1.0 - noclick : noclick;
    }
    total += term;
    int p = 0;
    while (p < m && assign[p] == kBranchCount - 1) assign[p++] = 0;
    if (p == m) break;
    ++assign[p];
  }
  return total;
}

/// Closed-form pattern probability: P(exactly S clicks | m) expanded by
/// inclusion-exclusion over subsets of S, each term factorizing through the
/// multinomial theorem.
inline double pattern_prob_closed_form(const DetectorParams& det, unsigned clicked_mask, int m) {
  double total = 0.0;
  const unsigned complement = ~clicked_mask & 0xFu;
  // iterate subsets V of the clicked set
  for (unsigned v = clicked_mask;; v = (v - 1) & clicked_mask) {
    const unsigned quiet = complement | v;  // branches required not to click
    double dark_factor = 1.0;
    double absorbed = 0.0;
    for (int g = 0; g < kBranchCount; ++g)
      if (quiet & (1u << g)) {
        dark_factor *= 1.0 - det.dark[g];
        absorbed += det.split[g] * det.eta[g];
      }
    const double sign = std::popcount(v) % 2 == 0 ? 1.0 : -1.0;
    total += sign * dark_factor * std::pow(1.0 - absorbed, m);
    if (v == 0) break;
  }
  return total;
}

/// Outcome column for Fock input m via the closed form.
inline std::array<double, 5> outcome_column_closed_form(const DetectorParams& det, int m) {
  std::array<double, 5> xi{};
  for (unsigned mask = 0; mask < 16; ++mask)
    xi[std::popcount(mask)] += pattern_prob_closed_form(det, mask, m);
  return xi;
}

/// Monte Carlo estimate of the outcome distribution for a fixed photon
/// number m: route each photon, then draw clicks.
inline std::array<double, 5> outcome_column_monte_carlo(const DetectorParams& det, int m,
                                                        long long samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::array<double, kBranchCount> split_cum{};
  double cum = 0.0;
  for (int g = 0; g < kBranchCount; ++g) {
    cum += det.split[g];
    split_cum[g] = cum;
  }
  split_cum[kBranchCount - 1] = 1.0;
  std::array<long long, 5> counts{};
  for (long long s = 0; s < samples; ++s) {
    std::array<int, kBranchCount> occupancy{};
    for (int p = 0; p < m; ++p) {
      const double u = uniform(rng);
      int g = 0;
      while (g < kBranchCount - 1 && u >= split_cum[g]) ++g;
      ++occupancy[g];
    }
    int clicks = 0;
    for (int g = 0; g < kBranchCount; ++g) {
      const double noclick =
          std::pow(1.0 - det.eta[g], occupancy[g]) * (1.0 - det.dark[g]);
      if (uniform(rng) < 1.0 - noclick) ++clicks;
    }
    ++counts[clicks];
  }
  std::array<double, 5> freq{};
  for (int n = 0; n < 5; ++n) freq[n] = static_cast<double>(counts[n]) / samples;
  return freq;
}

/// Monte Carlo estimate of one click-pattern probability at fixed m.
inline double pattern_prob_monte_carlo(const DetectorParams& det, unsigned clicked_mask, int m,
                                       long long samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::array<double, kBranchCount> split_cum{};
  double cum = 0.0;
  for (int g = 0; g < kBranchCount; ++g) {
    cum += det.split[g];
    split_cum[g] = cum;
  }
  split_cum[kBranchCount - 1] = 1.0;
  long long hits = 0;
  for (long long s = 0; s < samples; ++s) {
    std::array<int, kBranchCount> occupancy{};
    for (int p = 0; p < m; ++p) {
      const double u = uniform(rng);
      int g = 0;
      while (g < kBranchCount - 1 && u >= split_cum[g]) ++g;
      ++occupancy[g];
    }
    unsigned mask = 0;
    for (int g = 0; g < kBranchCount; ++g) {
      const double noclick =
          std::pow(1.0 - det.eta[g], occupancy[g]) * (1.0 - det.dark[g]);
      if (uniform(rng) < 1.0 - noclick) mask |= 1u << g;
    }
    if (mask == clicked_mask) ++hits;
  }
  return static_cast<double>(hits) / samples;
}

/// Random valid detector parameters for property tests.
inline DetectorParams random_params(std::mt19937_64& rng, bool allow_dark = true) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  DetectorParams det;
  double split_sum = 0.0;
  for (int g = 0; g < kBranchCount; ++g) {
    det.eta[g] = uniform(rng);
    det.dark[g] = allow_dark ? 0.3 * uniform(rng) : 0.0;
    det.split[g] = 0.05 + uniform(rng);
    split_sum += det.split[g];
  }
  for (int g = 0; g < kBranchCount; ++g) det.split[g] /= split_sum;
  // renormalize exactly enough for validate()
  double s = det.split[0] + det.split[1] + det.split[2];
  det.split[3] = 1.0 - s;
  return det;
}

/// Two-sample chi-square statistic over outcome histograms; bins with a
/// pooled expectation under 5 are skipped. Returns the statistic and the
/// degrees of freedom used.
struct ChiSquare {
  double statistic = 0.0;
  int dof = 0;
};

inline ChiSquare chi_square_two_sample(const std::array<long long, 5>& c1,
                                       const std::array<long long, 5>& c2) {
  double n1 = 0.0, n2 = 0.0;
  for (int i = 0; i < 5; ++i) {
    n1 += static_cast<double>(c1[i]);
    n2 += static_cast<double>(c2[i]);
  }
  ChiSquare out;
  int used = 0;
  for (int i = 0; i < 5; ++i) {
    const double pooled = static_cast<double>(c1[i] + c2[i]);
    const double e1 = pooled * n1 / (n1 + n2);
    const double e2 = pooled * n2 / (n1 + n2);
    if (e1 < 5.0 || e2 < 5.0) continue;
    out.statistic += (c1[i] - e1) * (c1[i] - e1) / e1 + (c2[i] - e2) * (c2[i] - e2) / e2;
    ++used;
  }
  out.dof = used > 1 ? used - 1 : 0;
  return out;
}

/// 0.999 quantiles of the chi-square distribution for dof 1..4.
inline double chi_square_q999(int dof) {
  constexpr std::array<double, 5> q = {0.0, 10.827566, 13.815511, 16.266236, 18.466827};
  return q[dof];
}

}  // namespace oracles
