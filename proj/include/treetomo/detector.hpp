#pragma once

// Analytic model of a four-branch beam-splitter-tree photon counter.
// Each incoming photon is routed to one of four avalanche diodes; a diode
// holding k photons fires with probability 1 - (1-eta)^k (1-p_dark). The
// detector reports the number of diodes that fired (0..4), so the response
// to a Fock input is a sum over routing compositions weighted by a
// multinomial factor.

#include <array>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "treetomo/povm.hpp"

namespace treetomo {

enum class Branch : int { a = 0, b = 1, c = 2, d = 3 };

inline const char* branch_name(Branch b) {
  switch (b) {
    case Branch::a: return "a";
    case Branch::b: return "b";
    case Branch::c: return "c";
    case Branch::d: return "d";
  }
  throw std::invalid_argument("invalid branch id");
}

/// Per-branch calibration of the tree: detection efficiency, dark-click
/// probability per gate, and the routing probability of each branch.
/// Tree losses and splitter asymmetry are folded into the efficiencies, so
/// the routing defaults to the ideal 1/4 per branch.
struct DetectorParams {
  std::array<double, kBranchCount> eta{};
  std::array<double, kBranchCount> dark{};
  std::array<double, kBranchCount> split{0.25, 0.25, 0.25, 0.25};

  void validate() const {
    double split_sum = 0.0;
    for (int g = 0; g < kBranchCount; ++g) {
      if (!(eta[g] >= 0.0 && eta[g] <= 1.0))
        throw std::invalid_argument("DetectorParams: eta out of [0,1] for branch " +
                                    std::string(branch_name(static_cast<Branch>(g))));
      if (!(dark[g] >= 0.0 && dark[g] <= 1.0))
        throw std::invalid_argument("DetectorParams: dark probability out of [0,1] for branch " +
                                    std::string(branch_name(static_cast<Branch>(g))));
      if (!(split[g] >= 0.0))
        throw std::invalid_argument("DetectorParams: negative split for branch " +
                                    std::string(branch_name(static_cast<Branch>(g))));
      split_sum += split[g];
    }
    if (!(std::abs(split_sum - 1.0) <= 1e-12))
      throw std::invalid_argument("DetectorParams: split must sum to 1, got " +
                                  format_full(split_sum));
  }
};

namespace detail {

// Largest factorial that fits a double; enumeration over routing
// compositions is restricted to this range.
inline constexpr int kMaxEnumeratedPhotons = 170;

inline const std::vector<double>& factorial_table() {
  static const std::vector<double> table = [] {
    std::vector<double> t(kMaxEnumeratedPhotons + 1);
    t[0] = 1.0;
    for (int i = 1; i <= kMaxEnumeratedPhotons; ++i) t[i] = t[i - 1] * static_cast<double>(i);
    return t;
  }();
  return table;
}

inline int checked_branch(Branch branch) {
  const int g = static_cast<int>(branch);
  if (g < 0 || g >= kBranchCount) throw std::invalid_argument("invalid branch id");
  return g;
}

inline void check_photons(int photons) {
  if (photons < 0) throw std::invalid_argument("photon count must be >= 0");
}

}  // namespace detail

/// Probability that branch `branch` does NOT click when it holds `photons`
/// photons: (1-eta)^k (1-p_dark). Non-increasing in the photon count.
inline double noclick_prob(const DetectorParams& det, Branch branch, int photons) {
  const int g = detail::checked_branch(branch);
  detail::check_photons(photons);
  return std::pow(1.0 - det.eta[g], photons) * (1.0 - det.dark[g]);
}

/// Complementary click probability 1 - noclick_prob.
inline double click_prob(const DetectorParams& det, Branch branch, int photons) {
  return 1.0 - noclick_prob(det, branch, photons);
}

/// Probabilities of all 16 click patterns given exactly `photons` impinging
/// photons. Patterns are indexed by bitmask: bit g set means branch g
/// clicked. The 16 entries sum to 1.
inline std::array<double, 16> click_pattern_probs(const DetectorParams& det, int photons) {
  det.validate();
  detail::check_photons(photons);
  if (photons > detail::kMaxEnumeratedPhotons)
    throw std::invalid_argument("click_pattern_probs: photon count above enumeration limit " +
                                std::to_string(detail::kMaxEnumeratedPhotons));
  const int m = photons;
  const auto& fact = detail::factorial_table();

  // Per-branch no-click/click probabilities for every occupancy 0..m.
  std::array<std::vector<double>, kBranchCount> noclick, click;
  std::array<std::vector<double>, kBranchCount> split_pow;
  for (int g = 0; g < kBranchCount; ++g) {
    noclick[g].resize(m + 1);
    click[g].resize(m + 1);
    split_pow[g].resize(m + 1);
    for (int k = 0; k <= m; ++k) {
      noclick[g][k] = std::pow(1.0 - det.eta[g], k) * (1.0 - det.dark[g]);
      click[g][k] = 1.0 - noclick[g][k];
      split_pow[g][k] = std::pow(det.split[g], k);
    }
  }

  std::array<double, 16> acc{};
  for (int i = 0; i <= m; ++i) {
    for (int j = 0; i + j <= m; ++j) {
      const double fij = fact[m] / (fact[i] * fact[j]);
      const double wij = fij * split_pow[0][i] * split_pow[1][j];
      // Click/no-click factors for the first two branches, indexed by the
      // low two pattern bits.
      const std::array<double, 4> ab = {noclick[0][i] * noclick[1][j],
                                        click[0][i] * noclick[1][j],
                                        noclick[0][i] * click[1][j],
                                        click[0][i] * click[1][j]};
      for (int k = 0; i + j + k <= m; ++k) {
        const int l = m - i - j - k;
        const double w = wij / (fact[k] * fact[l]) * split_pow[2][k] * split_pow[3][l];
        const std::array<double, 4> cd = {noclick[2][k] * noclick[3][l],
                                          click[2][k] * noclick[3][l],
                                          noclick[2][k] * click[3][l],
                                          click[2][k] * click[3][l]};
        for (unsigned mask = 0; mask < 16; ++mask)
          acc[mask] += w * ab[mask & 3u] * cd[mask >> 2u];
      }
    }
  }
  return acc;
}

/// Probability that exactly the branches in `clicked_mask` (bit g = branch g)
/// click when `photons` photons impinge.
inline double pattern_prob(const DetectorParams& det, unsigned clicked_mask, int photons) {
  if (clicked_mask >= 16u) throw std::invalid_argument("pattern_prob: invalid branch set");
  return click_pattern_probs(det, photons)[clicked_mask];
}

/// Exact response matrix up to Fock number `truncation`: column m is the
/// outcome distribution for an m-photon input, obtained by summing the
/// click-pattern probabilities over patterns of equal multiplicity.
inline PovmMatrix theoretical_povm(const DetectorParams& det, int truncation) {
  if (truncation < 0) throw std::invalid_argument("theoretical_povm: truncation must be >= 0");
  PovmMatrix povm(truncation);
  for (int m = 0; m <= truncation; ++m) {
    const auto probs = click_pattern_probs(det, m);
    for (unsigned mask = 0; mask < 16; ++mask)
      povm.at(std::popcount(mask), m) += probs[mask];
  }
  return povm;
}

}  // namespace treetomo
