#pragma once

// Coherent-probe ensemble: Poisson photon-number coefficients, the design
// matrix linking a response matrix to observable outcome frequencies, and
// the Fock-space truncation rule.

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace treetomo {

/// One coherent probe: mean photons per pulse |alpha|^2 and the number of
/// gated pulses acquired with it.
struct CoherentProbe {
  double mean_photons = 0.0;
  long long pulses = 0;
};

namespace detail {

inline const std::vector<double>& log_factorial_table() {
  static const std::vector<double> table = [] {
    std::vector<double> t(4097);
    for (int i = 0; i < static_cast<int>(t.size()); ++i) t[i] = std::lgamma(i + 1.0);
    return t;
  }();
  return table;
}

inline double log_factorial(int m) {
  const auto& t = log_factorial_table();
  if (m < static_cast<int>(t.size())) return t[m];
  return std::lgamma(m + 1.0);
}

}  // namespace detail

/// Poisson pmf exp(-mu) mu^m / m!, evaluated in the log domain so large
/// means and occupations stay finite.
inline double poisson_coeff(double mean_photons, int m) {
  if (!(mean_photons >= 0.0)) throw std::invalid_argument("poisson_coeff: mean must be >= 0");
  if (m < 0) throw std::invalid_argument("poisson_coeff: m must be >= 0");
  if (mean_photons == 0.0) return m == 0 ? 1.0 : 0.0;
  return std::exp(-mean_photons + m * std::log(mean_photons) - detail::log_factorial(m));
}

/// Design matrix a_mj: probability of m photons in a pulse of probe j.
/// Rows run over Fock numbers 0..truncation; each column is a truncated
/// Poisson distribution.
struct ProbeMatrix {
  int truncation = 0;
  int probe_count = 0;
  std::vector<double> coeffs;  // row-major, (truncation+1) x probe_count

  int fock_count() const { return truncation + 1; }
  double at(int m, int j) const {
    return coeffs[static_cast<std::size_t>(m) * probe_count + j];
  }
  double column_sum(int j) const {
    double s = 0.0;
    for (int m = 0; m <= truncation; ++m) s += at(m, j);
    return s;
  }
};

inline ProbeMatrix build_probe_matrix(std::span<const CoherentProbe> probes, int truncation) {
  if (probes.empty()) throw std::invalid_argument("build_probe_matrix: no probes");
  if (truncation < 0) throw std::invalid_argument("build_probe_matrix: truncation must be >= 0");
  ProbeMatrix pm;
  pm.truncation = truncation;
  pm.probe_count = static_cast<int>(probes.size());
  pm.coeffs.resize(static_cast<std::size_t>(pm.fock_count()) * pm.probe_count);
  for (int m = 0; m <= truncation; ++m)
    for (int j = 0; j < pm.probe_count; ++j)
      pm.coeffs[static_cast<std::size_t>(m) * pm.probe_count + j] =
          poisson_coeff(probes[j].mean_photons, m);
  return pm;
}

/// Smallest M such that the brightest probe carries less than `tail_epsilon`
/// probability of m >= M photons. The truncated design matrix then loses at
/// most `tail_epsilon` of any column's mass.
inline int choose_truncation(std::span<const CoherentProbe> probes, double tail_epsilon) {
  if (probes.empty()) throw std::invalid_argument("choose_truncation: no probes");
  if (!(tail_epsilon > 0.0 && tail_epsilon < 1.0))
    throw std::invalid_argument("choose_truncation: tail_epsilon must be in (0,1)");
  double brightest = 0.0;
  for (const auto& p : probes) {
    if (!(p.mean_photons >= 0.0))
      throw std::invalid_argument("choose_truncation: negative probe mean");
    brightest = std::max(brightest, p.mean_photons);
  }
  // Upper tail accumulated in extended precision; the loop is capped far
  // beyond any mean this tool meets (tail resolution ~1e-19).
  long double tail = 1.0L;
  for (int m = 0; m < 1000000; ++m) {
    if (tail < static_cast<long double>(tail_epsilon)) return m;
    tail -= static_cast<long double>(poisson_coeff(brightest, m));
    if (tail < 0.0L) tail = 0.0L;
  }
  return 1000000;
}

/// Geometric ladder of `count` probe means between `min_mean` and `max_mean`
/// inclusive, each planned for `pulses` gated pulses.
inline std::vector<CoherentProbe> geometric_probe_ladder(int count, double min_mean,
                                                         double max_mean, long long pulses) {
  if (count < 1) throw std::invalid_argument("geometric_probe_ladder: count must be >= 1");
  if (!(min_mean > 0.0) || !(max_mean >= min_mean))
    throw std::invalid_argument("geometric_probe_ladder: need 0 < min <= max");
  std::vector<CoherentProbe> probes(count);
  if (count == 1) {
    probes[0] = {min_mean, pulses};
    return probes;
  }
  const double ratio = std::pow(max_mean / min_mean, 1.0 / (count - 1));
  double mean = min_mean;
  for (int j = 0; j < count; ++j) {
    probes[j] = {mean, pulses};
    mean *= ratio;
  }
  probes[count - 1].mean_photons = max_mean;  // pin the endpoint exactly
  return probes;
}

}  // namespace treetomo
