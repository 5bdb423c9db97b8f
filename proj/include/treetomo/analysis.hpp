#pragma once

// Validation metrics: Bhattacharyya-type fidelity between outcome
// distributions and Husimi Q surfaces of the response matrix. For a
// phase-insensitive detector Q_n(alpha) depends on |alpha|^2 only, so grids
// are rotationally invariant by construction.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "treetomo/io.hpp"
#include "treetomo/povm.hpp"
#include "treetomo/probes.hpp"
#include "treetomo/simulate.hpp"

namespace treetomo {

/// Overlap sum_n sqrt(p_n q_n) of two outcome distributions; 1 iff they are
/// identical (for normalized inputs), 0 iff they have disjoint support.
inline double fidelity(std::span<const double> xi_e, std::span<const double> xi_r) {
  if (xi_e.size() != xi_r.size() || xi_e.empty())
    throw std::invalid_argument("fidelity: distribution sizes differ");
  double sum_e = 0.0, sum_r = 0.0, f = 0.0;
  for (std::size_t n = 0; n < xi_e.size(); ++n) {
    if (xi_e[n] < 0.0 || xi_r[n] < 0.0)
      throw std::invalid_argument("fidelity: negative probability entry");
    sum_e += xi_e[n];
    sum_r += xi_r[n];
    f += std::sqrt(xi_e[n] * xi_r[n]);
  }
  if (sum_e > 1.0 + 1e-9 || sum_r > 1.0 + 1e-9)
    throw std::invalid_argument("fidelity: distribution mass exceeds 1");
  return f;
}

struct FidelityReport {
  std::vector<double> fidelities;
  std::vector<double> mean_photons;
  double min_fidelity = 1.0;
};

/// Per-probe fidelity between measured frequencies and a predicted response
/// (both outcome_count x probe_count, columns are distributions).
inline FidelityReport fidelity_report(const Eigen::MatrixXd& measured,
                                      const Eigen::MatrixXd& predicted,
                                      std::span<const double> mean_photons) {
  if (measured.rows() != predicted.rows() || measured.cols() != predicted.cols())
    throw std::invalid_argument("fidelity_report: shape mismatch");
  if (static_cast<int>(mean_photons.size()) != measured.cols())
    throw std::invalid_argument("fidelity_report: probe mean count mismatch");
  FidelityReport report;
  for (int j = 0; j < measured.cols(); ++j) {
    std::vector<double> e(measured.rows()), r(predicted.rows());
    for (int n = 0; n < measured.rows(); ++n) {
      e[n] = measured(n, j);
      r[n] = predicted(n, j);
    }
    const double f = fidelity(e, r);
    report.fidelities.push_back(f);
    report.mean_photons.push_back(mean_photons[j]);
    report.min_fidelity = std::min(report.min_fidelity, f);
  }
  return report;
}

/// Q values of the five outcomes at one phase-space radius, plus the Poisson
/// mass beyond the Fock cutoff at that radius (a truncation warning when it
/// is not negligible).
struct QValues {
  std::array<double, kOutcomeCount> q{};
  double tail_mass = 0.0;
  bool truncated() const { return tail_mass > 1e-6; }
};

/// Q_n(alpha) = pi^-1 sum_m X_nm exp(-|a|^2) |a|^(2m) / m!, evaluated at
/// mean photon number |alpha|^2.
inline QValues q_function(const PovmMatrix& povm, double mean_photons) {
  if (!(mean_photons >= 0.0)) throw std::invalid_argument("q_function: |alpha|^2 must be >= 0");
  QValues out;
  double mass = 0.0;
  for (int m = 0; m <= povm.truncation(); ++m) {
    const double a = poisson_coeff(mean_photons, m);
    mass += a;
    for (int n = 0; n < kOutcomeCount; ++n) out.q[n] += povm.at(n, m) * a;
  }
  const double inv_pi = std::numbers::inv_pi;
  for (int n = 0; n < kOutcomeCount; ++n) out.q[n] *= inv_pi;
  out.tail_mass = std::max(0.0, 1.0 - mass);
  return out;
}

/// Cartesian phase-space mesh, symmetric about the origin.
struct MeshSpec {
  double half_width = 8.0;
  int points_per_axis = 161;

  void validate() const {
    if (!(half_width > 0.0)) throw std::invalid_argument("MeshSpec: half_width must be > 0");
    if (points_per_axis < 1) throw std::invalid_argument("MeshSpec: need at least one point");
  }
  double coordinate(int index) const {
    if (points_per_axis == 1) return 0.0;
    return -half_width + 2.0 * half_width * index / (points_per_axis - 1);
  }
};

struct QGrid {
  MeshSpec mesh;
  std::vector<QValues> values;  // row-major over (re index, im index)
  double max_tail_mass = 0.0;

  const QValues& at(int ire, int iim) const {
    return values[static_cast<std::size_t>(ire) * mesh.points_per_axis + iim];
  }

  void write_csv(std::ostream& out, const std::vector<std::string>& comments = {}) const {
    for (const auto& c : comments) out << "# " << c << "\n";
    out << "re,im,q0,q1,q2,q3,q4\n";
    for (int ire = 0; ire < mesh.points_per_axis; ++ire)
      for (int iim = 0; iim < mesh.points_per_axis; ++iim) {
        out << format_full(mesh.coordinate(ire)) << ',' << format_full(mesh.coordinate(iim));
        for (int n = 0; n < kOutcomeCount; ++n) out << ',' << format_full(at(ire, iim).q[n]);
        out << "\n";
      }
  }
};

/// Evaluate the Q surfaces over a Cartesian mesh. Values depend on the
/// radius only; both half-axes are covered so the grid can be plotted
/// directly.
inline QGrid q_grid(const PovmMatrix& povm, const MeshSpec& mesh) {
  mesh.validate();
  QGrid grid;
  grid.mesh = mesh;
  grid.values.resize(static_cast<std::size_t>(mesh.points_per_axis) * mesh.points_per_axis);
  for (int ire = 0; ire < mesh.points_per_axis; ++ire) {
    const double re = mesh.coordinate(ire);
    for (int iim = 0; iim < mesh.points_per_axis; ++iim) {
      const double im = mesh.coordinate(iim);
      QValues v = q_function(povm, re * re + im * im);
      grid.max_tail_mass = std::max(grid.max_tail_mass, v.tail_mass);
      grid.values[static_cast<std::size_t>(ire) * mesh.points_per_axis + iim] = v;
    }
  }
  return grid;
}

/// Measured Q overlay: pi^-1 xi_nj placed on the positive real axis at
/// |alpha_j| (the phase of a probe is arbitrary for this detector).
inline void write_q_overlay_csv(std::ostream& out, const OutcomeStats& stats,
                                const std::vector<std::string>& comments = {}) {
  for (const auto& c : comments) out << "# " << c << "\n";
  out << "j,re,im,q0,q1,q2,q3,q4\n";
  const double inv_pi = std::numbers::inv_pi;
  for (int j = 0; j < stats.probe_count(); ++j) {
    out << j << ',' << format_full(std::sqrt(stats.mean_photons[j])) << ',' << format_full(0.0);
    for (int n = 0; n < kOutcomeCount; ++n)
      out << ',' << format_full(inv_pi * stats.frequency(n, j));
    out << "\n";
  }
}

}  // namespace treetomo
