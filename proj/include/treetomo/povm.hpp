#pragma once

#include <array>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "treetomo/errors.hpp"
#include "treetomo/io.hpp"

namespace treetomo {

inline constexpr int kBranchCount = 4;
/// Detected photon number ranges over 0..4, one outcome per click multiplicity.
inline constexpr int kOutcomeCount = 5;

/// Detector response matrix: entry (n, m) is the probability of counting n
/// photons when exactly m photons arrive in a pulse. Columns are indexed by
/// the incoming Fock number m = 0..truncation and each column is a
/// probability distribution over the five outcomes.
class PovmMatrix {
 public:
  explicit PovmMatrix(int truncation) : truncation_(truncation) {
    if (truncation < 0) throw std::invalid_argument("PovmMatrix: truncation must be >= 0");
    values_.assign(static_cast<std::size_t>(kOutcomeCount) * fock_count(), 0.0);
  }

  int truncation() const { return truncation_; }
  int fock_count() const { return truncation_ + 1; }

  double at(int n, int m) const { return values_[index(n, m)]; }
  double& at(int n, int m) { return values_[index(n, m)]; }

  double column_sum(int m) const {
    double s = 0.0;
    for (int n = 0; n < kOutcomeCount; ++n) s += at(n, m);
    return s;
  }

  /// Check entry bounds and column normalization. `column_tol` is the allowed
  /// deviation of each column sum from 1; `entry_slack` the allowed excursion
  /// outside [0, 1].
  void validate(double column_tol, double entry_slack = 1e-12) const {
    for (int m = 0; m <= truncation_; ++m) {
      for (int n = 0; n < kOutcomeCount; ++n) {
        const double v = at(n, m);
        if (!(v >= -entry_slack && v <= 1.0 + entry_slack))
          throw std::invalid_argument("PovmMatrix: entry (" + std::to_string(n) + "," +
                                      std::to_string(m) + ") out of [0,1]: " + format_full(v));
      }
      const double s = column_sum(m);
      if (!(std::abs(s - 1.0) <= column_tol))
        throw std::invalid_argument("PovmMatrix: column " + std::to_string(m) +
                                    " sums to " + format_full(s));
    }
  }

  /// CSV layout: optional '#' comment lines, a header row, then one row per
  /// Fock number. Probabilities are written with full precision so a read
  /// back reproduces the matrix exactly.
  void write_csv(std::ostream& out, const std::vector<std::string>& comments = {}) const {
    for (const auto& c : comments) out << "# " << c << "\n";
    out << "m,xi0,xi1,xi2,xi3,xi4\n";
    for (int m = 0; m <= truncation_; ++m) {
      out << m;
      for (int n = 0; n < kOutcomeCount; ++n) out << ',' << format_full(at(n, m));
      out << "\n";
    }
  }

  static PovmMatrix read_csv(std::istream& in) {
    std::string line;
    std::vector<std::array<double, kOutcomeCount>> rows;
    bool header_seen = false;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      if (!header_seen) {
        if (line != "m,xi0,xi1,xi2,xi3,xi4")
          throw IoError("POVM CSV line " + std::to_string(lineno) + ": unexpected header '" +
                        line + "'");
        header_seen = true;
        continue;
      }
      const auto fields = split_fields(line, ',');
      if (fields.size() != 1 + kOutcomeCount)
        throw IoError("POVM CSV line " + std::to_string(lineno) + ": expected 6 fields, got " +
                      std::to_string(fields.size()));
      const std::string ctx = "POVM CSV line " + std::to_string(lineno);
      const long long m = parse_integer(fields[0], ctx);
      if (m != static_cast<long long>(rows.size()))
        throw IoError(ctx + ": expected Fock index " + std::to_string(rows.size()) +
                      ", got " + fields[0]);
      std::array<double, kOutcomeCount> row{};
      for (int n = 0; n < kOutcomeCount; ++n) row[n] = parse_double(fields[1 + n], ctx);
      rows.push_back(row);
    }
    if (!header_seen || rows.empty()) throw IoError("POVM CSV: no data rows");
    PovmMatrix povm(static_cast<int>(rows.size()) - 1);
    for (int m = 0; m < static_cast<int>(rows.size()); ++m)
      for (int n = 0; n < kOutcomeCount; ++n) povm.at(n, m) = rows[m][n];
    return povm;
  }

 private:
  std::size_t index(int n, int m) const {
    if (n < 0 || n >= kOutcomeCount || m < 0 || m > truncation_)
      throw std::out_of_range("PovmMatrix: index (" + std::to_string(n) + "," +
                              std::to_string(m) + ")");
    return static_cast<std::size_t>(n) * fock_count() + m;
  }

  int truncation_;
  std::vector<double> values_;
};

}  // namespace treetomo
