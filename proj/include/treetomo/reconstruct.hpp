#pragma once

// Recovery of the detector response matrix from coherent-probe statistics.
// The fit minimizes
//
//   sum_nj w_nj (sum_m a_mj X_nm - xi_nj)^2  +  w_eff * sum_nm (D X_n)_m^2
//
// over matrices X whose Fock columns are probability distributions across
// the five outcomes. D is a first- (default) or second-difference operator
// along the Fock axis, so the regularizer is convex, quadratic and
// independent of the device. The feasible set is a product of probability
// simplices, one per Fock column, which makes accelerated projected
// gradient descent with exact per-column simplex projection a natural
// solver.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "treetomo/povm.hpp"
#include "treetomo/probes.hpp"
#include "treetomo/simulate.hpp"

namespace treetomo {

enum class RegularizerKind { first_difference, second_difference };

inline const char* regularizer_name(RegularizerKind k) {
  return k == RegularizerKind::first_difference ? "first_diff" : "second_diff";
}

inline RegularizerKind parse_regularizer(const std::string& s) {
  if (s == "first_diff") return RegularizerKind::first_difference;
  if (s == "second_diff") return RegularizerKind::second_difference;
  throw std::invalid_argument("unknown regularizer '" + s + "' (first_diff|second_diff)");
}

struct ReconstructionConfig {
  // Smoothing strength relative to the data-term scale (the mean diagonal of
  // the unregularized normal matrix); the effective weight is reported in
  // the solver diagnostics.
  double smoothing_weight = 1e-2;
  RegularizerKind regularizer = RegularizerKind::first_difference;
  bool inverse_variance_weights = false;
  long long max_iterations = 200000;
  double kkt_tolerance = 1e-8;
  int truncation = -1;  // Fock cutoff; negative selects choose_truncation()

  void validate() const {
    if (!(smoothing_weight >= 0.0))
      throw std::invalid_argument("ReconstructionConfig: smoothing_weight must be >= 0");
    if (!(kkt_tolerance > 0.0))
      throw std::invalid_argument("ReconstructionConfig: kkt_tolerance must be > 0");
    if (max_iterations < 1)
      throw std::invalid_argument("ReconstructionConfig: max_iterations must be >= 1");
  }
};

/// Euclidean projection of v onto the probability simplex {x >= 0, sum = 1}.
inline void project_to_simplex(Eigen::Ref<Eigen::VectorXd> v) {
  const int n = static_cast<int>(v.size());
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  // tau from the largest prefix whose entries stay above the threshold
  double cumsum = 0.0, tau = 0.0;
  for (int i = 0; i < n; ++i) {
    cumsum += u[i];
    const double candidate = (cumsum - 1.0) / (i + 1);
    if (u[i] - candidate > 0.0) tau = candidate;
  }
  for (int i = 0; i < n; ++i) v[i] = std::max(v[i] - tau, 0.0);
}

/// Project every Fock column of X onto the outcome simplex.
inline void project_columns_to_simplex(Eigen::MatrixXd& X) {
  for (int m = 0; m < X.cols(); ++m) project_to_simplex(X.col(m));
}

/// Explicit convex quadratic program for the fit. Variables are the entries
/// of X (outcome_count x fock_count); as a flat vector they are ordered
/// outcome-major, v[n * fock_count + m]. The objective is
/// 1/2 v^T H v + c^T v + constant with H block diagonal (one block per
/// outcome), symmetric positive semidefinite.
struct QuadraticProgram {
  int outcome_count = 0;
  int fock_count = 0;
  int probe_count = 0;
  Eigen::MatrixXd coeffs;    // fock_count x probe_count design matrix
  Eigen::MatrixXd measured;  // outcome_count x probe_count frequencies
  bool weighted = false;
  std::vector<Eigen::MatrixXd> kernels;  // shared kernel unless weighted
  Eigen::MatrixXd targets;               // outcome_count x fock_count
  double constant = 0.0;
  double data_scale = 0.0;
  double smoothing_weight_effective = 0.0;

  const Eigen::MatrixXd& kernel(int n) const { return kernels[weighted ? n : 0]; }

  double objective(const Eigen::MatrixXd& X) const {
    double f = constant;
    for (int n = 0; n < outcome_count; ++n) {
      const auto row = X.row(n);
      f += row.dot(row * kernel(n)) - 2.0 * row.dot(targets.row(n));
    }
    return f;
  }

  Eigen::MatrixXd gradient(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd g(outcome_count, fock_count);
    for (int n = 0; n < outcome_count; ++n)
      g.row(n) = 2.0 * (X.row(n) * kernel(n) - targets.row(n));
    return g;
  }

  Eigen::MatrixXd residuals(const Eigen::MatrixXd& X) const {
    return X * coeffs - measured;
  }

  // Dense forms for small instances and cross-checks.
  Eigen::MatrixXd dense_hessian() const {
    const int dim = outcome_count * fock_count;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    for (int n = 0; n < outcome_count; ++n)
      h.block(n * fock_count, n * fock_count, fock_count, fock_count) = 2.0 * kernel(n);
    return h;
  }

  Eigen::VectorXd dense_linear() const {
    Eigen::VectorXd c(outcome_count * fock_count);
    for (int n = 0; n < outcome_count; ++n)
      c.segment(n * fock_count, fock_count) = -2.0 * targets.row(n).transpose();
    return c;
  }
};

/// Difference penalty matrix D^T D along the Fock axis.
inline Eigen::MatrixXd difference_penalty(int fock_count, RegularizerKind kind) {
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(fock_count, fock_count);
  if (kind == RegularizerKind::first_difference) {
    for (int m = 0; m + 1 < fock_count; ++m) {
      r(m, m) += 1.0;
      r(m + 1, m + 1) += 1.0;
      r(m, m + 1) -= 1.0;
      r(m + 1, m) -= 1.0;
    }
  } else {
    for (int m = 0; m + 2 < fock_count; ++m) {
      Eigen::Vector3d d(1.0, -2.0, 1.0);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r(m + i, m + j) += d(i) * d(j);
    }
  }
  return r;
}

/// Assemble the QP from a design matrix and measured frequencies. `weights`
/// (optional, same shape as `measured`) scales each squared residual.
inline QuadraticProgram build_objective(const Eigen::MatrixXd& coeffs,
                                        const Eigen::MatrixXd& measured,
                                        const ReconstructionConfig& cfg,
                                        const Eigen::MatrixXd* weights = nullptr) {
  cfg.validate();
  if (coeffs.cols() != measured.cols())
    throw std::invalid_argument("build_objective: probe counts differ between design matrix (" +
                                std::to_string(coeffs.cols()) + ") and measurements (" +
                                std::to_string(measured.cols()) + ")");
  if (coeffs.rows() < 1 || measured.rows() < 1)
    throw std::invalid_argument("build_objective: empty problem");
  if (weights && (weights->rows() != measured.rows() || weights->cols() != measured.cols()))
    throw std::invalid_argument("build_objective: weight matrix shape mismatch");
  if (cfg.truncation >= 0 && cfg.truncation + 1 != coeffs.rows())
    throw std::invalid_argument("build_objective: configured truncation " +
                                std::to_string(cfg.truncation) + " does not match design matrix rows " +
                                std::to_string(coeffs.rows()));

  QuadraticProgram qp;
  qp.outcome_count = static_cast<int>(measured.rows());
  qp.fock_count = static_cast<int>(coeffs.rows());
  qp.probe_count = static_cast<int>(coeffs.cols());
  qp.coeffs = coeffs;
  qp.measured = measured;
  qp.weighted = weights != nullptr;
  qp.targets.resize(qp.outcome_count, qp.fock_count);

  // enforce exact symmetry of the normal matrices (the product kernels are
  // only symmetric up to rounding)
  auto symmetrized = [](Eigen::MatrixXd k) {
    Eigen::MatrixXd sym = 0.5 * (k + Eigen::MatrixXd(k.transpose()));
    return sym;
  };
  double trace_sum = 0.0;
  if (!qp.weighted) {
    Eigen::MatrixXd k = symmetrized(coeffs * coeffs.transpose());
    trace_sum = k.trace() * qp.outcome_count;
    qp.kernels.push_back(std::move(k));
    qp.targets = measured * coeffs.transpose();
    qp.constant = measured.squaredNorm();
  } else {
    for (int n = 0; n < qp.outcome_count; ++n) {
      Eigen::MatrixXd wa = coeffs;  // fock x probes, column j scaled by w_nj
      for (int j = 0; j < qp.probe_count; ++j) wa.col(j) *= (*weights)(n, j);
      Eigen::MatrixXd k = symmetrized(wa * coeffs.transpose());
      trace_sum += k.trace();
      qp.kernels.push_back(std::move(k));
      qp.targets.row(n) = measured.row(n) * wa.transpose();
      for (int j = 0; j < qp.probe_count; ++j)
        qp.constant += (*weights)(n, j) * measured(n, j) * measured(n, j);
    }
  }
  qp.data_scale = trace_sum / (static_cast<double>(qp.outcome_count) * qp.fock_count);
  qp.smoothing_weight_effective = cfg.smoothing_weight * qp.data_scale;
  if (qp.smoothing_weight_effective > 0.0) {
    const Eigen::MatrixXd penalty =
        qp.smoothing_weight_effective * difference_penalty(qp.fock_count, cfg.regularizer);
    for (auto& k : qp.kernels) k += penalty;
  }
  return qp;
}

/// Inverse-variance weights for measured frequencies; normalized to mean 1
/// so the data-term scale stays comparable to the unweighted fit.
inline Eigen::MatrixXd inverse_variance_weights(const OutcomeStats& stats) {
  const int J = stats.probe_count();
  Eigen::MatrixXd w(kOutcomeCount, J);
  for (int n = 0; n < kOutcomeCount; ++n)
    for (int j = 0; j < J; ++j) {
      const double pulses = static_cast<double>(stats.gated_pulses[j]);
      const double f = stats.frequency(n, j);
      const double variance = std::max(f * (1.0 - f), 1.0 / pulses) / pulses;
      w(n, j) = 1.0 / variance;
    }
  return w * (w.size() / w.sum());
}

/// Assemble the QP from a probe matrix and observed statistics.
inline QuadraticProgram build_objective(const ProbeMatrix& probe_matrix,
                                        const OutcomeStats& stats,
                                        const ReconstructionConfig& cfg) {
  stats.validate();
  if (probe_matrix.probe_count != stats.probe_count())
    throw std::invalid_argument("build_objective: probe matrix has " +
                                std::to_string(probe_matrix.probe_count) + " probes, stats have " +
                                std::to_string(stats.probe_count()));
  Eigen::MatrixXd a(probe_matrix.fock_count(), probe_matrix.probe_count);
  for (int m = 0; m < probe_matrix.fock_count(); ++m)
    for (int j = 0; j < probe_matrix.probe_count; ++j) a(m, j) = probe_matrix.at(m, j);
  Eigen::MatrixXd xi(kOutcomeCount, stats.probe_count());
  for (int n = 0; n < kOutcomeCount; ++n)
    for (int j = 0; j < stats.probe_count(); ++j) xi(n, j) = stats.frequency(n, j);
  if (cfg.inverse_variance_weights) {
    const Eigen::MatrixXd w = inverse_variance_weights(stats);
    return build_objective(a, xi, cfg, &w);
  }
  return build_objective(a, xi, cfg);
}

struct ReconstructionResult {
  Eigen::MatrixXd solution;  // outcome_count x fock_count
  double objective_value = 0.0;
  Eigen::MatrixXd residuals;  // outcome_count x probe_count
  double kkt_residual = 0.0;
  long long iterations = 0;
  bool converged = false;
  double smoothing_weight_effective = 0.0;

  /// Domain view of the solution; requires the five-outcome layout.
  PovmMatrix povm() const {
    if (solution.rows() != kOutcomeCount)
      throw std::logic_error("ReconstructionResult: not a five-outcome solution");
    PovmMatrix p(static_cast<int>(solution.cols()) - 1);
    for (int n = 0; n < kOutcomeCount; ++n)
      for (int m = 0; m < solution.cols(); ++m) p.at(n, m) = solution(n, m);
    return p;
  }
};

/// Iteration limit reached before the KKT residual dropped below tolerance;
/// carries the best iterate found.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, ReconstructionResult best)
      : std::runtime_error(what),
        best_(std::make_shared<ReconstructionResult>(std::move(best))) {}
  const ReconstructionResult& best() const { return *best_; }

 private:
  std::shared_ptr<ReconstructionResult> best_;
};

namespace detail {

inline double largest_eigenvalue(const Eigen::MatrixXd& sym) {
  // Deterministic power iteration; the 5% margin below compensates the
  // truncation of the iteration.
  Eigen::VectorXd v = Eigen::VectorXd::Ones(sym.rows());
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    Eigen::VectorXd w = sym * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    lambda = norm;
  }
  return lambda;
}

/// Exact minimizer of the QP restricted to the face where the currently
/// zero entries stay zero: one KKT linear solve over the free variables and
/// the per-column sum constraints. Returns false when the face system is
/// singular or its solution leaves the feasible set.
inline bool solve_on_active_face(const QuadraticProgram& qp, const Eigen::MatrixXd& x,
                                 Eigen::MatrixXd& polished) {
  const int fock = qp.fock_count;
  std::vector<int> free_n, free_m;
  for (int n = 0; n < qp.outcome_count; ++n)
    for (int m = 0; m < fock; ++m)
      if (x(n, m) > 0.0) {
        free_n.push_back(n);
        free_m.push_back(m);
      }
  const int nf = static_cast<int>(free_n.size());
  const int dim = nf + fock;
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
  for (int i = 0; i < nf; ++i) {
    const auto& kernel = qp.kernel(free_n[i]);
    for (int k = 0; k < nf; ++k)
      if (free_n[i] == free_n[k]) kkt(i, k) = 2.0 * kernel(free_m[i], free_m[k]);
    rhs(i) = 2.0 * qp.targets(free_n[i], free_m[i]);
    kkt(i, nf + free_m[i]) = 1.0;
    kkt(nf + free_m[i], i) = 1.0;
  }
  for (int m = 0; m < fock; ++m) rhs(nf + m) = 1.0;

  const Eigen::VectorXd sol = Eigen::FullPivLU<Eigen::MatrixXd>(kkt).solve(rhs);
  if (!sol.allFinite()) return false;
  if ((kkt * sol - rhs).norm() > 1e-10 * std::max(1.0, rhs.norm())) return false;
  for (int i = 0; i < nf; ++i)
    if (sol(i) < 0.0) return false;
  polished = Eigen::MatrixXd::Zero(qp.outcome_count, fock);
  for (int i = 0; i < nf; ++i) polished(free_n[i], free_m[i]) = sol(i);
  return true;
}

}  // namespace detail

/// Minimize the QP over the product of outcome simplices. The driver is
/// monotone FISTA (accelerated projected gradient with the lower-objective
/// iterate kept) with gradient-based adaptive restart; whenever the active
/// set stalls, the face-restricted QP is solved exactly through its KKT
/// system, which finishes the run at machine precision. Convergence is
/// declared when the fixed-point residual ||X - P(X - grad f(X))||_F falls
/// below the configured tolerance. Deterministic given inputs and config.
inline ReconstructionResult solve(const QuadraticProgram& qp, const ReconstructionConfig& cfg,
                                  const Eigen::MatrixXd* initial = nullptr) {
  cfg.validate();
  Eigen::MatrixXd x;
  if (initial) {
    if (initial->rows() != qp.outcome_count || initial->cols() != qp.fock_count)
      throw std::invalid_argument("solve: initial iterate shape mismatch");
    x = *initial;
  } else {
    x = Eigen::MatrixXd::Constant(qp.outcome_count, qp.fock_count, 1.0 / qp.outcome_count);
  }
  project_columns_to_simplex(x);

  auto finish = [&](long long iters, double kkt, bool ok) {
    ReconstructionResult r;
    r.solution = x;
    r.objective_value = qp.objective(x);
    r.residuals = qp.residuals(x);
    r.kkt_residual = kkt;
    r.iterations = iters;
    r.converged = ok;
    r.smoothing_weight_effective = qp.smoothing_weight_effective;
    return r;
  };

  double lmax = 0.0;
  const int kernel_count = qp.weighted ? qp.outcome_count : 1;
  for (int n = 0; n < kernel_count; ++n)
    lmax = std::max(lmax, detail::largest_eigenvalue(qp.kernels[n]));
  const double lipschitz = 2.0 * lmax * 1.05;
  if (!(lipschitz > 0.0)) return finish(0, 0.0, true);  // zero objective: any feasible point
  const double step = 1.0 / lipschitz;

  auto kkt_residual_at = [&](const Eigen::MatrixXd& point) {
    Eigen::MatrixXd moved = point - qp.gradient(point);
    project_columns_to_simplex(moved);
    return (point - moved).norm();
  };

  auto active_signature = [&](const Eigen::MatrixXd& point) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (int n = 0; n < qp.outcome_count; ++n)
      for (int m = 0; m < qp.fock_count; ++m) {
        h ^= point(n, m) == 0.0 ? 0x9eu : 0x01u;
        h *= 0x100000001b3ULL;
      }
    return h;
  };

  Eigen::MatrixXd y = x, x_prev = x, z_prev = x;
  double fx = qp.objective(x);
  double t = 1.0;
  constexpr long long kCheckInterval = 25;
  std::uint64_t last_active = 0;
  long long next_polish = kCheckInterval;
  for (long long iter = 1; iter <= cfg.max_iterations; ++iter) {
    Eigen::MatrixXd z = y - step * qp.gradient(y);
    project_columns_to_simplex(z);
    const double fz = qp.objective(z);
    // adaptive restart: momentum pointing away from the descent direction
    const bool restart = (y - z).cwiseProduct(z - z_prev).sum() > 0.0;
    x_prev.swap(x);
    if (fz <= fx) {
      x = z;
      fx = fz;
    } else {
      x = x_prev;  // keep the monotone iterate, momentum still uses z
    }
    if (restart) {
      t = 1.0;
      y = x;
    } else {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      y = x + (t / t_next) * (z - x) + ((t - 1.0) / t_next) * (x - x_prev);
      t = t_next;
    }
    z_prev.swap(z);

    if (iter % kCheckInterval == 0 || iter == cfg.max_iterations) {
      const double kkt = kkt_residual_at(x);
      if (kkt <= cfg.kkt_tolerance) return finish(iter, kkt, true);
      // the active set stopped moving: finish on that face exactly
      const std::uint64_t active = active_signature(x);
      if (active == last_active && iter >= next_polish) {
        Eigen::MatrixXd polished;
        if (detail::solve_on_active_face(qp, x, polished)) {
          const double fp = qp.objective(polished);
          if (fp <= fx) {
            x = polished;
            fx = fp;
            y = x;
            t = 1.0;
            z_prev = x;
            const double kkt_p = kkt_residual_at(x);
            if (kkt_p <= cfg.kkt_tolerance) return finish(iter, kkt_p, true);
          }
        }
        next_polish = iter + 8 * kCheckInterval;  // back off if the face was wrong
      }
      last_active = active;
    }
  }
  auto best = finish(cfg.max_iterations, kkt_residual_at(x), false);
  throw SolverError("solve: iteration limit " + std::to_string(cfg.max_iterations) +
                        " reached, KKT residual " + format_full(best.kkt_residual) +
                        " above tolerance " + format_full(cfg.kkt_tolerance),
                    std::move(best));
}

/// Predicted outcome frequencies xi_nj = sum_m X_nm a_mj for a response
/// matrix and a probe ensemble. Summation runs in ascending m for every
/// entry, matching the Q-function evaluation order.
inline Eigen::MatrixXd predicted_response(const PovmMatrix& povm, const ProbeMatrix& probes) {
  if (povm.truncation() != probes.truncation)
    throw std::invalid_argument("predicted_response: truncation mismatch (" +
                                std::to_string(povm.truncation()) + " vs " +
                                std::to_string(probes.truncation) + ")");
  Eigen::MatrixXd xi = Eigen::MatrixXd::Zero(kOutcomeCount, probes.probe_count);
  for (int n = 0; n < kOutcomeCount; ++n)
    for (int j = 0; j < probes.probe_count; ++j) {
      double s = 0.0;
      for (int m = 0; m <= povm.truncation(); ++m) s += povm.at(n, m) * probes.at(m, j);
      xi(n, j) = s;
    }
  return xi;
}

}  // namespace treetomo
