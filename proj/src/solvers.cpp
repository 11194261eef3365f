#include "qcalib/solvers.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace qcalib {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

VectorXd resolve_q(const DistanceSpec& spec, Index n) {
  if (!spec.q) return VectorXd::Ones(n);
  const VectorXd& q = *spec.q;
  if (q.size() != n)
    throw std::invalid_argument("distance q factors do not match the sample size");
  for (Index k = 0; k < n; ++k)
    if (!(q[k] > 0.0) || !std::isfinite(q[k]))
      throw std::invalid_argument("distance q factors must be positive and finite");
  return q;
}

void check_design_weights(const VectorXd& d, Index n) {
  if (d.size() != n)
    throw std::invalid_argument("design weights do not match the constraint system");
  for (Index k = 0; k < n; ++k)
    if (!(d[k] > 0.0) || !std::isfinite(d[k]))
      throw std::invalid_argument("design weights must be positive and finite");
}

// Per-column relative residual criterion; +inf when any entry is not finite.
double relative_crit(const VectorXd& r, const VectorXd& h) {
  double crit = 0.0;
  for (Index j = 0; j < r.size(); ++j) {
    if (!std::isfinite(r[j])) return kInf;
    crit = std::max(crit, std::abs(r[j]) / std::max(1.0, std::abs(h[j])));
  }
  return crit;
}

// Conditioning factor: the size target when present (totals "in millions"
// against quantile targets in (0,1) destabilize the factorization), else the
// largest total target, else 1.
double conditioning_scale(const ConstraintSystem& system) {
  double best = 0.0;
  for (Index j = 0; j < system.m(); ++j) {
    const auto& col = system.columns[static_cast<std::size_t>(j)];
    if (col.kind == ConstraintKind::size) return std::max(std::abs(system.h[j]), 1.0);
    if (col.kind == ConstraintKind::total) best = std::max(best, std::abs(system.h[j]));
  }
  return std::max(best, 1.0);
}

struct EntryStatus {
  bool full_rank = true;
  std::vector<Index> dependent;   // original column indices past the detected rank
  bool feasible = true;           // h lies in the span of the constraint rows
  double lsq_rel_residual = 0.0;  // min-norm residual of A^T w = h, relative
};

// Rank check on the metric-weighted constraint matrix (relative pivot
// threshold 1e-12) plus, when deficient, a consistency probe of A^T w = h.
EntryStatus entry_check(const MatrixXd& A, const VectorXd& h, const VectorXd& dq) {
  EntryStatus st;
  const Index m = A.cols();
  if (m == 0) return st;

  MatrixXd B = dq.cwiseSqrt().asDiagonal() * A;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(B);
  const Index diag_len = std::min(B.rows(), B.cols());
  VectorXd rdiag = qr.matrixR().diagonal().head(diag_len).cwiseAbs();
  const double pivot_max = diag_len > 0 ? rdiag.maxCoeff() : 0.0;
  Index rank = 0;
  for (Index i = 0; i < diag_len; ++i) {
    if (rdiag[i] > 1e-12 * pivot_max) ++rank;
  }
  if (rank == m) return st;

  st.full_rank = false;
  const auto& perm = qr.colsPermutation().indices();
  for (Index i = rank; i < m; ++i) st.dependent.push_back(perm[i]);

  Eigen::ColPivHouseholderQR<MatrixXd> qrt(A.transpose());
  VectorXd w_star = qrt.solve(h);
  st.lsq_rel_residual = (A.transpose() * w_star - h).norm() / std::max(1.0, h.norm());
  st.feasible = st.lsq_rel_residual <= 1e-8;
  return st;
}

std::string describe_columns(const ConstraintSystem& system, const std::vector<Index>& idx) {
  std::string out;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i) out += ", ";
    out += describe_column(system.columns[static_cast<std::size_t>(idx[i])]);
  }
  return out;
}

SolverDiagnostics make_diagnostics(const ConstraintSystem& system, const VectorXd& d,
                                   const VectorXd& q, const VectorXd& w,
                                   const DistanceFunctions& dist, int iterations,
                                   double tolerance) {
  SolverDiagnostics diag;
  VectorXd r = residuals(system, w);
  diag.max_abs_residual = r.size() > 0 ? r.cwiseAbs().maxCoeff() : 0.0;
  diag.iterations = iterations;
  diag.distance_value = distance_value(d, q, w, dist);
  VectorXd ratio = w.cwiseQuotient(d);
  diag.ratio_min = ratio.minCoeff();
  diag.ratio_max = ratio.maxCoeff();
  diag.converged = relative_crit(r, system.h) <= tolerance;
  return diag;
}

}  // namespace

double DistanceFunctions::g(double x) const {
  // The log1p forms keep every intermediate O(x - 1), which matters because
  // tests probe G''(1) = 1 by second differences at h = 1e-5.
  switch (kind) {
    case DistanceKind::quadratic:
      return 0.5 * (x - 1.0) * (x - 1.0);
    case DistanceKind::raking: {
      if (x < 0.0) return kInf;
      if (x == 0.0) return 1.0;
      const double r = x - 1.0;
      return x * std::log1p(r) - r;
    }
    case DistanceKind::logit: {
      if (x < lower || x > upper) return kInf;
      const double a =
          x == lower ? 0.0 : (x - lower) * std::log1p((x - 1.0) / (1.0 - lower));
      const double b =
          x == upper ? 0.0 : (upper - x) * std::log1p((1.0 - x) / (upper - 1.0));
      return (a + b) / gamma;
    }
  }
  return kInf;
}

double DistanceFunctions::g_prime(double x) const {
  switch (kind) {
    case DistanceKind::quadratic:
      return x - 1.0;
    case DistanceKind::raking:
      return std::log(x);
    case DistanceKind::logit:
      return (std::log((x - lower) / (1.0 - lower)) -
              std::log((upper - x) / (upper - 1.0))) / gamma;
  }
  return 0.0;
}

double DistanceFunctions::f(double u) const {
  switch (kind) {
    case DistanceKind::quadratic:
      return 1.0 + u;
    case DistanceKind::raking:
      return std::exp(u);
    case DistanceKind::logit: {
      const double t = gamma * u;
      if (t > 350.0) return upper;
      if (t < -350.0) return lower;
      const double e = std::exp(t);
      return (lower * (upper - 1.0) + upper * (1.0 - lower) * e) /
             ((upper - 1.0) + (1.0 - lower) * e);
    }
  }
  return 0.0;
}

double DistanceFunctions::f_prime(double u) const {
  switch (kind) {
    case DistanceKind::quadratic:
      return 1.0;
    case DistanceKind::raking:
      return std::exp(u);
    case DistanceKind::logit: {
      const double t = gamma * u;
      if (std::abs(t) > 350.0) return 0.0;
      const double e = std::exp(t);
      const double den = (upper - 1.0) + (1.0 - lower) * e;
      return gamma * (1.0 - lower) * (upper - 1.0) * (upper - lower) * e / (den * den);
    }
  }
  return 0.0;
}

DistanceFunctions make_distance(const DistanceSpec& spec) {
  DistanceFunctions dist;
  dist.kind = spec.kind;
  if (spec.bounds) {
    const auto [L, U] = *spec.bounds;
    if (!(L >= 0.0 && L <= 1.0 && U >= 1.0))
      throw std::invalid_argument("distance bounds must satisfy 0 <= L <= 1 <= U");
    dist.lower = L;
    dist.upper = U;
  }
  if (spec.kind == DistanceKind::logit) {
    if (!spec.bounds) throw std::invalid_argument("logit distance requires bounds (L, U)");
    if (!(dist.lower < 1.0 && dist.upper > 1.0))
      throw std::invalid_argument("logit distance requires L < 1 < U");
    dist.gamma = (dist.upper - dist.lower) / ((1.0 - dist.lower) * (dist.upper - 1.0));
  }
  return dist;
}

double distance_value(const VecRef& d, const VecRef& q, const VecRef& w,
                      const DistanceFunctions& dist) {
  double acc = 0.0;
  for (Index k = 0; k < d.size(); ++k) acc += d[k] / q[k] * dist.g(w[k] / d[k]);
  return acc;
}

WeightSet solve_quadratic(const ConstraintSystem& system, const VectorXd& d,
                          const std::optional<VectorXd>& q_opt) {
  const Index n = system.n();
  check_design_weights(d, n);
  VectorXd q = q_opt.value_or(VectorXd::Ones(n));
  if (q.size() != n) throw std::invalid_argument("q factors do not match the sample size");
  for (Index k = 0; k < n; ++k)
    if (!(q[k] > 0.0)) throw std::invalid_argument("q factors must be positive");

  DistanceSpec qspec;
  qspec.kind = DistanceKind::quadratic;
  const DistanceFunctions dist = make_distance(qspec);
  const SolverOptions opts;

  if (system.m() == 0) {
    WeightSet ws{d, {}};
    ws.diagnostics = make_diagnostics(system, d, q, d, dist, 0, opts.tolerance);
    return ws;
  }

  const ConstraintSystem scaled = rescale_system(system, conditioning_scale(system));
  const VectorXd dq = d.cwiseProduct(q);

  EntryStatus st = entry_check(scaled.A, scaled.h, dq);
  if (!st.full_rank) {
    std::ostringstream os;
    if (!st.feasible) {
      os << "infeasible constraint system: no weight vector reproduces the targets "
         << "(dependent columns: " << describe_columns(system, st.dependent)
         << "; least-squares relative residual " << st.lsq_rel_residual << ")";
    } else {
      os << "rank-deficient constraint system; dependent columns: "
         << describe_columns(system, st.dependent);
    }
    throw std::runtime_error(os.str());
  }

  const MatrixXd M = scaled.A.transpose() * dq.asDiagonal() * scaled.A;
  const VectorXd gap = scaled.h - scaled.A.transpose() * d;
  const VectorXd lambda = M.ldlt().solve(gap);
  const VectorXd w = d + dq.cwiseProduct(scaled.A * lambda);

  WeightSet ws{w, {}};
  ws.diagnostics = make_diagnostics(system, d, q, w, dist, 1, opts.tolerance);
  return ws;
}

WeightSet solve_dual(const ConstraintSystem& system, const VectorXd& d,
                     const DistanceSpec& spec, const SolverOptions& opts) {
  const Index n = system.n();
  check_design_weights(d, n);
  const DistanceFunctions dist = make_distance(spec);
  const VectorXd q = resolve_q(spec, n);

  if (system.m() == 0) {
    WeightSet ws{d, {}};
    ws.diagnostics = make_diagnostics(system, d, q, d, dist, 0, opts.tolerance);
    return ws;
  }

  const double c = opts.rescale ? conditioning_scale(system) : 1.0;
  const ConstraintSystem scaled = rescale_system(system, c);
  const VectorXd dq = d.cwiseProduct(q);

  EntryStatus st = entry_check(scaled.A, scaled.h, dq);
  if (!st.full_rank) {
    if (st.feasible) {
      throw std::runtime_error("singular Jacobian: dependent constraint columns: " +
                               describe_columns(system, st.dependent));
    }
    WeightSet ws{d, {}};
    ws.diagnostics = make_diagnostics(system, d, q, d, dist, 0, opts.tolerance);
    ws.diagnostics.converged = false;
    std::ostringstream os;
    os << "infeasible constraint system: no weight vector reproduces the targets "
       << "(involved columns: " << describe_columns(system, st.dependent)
       << "; least-squares relative residual " << st.lsq_rel_residual << ")";
    ws.diagnostics.note = os.str();
    return ws;
  }

  VectorXd lambda = VectorXd::Zero(system.m());
  VectorXd w = d;  // F(0) = 1
  // Convergence is always measured against the caller's system, not the
  // internally rescaled one.
  double crit = relative_crit(residuals(system, w), system.h);

  VectorXd best_lambda = lambda;
  VectorXd best_w = w;
  double best_crit = crit;

  std::string note;
  int it = 0;
  while (crit > opts.tolerance && it < opts.max_iterations) {
    ++it;
    const VectorXd u = q.cwiseProduct(scaled.A * lambda);
    VectorXd jw(n);
    for (Index k = 0; k < n; ++k) jw[k] = dq[k] * dist.f_prime(u[k]);
    const MatrixXd J = scaled.A.transpose() * jw.asDiagonal() * scaled.A;
    const VectorXd rhs = scaled.h - scaled.A.transpose() * w;
    const VectorXd delta = J.ldlt().solve(rhs);
    if (!delta.allFinite()) {
      note = "Newton step failed: singular Jacobian at iteration " + std::to_string(it);
      break;
    }

    bool accepted = false;
    double step = 1.0;
    for (int halvings = 0; halvings <= opts.max_step_halvings; ++halvings, step *= 0.5) {
      const VectorXd cand_lambda = lambda + step * delta;
      const VectorXd cand_u = q.cwiseProduct(scaled.A * cand_lambda);
      VectorXd cand_w(n);
      for (Index k = 0; k < n; ++k) cand_w[k] = d[k] * dist.f(cand_u[k]);
      if (!cand_w.allFinite()) continue;
      const double cand_crit = relative_crit(residuals(system, cand_w), system.h);
      if (cand_crit < crit || cand_crit <= opts.tolerance) {
        lambda = cand_lambda;
        w = cand_w;
        crit = cand_crit;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      note = "stalled: step halving could not reduce the residual (iteration " +
             std::to_string(it) + ")";
      break;
    }
    if (crit < best_crit) {
      best_crit = crit;
      best_lambda = lambda;
      best_w = w;
    }
  }

  WeightSet ws{best_w, {}};
  ws.diagnostics = make_diagnostics(system, d, q, best_w, dist, it, opts.tolerance);
  if (!ws.diagnostics.converged) {
    if (note.empty())
      note = "no convergence within " + std::to_string(opts.max_iterations) +
             " iterations (targets may be outside the achievable range)";
    ws.diagnostics.note = note;
  }
  return ws;
}

ELWeights solve_el(const MatrixXd& u, const SolverOptions& opts) {
  const Index n = u.rows();
  const Index m = u.cols();
  if (n == 0) throw std::invalid_argument("solve_el: empty sample");

  ELWeights out;
  out.lambda = VectorXd::Zero(m);
  if (m == 0) {
    out.p = VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    out.converged = true;
    return out;
  }

  // Convergence is judged on the normalized probabilities: the moment
  // residual sum_k p_k u_kj with p_k proportional to 1/s_k. Normalizing by
  // sum 1/s_k (not n) keeps hull violations visible: when lambda diverges the
  // raw dual gradient vanishes even though no probability vector satisfies
  // the constraints.
  VectorXd colscale(m);
  for (Index j = 0; j < m; ++j) colscale[j] = std::max(1.0, u.col(j).cwiseAbs().maxCoeff());
  const double dn = static_cast<double>(n);

  auto crit_of = [&](const VectorXd& g, const VectorXd& s) {
    const double mass = s.cwiseInverse().sum();
    double crit = 0.0;
    for (Index j = 0; j < m; ++j) {
      if (!std::isfinite(g[j])) return kInf;
      crit = std::max(crit, std::abs(g[j]) / (mass * colscale[j]));
    }
    return crit;
  };

  VectorXd lambda = VectorXd::Zero(m);
  VectorXd s = VectorXd::Ones(n);  // 1 + u lambda, kept strictly positive
  VectorXd g = u.transpose() * s.cwiseInverse();
  double crit = crit_of(g, s);

  // Iterate past the nominal tolerance down to the numerical floor; the line
  // search keeps the criterion monotone, so the final iterate is the best.
  const double floor_tol = std::min(opts.tolerance, 1e-14);
  int it = 0;
  while (crit > floor_tol && it < opts.max_iterations) {
    ++it;
    const VectorXd inv2 = s.cwiseInverse().cwiseAbs2();
    const MatrixXd H = u.transpose() * inv2.asDiagonal() * u;
    const VectorXd delta = H.ldlt().solve(g);
    if (!delta.allFinite()) break;

    bool accepted = false;
    double step = 1.0;
    for (int halvings = 0; halvings <= opts.max_step_halvings; ++halvings, step *= 0.5) {
      const VectorXd cand_lambda = lambda + step * delta;
      const VectorXd cand_s = VectorXd::Ones(n) + u * cand_lambda;
      if (cand_s.minCoeff() <= 1e-10) continue;  // log-barrier safeguard
      const VectorXd cand_g = u.transpose() * cand_s.cwiseInverse();
      const double cand_crit = crit_of(cand_g, cand_s);
      if (cand_crit < crit) {
        lambda = cand_lambda;
        s = cand_s;
        g = cand_g;
        crit = cand_crit;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }

  out.iterations = it;
  out.converged = crit <= opts.tolerance;
  out.lambda = lambda;
  out.p = (dn * s.array()).inverse().matrix();
  out.p /= out.p.sum();  // sum_k 1/s_k = n at the solution; renormalize exactly
  return out;
}

MatrixXd el_centered_constraints(const SampleFrame& frame, const TargetSpec& targets) {
  ValidationReport report = validate_frame(frame, targets);
  if (!report.ok())
    throw std::invalid_argument("el_centered_constraints: invalid inputs: " + report.joined());

  const Index n = frame.n();
  const Index m =
      static_cast<Index>(targets.totals.size()) + static_cast<Index>(targets.quantiles.size());
  MatrixXd u(n, m);
  Index j = 0;
  for (const auto& [variable, tau] : targets.totals) {
    u.col(j) = frame.X.col(frame.x_index(variable)).array() - tau / targets.N;
    ++j;
  }
  for (const auto& qt : targets.quantiles) {
    u.col(j) = quantile_pseudo_variable(frame.X.col(frame.x_index(qt.variable)), qt.value,
                                        targets.N)
                   .array() -
               qt.alpha / targets.N;
    ++j;
  }
  return u;
}

}  // namespace qcalib
