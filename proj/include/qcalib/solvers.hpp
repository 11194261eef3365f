#pragma once

#include "qcalib/constraints.hpp"
#include "qcalib/core.hpp"

namespace qcalib {

struct SolverOptions {
  int max_iterations = 100;
  double tolerance = 1e-8;     // per-column relative residual threshold
  int max_step_halvings = 30;  // line-search damping limit
  bool rescale = true;         // internal conditioning rescale before factorization
};

/// Distance function G together with F, the inverse of G'. The dual equations
/// solved by the iterative calibrator read
///   sum_k d_k F(q_k x_k^T lambda) x_k = h.
/// Quadratic: F(u) = 1 + u. Raking: F(u) = exp(u). Logit with bounds (L, U):
///   F(u) = [L(U-1) + U(1-L) e^{gu}] / [(U-1) + (1-L) e^{gu}],
/// g = (U-L)/((1-L)(U-1)), whose range is the open interval (L, U).
struct DistanceFunctions {
  DistanceKind kind = DistanceKind::quadratic;
  double lower = 0.0;  // logit L
  double upper = 0.0;  // logit U
  double gamma = 0.0;  // logit exponent scale

  double g(double x) const;
  double g_prime(double x) const;
  double f(double u) const;
  double f_prime(double u) const;
};

/// Validates the spec (logit requires L < 1 < U) and materializes the
/// function family.
DistanceFunctions make_distance(const DistanceSpec& spec);

/// D(d, w) = sum_k (d_k / q_k) G(w_k / d_k).
double distance_value(const VecRef& d, const VecRef& q, const VecRef& w,
                      const DistanceFunctions& dist);

/// Closed-form minimizer of the quadratic distance subject to A^T w = h:
///   w_k = d_k + d_k q_k (h - A^T d)^T M^{-1} x_k,  M = A^T diag(d q) A.
/// Throws on rank-deficient systems (naming the dependent columns) and on
/// infeasible targets. Weights may be negative.
WeightSet solve_quadratic(const ConstraintSystem& system, const VectorXd& d,
                          const std::optional<VectorXd>& q = std::nullopt);

/// Newton iteration on the dual multipliers with step halving, for any
/// DistanceSpec. Raking weights are strictly positive; logit weight ratios
/// stay inside (L, U). Returns converged = false with the best iterate when
/// the residual cannot be driven below tolerance.
WeightSet solve_dual(const ConstraintSystem& system, const VectorXd& d,
                     const DistanceSpec& spec, const SolverOptions& opts = {});

/// Empirical-likelihood probabilities p_k maximizing sum_k log p_k subject to
/// sum p_k = 1 and sum p_k u_k = 0.
struct ELWeights {
  VectorXd p;
  VectorXd lambda;  // dual multipliers, p_k = 1 / (n (1 + lambda^T u_k))
  bool converged = false;
  int iterations = 0;
};

/// Solves the EL dual sum_k u_k / (1 + lambda^T u_k) = 0 by damped Newton,
/// rejecting steps that violate 1 + lambda^T u_k > 0. Requires 0 interior to
/// the convex hull of the rows of u; otherwise converged = false.
ELWeights solve_el(const MatrixXd& u, const SolverOptions& opts = {});

/// Centered constraint matrix for EL: mean-type columns x_kj - tau_j / N and
/// quantile-type columns a_kj - alpha_j / N. No size column (sum p = 1 takes
/// its place).
MatrixXd el_centered_constraints(const SampleFrame& frame, const TargetSpec& targets);

}  // namespace qcalib
