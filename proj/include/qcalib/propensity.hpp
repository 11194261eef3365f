#pragma once

#include "qcalib/core.hpp"
#include "qcalib/solvers.hpp"

namespace qcalib {

/// Logistic propensity model fitted by the calibration-form score equations
///   sum_{k in s} (1, x_k) = sum_{k in U} pi(theta; x_k) (1, x_k),
/// pi(theta; x) = 1 / (1 + exp(-theta_0 - theta^T x)).
struct PropensityFit {
  VectorXd theta;      // intercept first, length p + 1
  VectorXd pi_sample;  // fitted inclusion probabilities on the sample rows
  bool converged = false;
  int iterations = 0;
  double score_norm = 0.0;  // max relative score residual at exit
};

/// Damped Newton on the score equations; theta starts at
/// (logit(n/N), 0, ..., 0). Separation or non-convergence is reported via
/// converged = false with the best iterate.
PropensityFit fit_propensity(const MatRef& sample_X, const MatRef& population_X,
                             const SolverOptions& opts = {});

/// w_k = 1 / pi_k on the sample; requires a converged fit and pi_k > 0.
VectorXd ipw_weights(const PropensityFit& fit);

}  // namespace qcalib
