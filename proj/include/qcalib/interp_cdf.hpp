#pragma once

#include "qcalib/core.hpp"

namespace qcalib {

/// Nearest sample values around an evaluation point t:
/// lower = max{v_k | v_k <= t} (or -inf), upper = min{v_k | v_k > t} (or +inf),
/// beta = (t - lower) / (upper - lower) when both are finite.
/// Conventions at infinite ends: beta = 0 when lower = -inf, beta = 1 when
/// upper = +inf, so the interpolated CDF is 0 below the sample minimum and 1
/// at or above the maximum.
struct Bracket {
  double lower;
  double upper;
  double beta;
};

Bracket bracket(const VecRef& values, double t);

/// Interpolated step weight for one unit: 1 if y_k <= lower, beta if
/// y_k equals upper, 0 beyond.
double h_interp(double y_k, const Bracket& b);

/// Piecewise-linear weighted CDF estimate at t; weights need not be
/// normalized (the value is sum_k w_k h_k / sum_k w_k).
double interp_cdf(const VecRef& values, const VecRef& weights, double t);

/// Inverse of the interpolated CDF at order alpha for weights summing to N
/// (within 1e-6 * N). Outside the invertible range the result is clamped to
/// the sample minimum/maximum.
double interp_quantile(const VecRef& values, const VecRef& weights, double alpha, double N);

/// Logistic approximation 1 / (1 + exp(-2 k x)) to the unit step; larger k
/// gives a sharper transition at 0.
double smooth_heaviside(double x, double k);

/// Exact right-continuous step CDF of a finite population.
double population_cdf(const VecRef& values, double t);

/// Smallest sample value v with population_cdf(values, v) >= alpha.
double population_quantile(const VecRef& values, double alpha);

}  // namespace qcalib
