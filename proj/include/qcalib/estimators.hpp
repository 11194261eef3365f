#pragma once

#include "qcalib/core.hpp"

namespace qcalib {

enum class ParamKind { total, mean, quantile };

/// One requested point estimate; weights_source is an echo label
/// ({design, calibrated, el, ipw, uniform}).
struct EstimateRequest {
  ParamKind parameter = ParamKind::mean;
  std::string variable;
  double alpha = 0.5;  // quantile order, used only for ParamKind::quantile
  std::string weights_source = "calibrated";
};

/// sum_k w_k y_k.
double est_total(const VecRef& w, const VecRef& y);

/// est_total / N.
double est_mean(const VecRef& w, const VecRef& y, double N);

/// Interpolated-CDF inversion at order alpha. When sum(w) differs from N
/// beyond 1e-6 * N the weight total is used instead (Hajek normalization),
/// so improper weight sets such as IPW still yield a proper CDF.
double est_quantile(const VecRef& w, const VecRef& y, double alpha, double N);

/// Equal-weight estimates with w_k = 1 and N = n.
double naive_mean(const VecRef& y);
double naive_quantile(const VecRef& y, double alpha);

/// Dispatch on the request kind.
double estimate(const EstimateRequest& request, const VecRef& w, const VecRef& y, double N);

}  // namespace qcalib
