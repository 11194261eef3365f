#include "qcalib/estimators.hpp"

#include <cmath>
#include <stdexcept>

#include "qcalib/interp_cdf.hpp"

namespace qcalib {

double est_total(const VecRef& w, const VecRef& y) {
  if (w.size() != y.size()) throw std::invalid_argument("est_total: length mismatch");
  return w.dot(y);
}

double est_mean(const VecRef& w, const VecRef& y, double N) {
  if (!(N > 0.0)) throw std::invalid_argument("est_mean: N must be positive");
  return est_total(w, y) / N;
}

double est_quantile(const VecRef& w, const VecRef& y, double alpha, double N) {
  const double total = w.sum();
  const double N_eff = std::abs(total - N) <= 1e-6 * N ? N : total;
  return interp_quantile(y, w, alpha, N_eff);
}

double naive_mean(const VecRef& y) {
  if (y.size() == 0) throw std::invalid_argument("naive_mean: empty sample");
  return y.mean();
}

double naive_quantile(const VecRef& y, double alpha) {
  if (y.size() == 0) throw std::invalid_argument("naive_quantile: empty sample");
  const VectorXd ones = VectorXd::Ones(y.size());
  return interp_quantile(y, ones, alpha, static_cast<double>(y.size()));
}

double estimate(const EstimateRequest& request, const VecRef& w, const VecRef& y, double N) {
  switch (request.parameter) {
    case ParamKind::total: return est_total(w, y);
    case ParamKind::mean: return est_mean(w, y, N);
    case ParamKind::quantile: return est_quantile(w, y, request.alpha, N);
  }
  throw std::invalid_argument("estimate: unknown parameter kind");
}

}  // namespace qcalib
