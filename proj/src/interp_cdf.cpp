#include "qcalib/interp_cdf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace qcalib {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Bracket bracket(const VecRef& values, double t) {
  if (values.size() == 0) throw std::invalid_argument("bracket: empty sample");
  double lower = -kInf;
  double upper = kInf;
  for (Index k = 0; k < values.size(); ++k) {
    double v = values[k];
    if (v <= t) {
      if (v > lower) lower = v;
    } else if (v < upper) {
      upper = v;
    }
  }
  double beta;
  if (lower == -kInf) {
    beta = 0.0;
  } else if (upper == kInf) {
    beta = 1.0;
  } else {
    beta = (t - lower) / (upper - lower);
  }
  return {lower, upper, beta};
}

double h_interp(double y_k, const Bracket& b) {
  if (y_k <= b.lower) return 1.0;
  if (y_k > b.upper) return 0.0;
  if (y_k == b.upper) return b.beta;
  return 0.0;  // strictly between the brackets; cannot occur for in-sample values
}

double interp_cdf(const VecRef& values, const VecRef& weights, double t) {
  if (values.size() != weights.size())
    throw std::invalid_argument("interp_cdf: values/weights length mismatch");
  const double total = weights.sum();
  if (!(total > 0.0)) throw std::invalid_argument("interp_cdf: total weight is not positive");
  const Bracket b = bracket(values, t);
  double acc = 0.0;
  for (Index k = 0; k < values.size(); ++k) acc += weights[k] * h_interp(values[k], b);
  return std::clamp(acc / total, 0.0, 1.0);  // shave accumulation-order dust
}

double interp_quantile(const VecRef& values, const VecRef& weights, double alpha, double N) {
  const Index n = values.size();
  if (n != weights.size())
    throw std::invalid_argument("interp_quantile: values/weights length mismatch");
  if (n == 0) throw std::invalid_argument("interp_quantile: empty sample");
  if (!(N > 0.0)) throw std::invalid_argument("interp_quantile: N must be positive");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("interp_quantile: alpha must lie strictly in (0,1)");
  const double total = weights.sum();
  if (std::abs(total - N) > 1e-6 * N)
    throw std::invalid_argument("interp_quantile: weights do not sum to N");

  if (n == 1) return values[0];

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return values[a] < values[b]; });

  const double target = N * alpha;
  double cum = weights[order[0]];
  if (target < cum) return values[order[0]];  // below the invertible range
  for (Index p = 0; p + 1 < n; ++p) {
    const double next = cum + weights[order[static_cast<std::size_t>(p) + 1]];
    if (cum <= target && target < next) {
      const double lo = values[order[static_cast<std::size_t>(p)]];
      const double hi = values[order[static_cast<std::size_t>(p) + 1]];
      const double w_next = weights[order[static_cast<std::size_t>(p) + 1]];
      return lo + (target - cum) / w_next * (hi - lo);
    }
    cum = next;
  }
  return values[order[static_cast<std::size_t>(n) - 1]];
}

double smooth_heaviside(double x, double k) {
  if (!(k > 0.0)) throw std::invalid_argument("smooth_heaviside: k must be positive");
  return 1.0 / (1.0 + std::exp(-2.0 * k * x));
}

double population_cdf(const VecRef& values, double t) {
  const Index n = values.size();
  if (n == 0) throw std::invalid_argument("population_cdf: empty population");
  Index count = 0;
  for (Index k = 0; k < n; ++k) {
    if (values[k] <= t) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(n);
}

double population_quantile(const VecRef& values, double alpha) {
  const Index n = values.size();
  if (n == 0) throw std::invalid_argument("population_quantile: empty population");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("population_quantile: alpha must lie strictly in (0,1)");
  std::vector<double> sorted(values.data(), values.data() + n);
  std::sort(sorted.begin(), sorted.end());
  const double dn = static_cast<double>(n);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    // F(sorted[i]) counts every tie, so advance to the last equal value first.
    std::size_t j = i;
    while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
    if (static_cast<double>(j + 1) / dn >= alpha) return sorted[i];
    i = j;
  }
  return sorted.back();
}

}  // namespace qcalib
