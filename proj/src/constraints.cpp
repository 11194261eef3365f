#include "qcalib/constraints.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "qcalib/interp_cdf.hpp"

namespace qcalib {

std::string describe_column(const ConstraintColumn& col) {
  switch (col.kind) {
    case ConstraintKind::size: return "size";
    case ConstraintKind::total: return "total[" + col.variable + "]";
    case ConstraintKind::quantile: {
      std::ostringstream os;
      os << "quantile[" << col.variable << "@" << col.alpha << "]";
      return os.str();
    }
  }
  return "?";
}

VectorXd quantile_pseudo_variable(const VecRef& x_col, double Q, double N) {
  if (!(N > 0.0)) throw std::invalid_argument("quantile_pseudo_variable: N must be positive");
  const Bracket b = bracket(x_col, Q);
  VectorXd a(x_col.size());
  for (Index k = 0; k < x_col.size(); ++k) a[k] = h_interp(x_col[k], b) / N;
  return a;
}

ConstraintSystem build_system(const SampleFrame& frame, const TargetSpec& targets) {
  ValidationReport report = validate_frame(frame, targets);
  if (!report.ok())
    throw std::invalid_argument("build_system: invalid inputs: " + report.joined());

  const Index n = frame.n();
  const Index m = static_cast<Index>(targets.totals.size()) +
                  (targets.include_size_constraint ? 1 : 0) +
                  static_cast<Index>(targets.quantiles.size());

  ConstraintSystem sys;
  sys.A.resize(n, m);
  sys.h.resize(m);
  sys.columns.reserve(static_cast<std::size_t>(m));

  Index j = 0;
  for (const auto& [variable, tau] : targets.totals) {
    sys.A.col(j) = frame.X.col(frame.x_index(variable));
    sys.h[j] = tau;
    sys.columns.push_back({ConstraintKind::total, variable,
                           std::numeric_limits<double>::quiet_NaN()});
    ++j;
  }
  if (targets.include_size_constraint) {
    sys.A.col(j).setOnes();
    sys.h[j] = targets.N;
    sys.columns.push_back({ConstraintKind::size, "",
                           std::numeric_limits<double>::quiet_NaN()});
    ++j;
  }
  for (const auto& qt : targets.quantiles) {
    sys.A.col(j) =
        quantile_pseudo_variable(frame.X.col(frame.x_index(qt.variable)), qt.value, targets.N);
    sys.h[j] = qt.alpha;
    sys.columns.push_back({ConstraintKind::quantile, qt.variable, qt.alpha});
    ++j;
  }
  return sys;
}

ConstraintSystem rescale_system(const ConstraintSystem& system, double c) {
  if (!(c > 0.0) || !std::isfinite(c))
    throw std::invalid_argument("rescale_system: c must be positive and finite");
  ConstraintSystem out = system;
  if (c == 1.0) return out;
  for (Index j = 0; j < out.m(); ++j) {
    const bool is_quantile = out.columns[static_cast<std::size_t>(j)].kind ==
                             ConstraintKind::quantile;
    const double factor = is_quantile ? c : 1.0 / c;
    out.A.col(j) *= factor;
    out.h[j] *= factor;
  }
  out.scale = system.scale * c;
  return out;
}

VectorXd residuals(const ConstraintSystem& system, const VecRef& w) {
  if (w.size() != system.n())
    throw std::invalid_argument("residuals: weight length does not match the system");
  return system.A.transpose() * w - system.h;
}

}  // namespace qcalib
