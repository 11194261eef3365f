#pragma once

#include <limits>

#include "qcalib/core.hpp"

namespace qcalib {

enum class ConstraintKind { total, size, quantile };

struct ConstraintColumn {
  ConstraintKind kind = ConstraintKind::total;
  std::string variable;  // empty for the size column
  double alpha = std::numeric_limits<double>::quiet_NaN();  // quantile order
};

/// Short label like "total[x1]", "size" or "quantile[x2@0.25]".
std::string describe_column(const ConstraintColumn& col);

/// Stacked calibration equations A^T w = h. Column j of A holds the
/// constraint variable for equation j; `columns` records where each came
/// from. `scale` is the cumulative rescale factor applied (1 = natural units).
struct ConstraintSystem {
  MatrixXd A;  // n x m
  VectorXd h;  // m targets
  std::vector<ConstraintColumn> columns;
  double scale = 1.0;

  Index n() const { return A.rows(); }
  Index m() const { return A.cols(); }
};

/// Per-unit pseudo-variable turning the quantile constraint F_hat(Q) = alpha
/// into a linear equation on weights: entries are 1/N for x <= lower bracket
/// value, beta/N on the upper bracket value and 0 above it, with the bracket
/// taken at Q over the realized sample column.
VectorXd quantile_pseudo_variable(const VecRef& x_col, double Q, double N);

/// Assembles the joint system with columns ordered
/// [totals..., size, quantile pseudo-variables...] and targets
/// [tau..., N, alpha...]. Throws std::invalid_argument when
/// validate_frame(frame, targets) reports issues.
ConstraintSystem build_system(const SampleFrame& frame, const TargetSpec& targets);

/// Conditioning rescale: total/size columns and targets are divided by c,
/// quantile columns and targets multiplied by c. The feasible set
/// {w : A^T w = h} is unchanged.
ConstraintSystem rescale_system(const ConstraintSystem& system, double c);

/// A^T w - h, in the system's recorded scale.
VectorXd residuals(const ConstraintSystem& system, const VecRef& w);

}  // namespace qcalib
