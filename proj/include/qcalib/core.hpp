#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace qcalib {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using VecRef = Eigen::Ref<const Eigen::VectorXd>;
using MatRef = Eigen::Ref<const Eigen::MatrixXd>;

/// A realized sample: unit ids, design weights d_k and named numeric columns.
/// Row order is the canonical unit order used by every downstream matrix.
/// Instances are treated as immutable once filled in.
struct SampleFrame {
  std::vector<std::string> ids;        // optional; empty or length n
  VectorXd d;                          // design weights, d_k > 0
  MatrixXd X;                          // n x p auxiliary matrix
  std::vector<std::string> x_names;    // column names of X
  MatrixXd Y;                          // n x (number of study variables)
  std::vector<std::string> y_names;    // optional study variables

  Index n() const { return d.size(); }

  bool has_x(std::string_view name) const { return x_index(name) >= 0; }
  bool has_y(std::string_view name) const { return y_index(name) >= 0; }
  Index x_index(std::string_view name) const;  // -1 when absent
  Index y_index(std::string_view name) const;

  /// Column by name; throws std::invalid_argument when absent.
  VectorXd x_col(std::string_view name) const;
  VectorXd y_col(std::string_view name) const;
};

struct QuantileTarget {
  std::string variable;
  double alpha = 0.5;  // order, strictly in (0, 1)
  double value = 0.0;  // known population quantile
};

/// Known population benchmarks a weight vector must reproduce.
struct TargetSpec {
  double N = 0.0;                                      // population size
  std::vector<std::pair<std::string, double>> totals;  // variable -> tau
  std::vector<QuantileTarget> quantiles;
  bool include_size_constraint = true;                 // sum(w) = N row
};

struct ValidationReport {
  std::vector<std::string> issues;
  bool ok() const { return issues.empty(); }
  std::string joined(const char* sep = "; ") const;
};

/// Checks every SampleFrame/TargetSpec invariant and reports all violations.
/// Pure: identical inputs yield identical reports. An empty report means the
/// pair is jointly usable.
ValidationReport validate_frame(const SampleFrame& frame, const TargetSpec& targets);

enum class DistanceKind { quadratic, raking, logit };

const char* to_string(DistanceKind kind);
std::optional<DistanceKind> distance_kind_from_string(std::string_view s);

/// Calibration distance D(d, v) = sum_k (d_k / q_k) G(v_k / d_k).
/// Bounds (L, U) confine weight ratios for the logit kind; q defaults to 1.
struct DistanceSpec {
  DistanceKind kind = DistanceKind::raking;
  std::optional<std::pair<double, double>> bounds;  // (L, U), 0 <= L <= 1 <= U
  std::optional<VectorXd> q;                        // per-unit scale factors, q_k > 0
};

struct SolverDiagnostics {
  double max_abs_residual = 0.0;
  int iterations = 0;
  double distance_value = 0.0;
  double ratio_min = 1.0;  // min w_k / d_k
  double ratio_max = 1.0;
  bool converged = false;
  std::string note;  // failure reason when not converged
};

/// Calibrated weights plus solver diagnostics.
struct WeightSet {
  VectorXd w;
  SolverDiagnostics diagnostics;
};

}  // namespace qcalib
