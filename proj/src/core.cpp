#include "qcalib/core.hpp"

#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace qcalib {

namespace {

Index find_name(const std::vector<std::string>& names, std::string_view name) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<Index>(i);
  }
  return -1;
}

}  // namespace

Index SampleFrame::x_index(std::string_view name) const { return find_name(x_names, name); }
Index SampleFrame::y_index(std::string_view name) const { return find_name(y_names, name); }

VectorXd SampleFrame::x_col(std::string_view name) const {
  Index j = x_index(name);
  if (j < 0) throw std::invalid_argument("unknown auxiliary column '" + std::string(name) + "'");
  return X.col(j);
}

VectorXd SampleFrame::y_col(std::string_view name) const {
  Index j = y_index(name);
  if (j < 0) throw std::invalid_argument("unknown study column '" + std::string(name) + "'");
  return Y.col(j);
}

std::string ValidationReport::joined(const char* sep) const {
  std::string out;
  for (std::size_t i = 0; i < issues.size(); ++i) {
    if (i) out += sep;
    out += issues[i];
  }
  return out;
}

ValidationReport validate_frame(const SampleFrame& frame, const TargetSpec& targets) {
  ValidationReport report;
  auto flag = [&report](const std::string& msg) { report.issues.push_back(msg); };

  const Index n = frame.n();
  if (n < 1) flag("frame has no rows");
  if (!frame.ids.empty() && static_cast<Index>(frame.ids.size()) != n)
    flag("ids length does not match the number of rows");
  if (frame.X.size() > 0 && frame.X.rows() != n)
    flag("auxiliary matrix row count does not match design weights");
  if (static_cast<Index>(frame.x_names.size()) != frame.X.cols())
    flag("auxiliary column names do not match the matrix width");
  if (frame.Y.size() > 0 && frame.Y.rows() != n)
    flag("study matrix row count does not match design weights");
  if (static_cast<Index>(frame.y_names.size()) != frame.Y.cols())
    flag("study column names do not match the matrix width");

  for (Index k = 0; k < n; ++k) {
    if (!(frame.d[k] > 0.0) || !std::isfinite(frame.d[k])) {
      std::ostringstream os;
      os << "design weight at index " << (k + 1) << " is not a positive finite value ("
         << frame.d[k] << ")";
      flag(os.str());
    }
  }

  {
    std::set<std::string> seen;
    for (const auto& name : frame.x_names) {
      if (!seen.insert(name).second) flag("duplicate column name '" + name + "'");
    }
    for (const auto& name : frame.y_names) {
      if (!seen.insert(name).second) flag("duplicate column name '" + name + "'");
    }
  }

  if (!(targets.N > 0.0) || !std::isfinite(targets.N))
    flag("population size N must be positive and finite");

  auto check_column_values = [&](const std::string& variable) {
    Index j = frame.x_index(variable);
    if (j < 0) {
      flag("target references missing auxiliary column '" + variable + "'");
      return;
    }
    for (Index k = 0; k < frame.X.rows(); ++k) {
      if (!std::isfinite(frame.X(k, j))) {
        std::ostringstream os;
        os << "column '" << variable << "' has a missing value at index " << (k + 1);
        flag(os.str());
        break;
      }
    }
  };

  {
    std::set<std::string> seen;
    for (const auto& [variable, tau] : targets.totals) {
      check_column_values(variable);
      if (!std::isfinite(tau)) flag("total target for '" + variable + "' is not finite");
      if (!seen.insert(variable).second) flag("duplicate total target for '" + variable + "'");
    }
  }

  {
    std::set<std::pair<std::string, double>> seen;
    for (const auto& qt : targets.quantiles) {
      check_column_values(qt.variable);
      if (!(qt.alpha > 0.0 && qt.alpha < 1.0)) {
        std::ostringstream os;
        os << "quantile order " << qt.alpha << " for '" << qt.variable
           << "' is outside (0,1)";
        flag(os.str());
      }
      if (!std::isfinite(qt.value))
        flag("quantile target value for '" + qt.variable + "' is not finite");
      if (!seen.insert({qt.variable, qt.alpha}).second) {
        std::ostringstream os;
        os << "duplicate quantile target (" << qt.variable << ", " << qt.alpha << ")";
        flag(os.str());
      }
    }
  }

  return report;
}

const char* to_string(DistanceKind kind) {
  switch (kind) {
    case DistanceKind::quadratic: return "quadratic";
    case DistanceKind::raking: return "raking";
    case DistanceKind::logit: return "logit";
  }
  return "?";
}

std::optional<DistanceKind> distance_kind_from_string(std::string_view s) {
  if (s == "quadratic" || s == "linear") return DistanceKind::quadratic;
  if (s == "raking" || s == "exponential") return DistanceKind::raking;
  if (s == "logit") return DistanceKind::logit;
  return std::nullopt;
}

}  // namespace qcalib
