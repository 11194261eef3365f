#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "qcalib/core.hpp"
#include "qcalib/solvers.hpp"

namespace qcalib {

/// Weighting schemes compared by the Monte Carlo study.
enum class EstimatorId { naive, ipw, cal, qcal1, qcal2, el, qel1, qel2 };

const char* to_string(EstimatorId id);
std::optional<EstimatorId> estimator_from_string(std::string_view s);
std::vector<EstimatorId> all_estimators();

/// A reported parameter: the mean or an interpolated quantile of order alpha.
struct ParamDef {
  std::string label;  // "mean", "q25", ...
  bool is_mean = false;
  double alpha = 0.5;
};

/// Parses labels "mean" / "q<percent>" (e.g. "q25" -> alpha 0.25).
std::vector<ParamDef> parse_parameters(const std::vector<std::string>& labels);

struct SimConfig {
  double N = 20000;                              // population size
  double n = 10000;                              // target sample size
  std::vector<double> rho_list{0.3, 0.5, 0.8};   // correlation per y variable
  int R = 1000;                                  // replications
  std::uint64_t master_seed = 20240815;
  std::vector<EstimatorId> estimators = all_estimators();
  std::vector<std::string> parameters{"mean", "q25", "q50", "q75"};
  DistanceSpec distance{};                       // raking by default
  int threads = 0;                               // 0 = machine parallelism
};

/// Throws std::invalid_argument on violated config invariants.
void validate_config(const SimConfig& cfg);

/// Selection-model slopes applied to (x1, x2, x3, x4); the intercept is
/// solved so that the inclusion probabilities sum to the target sample size.
inline constexpr std::array<double, 4> kSelectionSlopes{0.1, 0.2, 0.1, 0.2};

/// Quantile orders carried by the QCAL1/QCAL2/QEL1/QEL2 estimators:
/// deciles 0.1..0.9 plus the 0.25 and 0.75 quartiles.
const std::vector<double>& decile_quartile_orders();

/// A realized finite population, fixed across replications.
struct Population {
  MatrixXd X;        // N x 4 auxiliaries x1..x4
  MatrixXd Y;        // N x rho.size() study variables
  VectorXd pi;       // true inclusion probabilities, sum(pi) = n
  VectorXd linpred;  // 2 + x1 + x2 + x3 + x4
  VectorXd sigma;    // per-rho noise scale
  double theta0 = 0.0;
  std::vector<double> rho;

  // Exact population benchmarks, precomputed once.
  VectorXd x_totals;                               // per auxiliary column
  std::vector<QuantileTarget> x_quantile_targets;  // x2..x4 at decile_quartile_orders()
  std::vector<std::vector<double>> truths;         // [parameter][y variable]
};

Population gen_population(const SimConfig& cfg, std::uint64_t seed);

/// sigma = sd(linpred) * sqrt(1 / rho^2 - 1), using the realized population
/// standard deviation, so the model-implied correlation equals rho.
double solve_sigma(const VecRef& linpred, double rho, bool allow_exact_fit = false);

/// Root of sum_k sigmoid(theta0 + eta_k) = n (strictly increasing in theta0),
/// found to |f| <= 1e-6.
double solve_theta0(const VecRef& eta, double n);

/// Independent Bernoulli(pi_k) inclusion. An empty draw is redrawn with the
/// next sub-seed; the redraw count is reported through `redraws`.
std::vector<Index> poisson_sample(const VecRef& pi, std::uint64_t seed, int* redraws = nullptr);

struct CellValue {
  double value = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
  std::string reason;  // why the estimate is missing
};

struct ReplicationResult {
  std::vector<std::vector<std::vector<CellValue>>> cells;  // [estimator][y][parameter]
  Index sample_size = 0;
  int redraws = 0;
};

/// Draws the replication-r sample (seed derived from the master seed) and
/// computes every configured estimator for every y variable and parameter.
/// Solver failures are recorded as missing cells, never dropped.
ReplicationResult run_replication(const Population& pop, const SimConfig& cfg, int r);

struct MetricRow {
  EstimatorId estimator = EstimatorId::naive;
  std::string variable;   // "y1", ...
  std::string parameter;  // "mean", "q25", ...
  double bias = 0.0;      // natural scale; reports multiply by 100
  double se = 0.0;
  double rmse = 0.0;
  int n_used = 0;
  int n_missing = 0;
  bool se_defined = true;  // false when fewer than 2 usable replications
};

struct MetricsTable {
  std::vector<MetricRow> rows;
  double N = 0.0;
  double n = 0.0;
  int R = 0;
  std::uint64_t master_seed = 0;
  std::vector<double> rho;
  std::string distance;

  const MetricRow* find(EstimatorId est, std::string_view variable,
                        std::string_view parameter) const;

  /// Long-format CSV, values x100, 10 significant digits.
  std::string to_csv() const;
  /// Aligned markdown in the estimator-rows-by-variable layout, x100,
  /// 2 decimals.
  std::string to_markdown() const;
};

/// Full study: one fixed population, R replications (parallelized, reduced in
/// replication order), Bias / SE / RMSE per cell with RMSE^2 = Bias^2 + SE^2
/// exactly.
MetricsTable monte_carlo(const SimConfig& cfg);

}  // namespace qcalib
