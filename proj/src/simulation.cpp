#include "qcalib/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "qcalib/constraints.hpp"
#include "qcalib/estimators.hpp"
#include "qcalib/interp_cdf.hpp"
#include "qcalib/propensity.hpp"
#include "qcalib/random.hpp"

namespace qcalib {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::string format_double(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

}  // namespace

const char* to_string(EstimatorId id) {
  switch (id) {
    case EstimatorId::naive: return "Naive";
    case EstimatorId::ipw: return "IPW";
    case EstimatorId::cal: return "CAL";
    case EstimatorId::qcal1: return "QCAL1";
    case EstimatorId::qcal2: return "QCAL2";
    case EstimatorId::el: return "EL";
    case EstimatorId::qel1: return "QEL1";
    case EstimatorId::qel2: return "QEL2";
  }
  return "?";
}

std::optional<EstimatorId> estimator_from_string(std::string_view s) {
  std::string up(s);
  std::transform(up.begin(), up.end(), up.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (up == "NAIVE") return EstimatorId::naive;
  if (up == "IPW") return EstimatorId::ipw;
  if (up == "CAL") return EstimatorId::cal;
  if (up == "QCAL1") return EstimatorId::qcal1;
  if (up == "QCAL2") return EstimatorId::qcal2;
  if (up == "EL") return EstimatorId::el;
  if (up == "QEL1") return EstimatorId::qel1;
  if (up == "QEL2") return EstimatorId::qel2;
  return std::nullopt;
}

std::vector<EstimatorId> all_estimators() {
  return {EstimatorId::naive, EstimatorId::ipw,  EstimatorId::cal,  EstimatorId::qcal1,
          EstimatorId::qcal2, EstimatorId::el,   EstimatorId::qel1, EstimatorId::qel2};
}

std::vector<ParamDef> parse_parameters(const std::vector<std::string>& labels) {
  std::vector<ParamDef> out;
  for (const auto& raw : labels) {
    std::string label = raw;
    std::transform(label.begin(), label.end(), label.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (label == "mean") {
      out.push_back({label, true, 0.0});
      continue;
    }
    if (label.size() >= 2 && label[0] == 'q') {
      char* end = nullptr;
      const double pct = std::strtod(label.c_str() + 1, &end);
      if (end && *end == '\0' && pct > 0.0 && pct < 100.0) {
        out.push_back({label, false, pct / 100.0});
        continue;
      }
    }
    throw std::invalid_argument("unknown parameter label '" + raw +
                                "' (expected \"mean\" or \"q<percent>\")");
  }
  return out;
}

void validate_config(const SimConfig& cfg) {
  if (!(cfg.N > 0.0)) throw std::invalid_argument("config: N must be positive");
  if (!(cfg.n > 0.0) || cfg.n > cfg.N)
    throw std::invalid_argument("config: n must satisfy 0 < n <= N");
  if (cfg.R < 1) throw std::invalid_argument("config: R must be at least 1");
  if (cfg.rho_list.empty()) throw std::invalid_argument("config: rho list is empty");
  for (double rho : cfg.rho_list)
    if (!(rho > 0.0 && rho < 1.0))
      throw std::invalid_argument("config: every rho must lie strictly in (0,1)");
  if (cfg.estimators.empty()) throw std::invalid_argument("config: no estimators selected");
  if (parse_parameters(cfg.parameters).empty())
    throw std::invalid_argument("config: no parameters selected");
  if (cfg.threads < 0) throw std::invalid_argument("config: threads must be >= 0");
  make_distance(cfg.distance);
}

const std::vector<double>& decile_quartile_orders() {
  static const std::vector<double> orders{0.1, 0.2, 0.25, 0.3, 0.4, 0.5,
                                          0.6, 0.7, 0.75, 0.8, 0.9};
  return orders;
}

double solve_sigma(const VecRef& linpred, double rho, bool allow_exact_fit) {
  if (rho == 1.0 && allow_exact_fit) return 0.0;
  if (!(rho > 0.0 && rho < 1.0))
    throw std::invalid_argument("solve_sigma: rho must lie strictly in (0,1)");
  const Index N = linpred.size();
  if (N < 2) throw std::invalid_argument("solve_sigma: need at least two units");
  const double mean = linpred.mean();
  const double var = (linpred.array() - mean).square().sum() / static_cast<double>(N);
  if (!(var > 0.0)) throw std::invalid_argument("solve_sigma: linear predictor is constant");
  return std::sqrt(var) * std::sqrt(1.0 / (rho * rho) - 1.0);
}

double solve_theta0(const VecRef& eta, double n) {
  const Index N = eta.size();
  if (N < 1) throw std::invalid_argument("solve_theta0: empty population");
  if (!(n > 0.0) || !(n < static_cast<double>(N)))
    throw std::invalid_argument("solve_theta0: need 0 < n < N");

  const double eta_min = eta.minCoeff();
  const double eta_max = eta.maxCoeff();
  double lo = -eta_max - 60.0;  // f(lo) ~ -n < 0
  double hi = -eta_min + 60.0;  // f(hi) ~ N - n > 0

  auto f_and_slope = [&](double t, double& slope) {
    double f = -n;
    slope = 0.0;
    for (Index k = 0; k < N; ++k) {
      const double p = sigmoid(t + eta[k]);
      f += p;
      slope += p * (1.0 - p);
    }
    return f;
  };

  const double frac = n / static_cast<double>(N);
  double t = std::log(frac / (1.0 - frac)) - eta.mean();
  t = std::clamp(t, lo, hi);
  for (int it = 0; it < 200; ++it) {
    double slope;
    const double f = f_and_slope(t, slope);
    if (std::abs(f) <= 1e-6) return t;
    if (f > 0.0)
      hi = t;
    else
      lo = t;
    double next = slope > 0.0 ? t - f / slope : lo;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);  // bisection fallback
    t = next;
  }
  return t;
}

std::vector<Index> poisson_sample(const VecRef& pi, std::uint64_t seed, int* redraws) {
  for (Index k = 0; k < pi.size(); ++k)
    if (!(pi[k] > 0.0 && pi[k] < 1.0))
      throw std::invalid_argument("poisson_sample: inclusion probabilities must lie in (0,1)");

  for (int attempt = 0; attempt < 100; ++attempt) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    std::vector<Index> idx;
    idx.reserve(static_cast<std::size_t>(pi.sum() * 1.2) + 16);
    for (Index k = 0; k < pi.size(); ++k) {
      if (rng.uniform01() < pi[k]) idx.push_back(k);
    }
    if (!idx.empty()) {
      if (redraws) *redraws = attempt;
      return idx;
    }
  }
  throw std::runtime_error("poisson_sample: drew an empty sample 100 times in a row");
}

Population gen_population(const SimConfig& cfg, std::uint64_t seed) {
  validate_config(cfg);
  const Index N = static_cast<Index>(std::llround(cfg.N));
  const Index ny = static_cast<Index>(cfg.rho_list.size());
  Rng rng(seed);

  Population pop;
  pop.rho = cfg.rho_list;
  pop.X.resize(N, 4);
  for (Index k = 0; k < N; ++k) {
    const double z1 = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double z2 = rng.uniform(0.0, 2.0);
    const double z3 = rng.exponential();
    const double z4 = rng.chi_squared(4);
    const double x1 = z1;
    const double x2 = z2 + 0.3 * x1;
    const double x3 = z3 + 0.2 * (x1 + x2);
    const double x4 = z4 + 0.1 * (x1 + x2 + x3);
    pop.X(k, 0) = x1;
    pop.X(k, 1) = x2;
    pop.X(k, 2) = x3;
    pop.X(k, 3) = x4;
  }

  pop.linpred = (2.0 + pop.X.rowwise().sum().array()).matrix();

  pop.sigma.resize(ny);
  pop.Y.resize(N, ny);
  for (Index j = 0; j < ny; ++j) {
    pop.sigma[j] = solve_sigma(pop.linpred, cfg.rho_list[static_cast<std::size_t>(j)]);
    for (Index k = 0; k < N; ++k) pop.Y(k, j) = pop.linpred[k] + pop.sigma[j] * rng.normal();
  }

  VectorXd eta(N);
  for (Index k = 0; k < N; ++k) {
    eta[k] = kSelectionSlopes[0] * pop.X(k, 0) + kSelectionSlopes[1] * pop.X(k, 1) +
             kSelectionSlopes[2] * pop.X(k, 2) + kSelectionSlopes[3] * pop.X(k, 3);
  }
  pop.theta0 = solve_theta0(eta, cfg.n);
  pop.pi = (pop.theta0 + eta.array()).unaryExpr([](double e) { return sigmoid(e); }).matrix();

  pop.x_totals = pop.X.colwise().sum();
  for (Index j = 1; j < 4; ++j) {  // quantile benchmarks for x2..x4 only
    const std::string name = "x" + std::to_string(j + 1);
    for (double alpha : decile_quartile_orders()) {
      pop.x_quantile_targets.push_back({name, alpha, population_quantile(pop.X.col(j), alpha)});
    }
  }

  const auto params = parse_parameters(cfg.parameters);
  pop.truths.resize(params.size());
  for (std::size_t pidx = 0; pidx < params.size(); ++pidx) {
    pop.truths[pidx].resize(static_cast<std::size_t>(ny));
    for (Index j = 0; j < ny; ++j) {
      pop.truths[pidx][static_cast<std::size_t>(j)] =
          params[pidx].is_mean ? pop.Y.col(j).mean()
                               : population_quantile(pop.Y.col(j), params[pidx].alpha);
    }
  }
  return pop;
}

namespace {

TargetSpec targets_for(EstimatorId est, const Population& pop, const SimConfig& cfg) {
  TargetSpec ts;
  ts.N = cfg.N;
  const bool with_totals = est == EstimatorId::cal || est == EstimatorId::qcal2 ||
                           est == EstimatorId::el || est == EstimatorId::qel2;
  const bool with_quantiles = est == EstimatorId::qcal1 || est == EstimatorId::qcal2 ||
                              est == EstimatorId::qel1 || est == EstimatorId::qel2;
  if (with_totals) {
    for (Index j = 0; j < 4; ++j)
      ts.totals.emplace_back("x" + std::to_string(j + 1), pop.x_totals[j]);
  }
  if (with_quantiles) ts.quantiles = pop.x_quantile_targets;
  ts.include_size_constraint = true;
  return ts;
}

}  // namespace

ReplicationResult run_replication(const Population& pop, const SimConfig& cfg, int r) {
  const auto params = parse_parameters(cfg.parameters);
  const Index ny = pop.Y.cols();

  ReplicationResult result;
  result.cells.assign(
      cfg.estimators.size(),
      std::vector<std::vector<CellValue>>(static_cast<std::size_t>(ny),
                                          std::vector<CellValue>(params.size())));

  const std::uint64_t seed_r = derive_seed(cfg.master_seed, static_cast<std::uint64_t>(r) + 1);
  const auto idx = poisson_sample(pop.pi, seed_r, &result.redraws);
  const Index ns = static_cast<Index>(idx.size());
  result.sample_size = ns;

  SampleFrame frame;
  frame.d = VectorXd::Constant(ns, cfg.N / static_cast<double>(ns));
  frame.X.resize(ns, 4);
  frame.Y.resize(ns, ny);
  for (Index i = 0; i < ns; ++i) {
    frame.X.row(i) = pop.X.row(idx[static_cast<std::size_t>(i)]);
    frame.Y.row(i) = pop.Y.row(idx[static_cast<std::size_t>(i)]);
  }
  for (Index j = 0; j < 4; ++j) frame.x_names.push_back("x" + std::to_string(j + 1));
  for (Index j = 0; j < ny; ++j) frame.y_names.push_back("y" + std::to_string(j + 1));

  for (std::size_t ei = 0; ei < cfg.estimators.size(); ++ei) {
    const EstimatorId est = cfg.estimators[ei];
    auto fail_all = [&](const std::string& reason) {
      for (auto& per_y : result.cells[ei])
        for (auto& cell : per_y) cell.reason = reason;
    };
    try {
      VectorXd w;
      double mean_denom = cfg.N;
      double quantile_N = cfg.N;
      switch (est) {
        case EstimatorId::naive:
          w = VectorXd::Ones(ns);
          mean_denom = static_cast<double>(ns);
          quantile_N = static_cast<double>(ns);
          break;
        case EstimatorId::ipw: {
          const PropensityFit fit = fit_propensity(frame.X, pop.X);
          if (!fit.converged) {
            fail_all("propensity fit did not converge");
            continue;
          }
          w = ipw_weights(fit);
          quantile_N = w.sum();  // Hajek normalization for quantiles
          break;
        }
        case EstimatorId::cal:
        case EstimatorId::qcal1:
        case EstimatorId::qcal2: {
          const ConstraintSystem sys = build_system(frame, targets_for(est, pop, cfg));
          const WeightSet ws = cfg.distance.kind == DistanceKind::quadratic
                                   ? solve_quadratic(sys, frame.d, cfg.distance.q)
                                   : solve_dual(sys, frame.d, cfg.distance);
          if (!ws.diagnostics.converged) {
            fail_all("calibration did not converge: " + ws.diagnostics.note);
            continue;
          }
          w = ws.w;
          break;
        }
        case EstimatorId::el:
        case EstimatorId::qel1:
        case EstimatorId::qel2: {
          const MatrixXd u = el_centered_constraints(frame, targets_for(est, pop, cfg));
          const ELWeights el = solve_el(u);
          if (!el.converged) {
            fail_all("empirical likelihood did not converge");
            continue;
          }
          w = cfg.N * el.p;
          break;
        }
      }

      for (Index j = 0; j < ny; ++j) {
        const VectorXd y = frame.Y.col(j);
        for (std::size_t pidx = 0; pidx < params.size(); ++pidx) {
          CellValue& cell = result.cells[ei][static_cast<std::size_t>(j)][pidx];
          cell.value = params[pidx].is_mean
                           ? est_total(w, y) / mean_denom
                           : est_quantile(w, y, params[pidx].alpha, quantile_N);
          cell.ok = true;
        }
      }
    } catch (const std::exception& e) {
      fail_all(e.what());
    }
  }
  return result;
}

MetricsTable monte_carlo(const SimConfig& cfg) {
  validate_config(cfg);
  const Population pop = gen_population(cfg, derive_seed(cfg.master_seed, 0));
  const auto params = parse_parameters(cfg.parameters);
  const Index ny = pop.Y.cols();

  std::vector<ReplicationResult> results(static_cast<std::size_t>(cfg.R));
  unsigned hw = std::thread::hardware_concurrency();
  int threads = cfg.threads > 0 ? cfg.threads : static_cast<int>(hw > 0 ? hw : 1);
  threads = std::min<int>(threads, cfg.R);

  auto run_range = [&](std::atomic<int>& next) {
    for (int r = next.fetch_add(1); r < cfg.R; r = next.fetch_add(1)) {
      try {
        results[static_cast<std::size_t>(r)] = run_replication(pop, cfg, r);
      } catch (const std::exception& e) {
        ReplicationResult failed;
        failed.cells.assign(
            cfg.estimators.size(),
            std::vector<std::vector<CellValue>>(static_cast<std::size_t>(ny),
                                                std::vector<CellValue>(params.size())));
        for (auto& per_est : failed.cells)
          for (auto& per_y : per_est)
            for (auto& cell : per_y) cell.reason = e.what();
        results[static_cast<std::size_t>(r)] = std::move(failed);
      }
    }
  };

  if (threads <= 1) {
    std::atomic<int> next{0};
    run_range(next);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back([&] { run_range(next); });
    for (auto& th : pool) th.join();
  }

  MetricsTable table;
  table.N = cfg.N;
  table.n = cfg.n;
  table.R = cfg.R;
  table.master_seed = cfg.master_seed;
  table.rho = cfg.rho_list;
  table.distance = to_string(cfg.distance.kind);

  for (std::size_t pidx = 0; pidx < params.size(); ++pidx) {
    for (std::size_t ei = 0; ei < cfg.estimators.size(); ++ei) {
      for (Index j = 0; j < ny; ++j) {
        MetricRow row;
        row.estimator = cfg.estimators[ei];
        row.variable = "y" + std::to_string(j + 1);
        row.parameter = params[pidx].label;

        double sum = 0.0;
        int used = 0;
        for (const auto& rep : results) {
          const CellValue& cell = rep.cells[ei][static_cast<std::size_t>(j)][pidx];
          if (cell.ok) {
            sum += cell.value;
            ++used;
          }
        }
        row.n_used = used;
        row.n_missing = cfg.R - used;
        if (used > 0) {
          const double mean = sum / used;
          row.bias = mean - pop.truths[pidx][static_cast<std::size_t>(j)];
          double ss = 0.0;
          for (const auto& rep : results) {
            const CellValue& cell = rep.cells[ei][static_cast<std::size_t>(j)][pidx];
            if (cell.ok) {
              const double dev = cell.value - mean;
              ss += dev * dev;
            }
          }
          if (used >= 2) {
            row.se = std::sqrt(ss / (used - 1));
          } else {
            row.se = 0.0;
            row.se_defined = false;
          }
          row.rmse = std::sqrt(row.bias * row.bias + row.se * row.se);
        } else {
          row.bias = row.se = row.rmse = std::numeric_limits<double>::quiet_NaN();
          row.se_defined = false;
        }
        table.rows.push_back(std::move(row));
      }
    }
  }
  return table;
}

const MetricRow* MetricsTable::find(EstimatorId est, std::string_view variable,
                                    std::string_view parameter) const {
  for (const auto& row : rows) {
    if (row.estimator == est && row.variable == variable && row.parameter == parameter)
      return &row;
  }
  return nullptr;
}

std::string MetricsTable::to_csv() const {
  std::string out = "parameter,estimator,variable,bias_x100,se_x100,rmse_x100,n_used,n_missing\n";
  for (const auto& row : rows) {
    out += row.parameter;
    out += ',';
    out += to_string(row.estimator);
    out += ',';
    out += row.variable;
    out += ',';
    out += format_double("%.10g", 100.0 * row.bias);
    out += ',';
    out += format_double("%.10g", 100.0 * row.se);
    out += ',';
    out += format_double("%.10g", 100.0 * row.rmse);
    out += ',';
    out += std::to_string(row.n_used);
    out += ',';
    out += std::to_string(row.n_missing);
    out += '\n';
  }
  return out;
}

std::string MetricsTable::to_markdown() const {
  std::ostringstream os;
  os << "# Monte Carlo metrics\n\n";
  os << "- N=" << format_double("%.10g", N) << ", n=" << format_double("%.10g", n)
     << ", R=" << R << ", distance=" << distance << ", seed=" << master_seed << "\n";
  os << "- variables:";
  for (std::size_t j = 0; j < rho.size(); ++j)
    os << (j ? "," : "") << " y" << (j + 1) << " (rho=" << format_double("%g", rho[j]) << ")";
  os << "\n- all values multiplied by 100\n";

  // Preserve the row grouping: one block per parameter, estimator rows,
  // Bias/SE/RMSE columns per variable.
  std::vector<std::string> param_order;
  for (const auto& row : rows) {
    if (std::find(param_order.begin(), param_order.end(), row.parameter) == param_order.end())
      param_order.push_back(row.parameter);
  }
  std::vector<std::string> estimator_order;
  for (const auto& row : rows) {
    const std::string name = to_string(row.estimator);
    if (std::find(estimator_order.begin(), estimator_order.end(), name) ==
        estimator_order.end())
      estimator_order.push_back(name);
  }
  std::vector<std::string> variable_order;
  for (const auto& row : rows) {
    if (std::find(variable_order.begin(), variable_order.end(), row.variable) ==
        variable_order.end())
      variable_order.push_back(row.variable);
  }

  auto cell_text = [&](const std::string& param, const std::string& est,
                       const std::string& var, int metric) {
    for (const auto& row : rows) {
      if (row.parameter == param && to_string(row.estimator) == est && row.variable == var) {
        const double v = metric == 0 ? row.bias : (metric == 1 ? row.se : row.rmse);
        return format_double("%.2f", 100.0 * v);
      }
    }
    return std::string("-");
  };

  for (const auto& param : param_order) {
    std::string title = param == "mean" ? "Mean" : "Quantile " + param.substr(1) + "%";
    os << "\n## " << title << "\n\n";

    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> header{"Estimator"};
    for (const auto& var : variable_order) {
      header.push_back(var + " Bias");
      header.push_back(var + " SE");
      header.push_back(var + " RMSE");
    }
    grid.push_back(header);
    for (const auto& est : estimator_order) {
      std::vector<std::string> line{est};
      for (const auto& var : variable_order)
        for (int metric = 0; metric < 3; ++metric)
          line.push_back(cell_text(param, est, var, metric));
      grid.push_back(line);
    }

    std::vector<std::size_t> width(grid[0].size(), 0);
    for (const auto& line : grid)
      for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());

    auto emit_line = [&](const std::vector<std::string>& line) {
      os << "|";
      for (std::size_t c = 0; c < line.size(); ++c) {
        os << " " << line[c] << std::string(width[c] - line[c].size(), ' ') << " |";
      }
      os << "\n";
    };
    emit_line(grid[0]);
    os << "|";
    for (std::size_t c = 0; c < width.size(); ++c) {
      os << std::string(width[c] + 1, '-') << (c == 0 ? " |" : ":|");
    }
    os << "\n";
    for (std::size_t i = 1; i < grid.size(); ++i) emit_line(grid[i]);
  }

  bool any_missing = false;
  for (const auto& row : rows) any_missing = any_missing || row.n_missing > 0;
  if (any_missing) {
    os << "\nMissing estimates:\n";
    for (const auto& row : rows) {
      if (row.n_missing > 0)
        os << "- " << to_string(row.estimator) << " / " << row.variable << " / "
           << row.parameter << ": " << row.n_missing << " of " << R << "\n";
    }
  }
  return os.str();
}

}  // namespace qcalib
