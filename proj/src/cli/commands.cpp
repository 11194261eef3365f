#include "commands.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "csv.hpp"
#include "qcalib/constraints.hpp"
#include "qcalib/core.hpp"
#include "qcalib/estimators.hpp"
#include "qcalib/simulation.hpp"
#include "qcalib/solvers.hpp"
#include "qcalib/version.hpp"

namespace qcalib::cli {

namespace {

using nlohmann::json;

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SolveFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalFlags {
  std::optional<std::uint64_t> seed;
  int threads = 0;
  bool quiet = false;
};

std::string fnv1a_digest(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// input assembly

SampleFrame frame_from_csv(const CsvTable& table, const std::string& id_col,
                           const std::string& weight_col, bool require_weights) {
  SampleFrame frame;
  const Index n = static_cast<Index>(table.rows.size());
  if (n == 0) throw InputError(table.path + ": no data rows");

  const int id_idx = table.column(id_col);
  const int w_idx = table.column(weight_col);
  if (require_weights && w_idx < 0)
    throw InputError(table.path + ": missing design-weight column '" + weight_col + "'");

  if (id_idx >= 0) {
    for (const auto& row : table.rows)
      frame.ids.push_back(row[static_cast<std::size_t>(id_idx)]);
  } else {
    for (Index i = 0; i < n; ++i) frame.ids.push_back(std::to_string(i + 1));
  }

  frame.d.resize(n);
  if (w_idx >= 0) {
    for (Index i = 0; i < n; ++i) {
      std::ostringstream ctx;
      ctx << table.path << ":" << (i + 2) << ": column '" << weight_col << "'";
      frame.d[i] =
          parse_number(table.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(w_idx)],
                       ctx.str());
    }
  } else {
    frame.d.setOnes();
  }

  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (static_cast<int>(c) == id_idx || static_cast<int>(c) == w_idx) continue;
    frame.x_names.push_back(table.header[c]);
  }
  frame.X.resize(n, static_cast<Index>(frame.x_names.size()));
  Index j = 0;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (static_cast<int>(c) == id_idx || static_cast<int>(c) == w_idx) continue;
    for (Index i = 0; i < n; ++i) {
      std::ostringstream ctx;
      ctx << table.path << ":" << (i + 2) << ": column '" << table.header[c] << "'";
      frame.X(i, j) = parse_number(table.rows[static_cast<std::size_t>(i)][c], ctx.str());
    }
    ++j;
  }
  return frame;
}

struct TargetsFile {
  TargetSpec targets;
  DistanceSpec distance;
};

TargetsFile targets_from_json(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  if (!doc.is_object()) throw InputError(path + ": expected a JSON object");

  TargetsFile out;
  try {
    if (!doc.contains("N")) throw InputError(path + ": missing population size \"N\"");
    out.targets.N = doc.at("N").get<double>();
    if (doc.contains("totals")) {
      for (const auto& [variable, value] : doc.at("totals").items())
        out.targets.totals.emplace_back(variable, value.get<double>());
    }
    if (doc.contains("quantiles")) {
      for (const auto& [variable, spec] : doc.at("quantiles").items()) {
        for (const auto& [alpha_str, value] : spec.items()) {
          QuantileTarget qt;
          qt.variable = variable;
          qt.alpha = parse_number(alpha_str, path + ": quantile order for '" + variable + "'");
          qt.value = value.get<double>();
          out.targets.quantiles.push_back(std::move(qt));
        }
      }
    }
    out.targets.include_size_constraint = doc.value("include_size", true);
    if (doc.contains("distance")) {
      const auto& d = doc.at("distance");
      const std::string kind = d.value("kind", "raking");
      auto parsed = distance_kind_from_string(kind);
      if (!parsed) throw InputError(path + ": unknown distance kind '" + kind + "'");
      out.distance.kind = *parsed;
      if (d.contains("L") || d.contains("U")) {
        if (!(d.contains("L") && d.contains("U")))
          throw InputError(path + ": distance bounds need both \"L\" and \"U\"");
        out.distance.bounds = {d.at("L").get<double>(), d.at("U").get<double>()};
      }
    }
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  return out;
}

json manifest_skeleton(const std::string& command, const std::vector<std::string>& inputs,
                       const std::vector<std::string>& outputs) {
  json m;
  m["command"] = command;
  m["tool"] = "qcalib";
  m["version"] = kVersion;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  json digests = json::object();
  for (const auto& path : inputs) digests[path] = fnv1a_digest(read_text_file(path));
  m["input_digests"] = digests;
  return m;
}

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateArgs {
  std::string sample_path;
  std::string targets_path;
  std::string out_weights = "weights.csv";
  std::string out_manifest = "manifest.json";
  std::string weight_col = "d";
  std::string id_col = "id";
};

int cmd_calibrate(const CalibrateArgs& args, const GlobalFlags& flags) {
  const auto t0 = Clock::now();
  const CsvTable table = [&] {
    try {
      return read_csv(args.sample_path);
    } catch (const std::runtime_error& e) {
      throw InputError(e.what());
    }
  }();
  SampleFrame frame;
  try {
    frame = frame_from_csv(table, args.id_col, args.weight_col, true);
  } catch (const std::runtime_error& e) {
    throw InputError(e.what());
  }
  const TargetsFile tf = targets_from_json(args.targets_path);

  const ValidationReport report = validate_frame(frame, tf.targets);
  if (!report.ok()) {
    for (const auto& issue : report.issues) std::cerr << "error: " << issue << "\n";
    return 1;
  }
  const double read_ms = ms_since(t0);

  const auto t1 = Clock::now();
  const ConstraintSystem system = build_system(frame, tf.targets);
  WeightSet ws;
  try {
    ws = tf.distance.kind == DistanceKind::quadratic
             ? solve_quadratic(system, frame.d, tf.distance.q)
             : solve_dual(system, frame.d, tf.distance);
  } catch (const std::runtime_error& e) {
    throw SolveFailure(e.what());
  }
  const double solve_ms = ms_since(t1);

  const auto t2 = Clock::now();
  std::string csv = "id,d,w,ratio\n";
  for (Index k = 0; k < frame.n(); ++k) {
    csv += frame.ids[static_cast<std::size_t>(k)];
    csv += ',';
    csv += format_number(frame.d[k]);
    csv += ',';
    csv += format_number(ws.w[k]);
    csv += ',';
    csv += format_number(ws.w[k] / frame.d[k]);
    csv += '\n';
  }
  write_text_file(args.out_weights, csv);

  const VectorXd res = residuals(system, ws.w);
  json m = manifest_skeleton("calibrate", {args.sample_path, args.targets_path},
                             {args.out_weights});
  m["config_digest"] = fnv1a_digest(read_text_file(args.targets_path));
  if (flags.seed) m["seed"] = *flags.seed;
  m["timings_ms"] = {{"read", read_ms}, {"solve", solve_ms}};
  m["diagnostics"] = {{"converged", ws.diagnostics.converged},
                      {"iterations", ws.diagnostics.iterations},
                      {"max_abs_residual", ws.diagnostics.max_abs_residual},
                      {"distance_value", ws.diagnostics.distance_value},
                      {"ratio_min", ws.diagnostics.ratio_min},
                      {"ratio_max", ws.diagnostics.ratio_max},
                      {"note", ws.diagnostics.note}};
  json rows = json::array();
  for (Index j = 0; j < system.m(); ++j) {
    rows.push_back({{"constraint", describe_column(system.columns[static_cast<std::size_t>(j)])},
                    {"target", system.h[j]},
                    {"achieved", system.h[j] + res[j]},
                    {"residual", res[j]}});
  }
  m["residuals"] = rows;
  m["timings_ms"]["write"] = ms_since(t2);
  write_text_file(args.out_manifest, m.dump(2) + "\n");

  if (!flags.quiet) {
    std::cout << "calibrated " << frame.n() << " units against " << system.m()
              << " constraints: " << (ws.diagnostics.converged ? "converged" : "NOT converged")
              << " in " << ws.diagnostics.iterations << " iteration(s)\n";
    for (Index j = 0; j < system.m(); ++j) {
      std::cout << "  " << describe_column(system.columns[static_cast<std::size_t>(j)])
                << ": target " << format_number(system.h[j]) << ", residual "
                << format_number(res[j]) << "\n";
    }
    std::cout << "  weight ratios in [" << format_number(ws.diagnostics.ratio_min) << ", "
              << format_number(ws.diagnostics.ratio_max) << "]\n";
    if (!ws.diagnostics.note.empty()) std::cout << "  note: " << ws.diagnostics.note << "\n";
    std::cout << "wrote " << args.out_weights << " and " << args.out_manifest << "\n";
  }
  return ws.diagnostics.converged ? 0 : 2;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateArgs {
  std::string sample_path;
  std::string weights_path;
  std::string out_path = "estimates.csv";
  std::string id_col = "id";
  std::vector<std::string> means;
  std::vector<std::string> totals;
  std::vector<std::string> quantiles;  // "variable:alpha"
  std::string weights_source = "calibrated";
  double population_size = 0.0;  // 0 = use the weight total
};

int cmd_estimate(const EstimateArgs& args, const GlobalFlags& flags) {
  CsvTable sample, weights;
  try {
    sample = read_csv(args.sample_path);
    weights = read_csv(args.weights_path);
  } catch (const std::runtime_error& e) {
    throw InputError(e.what());
  }
  SampleFrame frame;
  try {
    frame = frame_from_csv(sample, args.id_col, "__none__", false);
  } catch (const std::runtime_error& e) {
    throw InputError(e.what());
  }

  const int wid_idx = weights.column(args.id_col);
  const int w_idx = weights.column("w");
  if (wid_idx < 0)
    throw InputError(args.weights_path + ": missing id column '" + args.id_col + "'");
  if (w_idx < 0) throw InputError(args.weights_path + ": missing weight column 'w'");

  std::map<std::string, double> weight_by_id;
  for (std::size_t i = 0; i < weights.rows.size(); ++i) {
    const std::string& id = weights.rows[i][static_cast<std::size_t>(wid_idx)];
    std::ostringstream ctx;
    ctx << args.weights_path << ":" << (i + 2) << ": column 'w'";
    if (!weight_by_id.emplace(id, parse_number(weights.rows[i][static_cast<std::size_t>(w_idx)],
                                               ctx.str()))
             .second)
      throw InputError(args.weights_path + ": duplicate id '" + id + "'");
  }

  VectorXd w(frame.n());
  std::vector<std::string> unmatched;
  for (Index k = 0; k < frame.n(); ++k) {
    auto it = weight_by_id.find(frame.ids[static_cast<std::size_t>(k)]);
    if (it == weight_by_id.end()) {
      unmatched.push_back(frame.ids[static_cast<std::size_t>(k)]);
      continue;
    }
    w[k] = it->second;
    weight_by_id.erase(it);
  }
  for (const auto& [id, unused] : weight_by_id) unmatched.push_back(id);
  if (!unmatched.empty()) {
    std::string msg = "unmatched ids between sample and weights:";
    for (std::size_t i = 0; i < unmatched.size() && i < 10; ++i) msg += " " + unmatched[i];
    if (unmatched.size() > 10) msg += " ...";
    throw InputError(msg);
  }

  std::vector<EstimateRequest> requests;
  for (const auto& v : args.totals)
    requests.push_back({ParamKind::total, v, 0.5, args.weights_source});
  for (const auto& v : args.means)
    requests.push_back({ParamKind::mean, v, 0.5, args.weights_source});
  for (const auto& spec : args.quantiles) {
    const auto sep = spec.find_first_of(":=@");
    if (sep == std::string::npos)
      throw InputError("quantile request '" + spec + "' must look like variable:alpha");
    EstimateRequest req;
    req.parameter = ParamKind::quantile;
    req.variable = spec.substr(0, sep);
    req.alpha = parse_number(spec.substr(sep + 1), "quantile request '" + spec + "'");
    if (!(req.alpha > 0.0 && req.alpha < 1.0))
      throw InputError("quantile request '" + spec + "': order must lie strictly in (0,1)");
    req.weights_source = args.weights_source;
    requests.push_back(std::move(req));
  }
  if (requests.empty())
    throw InputError("no estimates requested (use --mean/--total/--quantile)");

  const double N = args.population_size > 0.0 ? args.population_size : w.sum();
  std::string csv = "parameter,variable,alpha,estimate,weights_source\n";
  for (const auto& req : requests) {
    if (!frame.has_x(req.variable))
      throw InputError("unknown variable '" + req.variable + "' in " + args.sample_path);
    double value;
    try {
      value = estimate(req, w, frame.x_col(req.variable), N);
    } catch (const std::invalid_argument& e) {
      throw InputError(e.what());
    }
    const char* kind = req.parameter == ParamKind::total
                           ? "total"
                           : (req.parameter == ParamKind::mean ? "mean" : "quantile");
    csv += kind;
    csv += ',';
    csv += req.variable;
    csv += ',';
    if (req.parameter == ParamKind::quantile) csv += format_number(req.alpha);
    csv += ',';
    csv += format_number(value);
    csv += ',';
    csv += req.weights_source;
    csv += '\n';
  }
  write_text_file(args.out_path, csv);
  if (!flags.quiet)
    std::cout << "wrote " << requests.size() << " estimate(s) to " << args.out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

SimConfig config_from_json(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  SimConfig cfg;
  try {
    cfg.N = doc.value("N", cfg.N);
    cfg.n = doc.value("n", cfg.n);
    if (doc.contains("rho")) cfg.rho_list = doc.at("rho").get<std::vector<double>>();
    cfg.R = doc.value("R", cfg.R);
    if (doc.contains("seed")) cfg.master_seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("estimators")) {
      cfg.estimators.clear();
      for (const auto& name : doc.at("estimators")) {
        auto parsed = estimator_from_string(name.get<std::string>());
        if (!parsed)
          throw InputError(path + ": unknown estimator '" + name.get<std::string>() + "'");
        cfg.estimators.push_back(*parsed);
      }
    }
    if (doc.contains("parameters"))
      cfg.parameters = doc.at("parameters").get<std::vector<std::string>>();
    if (doc.contains("distance")) {
      const auto& d = doc.at("distance");
      const std::string kind = d.value("kind", "raking");
      auto parsed = distance_kind_from_string(kind);
      if (!parsed) throw InputError(path + ": unknown distance kind '" + kind + "'");
      cfg.distance.kind = *parsed;
      if (d.contains("L") && d.contains("U"))
        cfg.distance.bounds = {d.at("L").get<double>(), d.at("U").get<double>()};
    }
    cfg.threads = doc.value("threads", cfg.threads);
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  return cfg;
}

struct SimulateArgs {
  std::string config_path;
  std::string out_dir = ".";
};

int cmd_simulate(const SimulateArgs& args, const GlobalFlags& flags) {
  SimConfig cfg = config_from_json(args.config_path);
  if (flags.seed) cfg.master_seed = *flags.seed;
  if (flags.threads > 0) cfg.threads = flags.threads;
  try {
    validate_config(cfg);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }

  const auto t0 = Clock::now();
  const MetricsTable table = monte_carlo(cfg);
  const double run_ms = ms_since(t0);

  namespace fs = std::filesystem;
  fs::create_directories(args.out_dir);
  const std::string metrics_path = (fs::path(args.out_dir) / "metrics.csv").string();
  const std::string table_path = (fs::path(args.out_dir) / "table.md").string();
  const std::string manifest_path = (fs::path(args.out_dir) / "manifest.json").string();

  write_text_file(metrics_path, table.to_csv());
  write_text_file(table_path, table.to_markdown() + "\nManifest: manifest.json\n");

  json m = manifest_skeleton("simulate", {args.config_path},
                             {metrics_path, table_path});
  m["config_digest"] = fnv1a_digest(read_text_file(args.config_path));
  m["seed"] = cfg.master_seed;
  m["threads"] = cfg.threads;
  m["population"] = "fixed across replications";
  m["timings_ms"] = {{"run", run_ms}};
  int missing_total = 0;
  for (const auto& row : table.rows) missing_total += row.n_missing;
  m["missing_cells"] = missing_total;
  write_text_file(manifest_path, m.dump(2) + "\n");

  if (!flags.quiet) {
    std::cout << "ran R=" << cfg.R << " replications (" << table.rows.size()
              << " metric rows) in " << format_number(run_ms / 1000.0) << " s\n";
    if (missing_total > 0)
      std::cout << "warning: " << missing_total << " missing estimator cells (see table.md)\n";
    std::cout << "wrote " << metrics_path << ", " << table_path << ", " << manifest_path
              << "\n";
  }
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"joint total and quantile calibration weighting"};
  app.require_subcommand(1);

  GlobalFlags flags;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "master seed override");
  app.add_option("--threads", flags.threads, "worker thread cap (simulate)");
  app.add_flag("--quiet", flags.quiet, "suppress progress output");

  CalibrateArgs cal;
  auto* cal_cmd =
      app.add_subcommand("calibrate", "compute calibration weights for a sample CSV");
  cal_cmd->add_option("sample", cal.sample_path, "sample CSV with a header row")->required();
  cal_cmd->add_option("targets", cal.targets_path, "targets JSON")->required();
  cal_cmd->add_option("-o,--output", cal.out_weights, "weights CSV path");
  cal_cmd->add_option("--manifest", cal.out_manifest, "manifest JSON path");
  cal_cmd->add_option("--weight-col", cal.weight_col, "design-weight column name");
  cal_cmd->add_option("--id-col", cal.id_col, "id column name");

  EstimateArgs est;
  auto* est_cmd = app.add_subcommand("estimate", "weighted estimates from a weights CSV");
  est_cmd->add_option("sample", est.sample_path, "sample CSV")->required();
  est_cmd->add_option("weights", est.weights_path, "weights CSV (id,w)")->required();
  est_cmd->add_option("-o,--output", est.out_path, "estimates CSV path");
  est_cmd->add_option("--id-col", est.id_col, "id column name");
  est_cmd->add_option("--mean", est.means, "mean request (repeatable)");
  est_cmd->add_option("--total", est.totals, "total request (repeatable)");
  est_cmd->add_option("--quantile", est.quantiles, "quantile request variable:alpha");
  est_cmd->add_option("--weights-source", est.weights_source,
                      "label echoed in the output")
      ->check(CLI::IsMember({"design", "calibrated", "el", "ipw", "uniform"}));
  est_cmd->add_option("--population-size", est.population_size,
                      "N for means/totals (default: weight total)");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "run the Monte Carlo study");
  sim_cmd->add_option("config", sim.config_path, "config JSON")->required();
  sim_cmd->add_option("-o,--output-dir", sim.out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (*seed_opt) flags.seed = seed_value;

  try {
    if (cal_cmd->parsed()) return cmd_calibrate(cal, flags);
    if (est_cmd->parsed()) return cmd_estimate(est, flags);
    if (sim_cmd->parsed()) return cmd_simulate(sim, flags);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const SolveFailure& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace qcalib::cli
