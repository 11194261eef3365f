#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "../src/cli/commands.hpp"
#include "../src/cli/csv.hpp"

namespace fs = std::filesystem;

namespace {

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("qcalib");
  for (const auto& a : args) argv.push_back(a.c_str());
  return qcalib::cli::run(static_cast<int>(argv.size()), argv.data());
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("qcalib_test_" + std::to_string(Catch::rngSeed()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name, const std::string& content) const {
    const auto p = (path / name).string();
    std::ofstream out(p, std::ios::binary);
    out << content;
    return p;
  }
  std::string at(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) { return qcalib::cli::read_text_file(path); }

}  // namespace

TEST_CASE("calibrate solves the worked two-unit example") {
  TempDir dir;
  const auto sample = dir.file("sample.csv", "id,d,x\nu1,1,1\nu2,1,2\n");
  const auto targets = dir.file(
      "targets.json",
      R"({"N": 2, "totals": {"x": 4}, "include_size": false, "distance": {"kind": "quadratic"}})");
  const int code = run_cli({"--quiet", "calibrate", sample, targets, "-o",
                            dir.at("weights.csv"), "--manifest", dir.at("manifest.json")});
  REQUIRE(code == 0);

  const auto table = qcalib::cli::read_csv(dir.at("weights.csv"));
  REQUIRE(table.rows.size() == 2);
  REQUIRE(table.column("w") >= 0);
  CHECK(std::stod(table.rows[0][static_cast<std::size_t>(table.column("w"))]) ==
        Catch::Approx(1.2).margin(1e-9));
  CHECK(std::stod(table.rows[1][static_cast<std::size_t>(table.column("w"))]) ==
        Catch::Approx(1.4).margin(1e-9));

  const auto manifest = slurp(dir.at("manifest.json"));
  CHECK_THAT(manifest, Catch::Matchers::ContainsSubstring("\"converged\": true"));
  CHECK_THAT(manifest, Catch::Matchers::ContainsSubstring("total[x]"));
}

TEST_CASE("calibrating to the current weighted values returns the design weights") {
  TempDir dir;
  const auto sample = dir.file("sample.csv", "id,d,x\na,2,1\nb,3,2\n");
  // sum(d) = 5, sum(d x) = 8: targets already satisfied by d
  const auto targets = dir.file("targets.json",
                                R"({"N": 5, "totals": {"x": 8}, "distance": {"kind": "raking"}})");
  REQUIRE(run_cli({"--quiet", "calibrate", sample, targets, "-o", dir.at("w.csv"),
                   "--manifest", dir.at("m.json")}) == 0);
  const auto table = qcalib::cli::read_csv(dir.at("w.csv"));
  const int ratio_col = table.column("ratio");
  for (const auto& row : table.rows)
    CHECK(std::stod(row[static_cast<std::size_t>(ratio_col)]) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("invalid quantile order fails with exit code 1") {
  TempDir dir;
  const auto sample = dir.file("sample.csv", "id,d,x\na,1,1\nb,1,2\n");
  const auto targets =
      dir.file("targets.json", R"({"N": 2, "quantiles": {"x": {"1.2": 1.5}}})");
  CHECK(run_cli({"--quiet", "calibrate", sample, targets, "-o", dir.at("w.csv"),
                 "--manifest", dir.at("m.json")}) == 1);
}

TEST_CASE("missing design-weight column fails with exit code 1") {
  TempDir dir;
  const auto sample = dir.file("sample.csv", "id,x\na,1\nb,2\n");
  const auto targets = dir.file("targets.json", R"({"N": 2, "totals": {"x": 4}})");
  CHECK(run_cli({"--quiet", "calibrate", sample, targets, "-o", dir.at("w.csv"),
                 "--manifest", dir.at("m.json")}) == 1);
}

TEST_CASE("unreachable targets exit with code 2") {
  TempDir dir;
  const auto sample = dir.file("sample.csv", "id,d,x\na,1,1\nb,1,2\nc,1,3\n");
  // quantile target above max(x) with the size row: infeasible
  const auto targets =
      dir.file("targets.json", R"({"N": 3, "quantiles": {"x": {"0.5": 9.0}}})");
  CHECK(run_cli({"--quiet", "calibrate", sample, targets, "-o", dir.at("w.csv"),
                 "--manifest", dir.at("m.json")}) == 2);
}

TEST_CASE("estimate on uniform weights gives the arithmetic mean") {
  TempDir dir;
  const auto sample = dir.file("sample.csv", "id,y\n1,1\n2,2\n3,3\n");
  const auto weights = dir.file("weights.csv", "id,w\n1,1\n2,1\n3,1\n");
  REQUIRE(run_cli({"--quiet", "estimate", sample, weights, "-o", dir.at("est.csv"),
                   "--mean", "y", "--quantile", "y:0.5", "--weights-source", "uniform"}) == 0);
  const auto est = qcalib::cli::read_csv(dir.at("est.csv"));
  REQUIRE(est.rows.size() == 2);
  const int val = est.column("estimate");
  CHECK(std::stod(est.rows[0][static_cast<std::size_t>(val)]) == Catch::Approx(2.0));
  CHECK(std::stod(est.rows[1][static_cast<std::size_t>(val)]) == Catch::Approx(1.5));
  CHECK(est.rows[0][static_cast<std::size_t>(est.column("weights_source"))] == "uniform");
}

TEST_CASE("estimate rejects unknown variables and mismatched ids") {
  TempDir dir;
  const auto sample = dir.file("sample.csv", "id,y\n1,1\n2,2\n");
  const auto weights = dir.file("weights.csv", "id,w\n1,1\n2,1\n");
  CHECK(run_cli({"--quiet", "estimate", sample, weights, "-o", dir.at("e.csv"),
                 "--mean", "zz"}) == 1);

  const auto bad_weights = dir.file("bad_weights.csv", "id,w\n1,1\n7,1\n");
  CHECK(run_cli({"--quiet", "estimate", sample, bad_weights, "-o", dir.at("e.csv"),
                 "--mean", "y"}) == 1);

  CHECK(run_cli({"--quiet", "estimate", sample, weights, "-o", dir.at("e.csv")}) == 1);
}

TEST_CASE("calibrate honors logit bounds and quantile targets from JSON") {
  TempDir dir;
  std::string csv = "id,d,x\n";
  for (int i = 1; i <= 40; ++i)
    csv += std::to_string(i) + ",1," + std::to_string(0.25 * i) + "\n";
  const auto sample = dir.file("sample.csv", csv);
  // targets near the design values keep the logit solve feasible
  const auto targets = dir.file("targets.json",
                                R"({"N": 41, "quantiles": {"x": {"0.5": 5.05}},
                                    "distance": {"kind": "logit", "L": 0.5, "U": 2.0}})");
  REQUIRE(run_cli({"--quiet", "calibrate", sample, targets, "-o", dir.at("w.csv"),
                   "--manifest", dir.at("m.json")}) == 0);
  const auto table = qcalib::cli::read_csv(dir.at("w.csv"));
  const int ratio_col = table.column("ratio");
  for (const auto& row : table.rows) {
    const double ratio = std::stod(row[static_cast<std::size_t>(ratio_col)]);
    CHECK(ratio >= 0.5);
    CHECK(ratio <= 2.0);
  }
  const auto manifest = slurp(dir.at("m.json"));
  CHECK_THAT(manifest, Catch::Matchers::ContainsSubstring("quantile[x@0.5]"));
  CHECK_THAT(manifest, Catch::Matchers::ContainsSubstring("\"converged\": true"));
}

TEST_CASE("calibrate then estimate reproduces the total target") {
  TempDir dir;
  const auto sample = dir.file("sample.csv", "id,d,x\n1,1.5,2\n2,0.5,4\n3,1,6\n");
  const auto targets = dir.file("targets.json",
                                R"({"N": 4, "totals": {"x": 18}, "distance": {"kind": "raking"}})");
  REQUIRE(run_cli({"--quiet", "calibrate", sample, targets, "-o", dir.at("w.csv"),
                   "--manifest", dir.at("m.json")}) == 0);
  REQUIRE(run_cli({"--quiet", "estimate", sample, dir.at("w.csv"), "-o", dir.at("e.csv"),
                   "--total", "x", "--population-size", "4"}) == 0);
  const auto est = qcalib::cli::read_csv(dir.at("e.csv"));
  const double total =
      std::stod(est.rows[0][static_cast<std::size_t>(est.column("estimate"))]);
  CHECK(total == Catch::Approx(18.0).epsilon(1e-8));
}

TEST_CASE("simulate emits the expected row count and is byte-deterministic") {
  TempDir dir;
  const auto config = dir.file("config.json",
                               R"({"N": 200, "n": 100, "R": 2, "seed": 11,
                                   "estimators": ["Naive"],
                                   "parameters": ["mean", "q25", "q50", "q75"]})");
  REQUIRE(run_cli({"--quiet", "simulate", config, "-o", dir.at("out1")}) == 0);
  REQUIRE(run_cli({"--quiet", "--threads", "2", "simulate", config, "-o", dir.at("out2")}) == 0);

  const auto metrics = qcalib::cli::read_csv(dir.at("out1") + "/metrics.csv");
  CHECK(metrics.rows.size() == 12);  // 1 estimator x 3 y x 4 parameters

  CHECK(slurp(dir.at("out1") + "/metrics.csv") == slurp(dir.at("out2") + "/metrics.csv"));

  const auto table_md = slurp(dir.at("out1") + "/table.md");
  CHECK_THAT(table_md, Catch::Matchers::ContainsSubstring("Manifest: manifest.json"));
  const auto manifest = slurp(dir.at("out1") + "/manifest.json");
  CHECK_THAT(manifest, Catch::Matchers::ContainsSubstring("config_digest"));
}

TEST_CASE("simulate seed flag overrides the config seed") {
  TempDir dir;
  const auto config = dir.file("config.json",
                               R"({"N": 200, "n": 100, "R": 2, "seed": 11,
                                   "estimators": ["Naive"], "parameters": ["mean"]})");
  REQUIRE(run_cli({"--quiet", "simulate", config, "-o", dir.at("a")}) == 0);
  REQUIRE(run_cli({"--quiet", "--seed", "12", "simulate", config, "-o", dir.at("b")}) == 0);
  CHECK(slurp(dir.at("a") + "/metrics.csv") != slurp(dir.at("b") + "/metrics.csv"));
}

TEST_CASE("simulate rejects invalid configs with exit code 1") {
  TempDir dir;
  const auto config = dir.file("config.json", R"({"N": 100, "n": 200, "R": 2})");
  CHECK(run_cli({"--quiet", "simulate", config, "-o", dir.at("out")}) == 1);
  const auto broken = dir.file("broken.json", "{not json");
  CHECK(run_cli({"--quiet", "simulate", broken, "-o", dir.at("out")}) == 1);
  CHECK(run_cli({"--quiet", "simulate", dir.at("missing.json"), "-o", dir.at("out")}) == 1);
}

TEST_CASE("csv parser reports malformed rows with line numbers") {
  TempDir dir;
  const auto path = dir.file("bad.csv", "a,b\n1,2\n3\n");
  try {
    qcalib::cli::read_csv(path);
    FAIL("expected a parse error");
  } catch (const std::runtime_error& e) {
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring(":3:"));
  }
  const auto quoted = dir.file("quoted.csv", "a,b\n\"x,y\",2\n");
  const auto table = qcalib::cli::read_csv(quoted);
  CHECK(table.rows[0][0] == "x,y");

  const auto crlf = dir.file("crlf.csv", "a,b\r\n1,2\r\n");
  const auto windows = qcalib::cli::read_csv(crlf);
  REQUIRE(windows.rows.size() == 1);
  CHECK(windows.rows[0][1] == "2");
}
