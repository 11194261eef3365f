#include <catch2/catch_amalgamated.hpp>

#include "qcalib/constraints.hpp"
#include "qcalib/interp_cdf.hpp"
#include "qcalib/random.hpp"
#include "qcalib/solvers.hpp"

using namespace qcalib;

namespace {

VectorXd vec(std::initializer_list<double> values) {
  VectorXd v(static_cast<Index>(values.size()));
  Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

SampleFrame frame123() {
  SampleFrame frame;
  frame.d = VectorXd::Constant(3, 1.0);
  frame.X.resize(3, 2);
  frame.X.col(0) = vec({1, 2, 3});
  frame.X.col(1) = vec({10, 20, 30});
  frame.x_names = {"x1", "x2"};
  return frame;
}

SampleFrame random_frame(Rng& rng, Index n) {
  SampleFrame frame;
  frame.d.resize(n);
  frame.X.resize(n, 2);
  for (Index k = 0; k < n; ++k) {
    frame.d[k] = rng.uniform(0.5, 3.0);
    frame.X(k, 0) = rng.normal() + 4.0;
    frame.X(k, 1) = rng.exponential();
  }
  frame.x_names = {"x1", "x2"};
  return frame;
}

}  // namespace

TEST_CASE("quantile pseudo-variable at an exact sample value") {
  const auto a = quantile_pseudo_variable(vec({1, 2, 3}), 2.0, 3.0);
  CHECK(a[0] == Catch::Approx(1.0 / 3.0).margin(1e-15));
  CHECK(a[1] == Catch::Approx(1.0 / 3.0).margin(1e-15));
  CHECK(a[2] == 0.0);
}

TEST_CASE("quantile pseudo-variable between sample values") {
  const auto a = quantile_pseudo_variable(vec({1, 2, 3}), 2.5, 3.0);
  CHECK(a[0] == Catch::Approx(1.0 / 3.0).margin(1e-15));
  CHECK(a[1] == Catch::Approx(1.0 / 3.0).margin(1e-15));
  CHECK(a[2] == Catch::Approx(0.5 / 3.0).margin(1e-15));
}

TEST_CASE("quantile pseudo-variable above the sample maximum") {
  const auto a = quantile_pseudo_variable(vec({1, 2, 3}), 9.0, 3.0);
  for (Index k = 0; k < 3; ++k) CHECK(a[k] == Catch::Approx(1.0 / 3.0).margin(1e-15));
}

TEST_CASE("build_system with totals only") {
  TargetSpec targets;
  targets.N = 3.0;
  targets.totals = {{"x1", 7.0}};
  targets.include_size_constraint = false;
  const auto sys = build_system(frame123(), targets);
  REQUIRE(sys.m() == 1);
  CHECK(sys.A.col(0) == vec({1, 2, 3}));
  CHECK(sys.h[0] == 7.0);
  CHECK(sys.columns[0].kind == ConstraintKind::total);
  CHECK(describe_column(sys.columns[0]) == "total[x1]");
}

TEST_CASE("build_system with the size row only") {
  TargetSpec targets;
  targets.N = 10.0;
  const auto sys = build_system(frame123(), targets);
  REQUIRE(sys.m() == 1);
  CHECK(sys.A.col(0) == VectorXd::Ones(3));
  CHECK(sys.h[0] == 10.0);
  CHECK(sys.columns[0].kind == ConstraintKind::size);
}

TEST_CASE("build_system joins totals, size and quantile columns in order") {
  TargetSpec targets;
  targets.N = 3.0;
  targets.totals = {{"x1", 6.0}};
  targets.quantiles = {{"x2", 0.5, 20.0}};
  const auto sys = build_system(frame123(), targets);
  REQUIRE(sys.m() == 3);
  CHECK(sys.columns[0].kind == ConstraintKind::total);
  CHECK(sys.columns[1].kind == ConstraintKind::size);
  CHECK(sys.columns[2].kind == ConstraintKind::quantile);
  CHECK(sys.h == vec({6.0, 3.0, 0.5}));
  // third column from the pseudo-variable at Q=20 over (10,20,30)
  CHECK(sys.A.col(2) == quantile_pseudo_variable(vec({10, 20, 30}), 20.0, 3.0));
}

TEST_CASE("build_system rejects invalid inputs") {
  TargetSpec targets;
  targets.N = 3.0;
  targets.quantiles = {{"x2", 0.5, 20.0}, {"x2", 0.5, 21.0}};
  CHECK_THROWS_AS(build_system(frame123(), targets), std::invalid_argument);
  TargetSpec missing;
  missing.N = 3.0;
  missing.totals = {{"zz", 1.0}};
  CHECK_THROWS_AS(build_system(frame123(), missing), std::invalid_argument);
}

TEST_CASE("rescale_system identity and scaling rules") {
  TargetSpec targets;
  targets.N = 10.0;
  targets.totals = {{"x1", 6.0}};
  targets.quantiles = {{"x2", 0.5, 20.0}};
  const auto sys = build_system(frame123(), targets);

  const auto same = rescale_system(sys, 1.0);
  CHECK(same.A == sys.A);
  CHECK(same.h == sys.h);
  CHECK(same.scale == 1.0);

  const auto scaled = rescale_system(sys, 1000.0);
  CHECK(scaled.scale == 1000.0);
  CHECK(scaled.h[0] == Catch::Approx(6.0 / 1000.0));
  CHECK(scaled.h[1] == Catch::Approx(10.0 / 1000.0));
  CHECK(scaled.h[2] == Catch::Approx(0.5 * 1000.0));
  CHECK(scaled.A.col(1)[0] == Catch::Approx(1.0 / 1000.0));
  CHECK_THROWS_AS(rescale_system(sys, 0.0), std::invalid_argument);
}

TEST_CASE("rescaling a quantile column multiplies entries and target") {
  SampleFrame frame;
  frame.d = VectorXd::Constant(3, 1.0);
  frame.X.resize(3, 1);
  frame.X.col(0) = vec({1, 2, 3});
  frame.x_names = {"x"};
  TargetSpec targets;
  targets.N = 3.0;
  targets.include_size_constraint = false;
  targets.quantiles = {{"x", 0.5, 2.0}};
  const auto sys = build_system(frame, targets);
  const auto scaled = rescale_system(sys, 3.0);
  CHECK(scaled.A.col(0) == vec({1, 1, 0}));
  CHECK(scaled.h[0] == Catch::Approx(1.5));
}

TEST_CASE("rescaling preserves the feasible set") {
  Rng rng(5);
  auto frame = random_frame(rng, 20);
  TargetSpec targets;
  targets.N = 40.0;
  targets.totals = {{"x1", 80.0}};
  targets.quantiles = {{"x2", 0.5, 0.8}};
  const auto sys = build_system(frame, targets);
  const auto scaled = rescale_system(sys, 250.0);
  VectorXd w(20);
  for (Index k = 0; k < 20; ++k) w[k] = rng.uniform(0.5, 2.5);
  const VectorXd r = residuals(sys, w);
  const VectorXd rs = residuals(scaled, w);
  for (Index j = 0; j < sys.m(); ++j) {
    const bool quantile = sys.columns[static_cast<std::size_t>(j)].kind ==
                          ConstraintKind::quantile;
    CHECK(rs[j] == Catch::Approx(quantile ? r[j] * 250.0 : r[j] / 250.0).epsilon(1e-12));
  }
}

TEST_CASE("residuals of self-consistent targets vanish") {
  auto frame = frame123();
  TargetSpec targets;
  targets.N = frame.d.sum();
  targets.totals = {{"x1", frame.X.col(0).sum()}, {"x2", frame.X.col(1).sum()}};
  const auto sys = build_system(frame, targets);
  CHECK(residuals(sys, frame.d).cwiseAbs().maxCoeff() == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("residual of a size row") {
  SampleFrame frame;
  frame.d = VectorXd::Constant(2, 1.0);
  frame.X.resize(2, 0);
  TargetSpec targets;
  targets.N = 10.0;
  const auto sys = build_system(frame, targets);
  CHECK(residuals(sys, vec({2, 3}))[0] == Catch::Approx(-5.0));
  CHECK_THROWS_AS(residuals(sys, vec({1, 2, 3})), std::invalid_argument);
}

TEST_CASE("residual of a satisfied total row") {
  SampleFrame frame;
  frame.d = VectorXd::Constant(2, 1.0);
  frame.X.resize(2, 1);
  frame.X.col(0) = vec({1, 2});
  frame.x_names = {"x"};
  TargetSpec targets;
  targets.N = 2.0;
  targets.totals = {{"x", 3.0}};
  targets.include_size_constraint = false;
  const auto sys = build_system(frame, targets);
  CHECK(residuals(sys, vec({1, 1}))[0] == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("vanishing quantile residual reproduces the CDF level") {
  Rng rng(17);
  for (auto kind : {DistanceKind::quadratic, DistanceKind::raking}) {
    auto frame = random_frame(rng, 40);
    const double N = 90.0;
    const double alpha = 0.4;
    // feasible target: the quantile of a synthetic feasible weight vector
    VectorXd wstar(40);
    for (Index k = 0; k < 40; ++k) wstar[k] = frame.d[k] * rng.uniform(0.8, 1.25);
    wstar *= N / wstar.sum();
    const double Q = interp_quantile(frame.X.col(1), wstar, alpha, N);

    TargetSpec targets;
    targets.N = N;
    targets.quantiles = {{"x2", alpha, Q}};
    const auto sys = build_system(frame, targets);
    DistanceSpec spec;
    spec.kind = kind;
    const auto ws = kind == DistanceKind::quadratic ? solve_quadratic(sys, frame.d)
                                                    : solve_dual(sys, frame.d, spec);
    REQUIRE(ws.diagnostics.converged);
    const double level = interp_cdf(frame.X.col(1), ws.w, Q) * ws.w.sum() / N;
    CHECK(level == Catch::Approx(alpha).margin(1e-8));
  }
}

TEST_CASE("unreachable quantile target builds but cannot be solved") {
  SampleFrame frame;
  frame.d = VectorXd::Constant(3, 1.0);
  frame.X.resize(3, 1);
  frame.X.col(0) = vec({1, 2, 3});
  frame.x_names = {"x"};
  TargetSpec targets;
  targets.N = 3.0;
  targets.quantiles = {{"x", 0.5, 5.0}};  // Q above max(x), alpha < 1
  const auto sys = build_system(frame, targets);
  REQUIRE(sys.m() == 2);

  DistanceSpec raking;
  raking.kind = DistanceKind::raking;
  const auto ws = solve_dual(sys, frame.d, raking);
  CHECK_FALSE(ws.diagnostics.converged);
  CHECK_THAT(ws.diagnostics.note, Catch::Matchers::ContainsSubstring("infeasible"));
  CHECK_THROWS_WITH(solve_quadratic(sys, frame.d),
                    Catch::Matchers::ContainsSubstring("infeasible"));
}
