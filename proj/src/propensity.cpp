#include "qcalib/propensity.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <stdexcept>

namespace qcalib {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

MatrixXd with_intercept(const MatRef& X) {
  MatrixXd Z(X.rows(), X.cols() + 1);
  Z.col(0).setOnes();
  if (X.cols() > 0) Z.rightCols(X.cols()) = X;
  return Z;
}

}  // namespace

PropensityFit fit_propensity(const MatRef& sample_X, const MatRef& population_X,
                             const SolverOptions& opts) {
  if (sample_X.cols() != population_X.cols())
    throw std::invalid_argument("fit_propensity: covariate dimension mismatch");
  const Index n = sample_X.rows();
  const Index N = population_X.rows();
  if (n < 1 || N < 1) throw std::invalid_argument("fit_propensity: empty sample or population");
  if (n >= N)
    throw std::invalid_argument(
        "fit_propensity: sample size must be smaller than the population size");

  const MatrixXd Zs = with_intercept(sample_X);
  const MatrixXd Zu = with_intercept(population_X);
  const Index p1 = Zu.cols();

  const VectorXd target = Zs.colwise().sum();
  VectorXd colnorm(p1);
  for (Index j = 0; j < p1; ++j) colnorm[j] = std::max(1.0, Zu.col(j).cwiseAbs().sum());

  const double frac = static_cast<double>(n) / static_cast<double>(N);
  VectorXd theta = VectorXd::Zero(p1);
  theta[0] = std::log(frac / (1.0 - frac));

  auto score = [&](const VectorXd& th, VectorXd& pi_out) {
    pi_out = (Zu * th).unaryExpr([](double e) { return sigmoid(e); });
    return VectorXd(target - Zu.transpose() * pi_out);
  };

  VectorXd pi;
  VectorXd g = score(theta, pi);
  double crit = (g.cwiseAbs().cwiseQuotient(colnorm)).maxCoeff();

  // Once the nominal tolerance is reached the iteration continues briefly at
  // a 1e4-times tighter target. An interior solution barely moves; under
  // separation the coefficients keep marching toward infinity, which is how
  // separated fits are detected and reported.
  const double probe_tol = opts.tolerance * 1e-4;
  std::optional<VectorXd> theta_at_tol;
  int probe_iterations = 0;

  int it = 0;
  while (crit > probe_tol) {
    if (crit <= opts.tolerance && !theta_at_tol) theta_at_tol = theta;
    if (theta_at_tol) {
      if (++probe_iterations > 10) break;
    } else if (it >= opts.max_iterations) {
      break;
    }
    ++it;
    const VectorXd wgt = pi.array() * (1.0 - pi.array());
    const MatrixXd J = Zu.transpose() * wgt.asDiagonal() * Zu;
    const VectorXd delta = J.ldlt().solve(g);
    if (!delta.allFinite()) break;

    bool accepted = false;
    double step = 1.0;
    for (int halvings = 0; halvings <= 25; ++halvings, step *= 0.5) {
      const VectorXd cand = theta + step * delta;
      VectorXd cand_pi;
      const VectorXd cand_g = score(cand, cand_pi);
      const double cand_crit = (cand_g.cwiseAbs().cwiseQuotient(colnorm)).maxCoeff();
      if (cand_crit < crit) {
        theta = cand;
        pi = cand_pi;
        g = cand_g;
        crit = cand_crit;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  if (crit <= opts.tolerance && !theta_at_tol) theta_at_tol = theta;

  PropensityFit fit;
  fit.theta = theta;
  fit.iterations = it;
  fit.score_norm = crit;
  fit.converged = theta_at_tol.has_value();
  if (fit.converged && (theta - *theta_at_tol).cwiseAbs().maxCoeff() > 1.0) {
    fit.converged = false;  // solution ran away while polishing: separation
  }
  fit.pi_sample = (Zs * theta).unaryExpr([](double e) { return sigmoid(e); });
  return fit;
}

VectorXd ipw_weights(const PropensityFit& fit) {
  if (!fit.converged)
    throw std::invalid_argument("ipw_weights: propensity fit did not converge");
  VectorXd w(fit.pi_sample.size());
  for (Index k = 0; k < w.size(); ++k) {
    const double pi = fit.pi_sample[k];
    if (!(pi > 0.0)) throw std::runtime_error("ipw_weights: fitted probability is zero");
    w[k] = 1.0 / pi;
  }
  return w;
}

}  // namespace qcalib
