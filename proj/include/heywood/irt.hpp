#pragma once

// Two-parameter logistic IRT model fitted by marginal maximum likelihood
// (Bock-Aitkin EM over Gauss-Hermite quadrature).

#include <Eigen/Core>
#include <vector>

#include "heywood/numcore.hpp"
#include "heywood/simgen.hpp"

namespace heywood {

/// P(y = 1 | theta) = 1 / (1 + exp(-a (theta - b)))
struct ItemResponseFunction {
  double a = 1.0;
  double b = 0.0;

  double operator()(double theta) const;
};

struct IrtParams {
  Eigen::VectorXd a;  // discriminations
  Eigen::VectorXd b;  // difficulties
};

struct IrtOptions {
  int nodes = kDefaultQuadratureNodes;
  int max_cycles = 500;
  double loglik_tol = 1e-6;
  double param_tol = 1e-4;
  int newton_max_iter = 25;
  double newton_tol = 1e-8;
  double bound = 50.0;
  double extreme_threshold = 10.0;
  /// Squared-extrapolation acceleration with a monotone fallback.
  bool accelerate = true;
};

struct IrtFit {
  Eigen::VectorXd discriminations;
  Eigen::VectorXd difficulties;
  /// Marginal log-likelihood at the start of every EM cycle, then at the
  /// returned parameters.
  std::vector<double> loglik_trace;
  bool converged = false;
  int em_cycles = 0;
  std::vector<std::size_t> extreme_items;  // 1-based
  std::vector<std::size_t> at_bound;       // 1-based

  double loglik() const { return loglik_trace.empty() ? 0.0 : loglik_trace.back(); }
};

double marginal_loglik(const BinaryDataset& data, const IrtParams& params, const QuadratureRule& rule);

/// Throws DegenerateMargin for constant columns, DomainError when n < p, and
/// NonconvergenceError only when the cycle cap is reached while the
/// log-likelihood still moves by more than 1e-4 per cycle.
IrtFit fit_2pl(const BinaryDataset& data, const IrtOptions& opts = {});

/// 1-based item numbers with |a| > extreme_threshold.
std::vector<std::size_t> classify_irt(const IrtFit& fit, double extreme_threshold = 10.0);
std::vector<std::size_t> classify_irt(const Eigen::VectorXd& discriminations,
                                      double extreme_threshold = 10.0);

}  // namespace heywood
