#pragma once

// One-factor models for binary indicators fitted to tetrachoric
// correlations (delta / theta parameterization, WLS / WLSMV / ULS), the
// linear one-factor ML model, parameterization conversions and outcome
// classification.

#include <Eigen/Core>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "heywood/numcore.hpp"
#include "heywood/tetra.hpp"

namespace heywood {

enum class Parameterization { delta, theta };
enum class Estimator { wls, wlsmv, uls };
enum class Diagnosis { proper, heywood, nonconverged_extreme, nonconverged_other };

std::string_view to_string(Parameterization p);
std::string_view to_string(Estimator e);
std::string_view to_string(Diagnosis d);
/// Case-insensitive; nullopt for unknown names.
std::optional<Parameterization> parse_parameterization(std::string_view s);
std::optional<Estimator> parse_estimator(std::string_view s);

/// Delta loading implied by a theta loading; always in (-1, 1).
double theta_to_delta(double lambda_theta);
/// Theta loading implied by a delta loading. Throws HeywoodConversion when
/// lambda_delta^2 >= 1, where the theta loading would be infinite.
double delta_to_theta(double lambda_delta);

/// Model correlations of a one-factor model in lower_pairs order.
Eigen::VectorXd implied_correlations(const Eigen::VectorXd& lambdas, Parameterization param);

/// Weighted least-squares discrepancy F(l) = (s - sigma(l))' W (s - sigma(l))
/// written as the squared norm of a whitened residual U (s - sigma(l)), W = U'U.
class FactorDiscrepancy {
 public:
  /// Throws SingularWeight when the WLS weight cannot be formed, DomainError
  /// when a weighted estimator is requested without an acov.
  FactorDiscrepancy(const TetrachoricSummary& summary, Estimator est, Parameterization param);

  std::size_t p() const { return p_; }
  Eigen::VectorXd residuals(const Eigen::VectorXd& lambdas) const;
  /// d residuals / d lambdas
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& lambdas) const;
  /// residuals(from) - residuals(to) without the rounding of s itself
  Eigen::VectorXd residual_change(const Eigen::VectorXd& from, const Eigen::VectorXd& to) const;
  double value(const Eigen::VectorXd& lambdas) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& lambdas) const;

 private:
  Eigen::MatrixXd sigma_jacobian(const Eigen::VectorXd& lambdas) const;

  std::size_t p_;
  Parameterization param_;
  Eigen::VectorXd s_;
  Eigen::MatrixXd whiten_;  // U
};

struct FactorFitOptions {
  int max_iter = 500;
  double grad_tol = 1e-6;
  double f_rel_tol = 1e-10;
  /// Largest relative parameter change allowed on the final accepted step.
  double step_tol = 1e-6;
  /// The iteration stops (unconverged) once any |loading| exceeds this. At
  /// 1e4 a theta loading implies a delta loading within 1e-8 of +-1.
  double divergence_limit = 1e4;
  double start_delta = 0.5;
  double start_theta = 0.7;
  double heywood_tol = 1e-8;
  double extreme_threshold = 10.0;
};

struct FactorFit {
  Parameterization parameterization = Parameterization::delta;
  Estimator estimator = Estimator::uls;
  Eigen::VectorXd loadings;
  Eigen::VectorXd residual_variances;
  double discrepancy = 0;
  double gradient_norm = 0;
  int iterations = 0;
  bool converged = false;
  Diagnosis diagnosis = Diagnosis::nonconverged_other;
  /// 1-based variable numbers that triggered the diagnosis.
  std::vector<std::size_t> flagged_variables;
  /// F at every accepted iterate, starting with the initial value.
  std::vector<double> discrepancy_trace;
};

struct FitStats {
  double srmr = 0;
  double chi_square_approx = 0;
  int df = 0;
  double rmsea_approx = 0;
  bool approx_flag = true;
};

struct LinearMlFit {
  Eigen::VectorXd loadings;
  Eigen::VectorXd residual_variances;
  double discrepancy = 0;
  bool converged = false;
  double max_abs_gradient = 0;
  int iterations = 0;
};

/// Levenberg-Marquardt fit of a one-factor model to the tetrachoric
/// correlations in `summary`. Requires p >= 3 and an acov for WLS / WLSMV.
FactorFit fit_one_factor(const TetrachoricSummary& summary, Estimator est, Parameterization param,
                         const FactorFitOptions& opts = {});

struct Classification {
  Diagnosis diagnosis;
  std::vector<std::size_t> flagged;  // 1-based
};

Classification classify_fit(const FactorFit& fit, double extreme_threshold = 10.0,
                            double heywood_tol = 1e-8);

FitStats fit_stats(const TetrachoricSummary& summary, const FactorFit& fit, std::size_t n);

/// F_ML for a one-factor model with unconstrained (possibly negative)
/// residual variances, and its gradient in (loadings, residuals) order.
double linear_ml_discrepancy(const SymmetricMatrix& s, const Eigen::VectorXd& params);
Eigen::VectorXd linear_ml_gradient(const SymmetricMatrix& s, const Eigen::VectorXd& params);

/// Throws NotPositiveDefinite for an invalid S, NonconvergenceError after
/// 1000 iterations without reaching gradient 1e-6.
LinearMlFit fit_linear_ml(const SymmetricMatrix& s, std::size_t n);

}  // namespace heywood
