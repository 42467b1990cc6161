#include "heywood/ordfa.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "heywood/errors.hpp"

namespace heywood {

std::string_view to_string(Parameterization p) {
  return p == Parameterization::delta ? "delta" : "theta";
}

std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::wls: return "wls";
    case Estimator::wlsmv: return "wlsmv";
    case Estimator::uls: return "uls";
  }
  return "?";
}

std::string_view to_string(Diagnosis d) {
  switch (d) {
    case Diagnosis::proper: return "proper";
    case Diagnosis::heywood: return "heywood";
    case Diagnosis::nonconverged_extreme: return "nonconverged_extreme";
    case Diagnosis::nonconverged_other: return "nonconverged_other";
  }
  return "?";
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::optional<Parameterization> parse_parameterization(std::string_view s) {
  const std::string v = lower(s);
  if (v == "delta") return Parameterization::delta;
  if (v == "theta") return Parameterization::theta;
  return std::nullopt;
}

std::optional<Estimator> parse_estimator(std::string_view s) {
  const std::string v = lower(s);
  if (v == "wls") return Estimator::wls;
  if (v == "wlsmv") return Estimator::wlsmv;
  if (v == "uls") return Estimator::uls;
  return std::nullopt;
}

double theta_to_delta(double lambda_theta) {
  return lambda_theta / std::sqrt(1.0 + lambda_theta * lambda_theta);
}

double delta_to_theta(double lambda_delta) {
  const double sq = lambda_delta * lambda_delta;
  if (!(sq < 1.0))
    throw HeywoodConversion("delta loading " + std::to_string(lambda_delta) +
                            " has no finite theta counterpart");
  return lambda_delta / std::sqrt(1.0 - sq);
}

Eigen::VectorXd implied_correlations(const Eigen::VectorXd& lambdas, Parameterization param) {
  const auto p = static_cast<std::size_t>(lambdas.size());
  Eigen::VectorXd d = lambdas;
  if (param == Parameterization::theta) d = lambdas.unaryExpr([](double l) { return theta_to_delta(l); });
  const auto pairs = lower_pairs(p);
  Eigen::VectorXd sigma(static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    sigma(static_cast<Eigen::Index>(k)) = d(static_cast<Eigen::Index>(pairs[k].first)) *
                                          d(static_cast<Eigen::Index>(pairs[k].second));
  }
  return sigma;
}

FactorDiscrepancy::FactorDiscrepancy(const TetrachoricSummary& summary, Estimator est,
                                     Parameterization param)
    : p_(summary.p()), param_(param), s_(summary.unique_correlations()) {
  const Eigen::Index m = s_.size();
  if (est == Estimator::uls) {
    whiten_ = Eigen::MatrixXd::Identity(m, m);
    return;
  }
  if (!summary.acov)
    throw DomainError(std::string(to_string(est)) + " requires the asymptotic covariance");
  const Eigen::MatrixXd& acov = *summary.acov;
  if (acov.rows() != m || acov.cols() != m) throw DomainError("acov has the wrong dimension");

  if (est == Estimator::wlsmv) {
    whiten_ = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index k = 0; k < m; ++k) {
      if (!(acov(k, k) > 0.0))
        throw SingularWeight("acov diagonal entry " + std::to_string(k) + " is not positive");
      whiten_(k, k) = 1.0 / std::sqrt(acov(k, k));
    }
    return;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(acov, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12)
    throw SingularWeight("WLS weight: acov condition number " +
                         (lo > 0.0 ? std::to_string(hi / lo) : std::string("inf")));
  Eigen::LLT<Eigen::MatrixXd> llt(acov);
  if (llt.info() != Eigen::Success) throw SingularWeight("WLS weight: acov is not positive definite");
  // acov = C C'  =>  W = acov^{-1} = C^{-T} C^{-1}, U = C^{-1}
  const Eigen::MatrixXd c = llt.matrixL();
  whiten_ = c.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(m, m));
}

Eigen::VectorXd FactorDiscrepancy::residuals(const Eigen::VectorXd& lambdas) const {
  return whiten_ * (s_ - implied_correlations(lambdas, param_));
}

Eigen::VectorXd FactorDiscrepancy::residual_change(const Eigen::VectorXd& from,
                                                   const Eigen::VectorXd& to) const {
  // Per-loading terms d(l) and their exact increments; to - from is exact
  // for nearby points, so the pair products below keep full precision.
  const auto p = static_cast<Eigen::Index>(p_);
  Eigen::VectorXd d0(p), d1(p), inc(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    const double l0 = from(i), l1 = to(i), h = l1 - l0;
    if (param_ == Parameterization::delta) {
      d0(i) = l0;
      d1(i) = l1;
      inc(i) = h;
    } else {
      const double r0 = std::sqrt(1.0 + l0 * l0), r1 = std::sqrt(1.0 + l1 * l1);
      d0(i) = l0 / r0;
      d1(i) = l1 / r1;
      const double den = l1 * r0 + l0 * r1;
      inc(i) = (l0 * l1 > 0.0) ? h * (l0 + l1) / (den * r0 * r1) : d1(i) - d0(i);
    }
  }
  const auto pairs = lower_pairs(p_);
  Eigen::VectorXd dsigma(static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto a = static_cast<Eigen::Index>(pairs[k].first);
    const auto b = static_cast<Eigen::Index>(pairs[k].second);
    dsigma(static_cast<Eigen::Index>(k)) = inc(a) * d1(b) + d0(a) * inc(b);
  }
  return whiten_ * dsigma;
}

Eigen::MatrixXd FactorDiscrepancy::sigma_jacobian(const Eigen::VectorXd& lambdas) const {
  const auto pairs = lower_pairs(p_);
  const auto p = static_cast<Eigen::Index>(p_);
  Eigen::VectorXd d(p), dd(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    const double l = lambdas(i);
    if (param_ == Parameterization::delta) {
      d(i) = l;
      dd(i) = 1.0;
    } else {
      const double q = 1.0 + l * l;
      d(i) = l / std::sqrt(q);
      dd(i) = 1.0 / (q * std::sqrt(q));
    }
  }
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(pairs.size()), p);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto a = static_cast<Eigen::Index>(pairs[k].first);
    const auto b = static_cast<Eigen::Index>(pairs[k].second);
    j(static_cast<Eigen::Index>(k), a) = dd(a) * d(b);
    j(static_cast<Eigen::Index>(k), b) = d(a) * dd(b);
  }
  return j;
}

Eigen::MatrixXd FactorDiscrepancy::jacobian(const Eigen::VectorXd& lambdas) const {
  return -whiten_ * sigma_jacobian(lambdas);
}

double FactorDiscrepancy::value(const Eigen::VectorXd& lambdas) const {
  return residuals(lambdas).squaredNorm();
}

Eigen::VectorXd FactorDiscrepancy::gradient(const Eigen::VectorXd& lambdas) const {
  return 2.0 * jacobian(lambdas).transpose() * residuals(lambdas);
}

Classification classify_fit(const FactorFit& fit, double extreme_threshold, double heywood_tol) {
  Classification c{Diagnosis::proper, {}};
  const Eigen::Index p = fit.loadings.size();
  if (fit.converged) {
    if (fit.parameterization == Parameterization::delta) {
      for (Eigen::Index i = 0; i < p; ++i)
        if (fit.loadings(i) * fit.loadings(i) > 1.0 + heywood_tol)
          c.flagged.push_back(static_cast<std::size_t>(i) + 1);
      if (!c.flagged.empty()) c.diagnosis = Diagnosis::heywood;
    }
    return c;
  }
  for (Eigen::Index i = 0; i < p; ++i)
    if (!(std::abs(fit.loadings(i)) <= extreme_threshold))
      c.flagged.push_back(static_cast<std::size_t>(i) + 1);
  c.diagnosis = c.flagged.empty() ? Diagnosis::nonconverged_other : Diagnosis::nonconverged_extreme;
  return c;
}

FactorFit fit_one_factor(const TetrachoricSummary& summary, Estimator est, Parameterization param,
                         const FactorFitOptions& opts) {
  const std::size_t p = summary.p();
  if (p < 3) throw DomainError("fit_one_factor: need at least 3 variables");
  const FactorDiscrepancy objective(summary, est, param);

  FactorFit fit;
  fit.parameterization = param;
  fit.estimator = est;
  const auto n = static_cast<Eigen::Index>(p);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(
      n, param == Parameterization::delta ? opts.start_delta : opts.start_theta);

  Eigen::VectorXd e = objective.residuals(x);
  Eigen::MatrixXd j = objective.jacobian(x);
  double f = e.squaredNorm();
  fit.discrepancy_trace.push_back(f);

  Eigen::MatrixXd a = j.transpose() * j;
  Eigen::VectorXd g = j.transpose() * e;  // half the gradient of F
  double mu = 1e-3 * a.diagonal().maxCoeff();
  double nu = 2.0;
  double last_df = std::numeric_limits<double>::infinity();
  double last_step = std::numeric_limits<double>::infinity();
  bool converged = false;
  int iter = 0;

  const auto check = [&]() {
    // Gradient scaled by max(1, |lambda|): a theta loading running off to
    // infinity flattens F without reaching a stationary point.
    const double scaled = (g.array().abs() * x.array().abs().max(1.0)).maxCoeff();
    return 2.0 * scaled <= opts.grad_tol &&
           last_df <= opts.f_rel_tol * std::max(f, 1e-12) && last_step <= opts.step_tol;
  };

  if (g.lpNorm<Eigen::Infinity>() == 0.0) converged = true;
  while (!converged && iter < opts.max_iter) {
    ++iter;
    Eigen::VectorXd scale = a.diagonal().cwiseMax(1e-12 * std::max(1.0, a.diagonal().maxCoeff()));
    Eigen::MatrixXd lhs = a;
    lhs.diagonal() += mu * scale;
    const Eigen::VectorXd h = lhs.ldlt().solve(-g);
    const Eigen::VectorXd x_new = x + h;
    const Eigen::VectorXd e_new = objective.residuals(x_new);
    const double f_new = e_new.squaredNorm();
    // F - F_new = d'(2e - d) with d = e - e_new; the plain difference loses
    // all precision once the decrease falls below the rounding of F.
    const Eigen::VectorXd d = objective.residual_change(x, x_new);
    const double actual = d.dot(2.0 * e - d);
    const double predicted = -(2.0 * h.dot(g) + h.dot(a * h));
    const double gain = (predicted > 0.0) ? actual / predicted : -1.0;

    if (std::isfinite(f_new) && actual >= 0.0 && gain > 0.0) {
      last_df = actual;
      last_step = (h.array().abs() / (1.0 + x.array().abs())).maxCoeff();
      x = x_new;
      e = e_new;
      f = f_new;
      j = objective.jacobian(x);
      a = j.transpose() * j;
      g = j.transpose() * e;
      fit.discrepancy_trace.push_back(f);
      mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * gain - 1.0, 3));
      nu = 2.0;
      if (x.lpNorm<Eigen::Infinity>() > opts.divergence_limit) break;
      if (check()) converged = true;
    } else {
      mu *= nu;
      nu *= 2.0;
      // No representable improvement left: judge the last accepted step.
      if (!(mu < 1e30) || !std::isfinite(mu)) {
        converged = check();
        break;
      }
    }
  }

  if (std::accumulate(x.begin(), x.end(), 0.0) < 0.0) x = -x;

  fit.loadings = x;
  fit.residual_variances = (param == Parameterization::delta)
                               ? Eigen::VectorXd((1.0 - x.array().square()).matrix())
                               : Eigen::VectorXd::Ones(n);
  fit.discrepancy = f;
  fit.gradient_norm = 2.0 * g.lpNorm<Eigen::Infinity>();
  fit.iterations = iter;
  fit.converged = converged;
  const Classification c = classify_fit(fit, opts.extreme_threshold, opts.heywood_tol);
  fit.diagnosis = c.diagnosis;
  fit.flagged_variables = c.flagged;
  return fit;
}

FitStats fit_stats(const TetrachoricSummary& summary, const FactorFit& fit, std::size_t n) {
  const Eigen::VectorXd resid =
      summary.unique_correlations() - implied_correlations(fit.loadings, fit.parameterization);
  FitStats st;
  const auto p = static_cast<int>(summary.p());
  st.srmr = std::sqrt(resid.squaredNorm() / static_cast<double>(resid.size()));
  const double nm1 = static_cast<double>(n) - 1.0;
  st.chi_square_approx = nm1 * fit.discrepancy;
  st.df = p * (p - 1) / 2 - p;
  if (st.df > 0 && nm1 > 0.0) {
    st.rmsea_approx =
        std::sqrt(std::max(0.0, (st.chi_square_approx - st.df) / (st.df * nm1)));
  }
  st.approx_flag = true;
  return st;
}

double linear_ml_discrepancy(const SymmetricMatrix& s, const Eigen::VectorXd& params) {
  const Eigen::Index p = s.dim();
  const Eigen::VectorXd l = params.head(p);
  Eigen::MatrixXd sigma = l * l.transpose();
  sigma.diagonal() += params.tail(p);
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  Eigen::LLT<Eigen::MatrixXd> llt_s(s.matrix());
  if (llt_s.info() != Eigen::Success) throw NotPositiveDefinite("linear ML: S is not positive definite");
  const Eigen::MatrixXd ls = llt.matrixL();
  const Eigen::MatrixXd lss = llt_s.matrixL();
  const double logdet = 2.0 * ls.diagonal().array().log().sum();
  const double logdet_s = 2.0 * lss.diagonal().array().log().sum();
  const double trace = llt.solve(s.matrix()).trace();
  if (!(ls.diagonal().minCoeff() > 0.0)) return std::numeric_limits<double>::infinity();
  return logdet + trace - logdet_s - static_cast<double>(p);
}

Eigen::VectorXd linear_ml_gradient(const SymmetricMatrix& s, const Eigen::VectorXd& params) {
  const Eigen::Index p = s.dim();
  const Eigen::VectorXd l = params.head(p);
  Eigen::MatrixXd sigma = l * l.transpose();
  sigma.diagonal() += params.tail(p);
  const Eigen::MatrixXd inv = sigma.inverse();
  const Eigen::MatrixXd omega = inv * (sigma - s.matrix()) * inv;
  Eigen::VectorXd grad(2 * p);
  grad.head(p) = 2.0 * omega * l;
  grad.tail(p) = omega.diagonal();
  return grad;
}

LinearMlFit fit_linear_ml(const SymmetricMatrix& s, std::size_t n) {
  (void)n;  // F_ML is scale-free in n; kept for the test-statistic callers
  const Eigen::Index p = s.dim();
  if (p < 3) throw DomainError("fit_linear_ml: need at least 3 variables");
  Eigen::LLT<Eigen::MatrixXd> llt_s(s.matrix());
  if (llt_s.info() != Eigen::Success) throw NotPositiveDefinite("fit_linear_ml: S is not positive definite");

  // Start: residuals 1 / diag(S^-1), loadings from the leading eigenpair of
  // the residual-scaled covariance.
  const Eigen::MatrixXd s_inv = llt_s.solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::VectorXd psi = s_inv.diagonal().cwiseInverse();
  const Eigen::VectorXd root = psi.cwiseSqrt();
  const Eigen::MatrixXd scaled = root.cwiseInverse().asDiagonal() * s.matrix() * root.cwiseInverse().asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scaled);
  const double top = eig.eigenvalues()(p - 1);
  Eigen::VectorXd lam = root.asDiagonal() * eig.eigenvectors().col(p - 1) * std::sqrt(std::max(top - 1.0, 0.0));

  Eigen::VectorXd x(2 * p);
  x << lam, psi;
  double f = linear_ml_discrepancy(s, x);
  Eigen::VectorXd g = linear_ml_gradient(s, x);
  double mu = 1e-6;
  LinearMlFit out;
  int iter = 0;
  for (; iter < 1000 && g.lpNorm<Eigen::Infinity>() > 1e-12; ++iter) {
    // Hessian by central differences of the analytic gradient.
    Eigen::MatrixXd h(2 * p, 2 * p);
    for (Eigen::Index k = 0; k < 2 * p; ++k) {
      const double step = 1e-6 * std::max(1.0, std::abs(x(k)));
      Eigen::VectorXd up = x, down = x;
      up(k) += step;
      down(k) -= step;
      h.col(k) = (linear_ml_gradient(s, up) - linear_ml_gradient(s, down)) / (2.0 * step);
    }
    h = 0.5 * (h + h.transpose());
    bool moved = false;
    while (mu < 1e12) {
      Eigen::MatrixXd lhs = h;
      lhs.diagonal().array() += mu;
      Eigen::LLT<Eigen::MatrixXd> chol(lhs);
      if (chol.info() == Eigen::Success) {
        const Eigen::VectorXd step = chol.solve(-g);
        const Eigen::VectorXd trial = x + step;
        const double f_trial = linear_ml_discrepancy(s, trial);
        if (std::isfinite(f_trial) && f_trial <= f) {
          const double rel = (step.array().abs() / (1.0 + x.array().abs())).maxCoeff();
          x = trial;
          f = f_trial;
          g = linear_ml_gradient(s, x);
          mu = std::max(mu * 0.1, 1e-12);
          moved = rel > 1e-15;
          break;
        }
      }
      mu *= 10.0;
    }
    if (!moved) break;
  }
  out.loadings = x.head(p);
  if (out.loadings.sum() < 0.0) out.loadings = -out.loadings;
  out.residual_variances = x.tail(p);
  out.discrepancy = f;
  out.max_abs_gradient = g.lpNorm<Eigen::Infinity>();
  out.iterations = iter;
  out.converged = out.max_abs_gradient <= 1e-6;
  if (!out.converged)
    throw NonconvergenceError("fit_linear_ml: gradient " + std::to_string(out.max_abs_gradient) +
                              " after " + std::to_string(iter) + " iterations");
  return out;
}

}  // namespace heywood
