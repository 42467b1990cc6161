#pragma once

// Numerical primitives shared by every estimator: normal distribution
// functions, Cholesky factorization and Gauss-Hermite quadrature.

#include <Eigen/Core>
#include <vector>

namespace heywood {

/// Dense symmetric matrix. The lower triangle is authoritative: on
/// construction it is mirrored into the upper triangle.
class SymmetricMatrix {
 public:
  SymmetricMatrix() = default;
  explicit SymmetricMatrix(Eigen::Index dim);
  explicit SymmetricMatrix(const Eigen::MatrixXd& m);

  static SymmetricMatrix identity(Eigen::Index dim);

  Eigen::Index dim() const { return m_.rows(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }
  /// Writes both (i, j) and (j, i).
  void set(Eigen::Index i, Eigen::Index j, double value);
  const Eigen::MatrixXd& matrix() const { return m_; }
  double max_abs() const { return m_.cwiseAbs().maxCoeff(); }

 private:
  Eigen::MatrixXd m_;
};

/// Lower-triangular L with L * L^T == s. Throws NotPositiveDefinite when a
/// pivot falls to 1e-12 or below.
Eigen::MatrixXd cholesky(const SymmetricMatrix& s);

double std_normal_pdf(double x);
double std_normal_cdf(double x);
/// Inverse of std_normal_cdf. Throws DomainError unless 0 < p < 1.
double std_normal_quantile(double p);

/// Density of the standard bivariate normal with correlation rho.
double bivariate_normal_pdf(double h, double k, double rho);

/// P(X <= h, Y <= k) for a standard bivariate normal with correlation rho.
/// Throws DomainError if |rho| > 1 - 1e-12.
double bivariate_normal_cdf(double h, double k, double rho);

/// Quadrature rule for expectations under a standard normal:
/// sum_i weights[i] * f(nodes[i]) ~= E[f(Z)].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
};

inline constexpr int kDefaultQuadratureNodes = 61;

/// n-point Gauss-Hermite rule for the standard-normal weight, 1 <= n <= 501.
QuadratureRule gauss_hermite(int n);

}  // namespace heywood
