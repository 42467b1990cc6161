#include "heywood/numcore.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "heywood/errors.hpp"

namespace heywood {

SymmetricMatrix::SymmetricMatrix(Eigen::Index dim)
    : m_(Eigen::MatrixXd::Zero(dim, dim)) {
  if (dim < 1) throw DomainError("SymmetricMatrix: dimension must be >= 1");
}

SymmetricMatrix::SymmetricMatrix(const Eigen::MatrixXd& m) : m_(m) {
  if (m.rows() != m.cols() || m.rows() < 1)
    throw DomainError("SymmetricMatrix: input must be square and non-empty");
  m_.triangularView<Eigen::StrictlyUpper>() = m_.transpose();
}

SymmetricMatrix SymmetricMatrix::identity(Eigen::Index dim) {
  SymmetricMatrix s(dim);
  s.m_.setIdentity();
  return s;
}

void SymmetricMatrix::set(Eigen::Index i, Eigen::Index j, double value) {
  m_(i, j) = value;
  m_(j, i) = value;
}

Eigen::MatrixXd cholesky(const SymmetricMatrix& s) {
  const Eigen::Index n = s.dim();
  const Eigen::MatrixXd& a = s.matrix();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 1e-12)) {
      throw NotPositiveDefinite("cholesky: pivot " + std::to_string(j) +
                                " is " + std::to_string(d));
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double v = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / ljj;
    }
  }
  return l;
}

double std_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
}

double std_normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

namespace {

// Acklam's rational approximation, relative error ~1.15e-9 before refinement.
double acklam_quantile(double p) {
  constexpr std::array<double, 6> a = {-3.969683028665376e+01, 2.209460984245205e+02,
                                       -2.759285104469687e+02, 1.383577518672690e+02,
                                       -3.066479806614716e+01, 2.506628277459239e+00};
  constexpr std::array<double, 5> b = {-5.447609879822406e+01, 1.615858368580409e+02,
                                       -1.556989798598866e+02, 6.680131188771972e+01,
                                       -1.328068155288572e+01};
  constexpr std::array<double, 6> c = {-7.784894002430293e-03, -3.223964580411365e-01,
                                       -2.400758277161838e+00, -2.549732539343734e+00,
                                       4.374664141464968e+00,  2.938163982698783e+00};
  constexpr std::array<double, 4> d = {7.784695709041462e-03, 3.224671290700398e-01,
                                       2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  auto tail = [&](double q) {
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  };
  if (p < p_low) return tail(std::sqrt(-2.0 * std::log(p)));
  if (p > 1.0 - p_low) return -tail(std::sqrt(-2.0 * std::log1p(-p)));
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double std_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw DomainError("std_normal_quantile: p must lie strictly in (0, 1), got " +
                      std::to_string(p));
  double x = acklam_quantile(p);
  // one Halley step; the error term is taken from the closer tail to avoid
  // cancellation near p = 1
  const double e = (p < 0.5) ? std_normal_cdf(x) - p : (1.0 - p) - std_normal_cdf(-x);
  const double u = e / std_normal_pdf(x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

double bivariate_normal_pdf(double h, double k, double rho) {
  const double one_minus = 1.0 - rho * rho;
  const double q = (h * h - 2.0 * rho * h * k + k * k) / one_minus;
  return std::exp(-0.5 * q) / (2.0 * std::numbers::pi * std::sqrt(one_minus));
}

namespace {

// Upper orthant P(X > h, Y > k), Genz's refinement of the Drezner-Wesolowsky
// Gauss-Legendre scheme.
double bivariate_upper(double h, double k, double r) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (h == inf || k == inf) return 0.0;
  if (h == -inf) return k == -inf ? 1.0 : std_normal_cdf(-k);
  if (k == -inf) return std_normal_cdf(-h);
  if (r == 0.0) return std_normal_cdf(-h) * std_normal_cdf(-k);

  static constexpr std::array<double, 3> w6 = {0.1713244923791705, 0.3607615730481384,
                                               0.4679139345726904};
  static constexpr std::array<double, 3> x6 = {0.9324695142031522, 0.6612093864662647,
                                               0.2386191860831970};
  static constexpr std::array<double, 6> w12 = {0.04717533638651177, 0.1069393259953183,
                                                0.1600783285433464,  0.2031674267230659,
                                                0.2334925365383547,  0.2491470458134029};
  static constexpr std::array<double, 6> x12 = {0.9815606342467191, 0.9041172563704750,
                                                0.7699026741943050, 0.5873179542866171,
                                                0.3678314989981802, 0.1252334085114692};
  static constexpr std::array<double, 10> w20 = {
      0.01761400713915212, 0.04060142980038694, 0.06267204833410906, 0.08327674157670475,
      0.1019301198172404,  0.1181945319615184,  0.1316886384491766,  0.1420961093183821,
      0.1491729864726037,  0.1527533871307259};
  static constexpr std::array<double, 10> x20 = {
      0.9931285991850949, 0.9639719272779138, 0.9122344282513259, 0.8391169718222188,
      0.7463319064601508, 0.6360536807265150, 0.5108670019508271, 0.3737060887154196,
      0.2277858511416451, 0.07652652113349733};

  const double* w;
  const double* x;
  int lg;
  const double ar = std::abs(r);
  if (ar < 0.3) {
    w = w6.data(), x = x6.data(), lg = 3;
  } else if (ar < 0.75) {
    w = w12.data(), x = x12.data(), lg = 6;
  } else {
    w = w20.data(), x = x20.data(), lg = 10;
  }

  constexpr double two_pi = 2.0 * std::numbers::pi;
  double hk = h * k;
  double bvn = 0.0;
  if (ar < 0.925) {
    const double hs = 0.5 * (h * h + k * k);
    const double asr = 0.5 * std::asin(r);
    for (int i = 0; i < lg; ++i) {
      for (double sgn : {-1.0, 1.0}) {
        const double sn = std::sin(asr * (1.0 + sgn * x[i]));
        bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    return bvn * asr / two_pi + std_normal_cdf(-h) * std_normal_cdf(-k);
  }

  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  if (ar < 1.0) {
    const double as = (1.0 - r) * (1.0 + r);
    double a = std::sqrt(as);
    const double bs = (h - k) * (h - k);
    const double c = (4.0 - hk) / 8.0;
    const double d = (12.0 - hk) / 80.0;
    double asr = -0.5 * (bs / as + hk);
    if (asr > -100.0) {
      bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
    }
    if (hk > -100.0) {
      const double b = std::sqrt(bs);
      const double sp = std::sqrt(two_pi) * std_normal_cdf(-b / a);
      bvn -= std::exp(-0.5 * hk) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
    }
    a *= 0.5;
    double acc = 0.0;
    for (int i = 0; i < lg; ++i) {
      for (double sgn : {-1.0, 1.0}) {
        const double xs = std::pow(a * (1.0 + sgn * x[i]), 2);
        asr = -0.5 * (bs / xs + hk);
        if (asr <= -100.0) continue;
        const double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
        const double rs = std::sqrt(1.0 - xs);
        const double ep = std::exp(-0.5 * hk * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
        acc += w[i] * std::exp(asr) * (sp - ep);
      }
    }
    bvn = (a * acc - bvn) / two_pi;
  }
  if (r > 0.0) return bvn + std_normal_cdf(-std::max(h, k));
  if (h >= k) return -bvn;
  const double l = (h < 0.0) ? std_normal_cdf(k) - std_normal_cdf(h)
                             : std_normal_cdf(-h) - std_normal_cdf(-k);
  return l - bvn;
}

}  // namespace

double bivariate_normal_cdf(double h, double k, double rho) {
  if (!(std::abs(rho) <= 1.0 - 1e-12))
    throw DomainError("bivariate_normal_cdf: |rho| must be <= 1 - 1e-12, got " +
                      std::to_string(rho));
  return std::clamp(bivariate_upper(-h, -k, rho), 0.0, 1.0);
}

namespace {

// Orthonormal Hermite values p_{n-1}(x), p_n(x) sharing a common scale
// factor exp(log_scale); the recurrence overflows for large n otherwise.
struct HermiteTail {
  double prev;
  double last;
  double log_scale;
};

HermiteTail orthonormal_hermite(int n, double x) {
  double p_prev = 0.0;
  double p = 1.0;
  double log_scale = 0.0;
  for (int k = 0; k < n; ++k) {
    const double next = (x * p - std::sqrt(static_cast<double>(k)) * p_prev) /
                        std::sqrt(static_cast<double>(k + 1));
    p_prev = p;
    p = next;
    if (std::abs(p) > 1e150) {
      p *= 1e-150;
      p_prev *= 1e-150;
      log_scale += 150.0 * std::numbers::ln10;
    }
  }
  return {p_prev, p, log_scale};
}

}  // namespace

QuadratureRule gauss_hermite(int n) {
  if (n < 1 || n > 501)
    throw DomainError("gauss_hermite: n must be in [1, 501], got " + std::to_string(n));
  QuadratureRule rule;
  if (n == 1) {
    rule.nodes = {0.0};
    rule.weights = {1.0};
    return rule;
  }
  // Nodes from Golub-Welsch, polished by Newton on p_n; weights from the
  // Christoffel formula w = 1 / (n p_{n-1}(x)^2), evaluated in log space.
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(n - 1);
  for (int k = 1; k < n; ++k) sub(k - 1) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw DomainError("gauss_hermite: eigensolver failed");
  const Eigen::VectorXd& eig = solver.eigenvalues();

  const double sqrt_n = std::sqrt(static_cast<double>(n));
  std::vector<double> nodes(n), log_w(n);
  for (int i = 0; i < n; ++i) {
    double x = 0.5 * (eig(i) - eig(n - 1 - i));
    for (int it = 0; it < 2; ++it) {
      const HermiteTail t = orthonormal_hermite(n, x);
      x -= t.last / (sqrt_n * t.prev);
    }
    nodes[i] = x;
  }
  for (int i = 0; i < n; ++i) {
    const double x = 0.5 * (nodes[i] - nodes[n - 1 - i]);
    nodes[i] = x;
    const HermiteTail t = orthonormal_hermite(n, x);
    log_w[i] = -std::log(static_cast<double>(n)) - 2.0 * (std::log(std::abs(t.prev)) + t.log_scale);
  }
  // Extreme nodes of very large rules carry weights below the smallest
  // double; they are dropped so that every retained weight is positive.
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double w = std::exp(log_w[i]);
    if (w > 0.0) {
      rule.nodes.push_back(nodes[i]);
      rule.weights.push_back(w);
      total += w;
    }
  }
  for (double& w : rule.weights) w /= total;
  return rule;
}

}  // namespace heywood
