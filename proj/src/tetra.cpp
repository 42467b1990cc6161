#include "heywood/tetra.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "heywood/errors.hpp"

namespace heywood {

namespace {

struct CellProbs {
  std::array<double, 4> p;  // 00, 01, 10, 11
  double density;           // phi2(tau_x, tau_y, rho)
};

CellProbs cell_probs(double tau_x, double tau_y, double rho) {
  const double f00 = bivariate_normal_cdf(tau_x, tau_y, rho);
  const double fx = std_normal_cdf(tau_x);
  const double fy = std_normal_cdf(tau_y);
  constexpr double tiny = 1e-300;
  CellProbs c;
  c.p = {std::max(f00, tiny), std::max(fx - f00, tiny), std::max(fy - f00, tiny),
         std::max(1.0 - fx - fy + f00, tiny)};
  c.density = bivariate_normal_pdf(tau_x, tau_y, rho);
  return c;
}

constexpr std::array<double, 4> kCellSign = {1.0, -1.0, -1.0, 1.0};

std::array<double, 4> cells(const Contingency2x2& t) { return {t.n00, t.n01, t.n10, t.n11}; }

// d log phi2 / d rho
double log_density_slope(double h, double k, double rho) {
  const double q = 1.0 - rho * rho;
  return rho / q + (h * k * (1.0 + rho * rho) - rho * (h * h + k * k)) / (q * q);
}

Contingency2x2 continuity_corrected(const Contingency2x2& t, bool& corrected) {
  Contingency2x2 c = t;
  corrected = false;
  for (double* v : {&c.n00, &c.n01, &c.n10, &c.n11}) {
    if (*v == 0.0) {
      *v = 0.5;
      corrected = true;
    }
  }
  return c;
}

// Pearson-style starting value from the odds ratio (Yule's Y mapping).
double start_value(const Contingency2x2& t) {
  const double odds = (t.n00 * t.n11) / (t.n01 * t.n10);
  const double r = std::cos(std::numbers::pi / (1.0 + std::sqrt(odds)));
  return std::clamp(r, -0.99, 0.99);
}

double solve_rho(const Contingency2x2& t, double tau_x, double tau_y) {
  const double n = t.total();
  const auto score = [&](double r) { return tetrachoric_score(t, tau_x, tau_y, r) / n; };
  double lo = -kRhoBound;
  double hi = kRhoBound;
  if (score(hi) >= 0.0) return hi;
  if (score(lo) <= 0.0) return lo;

  const auto counts = cells(t);
  double r = start_value(t);
  for (int it = 0; it < 200; ++it) {
    const CellProbs c = cell_probs(tau_x, tau_y, r);
    double s = 0.0;
    double curvature = 0.0;
    for (int j = 0; j < 4; ++j) {
      s += kCellSign[j] * counts[j] / c.p[j];
      curvature += counts[j] / (c.p[j] * c.p[j]);
    }
    const double g = c.density * s / n;
    if (std::abs(g) <= 1e-12) return r;
    if (g > 0.0) lo = r; else hi = r;
    const double h = (c.density * log_density_slope(tau_x, tau_y, r) * s -
                      c.density * c.density * curvature) / n;
    double next = (h < 0.0) ? r - g / h : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (hi - lo < 1e-15) return next;
    r = next;
  }
  return r;
}

}  // namespace

Contingency2x2 contingency_2x2(std::span<const std::uint8_t> x, std::span<const std::uint8_t> y) {
  if (x.size() != y.size()) throw DomainError("contingency_2x2: columns differ in length");
  if (x.size() < 2) throw DomainError("contingency_2x2: need at least 2 observations");
  std::array<std::size_t, 4> n{};
  for (std::size_t i = 0; i < x.size(); ++i) ++n[2 * x[i] + y[i]];
  return {static_cast<double>(n[0]), static_cast<double>(n[1]), static_cast<double>(n[2]),
          static_cast<double>(n[3])};
}

double estimate_threshold(double p1) {
  if (!(p1 > 0.0 && p1 < 1.0))
    throw DegenerateMargin("proportion of ones is " + std::to_string(p1) +
                           "; the variable carries no information");
  return std_normal_quantile(1.0 - p1);
}

double tetrachoric_loglik(const Contingency2x2& t, double tau_x, double tau_y, double rho) {
  const CellProbs c = cell_probs(tau_x, tau_y, rho);
  const auto counts = cells(t);
  double ll = 0.0;
  for (int j = 0; j < 4; ++j)
    if (counts[j] > 0.0) ll += counts[j] * std::log(c.p[j]);
  return ll;
}

double tetrachoric_score(const Contingency2x2& t, double tau_x, double tau_y, double rho) {
  const CellProbs c = cell_probs(tau_x, tau_y, rho);
  const auto counts = cells(t);
  double s = 0.0;
  for (int j = 0; j < 4; ++j) s += kCellSign[j] * counts[j] / c.p[j];
  return c.density * s;
}

TetrachoricPair tetrachoric_given_thresholds(const Contingency2x2& table, double tau_x,
                                             double tau_y) {
  bool corrected = false;
  const Contingency2x2 t = continuity_corrected(table, corrected);
  TetrachoricPair out;
  out.tau_x = tau_x;
  out.tau_y = tau_y;
  out.rho = solve_rho(t, tau_x, tau_y);
  out.boundary = corrected || std::abs(out.rho) >= kRhoBound - 1e-6;
  return out;
}

TetrachoricPair estimate_tetrachoric_pair(const Contingency2x2& table) {
  if (table.total() < 2) throw DomainError("estimate_tetrachoric_pair: total must be >= 2");
  bool corrected = false;
  const Contingency2x2 t = continuity_corrected(table, corrected);
  const double n = t.total();
  const double tau_x = estimate_threshold((t.n10 + t.n11) / n);
  const double tau_y = estimate_threshold((t.n01 + t.n11) / n);
  TetrachoricPair out = tetrachoric_given_thresholds(t, tau_x, tau_y);
  out.boundary = out.boundary || corrected;
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> lower_pairs(std::size_t p) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(p * (p - 1) / 2);
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t i = j + 1; i < p; ++i) out.emplace_back(i, j);
  return out;
}

bool TetrachoricSummary::any_boundary() const {
  return std::any_of(boundary_flags.begin(), boundary_flags.end(), [](bool b) { return b; });
}

Eigen::VectorXd TetrachoricSummary::unique_correlations() const {
  const auto pairs = lower_pairs(p());
  Eigen::VectorXd s(static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t k = 0; k < pairs.size(); ++k)
    s(static_cast<Eigen::Index>(k)) = rho(pairs[k].first, pairs[k].second);
  return s;
}

TetrachoricSummary summary_from_correlations(const SymmetricMatrix& rho, std::size_t n) {
  TetrachoricSummary s;
  s.n = n;
  s.taus.assign(static_cast<std::size_t>(rho.dim()), 0.0);
  s.rho = rho;
  s.boundary_flags.assign(lower_pairs(s.taus.size()).size(), false);
  return s;
}

TetrachoricSummary tetrachoric_matrix(const BinaryDataset& data) {
  const std::size_t p = data.cols();
  if (p < 2) throw DomainError("tetrachoric_matrix: need at least 2 columns");
  TetrachoricSummary s;
  s.n = data.rows();
  s.taus.resize(p);
  std::vector<std::vector<std::uint8_t>> columns(p);
  for (std::size_t j = 0; j < p; ++j) {
    columns[j] = data.column(j);
    const double p1 = data.proportion_ones(j);
    if (!(p1 > 0.0 && p1 < 1.0))
      throw DegenerateMargin("column " + std::to_string(j + 1) + " (" + data.names()[j] +
                             ") is constant");
    s.taus[j] = estimate_threshold(p1);
  }
  s.rho = SymmetricMatrix::identity(static_cast<Eigen::Index>(p));
  for (const auto& [i, j] : lower_pairs(p)) {
    const Contingency2x2 t = contingency_2x2(columns[i], columns[j]);
    const TetrachoricPair est = tetrachoric_given_thresholds(t, s.taus[i], s.taus[j]);
    s.rho.set(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j), est.rho);
    s.boundary_flags.push_back(est.boundary);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(s.rho.matrix());
  s.positive_definite = llt.info() == Eigen::Success;
  return s;
}

namespace {

// Per-pattern estimating functions: thresholds first, then pair scores.
struct EstimatingSystem {
  std::size_t p;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;

  std::size_t size() const { return p + pairs.size(); }

  // psi for one response vector
  Eigen::VectorXd psi(std::span<const std::uint8_t> y, const Eigen::VectorXd& theta) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < p; ++i)
      out(static_cast<Eigen::Index>(i)) = (y[i] == 0 ? 1.0 : 0.0) -
                                          std_normal_cdf(theta(static_cast<Eigen::Index>(i)));
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const auto [i, j] = pairs[k];
      const double ti = theta(static_cast<Eigen::Index>(i));
      const double tj = theta(static_cast<Eigen::Index>(j));
      const double r = theta(static_cast<Eigen::Index>(p + k));
      const CellProbs c = cell_probs(ti, tj, r);
      const int cell = 2 * y[i] + y[j];
      out(static_cast<Eigen::Index>(p + k)) = kCellSign[cell] * c.density / c.p[cell];
    }
    return out;
  }
};

}  // namespace

Eigen::MatrixXd acov_tetrachoric(const BinaryDataset& data, const TetrachoricSummary& summary) {
  if (summary.any_boundary())
    throw DomainError("acov_tetrachoric: summary has boundary correlations");
  const std::size_t p = data.cols();
  if (summary.p() != p) throw DomainError("acov_tetrachoric: summary/dataset size mismatch");

  EstimatingSystem sys{p, lower_pairs(p)};
  const auto dim = static_cast<Eigen::Index>(sys.size());
  Eigen::VectorXd theta(dim);
  for (std::size_t i = 0; i < p; ++i) theta(static_cast<Eigen::Index>(i)) = summary.taus[i];
  for (std::size_t k = 0; k < sys.pairs.size(); ++k)
    theta(static_cast<Eigen::Index>(p + k)) = summary.rho(sys.pairs[k].first, sys.pairs[k].second);

  // Collapse identical response patterns; p is small in every intended use.
  std::vector<std::vector<std::uint8_t>> patterns;
  std::vector<double> freq;
  {
    for (std::size_t r = 0; r < data.rows(); ++r) {
      std::vector<std::uint8_t> row(data.row(r).begin(), data.row(r).end());
      auto it = std::find(patterns.begin(), patterns.end(), row);
      if (it == patterns.end()) {
        patterns.push_back(std::move(row));
        freq.push_back(1.0);
      } else {
        freq[static_cast<std::size_t>(it - patterns.begin())] += 1.0;
      }
    }
  }
  const double n = static_cast<double>(data.rows());

  auto mean_psi = [&](const Eigen::VectorXd& th) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(dim);
    for (std::size_t q = 0; q < patterns.size(); ++q) m += freq[q] * sys.psi(patterns[q], th);
    return Eigen::VectorXd(m / n);
  };

  constexpr double step = 1e-5;
  Eigen::MatrixXd a(dim, dim);
  for (Eigen::Index k = 0; k < dim; ++k) {
    Eigen::VectorXd up = theta, down = theta;
    up(k) += step;
    down(k) -= step;
    a.col(k) = (mean_psi(up) - mean_psi(down)) / (2.0 * step);
  }
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(dim, dim);
  for (std::size_t q = 0; q < patterns.size(); ++q) {
    const Eigen::VectorXd v = sys.psi(patterns[q], theta);
    b.noalias() += freq[q] * v * v.transpose();
  }
  b /= n;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& sv = svd.singularValues();
  const double cond = sv(0) / sv(sv.size() - 1);
  if (!(cond <= 1e12))
    throw SingularSandwich("acov_tetrachoric: Jacobian condition number " + std::to_string(cond));

  const Eigen::MatrixXd a_inv = a.inverse();
  Eigen::MatrixXd v = a_inv * b * a_inv.transpose() / n;
  const auto m = static_cast<Eigen::Index>(sys.pairs.size());
  const auto off = static_cast<Eigen::Index>(p);
  Eigen::MatrixXd block = v.block(off, off, m, m);
  return 0.5 * (block + block.transpose());
}

}  // namespace heywood
