#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "heywood/errors.hpp"
#include "heywood/simgen.hpp"
#include "heywood/tetra.hpp"
#include "oracles.hpp"

using namespace heywood;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Cell log-likelihood with x = 0 meaning V <= tau, computed from the
// quadrature oracle rather than the library's bivariate cdf.
double oracle_loglik(const Contingency2x2& t, double tx, double ty, double rho) {
  const double p00 = oracle::bvn_cdf(tx, ty, rho);
  const double p01 = oracle::Phi(tx) - p00;
  const double p10 = oracle::Phi(ty) - p00;
  const double p11 = 1.0 - oracle::Phi(tx) - oracle::Phi(ty) + p00;
  return t.n00 * std::log(p00) + t.n01 * std::log(p01) + t.n10 * std::log(p10) + t.n11 * std::log(p11);
}

// Golden-section maximization on [-0.999, 0.999].
double oracle_rho(const Contingency2x2& t, double tx, double ty) {
  double a = -0.999, b = 0.999;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = oracle_loglik(t, tx, ty, c), fd = oracle_loglik(t, tx, ty, d);
  while (b - a > 1e-9) {
    if (fc > fd) {
      b = d, d = c, fd = fc;
      c = b - g * (b - a);
      fc = oracle_loglik(t, tx, ty, c);
    } else {
      a = c, c = d, fc = fd;
      d = a + g * (b - a);
      fd = oracle_loglik(t, tx, ty, d);
    }
  }
  return 0.5 * (a + b);
}

BinaryDataset resample(const BinaryDataset& d, oracle::Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, d.rows() - 1);
  BinaryDataset out(d.rows(), d.cols());
  for (std::size_t i = 0; i < d.rows(); ++i) {
    const std::size_t src = pick(rng);
    for (std::size_t j = 0; j < d.cols(); ++j) out.set(i, j, d(src, j));
  }
  return out;
}

Eigen::MatrixXd bootstrap_cov(const BinaryDataset& d, int resamples, std::uint64_t seed) {
  oracle::Rng rng(seed);
  const std::size_t m = d.cols() * (d.cols() - 1) / 2;
  Eigen::MatrixXd draws(resamples, static_cast<Eigen::Index>(m));
  for (int b = 0; b < resamples; ++b) draws.row(b) = tetrachoric_matrix(resample(d, rng)).unique_correlations().transpose();
  const Eigen::MatrixXd c = draws.rowwise() - draws.colwise().mean();
  return c.transpose() * c / static_cast<double>(resamples - 1);
}

Contingency2x2 table_from(double n00, double n01, double n10, double n11) { return {n00, n01, n10, n11}; }

}  // namespace

TEST_CASE("contingency counts") {
  const std::vector<std::uint8_t> x{0, 0, 1, 1}, y{0, 1, 0, 1};
  const Contingency2x2 t = contingency_2x2(x, y);
  CHECK(t.n00 == 1);
  CHECK(t.n01 == 1);
  CHECK(t.n10 == 1);
  CHECK(t.n11 == 1);
  const Contingency2x2 same = contingency_2x2(x, x);
  CHECK(same.n01 == 0);
  CHECK(same.n10 == 0);
  CHECK(same.n00 == 2);
  CHECK(same.n11 == 2);
}

TEST_CASE("contingency counts partition the sample") {
  oracle::Rng rng(17);
  std::bernoulli_distribution coin(0.3);
  std::uniform_int_distribution<int> len(2, 300);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = len(rng);
    std::vector<std::uint8_t> x(n), y(n);
    int n11 = 0;
    for (int i = 0; i < n; ++i) {
      x[i] = coin(rng);
      y[i] = coin(rng);
      n11 += x[i] && y[i];
    }
    const Contingency2x2 t = contingency_2x2(x, y);
    CHECK(t.total() == n);
    CHECK(t.n11 == n11);
  }
}

TEST_CASE("thresholds from margins") {
  CHECK_THAT(estimate_threshold(0.5), WithinAbs(0.0, 1e-15));
  CHECK_THAT(estimate_threshold(0.975), WithinAbs(-1.959964, 1e-5));
  CHECK_THROWS_AS(estimate_threshold(1.0), DegenerateMargin);
  CHECK_THROWS_AS(estimate_threshold(0.0), DegenerateMargin);
  for (double p = 0.01; p < 1.0; p += 0.01) CHECK_THAT(std_normal_cdf(-estimate_threshold(p)), WithinAbs(p, 1e-10));
}

TEST_CASE("tetrachoric pair examples") {
  const TetrachoricPair flat = estimate_tetrachoric_pair(table_from(25, 25, 25, 25));
  CHECK_THAT(flat.rho, WithinAbs(0.0, 1e-8));
  CHECK_THAT(flat.tau_x, WithinAbs(0.0, 1e-15));
  CHECK_THAT(flat.tau_y, WithinAbs(0.0, 1e-15));
  CHECK_FALSE(flat.boundary);

  const TetrachoricPair strong = estimate_tetrachoric_pair(table_from(40, 10, 10, 40));
  CHECK_THAT(strong.rho, WithinAbs(std::sin(0.3 * std::numbers::pi), 1e-4));
  CHECK_THAT(strong.rho, WithinAbs(0.809017, 1e-4));

  const TetrachoricPair perfect = estimate_tetrachoric_pair(table_from(100, 0, 0, 100));
  CHECK(perfect.boundary);
  CHECK(perfect.rho > 0.99);
  CHECK(perfect.rho <= kRhoBound);
}

TEST_CASE("tetrachoric pair matches a brute-force maximizer") {
  oracle::Rng rng(23);
  std::uniform_int_distribution<int> cell(3, 120);
  for (int trial = 0; trial < 40; ++trial) {
    const Contingency2x2 t = table_from(cell(rng), cell(rng), cell(rng), cell(rng));
    const TetrachoricPair got = estimate_tetrachoric_pair(t);
    CHECK_THAT(got.tau_x, WithinAbs(std_normal_quantile((t.n00 + t.n01) / t.total()), 1e-10));
    CHECK_THAT(got.tau_y, WithinAbs(std_normal_quantile((t.n00 + t.n10) / t.total()), 1e-10));
    if (std::abs(got.rho) < 0.99) CHECK_THAT(got.rho, WithinAbs(oracle_rho(t, got.tau_x, got.tau_y), 1e-6));
  }
}

TEST_CASE("score vanishes at the estimate and matches finite differences") {
  oracle::Rng rng(29);
  std::uniform_int_distribution<int> cell(5, 90);
  for (int trial = 0; trial < 40; ++trial) {
    const Contingency2x2 t = table_from(cell(rng), cell(rng), cell(rng), cell(rng));
    const TetrachoricPair r = estimate_tetrachoric_pair(t);
    if (r.boundary || std::abs(r.rho) > 0.99) continue;
    const double h = 1e-5;
    const double fd = (tetrachoric_loglik(t, r.tau_x, r.tau_y, r.rho + h) -
                       tetrachoric_loglik(t, r.tau_x, r.tau_y, r.rho - h)) / (2 * h);
    CHECK(std::abs(fd) <= 1e-6 * std::max(1.0, t.total()));
    CHECK(std::abs(tetrachoric_score(t, r.tau_x, r.tau_y, r.rho)) <= 1e-6);
    // and the analytic score agrees with FD away from the optimum
    const double rho2 = 0.5 * r.rho + 0.2;
    const double fd2 = (tetrachoric_loglik(t, r.tau_x, r.tau_y, rho2 + h) -
                        tetrachoric_loglik(t, r.tau_x, r.tau_y, rho2 - h)) / (2 * h);
    CHECK_THAT(tetrachoric_score(t, r.tau_x, r.tau_y, rho2), WithinAbs(fd2, 1e-5 * std::max(1.0, std::abs(fd2))));
    CHECK_THAT(tetrachoric_loglik(t, r.tau_x, r.tau_y, rho2), WithinRel(oracle_loglik(t, r.tau_x, r.tau_y, rho2), 1e-10));
  }
}

TEST_CASE("transposed table gives the same correlation") {
  oracle::Rng rng(31);
  std::uniform_int_distribution<int> cell(1, 80);
  for (int trial = 0; trial < 50; ++trial) {
    const Contingency2x2 t = table_from(cell(rng), cell(rng), cell(rng), cell(rng));
    const Contingency2x2 tt = table_from(t.n00, t.n10, t.n01, t.n11);
    const TetrachoricPair a = estimate_tetrachoric_pair(t), b = estimate_tetrachoric_pair(tt);
    CHECK_THAT(b.rho, WithinAbs(a.rho, 1e-10));
    CHECK_THAT(b.tau_x, WithinAbs(a.tau_y, 1e-15));
  }
}

TEST_CASE("zero thresholds follow the orthant closed form") {
  for (int k = 5; k <= 45; k += 5) {
    const double n11 = k, n10 = 50 - k;
    const TetrachoricPair r = estimate_tetrachoric_pair(table_from(n11, n10, n10, n11));
    const double p11 = n11 / 100.0;
    CHECK_THAT(r.rho, WithinAbs(std::sin(2.0 * std::numbers::pi * (p11 - 0.25)), 1e-4));
  }
}

TEST_CASE("tetrachoric matrix on two columns reduces to the pair") {
  const auto data = dichotomize(sample_mvn(table1_covariance(), 400, {3, 0}), 0.0);
  const std::vector<std::size_t> keep{0, 2};
  BinaryDataset two(data.rows(), 2);
  for (std::size_t i = 0; i < data.rows(); ++i) {
    two.set(i, 0, data(i, 0));
    two.set(i, 1, data(i, 2));
  }
  const TetrachoricSummary s = tetrachoric_matrix(two);
  const TetrachoricPair p = estimate_tetrachoric_pair(contingency_2x2(two.column(0), two.column(1)));
  CHECK(s.rho(1, 0) == p.rho);
  CHECK(s.rho(0, 0) == 1.0);
  CHECK(s.rho(1, 1) == 1.0);
  CHECK(s.taus[0] == p.tau_x);
  CHECK(s.taus[1] == p.tau_y);
}

TEST_CASE("tetrachoric matrix is consistent for a large sample") {
  const SymmetricMatrix cov = table1_covariance();
  const TetrachoricSummary s = tetrachoric_matrix(dichotomize(sample_mvn(cov, 100000, {11, 0}), 0.0));
  CHECK((s.rho.matrix() - cov.matrix()).cwiseAbs().maxCoeff() <= 0.03);
  CHECK_FALSE(s.any_boundary());
  CHECK(s.positive_definite);
}

TEST_CASE("tetrachoric matrix invariants on random data") {
  oracle::Rng rng(37);
  std::uniform_real_distribution<double> tau(-0.8, 0.8);
  for (std::uint64_t r = 0; r < 20; ++r) {
    const auto data = dichotomize(sample_mvn(table1_covariance(), 200, {101, r}), tau(rng));
    const TetrachoricSummary s = tetrachoric_matrix(data);
    for (std::size_t j = 0; j < s.p(); ++j) {
      CHECK(s.rho(j, j) == 1.0);
      CHECK_THAT(std_normal_cdf(-s.taus[j]), WithinAbs(data.proportion_ones(j), 1e-10));
    }
    CHECK(s.rho.max_abs() <= 1.0);
    for (auto [i, j] : lower_pairs(s.p())) CHECK(std::abs(s.rho(i, j)) <= kRhoBound);
  }
}

TEST_CASE("column permutation permutes the correlation matrix") {
  const auto data = dichotomize(sample_mvn(table1_covariance(), 300, {13, 2}), 0.0);
  const std::vector<std::size_t> order{2, 0, 3, 1};
  const TetrachoricSummary s = tetrachoric_matrix(data), t = tetrachoric_matrix(data.permute_columns(order));
  for (std::size_t a = 0; a < 4; ++a) {
    CHECK(t.taus[a] == s.taus[order[a]]);
    for (std::size_t b = 0; b < 4; ++b) CHECK_THAT(t.rho(a, b), WithinAbs(s.rho(order[a], order[b]), 1e-12));
  }
}

TEST_CASE("degenerate column is reported") {
  BinaryDataset d(4, 3, {0, 1, 1, 1, 1, 1, 0, 0, 1, 1, 0, 1});
  try {
    tetrachoric_matrix(d);
    FAIL("expected DegenerateMargin");
  } catch (const DegenerateMargin& e) {
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
}

TEST_CASE("lower pairs are column-major") {
  const auto pairs = lower_pairs(4);
  const std::vector<std::pair<std::size_t, std::size_t>> want{{1, 0}, {2, 0}, {3, 0}, {2, 1}, {3, 1}, {3, 2}};
  CHECK(pairs == want);
}

TEST_CASE("asymptotic covariance within 15% of a 200-resample bootstrap") {
  const auto data = dichotomize(sample_mvn(table1_covariance(), 2000, {20210101, 77}), 0.0);
  const TetrachoricSummary s = tetrachoric_matrix(data);
  const Eigen::MatrixXd acov = acov_tetrachoric(data, s);
  CHECK((acov - acov.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  const Eigen::MatrixXd boot = bootstrap_cov(data, 200, 4242);
  for (Eigen::Index k = 0; k < acov.rows(); ++k) {
    INFO("pair " << k << " sandwich " << acov(k, k) << " bootstrap " << boot(k, k));
    CHECK(acov(k, k) > 0.0);
    CHECK(std::abs(acov(k, k) - boot(k, k)) <= 0.15 * boot(k, k));
  }
}

TEST_CASE("asymptotic covariance within 5% of a 5000-resample bootstrap") {
  // The bootstrap variance itself has relative standard error sqrt(2 / B);
  // at B = 5000 that is 2%.
  for (std::uint64_t rep : {77, 78}) {
    const auto data = dichotomize(sample_mvn(table1_covariance(), 2000, {20210101, rep}), 0.0);
    const TetrachoricSummary s = tetrachoric_matrix(data);
    const Eigen::MatrixXd acov = acov_tetrachoric(data, s);
    const Eigen::MatrixXd boot = bootstrap_cov(data, 5000, 4242);
    for (Eigen::Index k = 0; k < acov.rows(); ++k) {
      INFO("replication " << rep << " pair " << k << " sandwich " << acov(k, k) << " bootstrap " << boot(k, k));
      CHECK(std::abs(acov(k, k) - boot(k, k)) <= 0.05 * boot(k, k));
    }
  }
}

TEST_CASE("asymptotic covariance of independent columns is diagonal") {
  const auto data = dichotomize(sample_mvn(SymmetricMatrix::identity(4), 2000, {555, 0}), 0.0);
  const TetrachoricSummary s = tetrachoric_matrix(data);
  const Eigen::MatrixXd acov = acov_tetrachoric(data, s);
  const int resamples = 200;
  const Eigen::MatrixXd boot = bootstrap_cov(data, resamples, 99);
  for (Eigen::Index i = 0; i < acov.rows(); ++i)
    for (Eigen::Index j = 0; j < i; ++j) {
      // standard error of a covariance estimate from uncorrelated draws
      const double se = std::sqrt(boot(i, i) * boot(j, j) / resamples);
      INFO("entry " << i << "," << j << " = " << acov(i, j) << " se " << se);
      CHECK(std::abs(acov(i, j)) <= 3.0 * se);
    }
}

TEST_CASE("asymptotic covariance refuses boundary pairs") {
  BinaryDataset d(6, 3, {0, 0, 1, 0, 0, 0, 1, 1, 0, 1, 1, 1, 0, 0, 1, 1, 1, 0});
  const TetrachoricSummary s = tetrachoric_matrix(d);
  REQUIRE(s.any_boundary());
  CHECK_THROWS_AS(acov_tetrachoric(d, s), DomainError);
}

TEST_CASE("summary from known correlations") {
  const TetrachoricSummary s = summary_from_correlations(table1_covariance(), 200);
  CHECK(s.p() == 4);
  CHECK(s.n == 200);
  CHECK_FALSE(s.acov.has_value());
  const Eigen::VectorXd u = s.unique_correlations();
  REQUIRE(u.size() == 6);
  CHECK(u(0) == 0.10);
  CHECK(u(1) == 0.48);
  CHECK(u(3) == 0.76);
}
