#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "heywood/errors.hpp"
#include "heywood/study.hpp"

using namespace heywood;
using Catch::Matchers::WithinAbs;

namespace {

StudyConfig small_config(int replications, std::uint64_t seed) {
  StudyConfig c;
  c.replications = replications;
  c.base_seed = seed;
  c.threads = 2;
  return c;
}

const StudyReport& shared_report() {
  static const StudyReport r = run_study(small_config(12, 31337));
  return r;
}

bool same_records(const ReplicationRecord& a, const ReplicationRecord& b) {
  if (a.index != b.index || a.factor.size() != b.factor.size()) return false;
  for (std::size_t k = 0; k < a.factor.size(); ++k) {
    const FactorRecord &x = a.factor[k], &y = b.factor[k];
    if (x.outcome != y.outcome || x.loadings != y.loadings || x.flagged != y.flagged || x.iterations != y.iterations)
      return false;
  }
  return a.irt.discriminations == b.irt.discriminations && a.irt.difficulties == b.irt.difficulties &&
         a.irt.em_cycles == b.irt.em_cycles && a.irt.outcome == b.irt.outcome;
}

}  // namespace

TEST_CASE("config validation") {
  StudyConfig c;
  CHECK_NOTHROW(c.validate());
  c.replications = 0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = StudyConfig{};
  c.n = 9;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = StudyConfig{};
  c.estimators.clear();
  CHECK_THROWS_AS(c.validate(), DomainError);
}

TEST_CASE("outcome tags") {
  CHECK(to_string(Outcome::singular_weight) == "singular_weight");
  CHECK(outcome_from(Diagnosis::heywood) == Outcome::heywood);
  CHECK(outcome_from_error("degenerate_margin") == Outcome::degenerate_margin);
  CHECK(outcome_from_error("singular_sandwich") == Outcome::singular_sandwich);
  CHECK(outcome_from_error("something_else") == Outcome::failed);
  CHECK_FALSE(is_problem(Outcome::proper));
  CHECK(is_problem(Outcome::singular_weight));
  CHECK(is_nonconverged(Outcome::nonconverged_extreme));
  CHECK_FALSE(is_nonconverged(Outcome::heywood));
}

TEST_CASE("a study is deterministic") {
  const StudyConfig c = small_config(1, 77);
  const StudyReport a = run_study(c), b = run_study(c);
  REQUIRE(a.ledger.size() == 1);
  CHECK(same_records(a.ledger[0], b.ledger[0]));
  for (const auto& [key, cell] : a.cells) CHECK(cell.counts == b.cell(key.first, key.second).counts);
}

TEST_CASE("results do not depend on the thread count") {
  StudyConfig c = small_config(4, 5);
  c.threads = 1;
  const StudyReport serial = run_study(c);
  c.threads = 3;
  const StudyReport parallel = run_study(c);
  for (std::size_t k = 0; k < 4; ++k) CHECK(same_records(serial.ledger[k], parallel.ledger[k]));
  // and a replication can be rerun on its own
  CHECK(same_records(run_replication(c, 2), serial.ledger[2]));
}

TEST_CASE("ledger consistency") {
  const StudyReport& r = shared_report();
  REQUIRE(r.ledger.size() == 12);
  for (std::size_t k = 0; k < r.ledger.size(); ++k) {
    CHECK(r.ledger[k].index == k);
    CHECK(r.ledger[k].factor.size() == 6);
    for (auto e : r.config.estimators)
      for (auto p : {Parameterization::delta, Parameterization::theta}) CHECK(r.ledger[k].find(e, p) != nullptr);
  }
  for (const auto& [key, cell] : r.cells) {
    CHECK(cell.total() == 12);
    int tally = 0;
    for (const auto& rec : r.ledger)
      if (rec.find(key.first, key.second)->outcome != Outcome::proper) ++tally;
    CHECK(cell.problems() == tally);
  }
  CHECK(r.irt.converged + r.irt.errors <= 12);
  CHECK(r.irt.loglik_monotone);
}

TEST_CASE("co-occurrence is bounded by its marginals") {
  const StudyReport& r = shared_report();
  for (auto e : r.config.estimators) {
    const Cooccurrence& c = r.cooccurrence.at(e);
    const CellSummary& delta = r.cell(e, Parameterization::delta);
    const CellSummary& theta = r.cell(e, Parameterization::theta);
    CHECK(c.delta_problems == delta.problems());
    int theta_nonconv = 0;
    for (std::size_t o = 0; o < kOutcomeCount; ++o)
      if (is_nonconverged(static_cast<Outcome>(o))) theta_nonconv += theta.counts[o];
    CHECK(c.both <= std::min(c.delta_problems, theta_nonconv));
    CHECK(c.rate() >= 0.0);
    CHECK(c.rate() <= 1.0);
  }
}

TEST_CASE("flag counts follow the ledger") {
  const StudyReport& r = shared_report();
  for (const auto& [key, cell] : r.cells) {
    std::vector<int> counts(4, 0);
    for (const auto& rec : r.ledger)
      for (std::size_t v : rec.find(key.first, key.second)->flagged) ++counts[v - 1];
    CHECK(cell.flag_counts == counts);
  }
  std::vector<int> extreme(4, 0);
  for (const auto& rec : r.ledger)
    for (std::size_t v : rec.irt.extreme_items) ++extreme[v - 1];
  CHECK(r.irt.extreme_counts == extreme);
}

TEST_CASE("negative residual histogram") {
  const std::vector<double> one{1.0 - 1.01 * 1.01};
  const Histogram h = negative_residual_histogram(one);
  CHECK(h.total() == 1);
  CHECK_THAT(h.width, WithinAbs(0.02, 1e-15));
  std::size_t bin = 0;
  for (std::size_t k = 0; k < h.counts.size(); ++k)
    if (h.counts[k]) bin = k;
  const double lo = h.lower + h.width * bin;
  CHECK(lo <= -0.0201);
  CHECK(-0.0201 < lo + h.width);
  CHECK(h.upper() <= 1e-12);
  CHECK(h.upper() >= -1e-12);

  CHECK(negative_residual_histogram(std::vector<double>{}).counts.empty());
  CHECK(negative_residual_histogram(std::vector<double>{0.3, 0.1}).counts.empty());

  const std::vector<double> many{-0.001, -0.019, -0.02, -0.05, -0.3, 0.2};
  const Histogram m = negative_residual_histogram(many);
  CHECK(m.total() == 5);
  CHECK(m.counts.back() == 2);
  CHECK(m.lower <= -0.3);
}

TEST_CASE("residual histogram counts every heywood variable") {
  const StudyReport& r = shared_report();
  const Histogram h = negative_residual_histogram(r);
  int flags = 0;
  for (const auto& rec : r.ledger) {
    const FactorRecord* f = rec.find(Estimator::wlsmv, Parameterization::delta);
    if (f->outcome == Outcome::heywood) flags += static_cast<int>(f->flagged.size());
  }
  CHECK(h.total() == flags);
  for (double v : negative_residuals(r)) CHECK(v < 0.0);
}

TEST_CASE("max discrimination histogram") {
  const std::vector<double> single{3.7};
  const Histogram h = max_discrimination_histogram(single);
  CHECK(h.total() == 1);
  CHECK(h.counts.size() == 1);
  CHECK(h.lower == 3.0);

  const std::vector<double> spread{1.2, 1.9, 4.0, 12.5};
  const Histogram s = max_discrimination_histogram(spread);
  CHECK(s.total() == 4);
  CHECK(s.lower == 1.0);
  CHECK(s.counts.front() == 2);
  CHECK(s.counts.back() == 1);
  CHECK(s.upper() > 12.5);

  const StudyReport& r = shared_report();
  const std::vector<double> maxima = max_discriminations(r);
  CHECK(static_cast<int>(maxima.size()) == 12 - r.irt.errors);
  for (double m : maxima) CHECK(m >= 1.0);
  CHECK(max_discrimination_histogram(r).total() == static_cast<int>(maxima.size()));

  StudyConfig one = small_config(1, 8);
  CHECK(max_discrimination_histogram(run_study(one)).total() == 1);
}

TEST_CASE("estimator subsets and thresholds") {
  StudyConfig c = small_config(3, 12);
  c.estimators = {Estimator::uls};
  c.tau = 0.3;
  const StudyReport r = run_study(c);
  CHECK(r.cells.size() == 2);
  CHECK(r.ledger[0].factor.size() == 2);
  CHECK(r.ledger[0].find(Estimator::wls, Parameterization::delta) == nullptr);
  CHECK(r.cooccurrence.count(Estimator::uls) == 1);
}
