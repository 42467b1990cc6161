#include "heywood/study.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "heywood/errors.hpp"
#include "heywood/simgen.hpp"
#include "heywood/tetra.hpp"

namespace heywood {

void StudyConfig::validate() const {
  if (replications < 1) throw DomainError("study: replications must be >= 1");
  if (n < 10) throw DomainError("study: n must be >= 10");
  if (covariance.dim() < 3) throw DomainError("study: covariance must have at least 3 variables");
  if (!std::isfinite(tau)) throw DomainError("study: threshold must be finite");
  if (estimators.empty()) throw DomainError("study: at least one estimator is required");
  cholesky(covariance);
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::proper: return "proper";
    case Outcome::heywood: return "heywood";
    case Outcome::nonconverged_extreme: return "nonconverged_extreme";
    case Outcome::nonconverged_other: return "nonconverged_other";
    case Outcome::singular_weight: return "singular_weight";
    case Outcome::singular_sandwich: return "singular_sandwich";
    case Outcome::degenerate_margin: return "degenerate_margin";
    case Outcome::failed: return "failed";
  }
  return "?";
}

Outcome outcome_from(Diagnosis d) {
  switch (d) {
    case Diagnosis::proper: return Outcome::proper;
    case Diagnosis::heywood: return Outcome::heywood;
    case Diagnosis::nonconverged_extreme: return Outcome::nonconverged_extreme;
    case Diagnosis::nonconverged_other: return Outcome::nonconverged_other;
  }
  return Outcome::failed;
}

Outcome outcome_from_error(std::string_view kind) {
  if (kind == "singular_weight") return Outcome::singular_weight;
  if (kind == "singular_sandwich") return Outcome::singular_sandwich;
  if (kind == "degenerate_margin") return Outcome::degenerate_margin;
  return Outcome::failed;
}

bool is_problem(Outcome o) { return o != Outcome::proper; }

bool is_nonconverged(Outcome o) { return o != Outcome::proper && o != Outcome::heywood; }

const FactorRecord* ReplicationRecord::find(Estimator e, Parameterization p) const {
  for (const auto& r : factor)
    if (r.estimator == e && r.parameterization == p) return &r;
  return nullptr;
}

int CellSummary::problems() const { return total() - count(Outcome::proper); }

int CellSummary::total() const {
  int t = 0;
  for (int c : counts) t += c;
  return t;
}

namespace {

FactorRecord fit_record(const TetrachoricSummary& summary, Estimator est, Parameterization param,
                        const FactorFitOptions& opts) {
  FactorRecord rec;
  rec.estimator = est;
  rec.parameterization = param;
  try {
    const FactorFit fit = fit_one_factor(summary, est, param, opts);
    rec.outcome = outcome_from(fit.diagnosis);
    rec.loadings.assign(fit.loadings.begin(), fit.loadings.end());
    rec.flagged = fit.flagged_variables;
    rec.iterations = fit.iterations;
  } catch (const Error& e) {
    rec.outcome = outcome_from_error(e.kind());
    rec.error = e.what();
  }
  return rec;
}

FactorRecord failed_record(Estimator est, Parameterization param, Outcome outcome,
                           const std::string& error) {
  FactorRecord rec;
  rec.estimator = est;
  rec.parameterization = param;
  rec.outcome = outcome;
  rec.error = error;
  return rec;
}

}  // namespace

ReplicationRecord run_replication(const StudyConfig& config, std::size_t index) {
  ReplicationRecord rec;
  rec.index = index;
  const BinaryDataset data = dichotomize(
      sample_mvn(config.covariance, config.n, SeedSpec{config.base_seed, index}), config.tau);

  FactorFitOptions fopts = config.factor_options;
  fopts.extreme_threshold = config.extreme_threshold;

  // Tetrachoric stage; failures mark every factor cell.
  std::optional<TetrachoricSummary> summary;
  Outcome summary_failure = Outcome::failed;
  std::string summary_error;
  try {
    summary = tetrachoric_matrix(data);
  } catch (const Error& e) {
    summary_failure = outcome_from_error(e.kind());
    summary_error = e.what();
  }
  std::optional<Outcome> acov_failure;
  std::string acov_error;
  const bool needs_acov = std::any_of(config.estimators.begin(), config.estimators.end(),
                                      [](Estimator e) { return e != Estimator::uls; });
  if (summary && needs_acov) {
    try {
      summary->acov = acov_tetrachoric(data, *summary);
    } catch (const Error& e) {
      acov_failure = e.kind() == "domain_error" ? Outcome::singular_sandwich
                                                : outcome_from_error(e.kind());
      acov_error = e.what();
    }
  }

  for (Estimator est : config.estimators) {
    for (Parameterization param : {Parameterization::delta, Parameterization::theta}) {
      if (!summary) {
        rec.factor.push_back(failed_record(est, param, summary_failure, summary_error));
      } else if (est != Estimator::uls && acov_failure) {
        rec.factor.push_back(failed_record(est, param, *acov_failure, acov_error));
      } else {
        rec.factor.push_back(fit_record(*summary, est, param, fopts));
      }
    }
  }

  IrtOptions iopts = config.irt_options;
  iopts.extreme_threshold = config.extreme_threshold;
  try {
    const IrtFit fit = fit_2pl(data, iopts);
    rec.irt.converged = fit.converged;
    rec.irt.outcome = fit.converged ? Outcome::proper : Outcome::nonconverged_other;
    rec.irt.discriminations.assign(fit.discriminations.begin(), fit.discriminations.end());
    rec.irt.difficulties.assign(fit.difficulties.begin(), fit.difficulties.end());
    rec.irt.extreme_items = fit.extreme_items;
    rec.irt.em_cycles = fit.em_cycles;
    for (std::size_t k = 1; k < fit.loglik_trace.size(); ++k)
      if (fit.loglik_trace[k] < fit.loglik_trace[k - 1] - 1e-8) rec.irt.loglik_monotone = false;
  } catch (const Error& e) {
    rec.irt.outcome = e.kind() == "nonconvergence" ? Outcome::nonconverged_other
                                                   : outcome_from_error(e.kind());
    rec.irt.error = e.what();
  }
  return rec;
}

StudyReport summarize(const StudyConfig& config, std::vector<ReplicationRecord> ledger) {
  StudyReport report;
  report.config = config;
  report.ledger = std::move(ledger);
  const auto p = static_cast<std::size_t>(config.covariance.dim());

  for (Estimator est : config.estimators) {
    for (Parameterization param : {Parameterization::delta, Parameterization::theta}) {
      CellSummary cell;
      cell.flag_counts.assign(p, 0);
      for (const auto& rep : report.ledger) {
        const FactorRecord* r = rep.find(est, param);
        if (!r) continue;
        ++cell.counts[static_cast<std::size_t>(r->outcome)];
        for (std::size_t v : r->flagged) ++cell.flag_counts[v - 1];
      }
      report.cells[{est, param}] = cell;
    }
    Cooccurrence co;
    for (const auto& rep : report.ledger) {
      const FactorRecord* d = rep.find(est, Parameterization::delta);
      const FactorRecord* t = rep.find(est, Parameterization::theta);
      if (!d || !t || !is_problem(d->outcome)) continue;
      ++co.delta_problems;
      if (is_nonconverged(t->outcome)) ++co.both;
    }
    report.cooccurrence[est] = co;
  }

  IrtSummary& irt = report.irt;
  irt.extreme_counts.assign(p, 0);
  irt.min_discrimination.assign(p, std::numeric_limits<double>::infinity());
  irt.max_discrimination.assign(p, -std::numeric_limits<double>::infinity());
  for (const auto& rep : report.ledger) {
    if (rep.irt.discriminations.empty()) {
      ++irt.errors;
      continue;
    }
    if (rep.irt.converged) ++irt.converged;
    if (!rep.irt.loglik_monotone) irt.loglik_monotone = false;
    if (!rep.irt.extreme_items.empty()) ++irt.datasets_with_extreme;
    for (std::size_t v : rep.irt.extreme_items) ++irt.extreme_counts[v - 1];
    for (std::size_t j = 0; j < p; ++j) {
      irt.min_discrimination[j] = std::min(irt.min_discrimination[j], rep.irt.discriminations[j]);
      irt.max_discrimination[j] = std::max(irt.max_discrimination[j], rep.irt.discriminations[j]);
    }
  }
  return report;
}

StudyReport run_study(const StudyConfig& config) {
  config.validate();
  const auto reps = static_cast<std::size_t>(config.replications);
  std::vector<ReplicationRecord> ledger(reps);
  unsigned workers = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, reps));

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < reps; k = next++) ledger[k] = run_replication(config, k);
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  return summarize(config, std::move(ledger));
}

int Histogram::total() const {
  int t = 0;
  for (int c : counts) t += c;
  return t;
}

Histogram negative_residual_histogram(std::span<const double> residuals) {
  constexpr double width = 0.02;
  Histogram h;
  h.width = width;
  double lo = 0.0;
  for (double r : residuals)
    if (r < 0.0) lo = std::min(lo, r);
  if (lo == 0.0) return h;
  const auto bins = static_cast<std::size_t>(std::ceil(-lo / width - 1e-12));
  h.lower = -width * static_cast<double>(bins);
  h.counts.assign(bins, 0);
  for (double r : residuals) {
    if (!(r < 0.0)) continue;
    auto k = static_cast<std::size_t>(std::floor((r - h.lower) / width));
    ++h.counts[std::min(k, bins - 1)];
  }
  return h;
}

std::vector<double> negative_residuals(const StudyReport& report, Estimator est) {
  std::vector<double> out;
  for (const auto& rep : report.ledger) {
    const FactorRecord* r = rep.find(est, Parameterization::delta);
    if (!r || r->outcome != Outcome::heywood) continue;
    for (double l : r->loadings)
      if (1.0 - l * l < 0.0) out.push_back(1.0 - l * l);
  }
  return out;
}

Histogram negative_residual_histogram(const StudyReport& report) {
  const auto values = negative_residuals(report, Estimator::wlsmv);
  return negative_residual_histogram(values);
}

Histogram max_discrimination_histogram(std::span<const double> maxima) {
  Histogram h;
  h.width = 1.0;
  if (maxima.empty()) return h;
  const auto [lo, hi] = std::minmax_element(maxima.begin(), maxima.end());
  h.lower = std::floor(*lo);
  const auto bins = static_cast<std::size_t>(std::floor(*hi) - h.lower) + 1;
  h.counts.assign(bins, 0);
  for (double m : maxima) ++h.counts[static_cast<std::size_t>(std::floor(m) - h.lower)];
  return h;
}

std::vector<double> max_discriminations(const StudyReport& report) {
  std::vector<double> out;
  for (const auto& rep : report.ledger) {
    if (rep.irt.discriminations.empty()) continue;
    double m = 0.0;
    for (double a : rep.irt.discriminations) m = std::max(m, std::abs(a));
    out.push_back(m);
  }
  return out;
}

Histogram max_discrimination_histogram(const StudyReport& report) {
  const auto values = max_discriminations(report);
  return max_discrimination_histogram(values);
}

}  // namespace heywood
