#pragma once

// Replicated three-approach comparison: simulate, dichotomize, fit delta and
// theta factor models under each estimator plus the 2PL model, and tabulate
// how the outcomes co-occur.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "heywood/irt.hpp"
#include "heywood/numcore.hpp"
#include "heywood/ordfa.hpp"

namespace heywood {

struct StudyConfig {
  int replications = 100;
  std::size_t n = 200;
  SymmetricMatrix covariance = table1_covariance();
  std::string covariance_source = "table1";
  double tau = 0.0;
  std::vector<Estimator> estimators = {Estimator::wls, Estimator::wlsmv, Estimator::uls};
  std::uint64_t base_seed = 20210101;
  double extreme_threshold = 10.0;
  /// 0 means one worker per hardware thread.
  unsigned threads = 0;
  FactorFitOptions factor_options;
  IrtOptions irt_options;

  /// Throws DomainError on an invalid configuration.
  void validate() const;
};

/// Every way a single fit can end. The first four are diagnoses; the rest
/// are errors that prevented a fit.
enum class Outcome {
  proper,
  heywood,
  nonconverged_extreme,
  nonconverged_other,
  singular_weight,
  singular_sandwich,
  degenerate_margin,
  failed
};
inline constexpr std::size_t kOutcomeCount = 8;

std::string_view to_string(Outcome o);
Outcome outcome_from(Diagnosis d);
/// Maps an error kind() tag to an outcome.
Outcome outcome_from_error(std::string_view kind);
bool is_problem(Outcome o);      // anything but proper
bool is_nonconverged(Outcome o); // no usable converged solution

struct FactorRecord {
  Estimator estimator;
  Parameterization parameterization;
  Outcome outcome = Outcome::failed;
  std::vector<double> loadings;
  std::vector<std::size_t> flagged;  // 1-based
  int iterations = 0;
  std::string error;
};

struct IrtRecord {
  Outcome outcome = Outcome::failed;  // proper when EM converged
  bool converged = false;
  std::vector<double> discriminations;
  std::vector<double> difficulties;
  std::vector<std::size_t> extreme_items;  // 1-based
  int em_cycles = 0;
  bool loglik_monotone = true;
  std::string error;
};

struct ReplicationRecord {
  std::size_t index = 0;
  std::vector<FactorRecord> factor;  // estimator-major, delta then theta
  IrtRecord irt;

  const FactorRecord* find(Estimator e, Parameterization p) const;
};

struct CellSummary {
  std::array<int, kOutcomeCount> counts{};
  std::vector<int> flag_counts;  // per variable

  int count(Outcome o) const { return counts[static_cast<std::size_t>(o)]; }
  int problems() const;
  int total() const;
};

struct IrtSummary {
  int converged = 0;
  int errors = 0;
  std::vector<int> extreme_counts;  // per variable
  std::vector<double> min_discrimination;
  std::vector<double> max_discrimination;
  int datasets_with_extreme = 0;
  bool loglik_monotone = true;
};

struct Cooccurrence {
  int delta_problems = 0;  // delta heywood or nonconverged (any problem)
  int both = 0;            // ... and theta nonconverged
  double rate() const { return delta_problems == 0 ? 1.0 : static_cast<double>(both) / delta_problems; }
};

struct StudyReport {
  StudyConfig config;
  std::vector<ReplicationRecord> ledger;
  std::map<std::pair<Estimator, Parameterization>, CellSummary> cells;
  IrtSummary irt;
  std::map<Estimator, Cooccurrence> cooccurrence;

  const CellSummary& cell(Estimator e, Parameterization p) const { return cells.at({e, p}); }
};

/// Runs one replication end to end; never throws for analysis failures.
ReplicationRecord run_replication(const StudyConfig& config, std::size_t index);

/// Aggregates a ledger (in index order) into a report.
StudyReport summarize(const StudyConfig& config, std::vector<ReplicationRecord> ledger);

StudyReport run_study(const StudyConfig& config);

struct Histogram {
  double lower = 0;
  double width = 1;
  std::vector<int> counts;

  int total() const;
  double upper() const { return lower + width * static_cast<double>(counts.size()); }
};

/// Bins of width 0.02 over [min, 0) for negative values; empty for none.
Histogram negative_residual_histogram(std::span<const double> residuals);
/// Implied residuals 1 - lambda^2 < 0 of every WLSMV-delta Heywood fit.
Histogram negative_residual_histogram(const StudyReport& report);
std::vector<double> negative_residuals(const StudyReport& report, Estimator est = Estimator::wlsmv);

/// Bins of width 1 over the observed range of per-dataset maxima.
Histogram max_discrimination_histogram(std::span<const double> maxima);
Histogram max_discrimination_histogram(const StudyReport& report);
std::vector<double> max_discriminations(const StudyReport& report);

}  // namespace heywood
