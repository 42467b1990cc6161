#pragma once

// Thresholds, tetrachoric correlations and their asymptotic covariance.

#include <Eigen/Core>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "heywood/numcore.hpp"
#include "heywood/simgen.hpp"

namespace heywood {

/// 2 x 2 table; nXY counts observations with x == X and y == Y. Counts are
/// real so the continuity correction can be represented.
struct Contingency2x2 {
  double n00 = 0;
  double n01 = 0;
  double n10 = 0;
  double n11 = 0;

  double total() const { return n00 + n01 + n10 + n11; }
};

Contingency2x2 contingency_2x2(std::span<const std::uint8_t> x, std::span<const std::uint8_t> y);

/// Threshold for a binary variable whose proportion of ones is p1.
/// Throws DegenerateMargin unless 0 < p1 < 1.
double estimate_threshold(double p1);

struct TetrachoricPair {
  double rho = 0;
  double tau_x = 0;
  double tau_y = 0;
  bool boundary = false;
};

inline constexpr double kRhoBound = 0.999;

/// Two-step ML tetrachoric correlation of one table.
TetrachoricPair estimate_tetrachoric_pair(const Contingency2x2& table);

/// ML correlation with thresholds held fixed. Zero cells receive the 0.5
/// continuity correction (and set `boundary`).
TetrachoricPair tetrachoric_given_thresholds(const Contingency2x2& table, double tau_x,
                                             double tau_y);

/// Log-likelihood of a table at (tau_x, tau_y, rho) and its rho-derivative.
double tetrachoric_loglik(const Contingency2x2& table, double tau_x, double tau_y, double rho);
double tetrachoric_score(const Contingency2x2& table, double tau_x, double tau_y, double rho);

/// (row, column) pairs with row > column, ordered column-major through the
/// lower triangle: (1,0), (2,0), ..., (p-1,0), (2,1), ...
std::vector<std::pair<std::size_t, std::size_t>> lower_pairs(std::size_t p);

struct TetrachoricSummary {
  std::size_t n = 0;
  std::vector<double> taus;
  SymmetricMatrix rho;
  /// Asymptotic covariance of the unique correlations (lower_pairs order).
  std::optional<Eigen::MatrixXd> acov;
  std::vector<bool> boundary_flags;  // lower_pairs order
  bool positive_definite = true;

  std::size_t p() const { return taus.size(); }
  bool any_boundary() const;
  /// The unique correlations in lower_pairs order.
  Eigen::VectorXd unique_correlations() const;
};

/// Summary built from a known correlation matrix (unit diagonal), with zero
/// thresholds and no asymptotic covariance. Used for population-level fits.
TetrachoricSummary summary_from_correlations(const SymmetricMatrix& rho, std::size_t n = 0);

/// Thresholds and all pairwise correlations. Throws DegenerateMargin naming
/// the first constant column.
TetrachoricSummary tetrachoric_matrix(const BinaryDataset& data);

/// Sandwich estimate of the asymptotic covariance of the stacked unique
/// correlations, accounting for the estimated thresholds. Throws
/// SingularSandwich when the estimating-equation Jacobian has condition
/// number above 1e12, DomainError when the summary carries boundary pairs.
Eigen::MatrixXd acov_tetrachoric(const BinaryDataset& data, const TetrachoricSummary& summary);

}  // namespace heywood
