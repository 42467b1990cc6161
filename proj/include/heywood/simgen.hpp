#pragma once

// Data generation for the simulation design: multivariate-normal draws on a
// reproducible counter-based stream, followed by dichotomization.

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "heywood/numcore.hpp"

namespace heywood {

struct ContinuousDataset {
  Eigen::MatrixXd values;  // n x p

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

/// n x p matrix of 0/1 responses stored row-major.
class BinaryDataset {
 public:
  BinaryDataset() = default;
  BinaryDataset(std::size_t rows, std::size_t cols);
  BinaryDataset(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> values,
                std::vector<std::string> names = {});

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  std::uint8_t operator()(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }
  void set(std::size_t i, std::size_t j, std::uint8_t v) { values_[i * cols_ + j] = v; }

  std::span<const std::uint8_t> row(std::size_t i) const {
    return {values_.data() + i * cols_, cols_};
  }
  std::vector<std::uint8_t> column(std::size_t j) const;
  double proportion_ones(std::size_t j) const;

  const std::vector<std::string>& names() const { return names_; }
  const std::vector<std::uint8_t>& values() const { return values_; }

  /// Copy with columns reordered: result column k is this column order[k].
  BinaryDataset permute_columns(std::span<const std::size_t> order) const;

  friend bool operator==(const BinaryDataset&, const BinaryDataset&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> values_;
  std::vector<std::string> names_;
};

/// Identifies one replication's random stream.
struct SeedSpec {
  std::uint64_t base_seed = 0;
  std::uint64_t replication_index = 0;
};

/// Counter-based standard-normal stream: the value at position `i` is a pure
/// function of (seed, i), so draws never depend on evaluation order.
class NormalStream {
 public:
  explicit NormalStream(SeedSpec seed);

  /// Uniform in the open interval (0, 1).
  double uniform(std::uint64_t counter) const;
  /// Standard normal at position i (Box-Muller over consecutive uniform pairs).
  double normal(std::uint64_t i) const;

 private:
  std::uint64_t key_;
};

/// The 4 x 4 correlation matrix used to generate the simulated data.
SymmetricMatrix table1_covariance();

/// n i.i.d. rows from N(0, cov). Deterministic in (cov, n, seed).
ContinuousDataset sample_mvn(const SymmetricMatrix& cov, std::size_t n, SeedSpec seed);

/// 1 where value > tau, 0 otherwise.
BinaryDataset dichotomize(const ContinuousDataset& data, double tau);

}  // namespace heywood
