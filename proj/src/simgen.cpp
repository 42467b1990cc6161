#include "heywood/simgen.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "heywood/errors.hpp"

namespace heywood {

namespace {

std::uint64_t avalanche(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<std::string> default_names(std::size_t cols) {
  std::vector<std::string> names;
  names.reserve(cols);
  for (std::size_t j = 0; j < cols; ++j) names.push_back("Y" + std::to_string(j + 1));
  return names;
}

}  // namespace

BinaryDataset::BinaryDataset(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), values_(rows * cols, 0), names_(default_names(cols)) {}

BinaryDataset::BinaryDataset(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> values,
                             std::vector<std::string> names)
    : rows_(rows), cols_(cols), values_(std::move(values)), names_(std::move(names)) {
  if (values_.size() != rows * cols)
    throw DomainError("BinaryDataset: expected " + std::to_string(rows * cols) + " values, got " +
                      std::to_string(values_.size()));
  if (names_.empty()) names_ = default_names(cols);
  if (names_.size() != cols) throw DomainError("BinaryDataset: column name count mismatch");
  for (std::uint8_t v : values_)
    if (v > 1) throw DomainError("BinaryDataset: values must be 0 or 1");
}

std::vector<std::uint8_t> BinaryDataset::column(std::size_t j) const {
  std::vector<std::uint8_t> out(rows_);
  for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
  return out;
}

double BinaryDataset::proportion_ones(std::size_t j) const {
  std::size_t ones = 0;
  for (std::size_t i = 0; i < rows_; ++i) ones += (*this)(i, j);
  return static_cast<double>(ones) / static_cast<double>(rows_);
}

BinaryDataset BinaryDataset::permute_columns(std::span<const std::size_t> order) const {
  std::vector<std::uint8_t> values(rows_ * order.size());
  std::vector<std::string> names;
  for (std::size_t k = 0; k < order.size(); ++k) names.push_back(names_.at(order[k]));
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t k = 0; k < order.size(); ++k) values[i * order.size() + k] = (*this)(i, order[k]);
  return BinaryDataset(rows_, order.size(), std::move(values), std::move(names));
}

NormalStream::NormalStream(SeedSpec seed)
    : key_(avalanche(avalanche(seed.base_seed) ^
                     avalanche(seed.replication_index * 0xd1b54a32d192ed03ULL + 1))) {}

double NormalStream::uniform(std::uint64_t counter) const {
  const std::uint64_t bits = avalanche(key_ ^ avalanche(counter));
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

double NormalStream::normal(std::uint64_t i) const {
  const std::uint64_t pair = i / 2;
  const double radius = std::sqrt(-2.0 * std::log(uniform(2 * pair)));
  const double angle = 2.0 * std::numbers::pi * uniform(2 * pair + 1);
  return radius * ((i % 2 == 0) ? std::cos(angle) : std::sin(angle));
}

SymmetricMatrix table1_covariance() {
  SymmetricMatrix s = SymmetricMatrix::identity(4);
  s.set(1, 0, 0.10);
  s.set(2, 0, 0.48);
  s.set(2, 1, 0.76);
  s.set(3, 0, 0.48);
  s.set(3, 1, 0.48);
  s.set(3, 2, 0.48);
  return s;
}

ContinuousDataset sample_mvn(const SymmetricMatrix& cov, std::size_t n, SeedSpec seed) {
  if (n < 2) throw DomainError("sample_mvn: n must be >= 2");
  const Eigen::MatrixXd l = cholesky(cov);
  const auto p = static_cast<std::size_t>(cov.dim());
  const NormalStream stream(seed);
  Eigen::MatrixXd z(n, p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) z(i, j) = stream.normal(i * p + j);
  return {z * l.transpose()};
}

BinaryDataset dichotomize(const ContinuousDataset& data, double tau) {
  if (!std::isfinite(tau)) throw DomainError("dichotomize: threshold must be finite");
  const auto n = static_cast<std::size_t>(data.rows());
  const auto p = static_cast<std::size_t>(data.cols());
  BinaryDataset out(n, p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) out.set(i, j, data.values(i, j) > tau ? 1 : 0);
  return out;
}

}  // namespace heywood
