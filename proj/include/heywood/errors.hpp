#pragma once

#include <stdexcept>
#include <string>

namespace heywood {

/// Base class for every error raised by the library. `kind()` is a stable
/// machine-readable tag that ends up in study ledgers and CLI output.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define HEYWOOD_DEFINE_ERROR(Name, Tag)                                  \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what) : Error(Tag, what) {}         \
  }

HEYWOOD_DEFINE_ERROR(NotPositiveDefinite, "not_positive_definite");
HEYWOOD_DEFINE_ERROR(DomainError, "domain_error");
HEYWOOD_DEFINE_ERROR(DegenerateMargin, "degenerate_margin");
HEYWOOD_DEFINE_ERROR(SingularSandwich, "singular_sandwich");
HEYWOOD_DEFINE_ERROR(SingularWeight, "singular_weight");
HEYWOOD_DEFINE_ERROR(HeywoodConversion, "heywood_conversion");
HEYWOOD_DEFINE_ERROR(NonconvergenceError, "nonconvergence");
HEYWOOD_DEFINE_ERROR(UsageError, "usage_error");
HEYWOOD_DEFINE_ERROR(FormatError, "format_error");
HEYWOOD_DEFINE_ERROR(IoError, "io_error");

#undef HEYWOOD_DEFINE_ERROR

}  // namespace heywood
