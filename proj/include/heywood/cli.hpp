#pragma once

// Command-line front end: argument parsing, dispatch and the exit-status
// contract (0 clean, 1 diagnosed anomaly, 2 usage, 3 format, 4 I/O).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>

#include "heywood/ordfa.hpp"
#include "heywood/study.hpp"

namespace heywood::cli {

enum class ExitCode : int { ok = 0, anomaly = 1, usage = 2, format = 3, io = 4 };

enum class CommandTag { simulate, tetrachoric, fit_ordinal, fit_irt, study, help };

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output;
  bool quiet = false;
};

struct SimulateOptions {
  std::size_t n = 200;
  double tau = 0.0;
  std::uint64_t replication = 0;
  std::optional<std::filesystem::path> covariance;  // CSV; Table 1 when absent
};

struct TetrachoricOptions {
  std::filesystem::path input;
  bool acov = false;
};

struct FitOrdinalOptions {
  std::filesystem::path input;
  Parameterization parameterization = Parameterization::delta;
  Estimator estimator = Estimator::wlsmv;
  double extreme_threshold = 10.0;
  int max_iter = 500;
  double grad_tol = 1e-6;
};

struct FitIrtOptions {
  std::filesystem::path input;
  int nodes = 61;
  double extreme_threshold = 10.0;
};

struct Command {
  CommandTag tag = CommandTag::help;
  GlobalOptions global;
  SimulateOptions simulate;
  TetrachoricOptions tetrachoric;
  FitOrdinalOptions fit_ordinal;
  FitIrtOptions fit_irt;
  StudyConfig study;
  std::string help_text;  // set when tag == help
};

/// `args` excludes the program name. Throws UsageError naming the offending
/// flag or value; an explicit --help yields tag help. A study --config file
/// is read here, so FormatError and IoError can also escape.
Command parse_args(std::span<const std::string> args);

/// Runs a parsed command, writing results to --output or `out`.
ExitCode run(const Command& cmd, std::ostream& out, std::ostream& err);

/// parse_args + run, with every error mapped to its exit code and reported
/// on `err`.
int main(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace heywood::cli
