#pragma once

// CSV input for binary data and covariance matrices, JSON and Markdown
// output for results. JSON numbers are printed with 17 significant digits
// so that every double survives a round trip.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include "heywood/irt.hpp"
#include "heywood/ordfa.hpp"
#include "heywood/simgen.hpp"
#include "heywood/study.hpp"
#include "heywood/tetra.hpp"

namespace heywood {

/// Header row of column names, then rows of literal 0 / 1. Throws
/// FormatError naming the 1-based line and column of the first bad cell.
BinaryDataset parse_binary_csv(std::string_view text);
/// Throws IoError when the file cannot be read.
BinaryDataset read_binary_csv(const std::filesystem::path& path);

void write_binary_csv(const BinaryDataset& data, std::ostream& out);
void write_binary_csv(const BinaryDataset& data, const std::filesystem::path& path);

/// Square numeric matrix, optionally preceded by a header row of names.
SymmetricMatrix parse_matrix_csv(std::string_view text);
SymmetricMatrix read_matrix_csv(const std::filesystem::path& path);

std::string tetrachoric_json(const TetrachoricSummary& summary, const std::vector<std::string>& names);
std::string factor_fit_json(const FactorFit& fit, const FitStats& stats);
std::string irt_fit_json(const IrtFit& fit);
std::string report_json(const StudyReport& report);
std::string report_markdown(const StudyReport& report);

/// Text rows "[lo, hi)  count  ####" for a histogram.
std::string histogram_text(const Histogram& h, int precision);

/// Study configuration from JSON. Recognized keys: replications, n, tau,
/// estimators, base_seed, extreme_threshold, threads and covariance
/// ("table1" or a CSV path, resolved against `base_dir`). Unknown keys are
/// rejected with a FormatError.
StudyConfig parse_study_config(std::string_view text,
                               const std::filesystem::path& base_dir = {});
StudyConfig read_study_config(const std::filesystem::path& path);

/// Reads a whole file; IoError when it cannot be opened.
std::string read_text_file(const std::filesystem::path& path);
/// Writes `text` to `path`, or to `out` when `path` is empty; IoError on failure.
void write_text(const std::optional<std::filesystem::path>& path, std::string_view text,
                std::ostream& out);

}  // namespace heywood
