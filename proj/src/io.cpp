#include "heywood/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "heywood/errors.hpp"

namespace heywood {

using Json = nlohmann::ordered_json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    lines.push_back(text.substr(0, nl));
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  // Trailing blank lines carry no data.
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  while (true) {
    const auto comma = line.find(',');
    out.push_back(trim(line.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    line.remove_prefix(comma + 1);
  }
  return out;
}

std::optional<double> parse_number(std::string_view s) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// nlohmann's own number printer uses the shortest round-trip form; results
// here are printed with a fixed 17 significant digits instead.
void dump(const Json& j, std::string& out, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close(static_cast<std::size_t>(indent * depth), ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad + Json(it.key()).dump() + ": ";
        dump(it.value(), out, indent, depth + 1);
      }
      out += "\n" + close + "}";
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      const bool flat = std::none_of(j.begin(), j.end(), [](const Json& e) { return e.is_structured(); });
      out += flat ? "[" : "[\n";
      bool first = true;
      for (const auto& e : j) {
        if (!first) out += flat ? ", " : ",\n";
        first = false;
        if (!flat) out += pad;
        dump(e, out, indent, depth + 1);
      }
      out += flat ? "]" : "\n" + close + "]";
      return;
    }
    case Json::value_t::number_float: {
      const double v = j.get<double>();
      out += std::isfinite(v) ? format_double(v) : "null";
      return;
    }
    default:
      out += j.dump();
  }
}

std::string to_text(const Json& j) {
  std::string out;
  dump(j, out, 2, 0);
  out += "\n";
  return out;
}

Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(x);
  return a;
}

Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vector_json(m.row(i).transpose()));
  return rows;
}

Json histogram_json(const Histogram& h) {
  return Json{{"lower", h.lower}, {"width", h.width}, {"counts", h.counts}};
}

std::vector<std::string> default_names(std::size_t p) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < p; ++j) names.push_back("Y" + std::to_string(j + 1));
  return names;
}

}  // namespace

BinaryDataset parse_binary_csv(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty() || trim(lines.front()).empty()) throw FormatError("missing header row");
  std::vector<std::string> names;
  for (auto f : split_fields(lines.front())) {
    if (f.empty()) throw FormatError("line 1: empty column name");
    names.emplace_back(f);
  }
  const std::size_t p = names.size();
  std::vector<std::uint8_t> values;
  std::size_t rows = 0;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const auto fields = split_fields(lines[l]);
    const std::size_t row = rows + 1;
    if (fields.size() != p)
      throw FormatError("row " + std::to_string(row) + " (line " + std::to_string(l + 1) + "): expected " +
                        std::to_string(p) + " fields, found " + std::to_string(fields.size()));
    for (std::size_t c = 0; c < p; ++c) {
      if (fields[c] != "0" && fields[c] != "1")
        throw FormatError("row " + std::to_string(row) + ", column " + std::to_string(c + 1) + " (" +
                          names[c] + "): expected 0 or 1, found '" + std::string(fields[c]) + "'");
      values.push_back(fields[c] == "1" ? 1 : 0);
    }
    ++rows;
  }
  if (rows == 0) throw FormatError("no rows");
  return BinaryDataset(rows, p, std::move(values), std::move(names));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path.string());
  return ss.str();
}

BinaryDataset read_binary_csv(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return parse_binary_csv(text);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_binary_csv(const BinaryDataset& data, std::ostream& out) {
  for (std::size_t j = 0; j < data.cols(); ++j) out << (j ? "," : "") << data.names()[j];
  out << '\n';
  std::string line;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    line.clear();
    for (std::size_t j = 0; j < data.cols(); ++j) {
      if (j) line += ',';
      line += data(i, j) ? '1' : '0';
    }
    out << line << '\n';
  }
}

void write_binary_csv(const BinaryDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_binary_csv(data, out);
  if (!out) throw IoError("write failed for " + path.string());
}

SymmetricMatrix parse_matrix_csv(std::string_view text) {
  auto lines = split_lines(text);
  if (lines.empty()) throw FormatError("matrix file is empty");
  std::size_t first = 0;
  {
    const auto fields = split_fields(lines.front());
    if (!parse_number(fields.front())) first = 1;  // header row of names
  }
  const std::size_t p = lines.size() - first;
  if (p == 0) throw FormatError("matrix file has no numeric rows");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  for (std::size_t r = 0; r < p; ++r) {
    const auto fields = split_fields(lines[first + r]);
    if (fields.size() != p)
      throw FormatError("matrix row " + std::to_string(r + 1) + ": expected " + std::to_string(p) +
                        " values, found " + std::to_string(fields.size()));
    for (std::size_t c = 0; c < p; ++c) {
      const auto v = parse_number(fields[c]);
      if (!v)
        throw FormatError("matrix row " + std::to_string(r + 1) + ", column " + std::to_string(c + 1) +
                          ": not a number '" + std::string(fields[c]) + "'");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *v;
    }
  }
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw FormatError("matrix is not symmetric");
  return SymmetricMatrix(m);
}

SymmetricMatrix read_matrix_csv(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return parse_matrix_csv(text);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string tetrachoric_json(const TetrachoricSummary& summary, const std::vector<std::string>& names) {
  Json j;
  j["n"] = summary.n;
  j["variables"] = names.empty() ? default_names(summary.p()) : names;
  j["taus"] = summary.taus;
  j["rho"] = matrix_json(summary.rho.matrix());
  Json flags = Json::array();
  for (bool f : summary.boundary_flags) flags.push_back(f);
  j["boundary_flags"] = flags;
  j["positive_definite"] = summary.positive_definite;
  if (summary.acov) {
    // Lower triangle including the diagonal, column by column.
    const Eigen::MatrixXd& a = *summary.acov;
    Json flat = Json::array();
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      for (Eigen::Index r = c; r < a.rows(); ++r) flat.push_back(a(r, c));
    j["acov"] = flat;
  }
  return to_text(j);
}

std::string factor_fit_json(const FactorFit& fit, const FitStats& stats) {
  Json j;
  j["parameterization"] = to_string(fit.parameterization);
  j["estimator"] = to_string(fit.estimator);
  j["loadings"] = vector_json(fit.loadings);
  j["residual_variances"] = vector_json(fit.residual_variances);
  j["converged"] = fit.converged;
  j["diagnosis"] = to_string(fit.diagnosis);
  j["flagged_variables"] = fit.flagged_variables;
  j["iterations"] = fit.iterations;
  j["discrepancy"] = fit.discrepancy;
  j["gradient_norm"] = fit.gradient_norm;
  j["srmr"] = stats.srmr;
  j["chi_square_approx"] = stats.chi_square_approx;
  j["df"] = stats.df;
  j["rmsea_approx"] = stats.rmsea_approx;
  j["approx_flag"] = stats.approx_flag;
  return to_text(j);
}

std::string irt_fit_json(const IrtFit& fit) {
  Json j;
  j["discriminations"] = vector_json(fit.discriminations);
  j["difficulties"] = vector_json(fit.difficulties);
  j["loglik"] = fit.loglik();
  j["converged"] = fit.converged;
  j["em_cycles"] = fit.em_cycles;
  j["extreme_items"] = fit.extreme_items;
  j["at_bound"] = fit.at_bound;
  return to_text(j);
}

namespace {

Json config_json(const StudyConfig& c) {
  Json j;
  j["replications"] = c.replications;
  j["n"] = c.n;
  j["tau"] = c.tau;
  Json est = Json::array();
  for (Estimator e : c.estimators) est.push_back(to_string(e));
  j["estimators"] = est;
  j["base_seed"] = c.base_seed;
  j["extreme_threshold"] = c.extreme_threshold;
  j["covariance_source"] = c.covariance_source;
  j["covariance"] = matrix_json(c.covariance.matrix());
  j["irt_nodes"] = c.irt_options.nodes;
  return j;
}

Json factor_record_json(const FactorRecord& r) {
  Json j;
  j["estimator"] = to_string(r.estimator);
  j["parameterization"] = to_string(r.parameterization);
  j["outcome"] = to_string(r.outcome);
  j["flagged"] = r.flagged;
  j["loadings"] = r.loadings;
  j["iterations"] = r.iterations;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

Json irt_record_json(const IrtRecord& r) {
  Json j;
  j["outcome"] = to_string(r.outcome);
  j["converged"] = r.converged;
  j["discriminations"] = r.discriminations;
  j["difficulties"] = r.difficulties;
  j["extreme_items"] = r.extreme_items;
  j["em_cycles"] = r.em_cycles;
  j["loglik_monotone"] = r.loglik_monotone;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

constexpr Outcome kAllOutcomes[] = {Outcome::proper,
                                    Outcome::heywood,
                                    Outcome::nonconverged_extreme,
                                    Outcome::nonconverged_other,
                                    Outcome::singular_weight,
                                    Outcome::singular_sandwich,
                                    Outcome::degenerate_margin,
                                    Outcome::failed};

}  // namespace

std::string report_json(const StudyReport& report) {
  Json j;
  j["config"] = config_json(report.config);
  Json cells = Json::array();
  for (const auto& [key, cell] : report.cells) {
    Json c;
    c["estimator"] = to_string(key.first);
    c["parameterization"] = to_string(key.second);
    Json counts;
    for (Outcome o : kAllOutcomes) counts[std::string(to_string(o))] = cell.count(o);
    c["counts"] = counts;
    c["problems"] = cell.problems();
    c["flag_counts"] = cell.flag_counts;
    cells.push_back(c);
  }
  j["cells"] = cells;
  Json co = Json::array();
  for (const auto& [est, c] : report.cooccurrence)
    co.push_back(Json{{"estimator", to_string(est)},
                      {"delta_problems", c.delta_problems},
                      {"theta_nonconverged_among_them", c.both},
                      {"rate", c.rate()}});
  j["cooccurrence"] = co;
  const IrtSummary& irt = report.irt;
  j["irt"] = Json{{"converged", irt.converged},
                  {"errors", irt.errors},
                  {"datasets_with_extreme", irt.datasets_with_extreme},
                  {"extreme_counts", irt.extreme_counts},
                  {"min_discrimination", irt.min_discrimination},
                  {"max_discrimination", irt.max_discrimination},
                  {"loglik_monotone", irt.loglik_monotone}};
  j["histograms"] = Json{{"negative_residual_variances_wlsmv_delta", histogram_json(negative_residual_histogram(report))},
                         {"max_discrimination", histogram_json(max_discrimination_histogram(report))}};
  Json ledger = Json::array();
  for (const auto& rep : report.ledger) {
    Json r;
    r["replication"] = rep.index;
    Json f = Json::array();
    for (const auto& fr : rep.factor) f.push_back(factor_record_json(fr));
    r["factor"] = f;
    r["irt"] = irt_record_json(rep.irt);
    ledger.push_back(r);
  }
  j["ledger"] = ledger;
  return to_text(j);
}

std::string histogram_text(const Histogram& h, int precision) {
  if (h.counts.empty()) return "(no values)\n";
  const int top = *std::max_element(h.counts.begin(), h.counts.end());
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision);
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    const double lo = h.lower + h.width * static_cast<double>(k);
    const int bar = top > 0 ? static_cast<int>(std::lround(40.0 * h.counts[k] / top)) : 0;
    out << "[" << std::setw(precision + 4) << lo << ", " << std::setw(precision + 4) << lo + h.width << ")  "
        << std::setw(4) << h.counts[k] << "  " << std::string(static_cast<std::size_t>(bar), '#') << "\n";
  }
  return out.str();
}

std::string report_markdown(const StudyReport& report) {
  const StudyConfig& c = report.config;
  const std::size_t p = static_cast<std::size_t>(c.covariance.dim());
  std::ostringstream md;
  md << "# Study report\n\n";
  md << c.replications << " replications of n = " << c.n << ", dichotomized at tau = " << c.tau
     << ", covariance " << c.covariance_source << ", base seed " << c.base_seed << ".\n\n";

  md << "## Ordinal factor models\n\n";
  md << "| estimator | parameterization |";
  for (Outcome o : kAllOutcomes) md << " " << to_string(o) << " |";
  md << " flags per variable |\n|---|---|";
  for (std::size_t k = 0; k < kOutcomeCount; ++k) md << "---:|";
  md << "---|\n";
  for (const auto& [key, cell] : report.cells) {
    md << "| " << to_string(key.first) << " | " << to_string(key.second) << " |";
    for (Outcome o : kAllOutcomes) md << " " << cell.count(o) << " |";
    md << " ";
    for (std::size_t j = 0; j < cell.flag_counts.size(); ++j)
      md << (j ? ", " : "") << "Y" << j + 1 << ": " << cell.flag_counts[j];
    md << " |\n";
  }

  md << "\n## Delta problems against theta nonconvergence\n\n";
  md << "| estimator | delta heywood or nonconverged | of which theta nonconverged | rate |\n|---|---:|---:|---:|\n";
  for (const auto& [est, co] : report.cooccurrence)
    md << "| " << to_string(est) << " | " << co.delta_problems << " | " << co.both << " | " << std::fixed
       << std::setprecision(3) << co.rate() << " |\n";
  md.unsetf(std::ios::floatfield);

  const IrtSummary& irt = report.irt;
  md << "\n## 2PL IRT\n\n";
  md << "Converged: " << irt.converged << " of " << report.ledger.size() << " (errors: " << irt.errors
     << "). Datasets with an extreme discrimination (|a| > " << c.extreme_threshold
     << "): " << irt.datasets_with_extreme << ". Log-likelihood nondecreasing in every fit: "
     << (irt.loglik_monotone ? "yes" : "no") << ".\n\n";
  md << "| variable | extreme count | min a | max a |\n|---|---:|---:|---:|\n";
  md << std::setprecision(4);
  for (std::size_t j = 0; j < p && j < irt.extreme_counts.size(); ++j)
    md << "| Y" << j + 1 << " | " << irt.extreme_counts[j] << " | " << irt.min_discrimination[j] << " | "
       << irt.max_discrimination[j] << " |\n";

  md << "\n## Negative residual variances (WLSMV, delta)\n\n```\n"
     << histogram_text(negative_residual_histogram(report), 2) << "```\n";
  md << "\n## Largest discrimination per dataset\n\n```\n"
     << histogram_text(max_discrimination_histogram(report), 0) << "```\n";
  return md.str();
}

StudyConfig parse_study_config(std::string_view text, const std::filesystem::path& base_dir) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw FormatError(std::string("study config: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("study config: expected a JSON object");
  StudyConfig c;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const Json& v = it.value();
      if (k == "replications") {
        c.replications = v.get<int>();
      } else if (k == "n") {
        c.n = v.get<std::size_t>();
      } else if (k == "tau") {
        c.tau = v.get<double>();
      } else if (k == "base_seed" || k == "seed") {
        c.base_seed = v.get<std::uint64_t>();
      } else if (k == "extreme_threshold") {
        c.extreme_threshold = v.get<double>();
      } else if (k == "threads") {
        c.threads = v.get<unsigned>();
      } else if (k == "estimators") {
        c.estimators.clear();
        for (const auto& e : v) {
          const auto parsed = parse_estimator(e.get<std::string>());
          if (!parsed) throw FormatError("study config: unknown estimator '" + e.get<std::string>() + "'");
          c.estimators.push_back(*parsed);
        }
      } else if (k == "covariance") {
        const auto src = v.get<std::string>();
        if (src == "table1") {
          c.covariance = table1_covariance();
          c.covariance_source = "table1";
        } else {
          std::filesystem::path path(src);
          if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
          c.covariance = read_matrix_csv(path);
          c.covariance_source = path.string();
        }
      } else {
        throw FormatError("study config: unknown key '" + k + "'");
      }
    }
  } catch (const Json::exception& e) {
    throw FormatError(std::string("study config: ") + e.what());
  }
  return c;
}

StudyConfig read_study_config(const std::filesystem::path& path) {
  return parse_study_config(read_text_file(path), path.parent_path());
}

void write_text(const std::optional<std::filesystem::path>& path, std::string_view text, std::ostream& out) {
  if (!path) {
    out << text;
    out.flush();
    return;
  }
  std::ofstream f(*path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path->string());
  f << text;
  f.close();
  if (!f) throw IoError("write failed for " + path->string());
}

}  // namespace heywood
