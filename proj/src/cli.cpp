#include "heywood/cli.hpp"

#include <iostream>
#include <sstream>
#include <vector>

#include <CLI11.hpp>

#include "heywood/errors.hpp"
#include "heywood/io.hpp"
#include "heywood/irt.hpp"
#include "heywood/simgen.hpp"
#include "heywood/tetra.hpp"

namespace heywood::cli {

namespace {

template <class T>
T parse_choice(const std::string& flag, const std::string& value, std::optional<T> parsed,
               const char* expected) {
  if (!parsed)
    throw UsageError("invalid value '" + value + "' for " + flag + " (expected " + expected + ")");
  return *parsed;
}

std::vector<Estimator> parse_estimator_list(const std::string& text) {
  std::vector<Estimator> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(parse_choice("--estimators", item, parse_estimator(item), "a list of wls, wlsmv, uls"));
  }
  if (out.empty()) throw UsageError("--estimators needs at least one estimator");
  return out;
}

TetrachoricSummary summarize_for(const BinaryDataset& data, bool with_acov) {
  TetrachoricSummary s = tetrachoric_matrix(data);
  if (with_acov) s.acov = acov_tetrachoric(data, s);
  return s;
}

ExitCode run_simulate(const Command& cmd, std::ostream& out) {
  const SimulateOptions& o = cmd.simulate;
  const SymmetricMatrix cov = o.covariance ? read_matrix_csv(*o.covariance) : table1_covariance();
  const std::uint64_t seed = cmd.global.seed.value_or(StudyConfig{}.base_seed);
  const BinaryDataset data = dichotomize(sample_mvn(cov, o.n, SeedSpec{seed, o.replication}), o.tau);
  std::ostringstream csv;
  write_binary_csv(data, csv);
  write_text(cmd.global.output, csv.str(), out);
  return ExitCode::ok;
}

ExitCode run_tetrachoric(const Command& cmd, std::ostream& out) {
  const BinaryDataset data = read_binary_csv(cmd.tetrachoric.input);
  const TetrachoricSummary s = summarize_for(data, cmd.tetrachoric.acov);
  write_text(cmd.global.output, tetrachoric_json(s, data.names()), out);
  return (s.any_boundary() || !s.positive_definite) ? ExitCode::anomaly : ExitCode::ok;
}

ExitCode run_fit_ordinal(const Command& cmd, std::ostream& out) {
  const FitOrdinalOptions& o = cmd.fit_ordinal;
  const BinaryDataset data = read_binary_csv(o.input);
  const TetrachoricSummary s = summarize_for(data, o.estimator != Estimator::uls);
  FactorFitOptions fopts;
  fopts.extreme_threshold = o.extreme_threshold;
  fopts.max_iter = o.max_iter;
  fopts.grad_tol = o.grad_tol;
  const FactorFit fit = fit_one_factor(s, o.estimator, o.parameterization, fopts);
  write_text(cmd.global.output, factor_fit_json(fit, fit_stats(s, fit, data.rows())), out);
  return fit.diagnosis == Diagnosis::proper ? ExitCode::ok : ExitCode::anomaly;
}

ExitCode run_fit_irt(const Command& cmd, std::ostream& out) {
  const FitIrtOptions& o = cmd.fit_irt;
  const BinaryDataset data = read_binary_csv(o.input);
  IrtOptions iopts;
  iopts.nodes = o.nodes;
  iopts.extreme_threshold = o.extreme_threshold;
  const IrtFit fit = fit_2pl(data, iopts);
  write_text(cmd.global.output, irt_fit_json(fit), out);
  return (fit.converged && fit.extreme_items.empty()) ? ExitCode::ok : ExitCode::anomaly;
}

ExitCode run_study_command(const Command& cmd, std::ostream& err) {
  const StudyReport report = run_study(cmd.study);
  const std::filesystem::path dir = cmd.global.output.value_or(".");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / "report.json", report_json(report), err);
  write_text(dir / "report.md", report_markdown(report), err);
  if (!cmd.global.quiet) {
    err << "wrote " << (dir / "report.json").string() << " and " << (dir / "report.md").string() << "\n";
    for (const auto& [key, cell] : report.cells)
      err << to_string(key.first) << "/" << to_string(key.second) << ": heywood "
          << cell.count(Outcome::heywood) << ", nonconverged "
          << cell.count(Outcome::nonconverged_extreme) + cell.count(Outcome::nonconverged_other)
          << ", proper " << cell.count(Outcome::proper) << "\n";
    err << "irt: converged " << report.irt.converged << ", datasets with extreme discrimination "
        << report.irt.datasets_with_extreme << "\n";
  }
  return ExitCode::ok;
}

}  // namespace

Command parse_args(std::span<const std::string> args) {
  CLI::App app{"Heywood cases in binary factor models and 2PL IRT", "heywood"};
  app.require_subcommand(1);
  app.fallthrough();

  Command cmd;
  std::uint64_t seed = 0;
  std::string output;
  auto* seed_opt = app.add_option("--seed", seed, "Base seed for simulated data");
  auto* output_opt = app.add_option("--output,-o", output,
                                    "Output file (study: output directory); stdout when absent");
  app.add_flag("--quiet,-q", cmd.global.quiet, "Suppress progress messages");

  auto* sim = app.add_subcommand("simulate", "Draw one dataset from the generating model and dichotomize it");
  std::string sim_cov;
  sim->add_option("--n", cmd.simulate.n, "Sample size")->capture_default_str();
  sim->add_option("--tau", cmd.simulate.tau, "Dichotomization threshold")->capture_default_str();
  sim->add_option("--replication", cmd.simulate.replication, "Replication index of the substream")
      ->capture_default_str();
  auto* sim_cov_opt = sim->add_option("--covariance", sim_cov, "Covariance CSV (default: Table 1)");

  auto* tet = app.add_subcommand("tetrachoric", "Thresholds and tetrachoric correlations of a binary CSV");
  std::string tet_input;
  tet->add_option("--input,-i", tet_input, "Binary CSV file")->required();
  tet->add_flag("--acov", cmd.tetrachoric.acov, "Include the asymptotic covariance");

  auto* ord = app.add_subcommand("fit-ordinal", "One-factor ordinal model on tetrachoric correlations");
  std::string ord_input, ord_param = "delta", ord_est = "wlsmv";
  ord->add_option("--input,-i", ord_input, "Binary CSV file")->required();
  ord->add_option("--parameterization", ord_param, "delta or theta")->capture_default_str();
  ord->add_option("--estimator", ord_est, "wls, wlsmv or uls")->capture_default_str();
  ord->add_option("--extreme-threshold", cmd.fit_ordinal.extreme_threshold, "Extreme loading cutoff")
      ->capture_default_str();
  ord->add_option("--max-iter", cmd.fit_ordinal.max_iter, "Iteration cap")->capture_default_str();
  ord->add_option("--grad-tol", cmd.fit_ordinal.grad_tol, "Gradient tolerance")->capture_default_str();

  auto* irt = app.add_subcommand("fit-irt", "2PL IRT model by marginal maximum likelihood");
  std::string irt_input;
  irt->add_option("--input,-i", irt_input, "Binary CSV file")->required();
  irt->add_option("--nodes", cmd.fit_irt.nodes, "Gauss-Hermite nodes")->capture_default_str();
  irt->add_option("--extreme-threshold", cmd.fit_irt.extreme_threshold, "Extreme discrimination cutoff")
      ->capture_default_str();

  auto* st = app.add_subcommand("study", "Replicated comparison; writes report.json and report.md");
  std::string st_config, st_estimators, st_cov;
  int st_reps = 0;
  std::size_t st_n = 0;
  double st_tau = 0, st_extreme = 0;
  unsigned st_threads = 0;
  int st_nodes = 0;
  auto* cfg_opt = st->add_option("--config", st_config, "JSON configuration; flags override it");
  auto* reps_opt = st->add_option("--replications", st_reps, "Number of datasets (default 100)");
  auto* n_opt = st->add_option("--n", st_n, "Sample size per dataset (default 200)");
  auto* tau_opt = st->add_option("--tau", st_tau, "Dichotomization threshold (default 0)");
  auto* est_opt = st->add_option("--estimators", st_estimators, "Comma list of wls, wlsmv, uls");
  auto* cov_opt = st->add_option("--covariance", st_cov, "table1 or a covariance CSV");
  auto* ext_opt = st->add_option("--extreme-threshold", st_extreme, "Extreme cutoff (default 10)");
  auto* thr_opt = st->add_option("--threads", st_threads, "Worker threads (0: all cores)");
  auto* nodes_opt = st->add_option("--nodes", st_nodes, "Gauss-Hermite nodes for IRT (default 61)");

  std::vector<const char*> argv{"heywood"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    std::ostringstream ss;
    app.exit(e, ss, ss);
    cmd.tag = CommandTag::help;
    cmd.help_text = ss.str();
    return cmd;
  } catch (const CLI::CallForAllHelp& e) {
    std::ostringstream ss;
    app.exit(e, ss, ss);
    cmd.tag = CommandTag::help;
    cmd.help_text = ss.str();
    return cmd;
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  if (seed_opt->count()) cmd.global.seed = seed;
  if (output_opt->count()) cmd.global.output = output;

  if (sim->parsed()) {
    cmd.tag = CommandTag::simulate;
    if (sim_cov_opt->count()) cmd.simulate.covariance = sim_cov;
    if (cmd.simulate.n < 1) throw UsageError("--n must be at least 1");
  } else if (tet->parsed()) {
    cmd.tag = CommandTag::tetrachoric;
    cmd.tetrachoric.input = tet_input;
  } else if (ord->parsed()) {
    cmd.tag = CommandTag::fit_ordinal;
    cmd.fit_ordinal.input = ord_input;
    cmd.fit_ordinal.parameterization = parse_choice("--parameterization", ord_param,
                                                    parse_parameterization(ord_param), "delta or theta");
    cmd.fit_ordinal.estimator =
        parse_choice("--estimator", ord_est, parse_estimator(ord_est), "wls, wlsmv or uls");
    if (cmd.fit_ordinal.max_iter < 1) throw UsageError("--max-iter must be at least 1");
    if (!(cmd.fit_ordinal.grad_tol > 0.0)) throw UsageError("--grad-tol must be positive");
  } else if (irt->parsed()) {
    cmd.tag = CommandTag::fit_irt;
    cmd.fit_irt.input = irt_input;
    if (cmd.fit_irt.nodes < 1 || cmd.fit_irt.nodes > 501) throw UsageError("--nodes must be in [1, 501]");
  } else if (st->parsed()) {
    cmd.tag = CommandTag::study;
    StudyConfig c = cfg_opt->count() ? read_study_config(st_config) : StudyConfig{};
    if (reps_opt->count()) c.replications = st_reps;
    if (n_opt->count()) c.n = st_n;
    if (tau_opt->count()) c.tau = st_tau;
    if (est_opt->count()) c.estimators = parse_estimator_list(st_estimators);
    if (cov_opt->count()) {
      if (st_cov == "table1") {
        c.covariance = table1_covariance();
        c.covariance_source = "table1";
      } else {
        c.covariance = read_matrix_csv(st_cov);
        c.covariance_source = st_cov;
      }
    }
    if (ext_opt->count()) c.extreme_threshold = st_extreme;
    if (thr_opt->count()) c.threads = st_threads;
    if (nodes_opt->count()) {
      if (st_nodes < 1 || st_nodes > 501) throw UsageError("--nodes must be in [1, 501]");
      c.irt_options.nodes = st_nodes;
    }
    if (cmd.global.seed) c.base_seed = *cmd.global.seed;
    if (c.replications < 1) throw UsageError("--replications must be at least 1");
    if (c.n < 10) throw UsageError("--n must be at least 10");
    cmd.study = std::move(c);
  }
  return cmd;
}

ExitCode run(const Command& cmd, std::ostream& out, std::ostream& err) {
  switch (cmd.tag) {
    case CommandTag::help:
      out << cmd.help_text;
      return ExitCode::ok;
    case CommandTag::simulate: return run_simulate(cmd, out);
    case CommandTag::tetrachoric: return run_tetrachoric(cmd, out);
    case CommandTag::fit_ordinal: return run_fit_ordinal(cmd, out);
    case CommandTag::fit_irt: return run_fit_irt(cmd, out);
    case CommandTag::study: return run_study_command(cmd, err);
  }
  return ExitCode::usage;
}

int main(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  ExitCode code = ExitCode::ok;
  try {
    code = run(parse_args(args), out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\nrun 'heywood --help' for usage\n";
    code = ExitCode::usage;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    code = ExitCode::format;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    code = ExitCode::io;
  } catch (const Error& e) {
    // The analysis could not produce a fit (constant column, singular
    // weight matrix and so on): reported as a diagnosed anomaly.
    err << e.kind() << ": " << e.what() << "\n";
    code = ExitCode::anomaly;
  }
  return static_cast<int>(code);
}

}  // namespace heywood::cli
