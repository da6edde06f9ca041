// mmgee command-line tool: fit | report | simulate | preprocess.
//
// Exit codes (stable for scripting): 0 success, 2 specification/usage error,
// 3 data error, 4 numerical error or non-convergence.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mmgee/mmgee.hpp"

namespace {

using namespace mmgee;

char parse_delimiter(const std::string& d) {
  if (d == "tab" || d == "\\t") return '\t';
  if (d.size() != 1) throw SpecError("delimiter must be a single character (or 'tab')");
  return d[0];
}

std::string trim_ws(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Expands "--config FILE" into --key=value tokens, spliced in right after
// the subcommand so explicit flags keep their usual duplicate handling.
// Lines are plain key=value; blank lines and #-comments are skipped.
void expand_config_args(std::vector<std::string>& args,
                        const std::vector<std::string>& subcommands) {
  std::size_t sub_idx = args.size();
  for (std::size_t i = 0; i < args.size() && sub_idx == args.size(); ++i)
    for (const auto& s : subcommands)
      if (args[i] == s) sub_idx = i;
  if (sub_idx == args.size()) return;

  std::string path;
  std::size_t erase_at = 0, erase_n = 0;
  for (std::size_t i = sub_idx + 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      erase_at = i;
      erase_n = 2;
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      erase_at = i;
      erase_n = 1;
      break;
    }
  }
  if (path.empty()) return;

  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file '" + path + "'");
  std::vector<std::string> extra;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trim_ws(line);
    if (text.empty() || text[0] == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0)
      throw SpecError("config file '" + path + "' line " + std::to_string(line_no) +
                      ": expected key=value, got '" + text + "'");
    extra.push_back("--" + trim_ws(text.substr(0, eq)) + "=" + trim_ws(text.substr(eq + 1)));
  }
  args.erase(args.begin() + static_cast<std::ptrdiff_t>(erase_at),
             args.begin() + static_cast<std::ptrdiff_t>(erase_at + erase_n));
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_idx) + 1, extra.begin(),
              extra.end());
}

std::string join(const std::vector<std::string>& v, const char* sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  return out;
}

// ---------------------------------------------------------------- fit ----

struct FitArgs {
  std::string config_doc;
  std::string data_path;
  std::string id_col = "id";
  std::string time_col = "time";
  std::string delimiter = ",";
  bool drop_incomplete = false;
  std::vector<std::string> responses;
  std::vector<std::string> covariates;
  bool rtype = false;
  std::vector<int> interaction;
  std::string family = "binomial";
  std::string link;
  double fix_phi = 0.0;  // 0 -> estimate
  std::string corstr = "independence";
  double tol = 1e-6;
  int maxit = 25;
  std::string out_fit = "mmgee.fit";
  std::string out_summary, out_corr;
};

void add_fit_command(CLI::App& app, FitArgs& a, bool* selected) {
  CLI::App* cmd = app.add_subcommand("fit", "Fit a multivariate marginal model by GEE");
  cmd->callback([selected] { *selected = true; });
  cmd->add_option("--config", a.config_doc,
                  "Read options from a plain key=value file (expanded before parsing)");
  cmd->add_option("--data", a.data_path, "Long-format delimited data file")->required();
  cmd->add_option("--id", a.id_col, "Subject id column (default id)");
  cmd->add_option("--time", a.time_col, "Integer time column (default time)");
  cmd->add_option("--delimiter", a.delimiter, "Field delimiter (default ,)");
  cmd->add_flag("--drop-incomplete", a.drop_incomplete, "Drop rows with missing cells");
  cmd->add_option("--responses", a.responses, "Response columns, in order")
      ->required()
      ->delimiter(',');
  cmd->add_option("--covariates", a.covariates, "Covariate columns, in order")->delimiter(',');
  cmd->add_flag("--rtype", a.rtype, "Add response-type indicator columns");
  cmd->add_option("--interaction", a.interaction,
                  "1-based covariate indices given response-specific slopes, e.g. 8,9")
      ->delimiter(',');
  cmd->add_option("--family", a.family, "gaussian|binomial|poisson (default binomial)");
  cmd->add_option("--link", a.link, "identity|logit|probit|log (default per family)");
  cmd->add_option("--fix-phi", a.fix_phi, "Fix the dispersion at this value (e.g. 1)");
  cmd->add_option("--corstr", a.corstr,
                  "independence|exchangeable|ar1|unstructured (default independence)");
  cmd->add_option("--tol", a.tol, "Convergence tolerance on max |delta beta| (default 1e-6)");
  cmd->add_option("--maxit", a.maxit, "Maximum Fisher-scoring iterations (default 25)");
  cmd->add_option("--out-fit", a.out_fit,
                  "Serialized fit path (default mmgee.fit; empty string disables)");
  cmd->add_option("--out-summary", a.out_summary, "Write the full-precision summary CSV here");
  cmd->add_option("--out-corr", a.out_corr, "Write the fitted working correlation CSV here");
}

int run_fit(const FitArgs& a) {
  std::cout << "# mmgee fit\n"
            << "# data = " << a.data_path << "\n"
            << "# id = " << a.id_col << ", time = " << a.time_col << "\n"
            << "# responses = " << join(a.responses) << "\n"
            << "# covariates = " << join(a.covariates) << "\n"
            << "# rtype = " << (a.rtype ? "true" : "false") << "\n"
            << "# interaction = ";
  for (std::size_t i = 0; i < a.interaction.size(); ++i)
    std::cout << (i ? "," : "") << a.interaction[i];
  std::cout << "\n# family = " << a.family << ", link = "
            << (a.link.empty() ? std::string("(default)") : a.link) << "\n"
            << "# corstr = " << a.corstr << "\n"
            << "# tol = " << a.tol << ", maxit = " << a.maxit << "\n"
            << "# phi = " << (a.fix_phi > 0.0 ? "fixed " + std::to_string(a.fix_phi)
                                              : std::string("estimated"))
            << "\n";

  ColumnSchema schema;
  schema.subject_col = a.id_col;
  schema.time_col = a.time_col;
  schema.response_cols = a.responses;
  schema.covariate_cols = a.covariates;
  schema.delimiter = parse_delimiter(a.delimiter);
  schema.drop_incomplete = a.drop_incomplete;
  const LongitudinalDataset data = ingest_file(a.data_path, schema);
  std::cout << "# ingested N=" << data.n_subjects() << " subjects, M=" << data.n_rows()
            << " rows, k=" << data.n_responses() << " responses, p=" << data.n_covariates()
            << " covariates\n";

  ModelSpec spec;
  spec.responses = a.responses;
  spec.covariates = a.covariates;
  spec.include_rtype = a.rtype;
  spec.interaction = a.interaction;

  const FamilySpec family = FamilySpec::parse(
      a.family, a.link,
      a.fix_phi > 0.0 ? std::optional<double>(a.fix_phi) : std::nullopt);
  const CorrelationKind structure = parse_corstr(a.corstr);
  const StackedProblem problem = build_stacked_problem(data, spec);
  std::cout << "# stacked problem: " << problem.n_rows() << " rows x "
            << problem.n_coefficients() << " columns, " << problem.n_clusters()
            << " clusters\n";

  GeeControls controls;
  controls.tolerance = a.tol;
  controls.max_iterations = a.maxit;
  const GeeFit fit = fit_gee(problem, family, structure, controls);

  print_fit_table(std::cout, fit);
  std::cout << "dispersion phi = " << fit.phi << (fit.phi_fixed ? " (fixed)" : " (estimated)")
            << "\n"
            << "working correlation: " << fit.correlation.describe() << "\n";
  if (fit.correlation.kind == CorrelationKind::unstructured &&
      fit.correlation.matrix.rows() <= 30) {
    std::cout << std::fixed << std::setprecision(3);
    for (Eigen::Index r = 0; r < fit.correlation.matrix.rows(); ++r) {
      for (Eigen::Index c = 0; c < fit.correlation.matrix.cols(); ++c)
        std::cout << (c ? " " : "  ") << std::setw(6) << fit.correlation.matrix(r, c);
      std::cout << "\n";
    }
    std::cout.unsetf(std::ios_base::floatfield);
  } else if (fit.correlation.kind == CorrelationKind::unstructured) {
    std::cout << "  (matrix too large to print; use --out-corr)\n";
  }
  std::cout
            << "converged = " << (fit.converged ? "yes" : "NO") << " after " << fit.iterations
            << " iteration(s)";
  if (!fit.step_trace.empty()) {
    std::cout << "; step trace:";
    for (double s : fit.step_trace) std::cout << " " << s;
  }
  std::cout << "\n";
  for (const auto& w : fit.warnings) std::cout << "warning: " << w << "\n";

  FitBundle bundle{family, structure, a.responses, a.covariates, a.rtype, a.interaction, fit};
  if (!a.out_fit.empty()) {
    auto out = open_out(a.out_fit);
    write_fit(out, bundle);
  }
  if (!a.out_summary.empty()) {
    auto out = open_out(a.out_summary);
    write_summary_csv(out, fit);
  }
  if (!a.out_corr.empty()) {
    auto out = open_out(a.out_corr);
    write_correlation_csv(out, fit.correlation, problem.cluster_size(0));
  }
  if (!fit.converged) {
    std::cerr << "mmgee: fit did not converge (outputs were still written)\n";
    return 4;
  }
  return 0;
}

// ---------------------------------------------------------- preprocess ----

struct PreprocessArgs {
  std::string config_doc;
  std::string data_path;
  std::string id_col = "id";
  std::string time_col = "time";
  std::string delimiter = ",";
  bool drop_incomplete = false;
  std::vector<std::string> responses;
  std::vector<std::string> covariates;
  std::vector<long long> baseline_window;
  std::vector<long long> analysis_window;
  std::vector<std::string> baseline_names;
  std::string time_name = "week";
  double time_offset = 0.0;
  double time_divisor = 1.0;
  std::string out;
};

void add_preprocess_command(CLI::App& app, PreprocessArgs& a, bool* selected) {
  CLI::App* cmd = app.add_subcommand(
      "preprocess", "Window the panel and derive baseline-average and rescaled-time covariates");
  cmd->callback([selected] { *selected = true; });
  cmd->add_option("--config", a.config_doc,
                  "Read options from a plain key=value file (expanded before parsing)");
  cmd->add_option("--data", a.data_path, "Long-format delimited data file")->required();
  cmd->add_option("--id", a.id_col, "Subject id column (default id)");
  cmd->add_option("--time", a.time_col, "Integer time column (default time)");
  cmd->add_option("--delimiter", a.delimiter, "Field delimiter (default ,)");
  cmd->add_flag("--drop-incomplete", a.drop_incomplete, "Drop rows with missing cells");
  cmd->add_option("--responses", a.responses, "Response columns")->required()->delimiter(',');
  cmd->add_option("--covariates", a.covariates, "Covariates carried through unchanged")
      ->delimiter(',');
  cmd->add_option("--baseline-window", a.baseline_window, "Baseline window lo,hi (inclusive)")
      ->required()
      ->expected(2)
      ->delimiter(',');
  cmd->add_option("--analysis-window", a.analysis_window, "Analysis window lo,hi (inclusive)")
      ->required()
      ->expected(2)
      ->delimiter(',');
  cmd->add_option("--baseline-names", a.baseline_names,
                  "Names of the new baseline-mean covariates, one per response")
      ->required()
      ->delimiter(',');
  cmd->add_option("--time-name", a.time_name, "Name of the rescaled time covariate");
  cmd->add_option("--time-offset", a.time_offset, "Time transform offset");
  cmd->add_option("--time-divisor", a.time_divisor, "Time transform divisor");
  cmd->add_option("--out", a.out, "Output CSV (default: stdout)");
}

int run_preprocess(const PreprocessArgs& a) {
  std::cout << "# mmgee preprocess\n"
            << "# data = " << a.data_path << "\n"
            << "# responses = " << join(a.responses) << "\n"
            << "# baseline window = [" << a.baseline_window[0] << "," << a.baseline_window[1]
            << "], analysis window = [" << a.analysis_window[0] << "," << a.analysis_window[1]
            << "]\n"
            << "# " << a.time_name << " = (" << a.time_col << " - " << a.time_offset << ") / "
            << a.time_divisor << "\n";

  ColumnSchema schema;
  schema.subject_col = a.id_col;
  schema.time_col = a.time_col;
  schema.response_cols = a.responses;
  schema.covariate_cols = a.covariates;
  schema.delimiter = parse_delimiter(a.delimiter);
  schema.drop_incomplete = a.drop_incomplete;
  const LongitudinalDataset data = ingest_file(a.data_path, schema);

  PreprocessSpec spec;
  spec.baseline_start = a.baseline_window[0];
  spec.baseline_end = a.baseline_window[1];
  spec.analysis_start = a.analysis_window[0];
  spec.analysis_end = a.analysis_window[1];
  spec.baseline_names = a.baseline_names;
  spec.time_name = a.time_name;
  spec.time_offset = a.time_offset;
  spec.time_divisor = a.time_divisor;

  const LongitudinalDataset out_data = preprocess_baseline(data, spec);
  std::cout << "# output: N=" << out_data.n_subjects() << " subjects, M=" << out_data.n_rows()
            << " rows, covariates = " << join(out_data.covariate_names) << "\n";
  if (a.out.empty()) {
    write_long_csv(std::cout, out_data);
  } else {
    auto out = open_out(a.out);
    write_long_csv(out, out_data);
  }
  return 0;
}

// -------------------------------------------------------------- report ----

struct ReportArgs {
  std::string fit_path;
  std::string reference_path;
  std::vector<std::string> derive;
  bool model_se = false;
  std::string out;
};

void add_report_command(CLI::App& app, ReportArgs& a, bool* selected) {
  CLI::App* cmd = app.add_subcommand(
      "report", "Post-fit inference: Wald tables, per-response coefficients, efficiency gains");
  cmd->callback([selected] { *selected = true; });
  cmd->add_option("fit", a.fit_path, "Serialized fit file")->required();
  cmd->add_option("--reference", a.reference_path,
                  "Reference fit; reports percentage SE decreases relative to it");
  cmd->add_option("--derive", a.derive,
                  "Derived per-response coefficients, syntax response=<name> (repeatable)");
  cmd->add_flag("--model-se", a.model_se, "Use model-based instead of robust SEs");
  cmd->add_option("--out", a.out, "Write the report as CSV here");
}

std::string parse_derive_request(const std::string& raw) {
  const std::string prefix = "response=";
  if (raw.rfind(prefix, 0) != 0)
    throw SpecError("--derive expects response=<name>, got '" + raw + "'");
  return raw.substr(prefix.size());
}

int run_report(const ReportArgs& a) {
  const FitBundle bundle = read_fit_file(a.fit_path);
  const bool robust = !a.model_se;
  const bool logit = bundle.family.link == Link::logit;

  std::cout << "# mmgee report\n"
            << "# fit = " << a.fit_path << " (" << family_name(bundle.family.family) << "/"
            << link_name(bundle.family.link) << ", "
            << correlation_name(bundle.requested_structure) << ", "
            << (bundle.fit.converged ? "converged" : "NOT converged") << ")\n"
            << "# standard errors: " << (robust ? "robust (sandwich)" : "model-based") << "\n"
            << "# reference = " << (a.reference_path.empty() ? "(none)" : a.reference_path)
            << "\n"
            << "# derive = " << (a.derive.empty() ? "(none)" : join(a.derive)) << "\n"
            << "# out = " << (a.out.empty() ? "(none)" : a.out) << "\n";

  std::ostringstream csv;
  csv << "section,response,label,estimate,se,z,p,odds_ratio,se_reference,gain_percent\n";
  auto csv_num = [](double v) { return detail::fmt_full(v); };

  const auto rows = wald_statistics(bundle.fit, robust);
  std::cout << "\ncoefficients\n";
  std::cout << std::left << std::setw(22) << "label" << std::right << std::setw(10)
            << "estimate" << std::setw(10) << "se" << std::setw(10) << "z" << std::setw(12)
            << "p";
  if (logit) std::cout << std::setw(12) << "odds_ratio";
  std::cout << "\n" << std::fixed << std::setprecision(2);
  for (const auto& r : rows) {
    std::cout << std::left << std::setw(22) << r.label << std::right << std::setw(10)
              << r.estimate << std::setw(10) << r.se << std::setw(10) << r.z
              << std::setprecision(4) << std::setw(12) << r.p << std::setprecision(2);
    if (logit) std::cout << std::setw(12) << odds_ratio(r.estimate);
    std::cout << "\n";
    csv << "coefficient,," << r.label << "," << csv_num(r.estimate) << "," << csv_num(r.se)
        << "," << csv_num(r.z) << "," << csv_num(r.p) << ","
        << (logit ? csv_num(odds_ratio(r.estimate)) : "") << ",,\n";
  }
  std::cout.unsetf(std::ios_base::floatfield);
  if (!logit && bundle.family.family == Family::binomial)
    std::cout << "note: odds ratios are only reported for logit links\n";

  std::vector<std::string> derive_responses;
  for (const auto& raw : a.derive) derive_responses.push_back(parse_derive_request(raw));

  for (const auto& resp : derive_responses) {
    const auto table = derive_response_table(bundle, resp, robust);
    std::cout << "\nderived coefficients for response=" << resp << "\n";
    std::cout << std::left << std::setw(22) << "label" << std::right << std::setw(10)
              << "estimate" << std::setw(10) << "se" << std::setw(10) << "z";
    if (logit) std::cout << std::setw(12) << "odds_ratio";
    std::cout << "\n" << std::fixed << std::setprecision(2);
    for (const auto& d : table) {
      std::cout << std::left << std::setw(22) << d.label << std::right << std::setw(10)
                << d.estimate << std::setw(10) << d.se << std::setw(10) << d.z;
      if (logit) std::cout << std::setw(12) << odds_ratio(d.estimate);
      std::cout << "\n";
      csv << "derived," << resp << "," << d.label << "," << csv_num(d.estimate) << ","
          << csv_num(d.se) << "," << csv_num(d.z) << ",,"
          << (logit ? csv_num(odds_ratio(d.estimate)) : "") << ",,\n";
    }
    std::cout.unsetf(std::ios_base::floatfield);
  }

  if (!a.reference_path.empty()) {
    const FitBundle ref = read_fit_file(a.reference_path);
    auto ses_of = [&](const FitBundle& b) {
      std::vector<std::pair<std::string, double>> out;
      const auto& cov = robust ? b.fit.robust_cov : b.fit.model_cov;
      for (Eigen::Index j = 0; j < b.fit.beta.size(); ++j)
        out.emplace_back(b.fit.labels[static_cast<std::size_t>(j)], std::sqrt(cov(j, j)));
      return out;
    };
    auto gains = efficiency_gain(ses_of(ref), ses_of(bundle));

    // Derived per-response coefficients matched by response + base label.
    for (const auto& resp : derive_responses) {
      const auto t_ref = derive_response_table(ref, resp, robust);
      const auto t_cmp = derive_response_table(bundle, resp, robust);
      std::vector<std::pair<std::string, double>> ref_ses, cmp_ses;
      for (const auto& d : t_ref) ref_ses.emplace_back(resp + "/" + d.label, d.se);
      for (const auto& d : t_cmp) cmp_ses.emplace_back(resp + "/" + d.label, d.se);
      const auto g = efficiency_gain(ref_ses, cmp_ses);
      gains.insert(gains.end(), g.begin(), g.end());
    }

    std::cout << "\nefficiency gains vs reference = " << a.reference_path << "\n";
    std::cout << std::left << std::setw(30) << "label" << std::right << std::setw(10)
              << "se_ref" << std::setw(10) << "se" << std::setw(10) << "gain%" << "\n"
              << std::fixed << std::setprecision(2);
    for (const auto& g : gains) {
      std::cout << std::left << std::setw(30) << g.label << std::right << std::setw(10)
                << g.se_reference << std::setw(10) << g.se_comparison << std::setw(10)
                << g.gain_percent << "\n";
      csv << "gain,," << g.label << ",," << csv_num(g.se_comparison) << ",,,,"
          << csv_num(g.se_reference) << "," << csv_num(g.gain_percent) << "\n";
    }
    std::cout.unsetf(std::ios_base::floatfield);
  }

  if (!a.out.empty()) {
    auto out = open_out(a.out);
    out << csv.str();
  }
  return 0;
}

// ------------------------------------------------------------ simulate ----

struct SimulateArgs {
  std::string config_doc;
  SimConfig cfg;
  std::vector<double> beta;
  std::vector<std::string> structures;
  std::vector<std::string> models;
  double tol = 1e-6;
  int maxit = 25;
  std::string out = "mc_summary.csv";
  std::string dump_draws;
};

void add_simulate_command(CLI::App& app, SimulateArgs& a, bool* selected) {
  CLI::App* cmd = app.add_subcommand(
      "simulate", "Monte Carlo comparison of shared-coefficient vs response-specific models");
  cmd->callback([selected] { *selected = true; });
  cmd->add_option("--config", a.config_doc,
                  "Read options from a plain key=value file (expanded before parsing)");
  cmd->add_option("--subjects", a.cfg.n_subjects, "Subjects per replication (default 300)");
  cmd->add_option("--times", a.cfg.n_times, "Time points per subject (default 3)");
  cmd->add_option("--reps", a.cfg.replications, "Replications (default 500)");
  cmd->add_option("--seed", a.cfg.seed, "Master seed (default 1)");
  cmd->add_option("--threads", a.cfg.threads, "Worker threads (default 1)");
  cmd->add_option("--beta", a.beta, "Eight true coefficients (default -0.5,0.5,0.9,0.6,0,0,0,0)")
      ->delimiter(',');
  cmd->add_option("--gamma0", a.cfg.gamma0, "x1 autoregression intercept (default 0.2)");
  cmd->add_option("--gamma1", a.cfg.gamma1, "x1 autoregression slope (default 0.5)");
  cmd->add_option("--x1-sd", a.cfg.x1_initial_sd, "Initial x1 standard deviation (default 0.4)");
  cmd->add_option("--innovation-sd", a.cfg.innovation_sd,
                  "Innovation standard deviations for t=2..T (default 0.25,0.15)")
      ->delimiter(',');
  cmd->add_option("--x2-prob", a.cfg.x2_probability, "P(x2=1) (default 0.5)");
  cmd->add_option("--rho-within", a.cfg.rho_within,
                  "Latent within-response correlation (default 0.5)");
  cmd->add_option("--rho-between", a.cfg.rho_between,
                  "Latent between-response correlation (default 0.25)");
  cmd->add_option("--structures", a.structures,
                  "Working correlation structures (default all four)")
      ->delimiter(',');
  cmd->add_option("--models", a.models, "parsimonious,common (default both)")->delimiter(',');
  cmd->add_option("--tol", a.tol, "Fit tolerance (default 1e-6)");
  cmd->add_option("--maxit", a.maxit, "Fit iteration cap (default 25)");
  cmd->add_option("--out", a.out, "Summary CSV path (default mc_summary.csv)");
  cmd->add_option("--dump-draws", a.dump_draws, "Also dump per-replication draws to this CSV");
}

int run_simulate(SimulateArgs& a) {
  if (!a.beta.empty()) {
    if (a.beta.size() != 8) throw SpecError("--beta needs exactly eight values");
    for (std::size_t j = 0; j < 8; ++j) a.cfg.beta_truth[j] = a.beta[j];
  }
  if (!a.structures.empty()) {
    a.cfg.structures.clear();
    for (const auto& s : a.structures) a.cfg.structures.push_back(parse_corstr(s));
  }
  if (!a.models.empty()) {
    a.cfg.variants.clear();
    for (const auto& m : a.models) {
      if (m == "parsimonious") a.cfg.variants.push_back(ModelVariant::parsimonious);
      else if (m == "common") a.cfg.variants.push_back(ModelVariant::common);
      else throw SpecError("unknown model variant '" + m + "' (parsimonious|common)");
    }
  }
  a.cfg.controls.tolerance = a.tol;
  a.cfg.controls.max_iterations = a.maxit;

  std::cout << "# mmgee simulate\n"
            << "# subjects = " << a.cfg.n_subjects << ", times = " << a.cfg.n_times
            << ", reps = " << a.cfg.replications << ", seed = " << a.cfg.seed
            << ", threads = " << a.cfg.threads << "\n"
            << "# beta =";
  for (double b : a.cfg.beta_truth) std::cout << " " << b;
  std::cout << "\n# rho_within = " << a.cfg.rho_within
            << ", rho_between = " << a.cfg.rho_between << "\n"
            << "# structures =";
  for (auto s : a.cfg.structures) std::cout << " " << correlation_name(s);
  std::cout << "\n# models =";
  for (auto v : a.cfg.variants) std::cout << " " << model_variant_name(v);
  std::cout << "\n# out = " << a.out << "\n";

  const McResult result = monte_carlo(a.cfg);

  for (const auto& cell : result.cells)
    std::cout << "cell " << model_variant_name(cell.variant) << "/"
              << correlation_name(cell.structure) << ": " << cell.n_converged << "/"
              << a.cfg.replications << " converged, " << cell.seconds << " s\n";

  {
    auto out = open_out(a.out);
    write_mc_csv(out, result);
  }
  if (!a.dump_draws.empty()) {
    auto out = open_out(a.dump_draws);
    write_mc_draws_csv(out, result);
  }
  std::cout << "summary written to " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mmgee: marginal models for multivariate longitudinal data, fitted by GEE"};
  app.option_defaults()->always_capture_default(true);  // show defaults in --help
  app.require_subcommand(1);

  FitArgs fit_args;
  PreprocessArgs pre_args;
  ReportArgs report_args;
  SimulateArgs sim_args;
  bool do_fit = false, do_pre = false, do_report = false, do_sim = false;

  add_fit_command(app, fit_args, &do_fit);
  add_preprocess_command(app, pre_args, &do_pre);
  add_report_command(app, report_args, &do_report);
  add_simulate_command(app, sim_args, &do_sim);

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    expand_config_args(args, {"fit", "preprocess", "report", "simulate"});
  } catch (const mmgee::SpecError& e) {
    std::cerr << "mmgee: specification error: " << e.what() << "\n";
    return 2;
  } catch (const mmgee::DataError& e) {
    std::cerr << "mmgee: data error: " << e.what() << "\n";
    return 3;
  }

  try {
    std::reverse(args.begin(), args.end());  // CLI11 vector overload wants reversed args
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (do_fit) return run_fit(fit_args);
    if (do_pre) return run_preprocess(pre_args);
    if (do_report) return run_report(report_args);
    if (do_sim) return run_simulate(sim_args);
  } catch (const mmgee::SpecError& e) {
    std::cerr << "mmgee: specification error: " << e.what() << "\n";
    return 2;
  } catch (const mmgee::DataError& e) {
    std::cerr << "mmgee: data error: " << e.what() << "\n";
    return 3;
  } catch (const mmgee::NumericalError& e) {
    std::cerr << "mmgee: numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "mmgee: error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
