#pragma once

// Batch command-line front end: fit, predict, ellipse, simulate,
// benchmark, fpca.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
// Failures print one line on stderr:
//   fmedreg: error exit=<code> kind=<Kind> message="<text>"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fmedreg/bench.hpp"
#include "fmedreg/errors.hpp"
#include "fmedreg/fda.hpp"
#include "fmedreg/inference.hpp"
#include "fmedreg/io.hpp"
#include "fmedreg/regression.hpp"
#include "fmedreg/simulation.hpp"

namespace fmedreg {

namespace cli {

inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

inline void emit(const std::string& path, const std::string& content, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << content;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError(0, 0, "cannot write '" + path + "'");
  f << content;
}

inline std::vector<Method> parse_methods(const std::string& list) {
  std::vector<Method> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(method_from_string(item));
  }
  if (out.empty()) throw ArgumentError("no method given");
  return out;
}

inline std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
    if (c == '"') c = '\'';
  }
  return s;
}

struct DataArgs {
  std::string curves;
  std::string responses;
  std::string grid;
  bool header = false;
};

inline void add_data_options(CLI::App* cmd, DataArgs& a, bool need_responses) {
  cmd->add_option("--curves", a.curves, "Curve matrix CSV (one curve per row)")->required();
  if (need_responses) {
    cmd->add_option("--responses", a.responses, "Response CSV with a header row")->required();
  }
  cmd->add_option("--grid", a.grid, "One-column grid CSV (default: equispaced on [0,1])");
  cmd->add_flag("--header", a.header, "The curve CSV has a header row");
}

inline Matrix read_curves_for(const FittedModel& model, const DataArgs& a) {
  const auto table = read_csv(a.curves, a.header);
  model.covariates().grid().check_length(table.values.cols());
  return table.values;
}

inline std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

}  // namespace cli

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Conditional spatial-median regression with a functional covariate", "fmedreg"};
  app.require_subcommand(1);

  // fit
  cli::DataArgs fit_data;
  std::string fit_method = "cmm", fit_kernel = "quadratic", fit_metric = "deriv2";
  std::string fit_bandwidth = "cv", fit_out;
  Eigen::Index fit_q = 2;
  bool unsafe_kernel = false;
  auto* fit = app.add_subcommand("fit", "Fit a predictor and save it as JSON");
  cli::add_data_options(fit, fit_data, true);
  fit->add_option("--method", fit_method, "cmm | vccm | nf")->capture_default_str();
  fit->add_option("--kernel", fit_kernel, "quadratic | gauss (truncated to [0,1])")
      ->capture_default_str();
  fit->add_flag("--unsafe-kernel", unsafe_kernel,
                "Use the untruncated Gaussian kernel (estimation only, no ellipses)");
  fit->add_option("--semimetric", fit_metric, "deriv2 | fpca | raw")->capture_default_str();
  fit->add_option("--q", fit_q, "FPCA dimension for --semimetric fpca")->capture_default_str();
  fit->add_option("--bandwidth", fit_bandwidth, "cv | knn:K | h:H")->capture_default_str();
  fit->add_option("--out", fit_out, "Model JSON path (default stdout)");

  // predict
  std::string pred_model, pred_out, pred_format = "csv";
  cli::DataArgs pred_data;
  auto* pred = app.add_subcommand("predict", "Predict responses for new curves");
  pred->add_option("--model", pred_model, "Model JSON from `fit`")->required();
  cli::add_data_options(pred, pred_data, false);
  pred->add_option("--format", pred_format, "csv | json")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  pred->add_option("--out", pred_out, "Output path (default stdout)");

  // ellipse
  std::string ell_model, ell_out;
  double ell_alpha = 0.05;
  cli::DataArgs ell_data;
  auto* ell = app.add_subcommand("ellipse", "Confidence ellipsoids of the conditional median");
  ell->add_option("--model", ell_model, "CMM model JSON from `fit`")->required();
  cli::add_data_options(ell, ell_data, false);
  ell->add_option("--alpha", ell_alpha, "Level: 1 - alpha coverage")->capture_default_str();
  ell->add_option("--out", ell_out, "JSON output path (default stdout)");

  // simulate
  SimConfig sim_cfg;
  sim_cfg.reps = 100;
  double sim_alpha = 0.05;
  Eigen::Index sim_q = 2, sim_compare = 0;
  std::string sim_out, sim_csv, sim_kernel = "gauss";
  auto* sim = app.add_subcommand("simulate", "Monte Carlo coverage of the ellipsoid at x = 0");
  sim->add_option("--n", sim_cfg.n, "Sample size")->capture_default_str();
  sim->add_option("--p", sim_cfg.p, "Grid points on [0,1]")->capture_default_str();
  sim->add_option("--reps", sim_cfg.reps, "Replications")->capture_default_str();
  sim->add_option("--seed", sim_cfg.seed, "RNG seed")->capture_default_str();
  sim->add_option("--noise-sd", sim_cfg.noise_sd, "Noise standard deviation")
      ->capture_default_str();
  sim->add_option("--alpha", sim_alpha, "Level: 1 - alpha coverage")->capture_default_str();
  sim->add_option("--q", sim_q, "FPCA dimension of the semi-metric")->capture_default_str();
  sim->add_option("--kernel", sim_kernel, "quadratic | gauss (truncated)")
      ->check(CLI::IsMember({"quadratic", "gauss"}))
      ->capture_default_str();
  sim->add_option("--compare-n", sim_compare,
                  "Also run the paired axis-shrinkage study against this sample size");
  sim->add_option("--out", sim_out, "JSON summary path (default stdout)");
  sim->add_option("--csv", sim_csv, "Per-replication CSV path");

  // benchmark
  cli::DataArgs bench_data;
  std::string bench_methods = "cmm,vccm,nf", bench_split = "file-order", bench_out,
              bench_format = "csv";
  Eigen::Index bench_learn = 160;
  bool bench_literal = false;
  std::uint64_t bench_synthetic_seed = 1;
  auto* bench = app.add_subcommand("benchmark", "Compare CMM, VCCM and NF on a learn/test split");
  bench->add_option("--curves", bench_data.curves, "Curve matrix CSV");
  bench->add_option("--responses", bench_data.responses, "Response CSV with a header row");
  bench->add_option("--grid", bench_data.grid, "One-column grid CSV");
  bench->add_flag("--header", bench_data.header, "The curve CSV has a header row");
  bench->add_option("--methods", bench_methods, "Comma-separated subset of cmm,vccm,nf")
      ->capture_default_str();
  bench->add_option("--split", bench_split, "file-order | seed:N")->capture_default_str();
  bench->add_option("--n-learn", bench_learn, "Learning sample size")->capture_default_str();
  bench->add_flag("--literal-copy", bench_literal,
                  "Copy the nearest learning curve's prediction instead of re-predicting");
  bench->add_option("--synthetic-seed", bench_synthetic_seed,
                    "Seed of the synthetic stand-in used when no data files are given")
      ->capture_default_str();
  bench->add_option("--format", bench_format, "csv | json")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  bench->add_option("--out", bench_out, "Output path (default stdout)");

  // fpca
  cli::DataArgs fpca_data;
  Eigen::Index fpca_q = 2;
  std::string fpca_out;
  auto* fpca = app.add_subcommand("fpca", "Functional principal components of a curve sample");
  cli::add_data_options(fpca, fpca_data, false);
  fpca->add_option("--q", fpca_q, "Number of components")->capture_default_str();
  fpca->add_option("--out", fpca_out, "JSON output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "fmedreg: error exit=" << cli::kExitUsage << " kind=UsageError message=\""
        << cli::one_line(e.what()) << "\"\n";
    return cli::kExitUsage;
  }

  try {
    if (*fit) {
      const auto ds = parse_dataset(fit_data.curves, fit_data.responses,
                                    {fit_data.header, fit_data.grid});
      const Method method = method_from_string(fit_method);
      KernelSpec kernel{kernel_from_string(fit_kernel)};
      if (kernel.kind == KernelKind::Gauss) throw ArgumentError("use --unsafe-kernel for the untruncated Gaussian");
      if (unsafe_kernel) kernel.kind = KernelKind::Gauss;
      SemiMetricSpec spec{semimetric_from_string(fit_metric), std::nullopt};
      if (spec.kind == SemiMetricKind::Fpca) spec = SemiMetricSpec::fpca(ds.curves, fit_q);
      const BandwidthRule initial =
          fit_bandwidth == "cv" ? BandwidthRule::knn(1) : bandwidth_from_string(fit_bandwidth);
      FittedModel model(ds.curves, ds.responses, spec, kernel, initial, method);
      if (fit_bandwidth == "cv") {
        const Matrix pairwise = model.learning_distances();
        const auto grid = method == Method::NF ? fixed_h_candidates(pairwise)
                                               : knn_candidates(model.size());
        model = model.with_bandwidth(
            cross_validate(method, pairwise, model.responses(), kernel, grid).best);
      }
      cli::emit(fit_out, to_json(model, ds.response_names).dump(2) + "\n", out);
    } else if (*pred) {
      std::ifstream in(pred_model);
      if (!in) throw ParseError(0, 0, "cannot open '" + pred_model + "'");
      json mj;
      try {
        mj = json::parse(in);
      } catch (const json::exception& e) {
        throw ParseError(0, 0, pred_model + ": " + e.what());
      }
      const FittedModel model = model_from_json(mj);
      const Matrix curves = cli::read_curves_for(model, pred_data);
      std::vector<std::string> names;
      if (mj.contains("response_names")) names = mj["response_names"].get<std::vector<std::string>>();
      if (names.empty()) {
        for (Eigen::Index j = 0; j < model.responses().cols(); ++j) names.push_back("y" + std::to_string(j + 1));
      }
      Matrix preds(curves.rows(), model.responses().cols());
      json rows = json::array();
      for (Eigen::Index i = 0; i < curves.rows(); ++i) {
        const auto p = predict(model, curves.row(i).transpose());
        preds.row(i) = p.y_hat.transpose();
        rows.push_back({{"y_hat", to_json(p.y_hat)}, {"h", p.h_used},
                        {"effective_n", p.weights_used.effective_n}});
      }
      if (pred_format == "json") {
        cli::emit(pred_out, json{{"schema", kSchema}, {"response_names", names},
                                 {"predictions", rows}}.dump(2) + "\n", out);
      } else {
        std::ostringstream os;
        write_csv(os, names, preds);
        cli::emit(pred_out, os.str(), out);
      }
    } else if (*ell) {
      std::ifstream in(ell_model);
      if (!in) throw ParseError(0, 0, "cannot open '" + ell_model + "'");
      json mj;
      try {
        mj = json::parse(in);
      } catch (const json::exception& e) {
        throw ParseError(0, 0, ell_model + ": " + e.what());
      }
      const FittedModel model = model_from_json(mj);
      const Matrix curves = cli::read_curves_for(model, ell_data);
      json list = json::array();
      for (Eigen::Index i = 0; i < curves.rows(); ++i) {
        list.push_back(to_json(confidence_ellipsoid(model, curves.row(i).transpose(), ell_alpha)));
      }
      cli::emit(ell_out, json{{"schema", kSchema}, {"ellipsoids", list}}.dump(2) + "\n", out);
    } else if (*sim) {
      CoverageOptions opts;
      opts.kernel = KernelSpec{kernel_from_string(sim_kernel)};
      opts.fpca_q = sim_q;
      sim_cfg.validate();
      const Eigen::VectorXd zero = Eigen::VectorXd::Zero(sim_cfg.p);
      const auto report = coverage_experiment(sim_cfg, sim_alpha, zero, opts);
      json reps = json::array();
      std::ostringstream csv;
      csv.precision(17);
      csv << "rep,seed,h,inside,statistic,major_axis,minor_axis,error\n";
      for (const auto& r : report.records) {
        reps.push_back({{"rep", r.rep}, {"h", r.h}, {"inside", r.inside},
                        {"statistic", r.statistic}, {"major_axis", r.major_axis},
                        {"minor_axis", r.minor_axis}, {"error", r.error}});
        csv << r.rep << "," << r.seed << "," << r.h << "," << (r.inside ? 1 : 0) << ","
            << r.statistic << "," << r.major_axis << "," << r.minor_axis << ","
            << cli::one_line(r.error) << "\n";
      }
      json summary = {{"schema", kSchema},
                      {"generated_at", cli::timestamp()},
                      {"config",
                       {{"n", sim_cfg.n}, {"p", sim_cfg.p}, {"reps", sim_cfg.reps},
                        {"seed", sim_cfg.seed}, {"noise_sd", sim_cfg.noise_sd},
                        {"alpha", sim_alpha}, {"q", sim_q}, {"kernel", sim_kernel}}},
                      {"coverage", report.coverage},
                      {"standard_error", report.standard_error},
                      {"successes", report.successes},
                      {"failures", report.failures},
                      {"replications", reps}};
      if (sim_compare > 0) {
        const auto shrink = shrinkage_experiment(sim_cfg, sim_cfg.n, sim_compare, sim_alpha, opts);
        summary["shrinkage"] = {{"n_small", shrink.n_small},
                                {"n_large", shrink.n_large},
                                {"median_major_small", shrink.median_major_small},
                                {"median_major_large", shrink.median_major_large},
                                {"pairs", shrink.pairs},
                                {"shrank", shrink.shrank},
                                {"sign_test_p", shrink.sign_test_p}};
      }
      if (!sim_csv.empty()) cli::emit(sim_csv, csv.str(), out);
      cli::emit(sim_out, summary.dump(2) + "\n", out);
    } else if (*bench) {
      Dataset ds;
      if (bench_data.curves.empty() && bench_data.responses.empty()) {
        err << "fmedreg: note: no data files given, using the synthetic stand-in\n";
        ds = synthetic_spectra(215, bench_synthetic_seed);
      } else {
        if (bench_data.curves.empty() || bench_data.responses.empty()) {
          throw ArgumentError("--curves and --responses must be given together");
        }
        ds = parse_dataset(bench_data.curves, bench_data.responses,
                           {bench_data.header, bench_data.grid});
      }
      std::optional<std::uint64_t> seed;
      if (bench_split != "file-order") {
        if (bench_split.rfind("seed:", 0) != 0) throw ArgumentError("--split must be file-order or seed:N");
        try {
          seed = std::stoull(bench_split.substr(5));
        } catch (const std::logic_error&) {
          throw ArgumentError("bad split seed '" + bench_split + "'");
        }
      }
      const auto split = split_learn_test(ds, bench_learn, seed);
      BenchConfig cfg;
      cfg.literal_copy = bench_literal;
      const auto report = evaluate(cli::parse_methods(bench_methods), split.learn, split.test, cfg);
      if (bench_format == "json") {
        json j = to_json(report);
        j["correlations"] = to_json_rows(correlation_summary(ds));
        cli::emit(bench_out, j.dump(2) + "\n", out);
      } else {
        std::ostringstream os;
        write_report_csv(os, report);
        cli::emit(bench_out, os.str(), out);
      }
    } else if (*fpca) {
      const auto table = read_csv(fpca_data.curves, fpca_data.header);
      const Grid grid = read_grid(fpca_data.grid, table.values.cols());
      const FunctionalSample sample(grid, table.values);
      const auto basis = fit_fpca(sample, fpca_q);
      json j = to_json(basis);
      j["schema"] = kSchema;
      j["grid"] = to_json(grid.points());
      j["scores"] = to_json_rows(basis.scores(grid, sample.values()));
      cli::emit(fpca_out, j.dump(2) + "\n", out);
    }
  } catch (const Error& e) {
    const int code = e.category() == ErrorCategory::Data ? cli::kExitData : cli::kExitNumeric;
    err << "fmedreg: error exit=" << code << " kind=" << e.kind() << " message=\""
        << cli::one_line(e.what()) << "\"\n";
    return code;
  } catch (const std::exception& e) {
    err << "fmedreg: error exit=" << cli::kExitNumeric << " kind=InternalError message=\""
        << cli::one_line(e.what()) << "\"\n";
    return cli::kExitNumeric;
  }
  return 0;
}

}  // namespace fmedreg
