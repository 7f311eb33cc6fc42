#pragma once

// Spectrometric benchmark: dataset ingestion, learn/test split, the three
// predictors evaluated with bandwidth transfer, and absolute-error / R
// summaries.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fmedreg/errors.hpp"
#include "fmedreg/fda.hpp"
#include "fmedreg/io.hpp"
#include "fmedreg/kernels.hpp"
#include "fmedreg/parallel.hpp"
#include "fmedreg/regression.hpp"
#include "fmedreg/simulation.hpp"

namespace fmedreg {

struct Dataset {
  FunctionalSample curves;
  Eigen::MatrixXd responses;
  std::vector<std::string> response_names;

  Eigen::Index size() const { return responses.rows(); }

  void validate() const {
    if (curves.size() != responses.rows()) {
      throw ShapeError("curves have " + std::to_string(curves.size()) +
                       " rows but responses have " + std::to_string(responses.rows()));
    }
    if (static_cast<Eigen::Index>(response_names.size()) != responses.cols()) {
      throw ShapeError("one response name per response column is required");
    }
    std::set<std::string> seen;
    for (const auto& name : response_names) {
      if (!seen.insert(name).second) throw ShapeError("duplicate response name '" + name + "'");
    }
  }

  Dataset subset(const std::vector<Eigen::Index>& rows) const {
    Dataset out;
    out.curves = curves.subset(rows);
    out.responses.resize(static_cast<Eigen::Index>(rows.size()), responses.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out.responses.row(static_cast<Eigen::Index>(r)) = responses.row(rows[r]);
    }
    out.response_names = response_names;
    return out;
  }
};

struct DatasetOptions {
  bool curves_header = false;
  std::string grid_path;  // empty: equispaced on [0,1]
};

inline Dataset dataset_from_tables(const CsvTable& curves, const CsvTable& responses,
                                   const Grid& grid) {
  if (responses.header.empty()) throw ShapeError("the responses file needs a header row");
  Dataset ds;
  if (curves.values.rows() != responses.values.rows()) {
    throw ShapeError("curves have " + std::to_string(curves.values.rows()) +
                     " rows but responses have " + std::to_string(responses.values.rows()));
  }
  ds.curves = FunctionalSample(grid, curves.values);
  ds.responses = responses.values;
  ds.response_names = responses.header;
  ds.validate();
  return ds;
}

inline Dataset parse_dataset(const std::string& curve_csv, const std::string& response_csv,
                             const DatasetOptions& options = {}) {
  const CsvTable curves = read_csv(curve_csv, options.curves_header);
  const CsvTable responses = read_csv(response_csv, true);
  if (curves.values.rows() == 0) throw ShapeError("curve file has no data rows");
  const Grid grid = read_grid(options.grid_path, curves.values.cols());
  return dataset_from_tables(curves, responses, grid);
}

struct Split {
  Dataset learn;
  Dataset test;
  std::vector<Eigen::Index> learn_rows;
  std::vector<Eigen::Index> test_rows;
};

/// File order when seed is empty, otherwise a seeded Fisher-Yates
/// permutation first.
inline Split split_learn_test(const Dataset& ds, Eigen::Index n_learn,
                              std::optional<std::uint64_t> seed = std::nullopt) {
  const auto n = ds.size();
  if (n_learn < 1 || n_learn >= n) {
    throw ShapeError("n_learn=" + std::to_string(n_learn) + " outside [1, " +
                     std::to_string(n - 1) + "]");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  if (seed) {
    CounterRng rng(*seed, 0);
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
      std::swap(order[i], order[j]);
    }
  }
  Split out;
  out.learn_rows.assign(order.begin(), order.begin() + n_learn);
  out.test_rows.assign(order.begin() + n_learn, order.end());
  out.learn = ds.subset(out.learn_rows);
  out.test = ds.subset(out.test_rows);
  return out;
}

/// Linear interpolation between closest ranks (inclusive): position
/// q (n - 1) in the sorted sample.
inline double quantile_linear(std::vector<double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto below = static_cast<std::size_t>(std::floor(pos));
  const auto above = std::min(below + 1, values.size() - 1);
  return values[below] + (pos - static_cast<double>(below)) * (values[above] - values[below]);
}

struct Summary {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double q25 = std::numeric_limits<double>::quiet_NaN();
  double q50 = std::numeric_limits<double>::quiet_NaN();
  double q75 = std::numeric_limits<double>::quiet_NaN();
};

inline Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  s.q25 = quantile_linear(values, 0.25);
  s.q50 = quantile_linear(values, 0.50);
  s.q75 = quantile_linear(values, 0.75);
  return s;
}

struct ObservationRecord {
  Eigen::Index test_row = 0;  // row index within the test set
  Eigen::VectorXd y_hat;
  Eigen::VectorXd abs_error;
  double r = 0.0;  // Euclidean norm of the error vector
  bool failed = false;
};

struct MethodReport {
  Method method = Method::CMM;
  std::vector<Summary> abs_error;  // one per response component
  Summary r;
  std::vector<ObservationRecord> records;
  Eigen::Index missing = 0;
  std::string error;  // method-level failure
  std::vector<BandwidthRule> learning_rules;  // first component's rules for VCCM
};

struct BenchReport {
  std::vector<std::string> response_names;
  std::vector<MethodReport> methods;
  std::map<std::string, Eigen::Index> predictor_calls;  // per method tag
};

struct BenchConfig {
  KernelSpec kernel = KernelSpec::quadratic();
  SemiMetricSpec functional_semimetric = SemiMetricSpec::deriv2();
  /// Copy the prediction of the nearest learning curve instead of
  /// predicting at the test curve with the transferred bandwidth.
  bool literal_copy = false;
  int nf_h_candidates = 15;
};

namespace detail {

inline void finalize_report(MethodReport& rep, const Eigen::MatrixXd& truth) {
  const auto d = truth.cols();
  std::vector<std::vector<double>> ae(static_cast<std::size_t>(d));
  std::vector<double> rs;
  for (const auto& rec : rep.records) {
    if (rec.failed) continue;
    for (Eigen::Index j = 0; j < d; ++j) ae[j].push_back(rec.abs_error[j]);
    rs.push_back(rec.r);
  }
  rep.abs_error.clear();
  for (const auto& v : ae) rep.abs_error.push_back(summarize(v));
  rep.r = summarize(rs);
}

inline ObservationRecord make_record(Eigen::Index row, const Eigen::VectorXd& y_hat,
                                     const Eigen::VectorXd& y) {
  ObservationRecord rec;
  rec.test_row = row;
  rec.y_hat = y_hat;
  rec.abs_error = (y - y_hat).cwiseAbs();
  rec.r = (y - y_hat).norm();
  return rec;
}

}  // namespace detail

/// Fits each requested method on `learn` and predicts `test`.
///  - CMM: kNN bandwidth chosen per learning curve by local leave-one-out,
///    transferred to each test curve from its nearest learning curve.
///  - VCCM: same, separately for every response component.
///  - NF: Euclidean distance on raw curves, one fixed h by global
///    leave-one-out over distance quantiles.
inline BenchReport evaluate(const std::vector<Method>& methods, const Dataset& learn,
                            const Dataset& test, const BenchConfig& config = {}) {
  if (methods.empty()) throw ArgumentError("no method requested");
  learn.validate();
  test.validate();
  if (!(learn.curves.grid() == test.curves.grid())) {
    throw DimensionError("learning and test curves use different grids");
  }
  if (learn.responses.cols() != test.responses.cols()) {
    throw ShapeError("learning and test responses differ in dimension");
  }
  BenchReport report;
  report.response_names = learn.response_names;
  const auto n_test = test.size();
  const auto d = learn.responses.cols();

  for (const Method method : methods) {
    MethodReport rep;
    rep.method = method;
    rep.records.resize(static_cast<std::size_t>(n_test));
    Eigen::Index& calls = report.predictor_calls[to_string(method)];
    try {
      const SemiMetricSpec spec =
          method == Method::NF ? SemiMetricSpec::euclidean() : config.functional_semimetric;
      const FittedModel model(learn.curves, learn.responses, spec, config.kernel,
                              BandwidthRule::knn(1), method);
      const Eigen::MatrixXd pairwise = model.learning_distances();
      std::vector<Eigen::VectorXd> test_dist(static_cast<std::size_t>(n_test));
      for (Eigen::Index t = 0; t < n_test; ++t) test_dist[t] = model.distances(test.curves.curve(t));

      // Rules per learning curve, one set per response component for VCCM.
      std::vector<std::vector<BandwidthRule>> rules;
      const auto knn = knn_candidates(learn.size());
      if (method == Method::CMM) {
        rules.push_back(local_bandwidth_cv(method, pairwise, learn.responses, config.kernel, knn));
      } else if (method == Method::VCCM) {
        for (Eigen::Index j = 0; j < d; ++j) {
          rules.push_back(
              local_bandwidth_cv(method, pairwise, learn.responses, config.kernel, knn, j));
        }
      } else {
        const auto cv = cross_validate(method, pairwise, learn.responses, config.kernel,
                                       fixed_h_candidates(pairwise, config.nf_h_candidates));
        rules.emplace_back(static_cast<std::size_t>(learn.size()), cv.best);
      }
      rep.learning_rules = rules.front();

      std::vector<Eigen::Index> call_count(static_cast<std::size_t>(n_test), 0);
      parallel_for(static_cast<std::size_t>(n_test), [&](std::size_t tt) {
        const auto t = static_cast<Eigen::Index>(tt);
        const Eigen::VectorXd y = test.responses.row(t).transpose();
        try {
          Eigen::VectorXd y_hat(d);
          const Eigen::VectorXd& dist = test_dist[tt];
          const Eigen::Index nearest = nearest_index(dist);
          const Eigen::VectorXd nearest_row = pairwise.row(nearest).transpose();
          const Eigen::VectorXd& at = config.literal_copy ? nearest_row : dist;
          if (method == Method::VCCM) {
            for (Eigen::Index j = 0; j < d; ++j) {
              const auto rule = transfer_bandwidth(dist, rules[j]);
              y_hat[j] = predict_from_distances(method, learn.responses, at, rule, config.kernel)
                             .y_hat[j];
              ++call_count[tt];
            }
          } else {
            const auto rule = transfer_bandwidth(dist, rules.front());
            y_hat = predict_from_distances(method, learn.responses, at, rule, config.kernel).y_hat;
            ++call_count[tt];
          }
          rep.records[tt] = detail::make_record(t, y_hat, y);
        } catch (const EmptyWindowError&) {
          rep.records[tt].test_row = t;
          rep.records[tt].failed = true;
        }
      });
      for (const auto c : call_count) calls += c;
      for (const auto& rec : rep.records) rep.missing += rec.failed ? 1 : 0;
      detail::finalize_report(rep, test.responses);
    } catch (const Error& e) {
      rep.error = e.kind() + ": " + e.what();
      rep.records.clear();
      rep.missing = n_test;
      detail::finalize_report(rep, test.responses);
    }
    report.methods.push_back(std::move(rep));
  }
  return report;
}

/// Pearson correlations between response columns; NaN where a column has
/// zero variance.
inline Eigen::MatrixXd correlation_summary(const Dataset& ds) {
  const auto n = ds.size();
  if (n < 2) throw ShapeError("correlations need at least 2 rows");
  const Eigen::MatrixXd centered = ds.responses.rowwise() - ds.responses.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered;
  const auto d = cov.rows();
  Eigen::MatrixXd out(d, d);
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = 0; b < d; ++b) {
      const double denom = std::sqrt(cov(a, a) * cov(b, b));
      out(a, b) = denom > 0.0 ? cov(a, b) / denom : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

/// Synthetic stand-in with the Tecator shape (n x 100 absorbance curves on
/// 850-1050 nm, moisture/fat/protein responses). Each curve is a smooth
/// baseline with a random offset and tilt plus absorption bands whose
/// heights follow the three contents.
inline Dataset synthetic_spectra(Eigen::Index n = 215, std::uint64_t seed = 1,
                                 Eigen::Index p = 100) {
  CounterRng rng(seed, 0x7ec);
  const Grid grid(Eigen::VectorXd::LinSpaced(p, 850.0, 1050.0));
  Dataset ds;
  ds.response_names = {"Moisture", "Fat", "Protein"};
  ds.responses.resize(n, 3);
  Eigen::MatrixXd curves(n, p);
  auto band = [](double lambda, double centre, double width) {
    const double z = (lambda - centre) / width;
    return std::exp(-0.5 * z * z);
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    const double fat = 2.0 + 46.0 * std::pow(rng.uniform(), 1.6);
    const double moisture = 73.5 - 0.68 * fat + 0.9 * rng.normal();
    const double protein = 20.8 - 0.11 * fat + 0.95 * rng.normal();
    ds.responses.row(i) << moisture, fat, protein;
    const double offset = 2.6 + 0.45 * rng.normal();
    const double tilt = 0.3 * rng.normal();
    for (Eigen::Index k = 0; k < p; ++k) {
      const double lambda = grid.points()[k];
      const double s = (lambda - 850.0) / 200.0;
      curves(i, k) = offset + tilt * s + 0.02 * fat * band(lambda, 930.0, 14.0) +
                     0.012 * moisture * band(lambda, 975.0, 22.0) +
                     0.03 * protein * band(lambda, 1020.0, 16.0);
    }
  }
  ds.curves = FunctionalSample(grid, std::move(curves));
  return ds;
}

inline json to_json(const Summary& s) {
  return {{"mean", s.mean}, {"q25", s.q25}, {"q50", s.q50}, {"q75", s.q75}};
}

inline json to_json(const BenchReport& report) {
  json methods = json::array();
  for (const auto& m : report.methods) {
    json comps = json::object();
    for (std::size_t j = 0; j < m.abs_error.size(); ++j) {
      comps[report.response_names[j]] = to_json(m.abs_error[j]);
    }
    json records = json::array();
    for (const auto& rec : m.records) {
      json r = {{"test_row", rec.test_row}, {"failed", rec.failed}};
      if (!rec.failed) {
        r["y_hat"] = to_json(rec.y_hat);
        r["abs_error"] = to_json(rec.abs_error);
        r["r"] = rec.r;
      }
      records.push_back(std::move(r));
    }
    json entry = {{"method", to_string(m.method)},
                  {"abs_error", comps},
                  {"R", to_json(m.r)},
                  {"missing", m.missing},
                  {"records", records}};
    if (!m.error.empty()) entry["error"] = m.error;
    methods.push_back(std::move(entry));
  }
  return {{"schema", kSchema},
          {"response_names", report.response_names},
          {"methods", methods},
          {"predictor_calls", report.predictor_calls}};
}

/// Table-shaped CSV: one row per response plus "R", four columns per
/// method (mean, q25, q50, q75).
inline void write_report_csv(std::ostream& out, const BenchReport& report) {
  out.precision(10);
  out << "row";
  for (const auto& m : report.methods) {
    const auto tag = to_string(m.method);
    out << "," << tag << "_mean," << tag << "_q25," << tag << "_q50," << tag << "_q75";
  }
  out << "\n";
  auto cells = [&](const Summary& s) {
    out << "," << s.mean << "," << s.q25 << "," << s.q50 << "," << s.q75;
  };
  for (std::size_t j = 0; j < report.response_names.size(); ++j) {
    out << report.response_names[j];
    for (const auto& m : report.methods) {
      cells(j < m.abs_error.size() ? m.abs_error[j] : Summary{});
    }
    out << "\n";
  }
  out << "R";
  for (const auto& m : report.methods) cells(m.r);
  out << "\n";
}

}  // namespace fmedreg
