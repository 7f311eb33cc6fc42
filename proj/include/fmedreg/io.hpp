#pragma once

// CSV ingestion and JSON serialization of models, bases and ellipsoids.

#include <Eigen/Dense>
#include <json.hpp>

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fmedreg/errors.hpp"
#include "fmedreg/fda.hpp"
#include "fmedreg/inference.hpp"
#include "fmedreg/regression.hpp"

namespace fmedreg {

using json = nlohmann::json;

inline constexpr const char* kSchema = "fmedreg/1";

struct CsvTable {
  std::vector<std::string> header;  // empty when the file has none
  Eigen::MatrixXd values;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  std::string out = s.substr(b, e - b + 1);
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') {
    out = out.substr(1, out.size() - 2);
  }
  return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace detail

/// Parses a numeric CSV stream. Lines are 1-based in error messages; blank
/// lines are skipped.
inline CsvTable parse_csv(std::istream& in, bool has_header) {
  CsvTable table;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  bool header_pending = has_header;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (header_pending) {
      table.header = cells;
      width = cells.size();
      header_pending = false;
      continue;
    }
    if (width == 0) width = cells.size();
    if (cells.size() != width) {
      throw ParseError(lineno, cells.size(),
                       "expected " + std::to_string(width) + " columns, found " +
                           std::to_string(cells.size()));
    }
    std::vector<double> row(width);
    for (std::size_t c = 0; c < width; ++c) {
      const std::string& text = cells[c];
      if (text.empty()) throw ParseError(lineno, c + 1, "empty cell");
      char* end = nullptr;
      errno = 0;
      const double v = std::strtod(text.c_str(), &end);
      if (end != text.c_str() + text.size() || errno == ERANGE) {
        throw ParseError(lineno, c + 1, "not a number: '" + text + "'");
      }
      if (!std::isfinite(v)) throw ParseError(lineno, c + 1, "non-finite value '" + text + "'");
      row[c] = v;
    }
    rows.push_back(std::move(row));
  }
  table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return table;
}

inline CsvTable read_csv(const std::string& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, 0, "cannot open '" + path + "'");
  try {
    return parse_csv(in, has_header);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.column(), e.reason() + " in '" + path + "'");
  }
}

/// One-column grid file, or p equispaced points on [0,1] when path is empty.
inline Grid read_grid(const std::string& path, Eigen::Index p, bool has_header = false) {
  if (path.empty()) return Grid::equispaced(p);
  const auto t = read_csv(path, has_header);
  if (t.values.cols() != 1) throw ShapeError("grid file must have exactly one column");
  return Grid(t.values.col(0));
}

inline void write_csv(std::ostream& out, const std::vector<std::string>& header,
                      const Eigen::MatrixXd& values) {
  out.precision(17);
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  if (!header.empty()) out << "\n";
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) out << (c ? "," : "") << values(r, c);
    out << "\n";
  }
}

// ---------------------------------------------------------------------------
// JSON

inline json to_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

/// Row-major flattening.
inline json to_json_rowmajor(const Eigen::MatrixXd& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  }
  return flat;
}

inline json to_json_rows(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json(m.row(r).transpose()));
  return rows;
}

inline Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Eigen::MatrixXd matrix_from_rows(const json& j) {
  if (!j.is_array() || j.empty()) return {};
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols) throw ShapeError("ragged matrix in JSON");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

inline json to_json(const FpcaBasis& b) {
  return {{"q", b.q},
          {"mean_curve", to_json(b.mean_curve)},
          {"components", to_json_rows(b.components)},
          {"eigenvalues", to_json(b.eigenvalues)}};
}

inline FpcaBasis fpca_from_json(const json& j) {
  FpcaBasis b;
  b.q = j.at("q").get<Eigen::Index>();
  b.mean_curve = vector_from_json(j.at("mean_curve"));
  b.components = matrix_from_rows(j.at("components"));
  b.eigenvalues = vector_from_json(j.at("eigenvalues"));
  return b;
}

inline json to_json(const Ellipsoid& e) {
  return {{"schema", kSchema},
          {"center", to_json(e.center)},
          {"shape_inv", to_json_rowmajor(e.shape_inv)},
          {"level", e.level},
          {"radius2", e.radius2},
          {"diagnostics",
           {{"ridge", e.diagnostics.ridge},
            {"dropped_terms", e.diagnostics.dropped_terms},
            {"effective_n", e.diagnostics.effective_n},
            {"h", e.diagnostics.h},
            {"m1n", e.diagnostics.m1n},
            {"m2n", e.diagnostics.m2n},
            {"f_xn_h", e.diagnostics.f_xn_h},
            {"median_converged", e.diagnostics.median_converged}}}};
}

inline Method method_from_string(const std::string& s) {
  if (s == "cmm") return Method::CMM;
  if (s == "vccm") return Method::VCCM;
  if (s == "nf") return Method::NF;
  throw ArgumentError("unknown method '" + s + "'");
}

inline KernelKind kernel_from_string(const std::string& s) {
  if (s == "quadratic") return KernelKind::Quadratic;
  if (s == "gauss") return KernelKind::TruncGauss;
  if (s == "gauss-untruncated") return KernelKind::Gauss;
  throw ArgumentError("unknown kernel '" + s + "'");
}

inline SemiMetricKind semimetric_from_string(const std::string& s) {
  if (s == "deriv2") return SemiMetricKind::Deriv2;
  if (s == "fpca") return SemiMetricKind::Fpca;
  if (s == "raw") return SemiMetricKind::RawL2;
  if (s == "euclid") return SemiMetricKind::Euclidean;
  throw ArgumentError("unknown semi-metric '" + s + "'");
}

/// "knn:K" or "h:H".
inline BandwidthRule bandwidth_from_string(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw ArgumentError("bandwidth must be knn:K or h:H");
  const std::string kind = s.substr(0, colon);
  const std::string value = s.substr(colon + 1);
  try {
    if (kind == "knn") return BandwidthRule::knn(std::stol(value));
    if (kind == "h") return BandwidthRule::fixed(std::stod(value));
  } catch (const std::logic_error&) {
    throw ArgumentError("bad bandwidth value '" + value + "'");
  }
  throw ArgumentError("bandwidth must be knn:K or h:H");
}

inline json to_json(const BandwidthRule& r) {
  return {{"kind", r.kind == BandwidthRule::Kind::Knn ? "knn" : "h"}, {"value", r.value}};
}

inline BandwidthRule bandwidth_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "knn") return BandwidthRule::knn(static_cast<Eigen::Index>(j.at("value").get<double>()));
  return BandwidthRule::fixed(j.at("value").get<double>());
}

inline json to_json(const FittedModel& m, const std::vector<std::string>& response_names = {}) {
  json j = {{"schema", kSchema},
            {"method", to_string(m.method())},
            {"kernel", to_string(m.kernel().kind)},
            {"semimetric", to_string(m.semimetric().kind)},
            {"bandwidth", to_json(m.bandwidth())},
            {"grid", to_json(m.covariates().grid().points())},
            {"curves", to_json_rows(m.covariates().values())},
            {"responses", to_json_rows(m.responses())}};
  if (m.semimetric().fitted) j["fpca"] = to_json(*m.semimetric().fitted);
  if (!response_names.empty()) j["response_names"] = response_names;
  return j;
}

inline FittedModel model_from_json(const json& j) {
  try {
    if (j.at("schema").get<std::string>() != kSchema) throw ShapeError("unsupported model schema");
    const Grid grid(vector_from_json(j.at("grid")));
    FunctionalSample sample(grid, matrix_from_rows(j.at("curves")));
    SemiMetricSpec spec{semimetric_from_string(j.at("semimetric").get<std::string>()), std::nullopt};
    if (j.contains("fpca")) spec.fitted = fpca_from_json(j.at("fpca"));
    return FittedModel(std::move(sample), matrix_from_rows(j.at("responses")), spec,
                       KernelSpec{kernel_from_string(j.at("kernel").get<std::string>())},
                       bandwidth_from_json(j.at("bandwidth")),
                       method_from_string(j.at("method").get<std::string>()));
  } catch (const json::exception& e) {
    throw ShapeError(std::string("malformed model file: ") + e.what());
  }
}

}  // namespace fmedreg
