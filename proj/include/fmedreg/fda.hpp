#pragma once

// Discretized functional data: grids, curve samples, quadrature, second
// derivatives, FPCA and the semi-metrics used to compare curves.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fmedreg/errors.hpp"
#include "fmedreg/parallel.hpp"

namespace fmedreg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Strictly increasing abscissae shared by every curve of a sample.
class Grid {
 public:
  Grid() = default;

  explicit Grid(Vector points) : points_(std::move(points)) {
    if (points_.size() < 3) {
      throw DimensionError("grid needs at least 3 points, got " +
                           std::to_string(points_.size()));
    }
    for (Eigen::Index k = 0; k < points_.size(); ++k) {
      if (!std::isfinite(points_[k])) {
        throw DimensionError("grid point " + std::to_string(k) + " is not finite");
      }
      if (k > 0 && !(points_[k] > points_[k - 1])) {
        throw DimensionError("grid must be strictly increasing (index " +
                             std::to_string(k) + ")");
      }
    }
    weights_ = Vector::Zero(points_.size());
    for (Eigen::Index k = 0; k + 1 < points_.size(); ++k) {
      const double half = 0.5 * (points_[k + 1] - points_[k]);
      weights_[k] += half;
      weights_[k + 1] += half;
    }
  }

  /// p equispaced points on [a, b].
  static Grid equispaced(Eigen::Index p, double a = 0.0, double b = 1.0) {
    return Grid(Vector::LinSpaced(p, a, b));
  }

  Eigen::Index size() const { return points_.size(); }
  const Vector& points() const { return points_; }
  /// Trapezoidal quadrature weights: integral of f ~= weights . f.
  const Vector& weights() const { return weights_; }

  double integrate(const Eigen::Ref<const Vector>& f) const {
    check_length(f.size());
    return weights_.dot(f);
  }

  void check_length(Eigen::Index len) const {
    if (len != size()) {
      throw DimensionError("curve has " + std::to_string(len) +
                           " values but the grid has " + std::to_string(size()));
    }
  }

  bool operator==(const Grid& other) const {
    return points_.size() == other.points_.size() && points_ == other.points_;
  }

 private:
  Vector points_;
  Vector weights_;
};

/// n curves on a common grid; row i is X_i.
class FunctionalSample {
 public:
  FunctionalSample() = default;

  FunctionalSample(Grid grid, Matrix values)
      : grid_(std::move(grid)), values_(std::move(values)) {
    grid_.check_length(values_.cols());
    if (!values_.allFinite()) {
      for (Eigen::Index i = 0; i < values_.rows(); ++i) {
        for (Eigen::Index k = 0; k < values_.cols(); ++k) {
          if (!std::isfinite(values_(i, k))) {
            throw DimensionError("curve " + std::to_string(i) +
                                 " has a non-finite value at grid index " +
                                 std::to_string(k));
          }
        }
      }
    }
  }

  const Grid& grid() const { return grid_; }
  const Matrix& values() const { return values_; }
  Eigen::Index size() const { return values_.rows(); }
  Eigen::Index points() const { return values_.cols(); }
  Vector curve(Eigen::Index i) const { return values_.row(i).transpose(); }

  FunctionalSample subset(const std::vector<Eigen::Index>& rows) const {
    Matrix out(static_cast<Eigen::Index>(rows.size()), values_.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out.row(static_cast<Eigen::Index>(r)) = values_.row(rows[r]);
    }
    return FunctionalSample(grid_, std::move(out));
  }

 private:
  Grid grid_;
  Matrix values_;
};

namespace detail {

// Fornberg's recursion for finite-difference weights of derivative order
// `order` at z using arbitrary nodes.
inline std::vector<double> fornberg_weights(const std::vector<double>& nodes,
                                            double z, int order) {
  const int n = static_cast<int>(nodes.size()) - 1;
  std::vector<std::vector<double>> c(nodes.size(),
                                     std::vector<double>(order + 1, 0.0));
  double c1 = 1.0;
  double c4 = nodes[0] - z;
  c[0][0] = 1.0;
  for (int i = 1; i <= n; ++i) {
    const int mn = std::min(i, order);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = nodes[i] - z;
    for (int j = 0; j < i; ++j) {
      const double c3 = nodes[i] - nodes[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) {
          c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        }
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k) {
        c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      }
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> out(nodes.size());
  for (std::size_t j = 0; j < nodes.size(); ++j) out[j] = c[j][order];
  return out;
}

}  // namespace detail

/// Second-derivative operator on a (possibly non-uniform) grid: 3-point
/// stencils inside, 4-point one-sided stencils at both ends (3-point when
/// the grid only has 3 nodes).
class SecondDerivative {
 public:
  SecondDerivative() = default;

  explicit SecondDerivative(const Grid& grid) {
    const auto p = grid.size();
    const auto& t = grid.points();
    const Eigen::Index edge = p >= 4 ? 4 : 3;
    rows_.resize(static_cast<std::size_t>(p));
    for (Eigen::Index k = 0; k < p; ++k) {
      Eigen::Index start;
      Eigen::Index len;
      if (k == 0) {
        start = 0;
        len = edge;
      } else if (k == p - 1) {
        start = p - edge;
        len = edge;
      } else {
        start = k - 1;
        len = 3;
      }
      std::vector<double> nodes(static_cast<std::size_t>(len));
      for (Eigen::Index j = 0; j < len; ++j) nodes[j] = t[start + j];
      rows_[k] = {start, detail::fornberg_weights(nodes, t[k], 2)};
    }
  }

  Vector apply(const Eigen::Ref<const Vector>& f) const {
    Vector out(static_cast<Eigen::Index>(rows_.size()));
    for (std::size_t k = 0; k < rows_.size(); ++k) {
      double acc = 0.0;
      const auto& row = rows_[k];
      for (std::size_t j = 0; j < row.weights.size(); ++j) {
        acc += row.weights[j] * f[row.start + static_cast<Eigen::Index>(j)];
      }
      out[static_cast<Eigen::Index>(k)] = acc;
    }
    return out;
  }

 private:
  struct Row {
    Eigen::Index start;
    std::vector<double> weights;
  };
  std::vector<Row> rows_;
};

inline Vector second_derivative(const Grid& grid, const Eigen::Ref<const Vector>& f) {
  grid.check_length(f.size());
  return SecondDerivative(grid).apply(f);
}

/// Leading q eigenpairs of the empirical covariance operator.
struct FpcaBasis {
  Vector mean_curve;
  Matrix components;  // q x p, rows orthonormal under the grid quadrature
  Vector eigenvalues;  // nonincreasing, clamped at 0
  Eigen::Index q = 0;

  /// Scores <x - mean, phi_j> for every row of `curves`.
  Matrix scores(const Grid& grid, const Matrix& curves) const {
    grid.check_length(curves.cols());
    if (curves.cols() != mean_curve.size()) {
      throw DimensionError("FPCA basis was fitted on a different grid");
    }
    // Explicit loops: a row's scores must not depend on how many rows are
    // scored together.
    const Matrix weighted = components * grid.weights().asDiagonal();  // q x p
    Matrix out(curves.rows(), q);
    for (Eigen::Index i = 0; i < curves.rows(); ++i) {
      for (Eigen::Index j = 0; j < q; ++j) {
        double acc = 0.0;
        for (Eigen::Index k = 0; k < curves.cols(); ++k) {
          acc += (curves(i, k) - mean_curve[k]) * weighted(j, k);
        }
        out(i, j) = acc;
      }
    }
    return out;
  }
};

/// FPCA by eigen-decomposition of the (n-1)-normalized covariance
/// discretized with trapezoidal weights W: solve W^1/2 C W^1/2 psi = l psi,
/// phi = W^-1/2 psi.
inline FpcaBasis fit_fpca(const FunctionalSample& sample, Eigen::Index q) {
  const auto n = sample.size();
  const auto p = sample.points();
  if (n < 2) throw DimensionError("FPCA needs at least 2 curves");
  if (q < 1 || q > std::min<Eigen::Index>(n - 1, p)) {
    throw DimensionError("FPCA dimension q=" + std::to_string(q) +
                         " outside [1, min(n-1, p)]");
  }
  FpcaBasis basis;
  basis.q = q;
  basis.mean_curve = sample.values().colwise().mean().transpose();
  const Matrix centered = sample.values().rowwise() - basis.mean_curve.transpose();
  const Vector sqrt_w = sample.grid().weights().cwiseSqrt();
  const Matrix scaled = centered * sqrt_w.asDiagonal();
  Matrix op = (scaled.transpose() * scaled) / static_cast<double>(n - 1);
  op = 0.5 * (op + op.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> solver(op);
  const Vector& evals = solver.eigenvalues();
  const Matrix& evecs = solver.eigenvectors();
  basis.components.resize(q, p);
  basis.eigenvalues.resize(q);
  for (Eigen::Index j = 0; j < q; ++j) {
    const Eigen::Index col = p - 1 - j;
    basis.eigenvalues[j] = std::max(0.0, evals[col]);
    Vector phi = evecs.col(col).cwiseQuotient(sqrt_w);
    Eigen::Index arg = 0;
    phi.cwiseAbs().maxCoeff(&arg);
    if (phi[arg] < 0) phi = -phi;
    basis.components.row(j) = phi.transpose();
  }
  return basis;
}

enum class SemiMetricKind { Deriv2, Fpca, RawL2, Euclidean };

inline std::string to_string(SemiMetricKind kind) {
  switch (kind) {
    case SemiMetricKind::Deriv2: return "deriv2";
    case SemiMetricKind::Fpca: return "fpca";
    case SemiMetricKind::RawL2: return "raw";
    case SemiMetricKind::Euclidean: return "euclid";
  }
  return "?";
}

/// Which semi-metric, plus the fitted FPCA basis when kind == Fpca.
///
/// Every kind is evaluated as a weighted Euclidean distance between
/// feature vectors: second derivatives (Deriv2), FPCA scores (Fpca), raw
/// values (RawL2 with quadrature weights, Euclidean with unit weights).
struct SemiMetricSpec {
  SemiMetricKind kind = SemiMetricKind::Deriv2;
  std::optional<FpcaBasis> fitted;

  static SemiMetricSpec deriv2() { return {SemiMetricKind::Deriv2, std::nullopt}; }
  static SemiMetricSpec raw_l2() { return {SemiMetricKind::RawL2, std::nullopt}; }
  static SemiMetricSpec euclidean() { return {SemiMetricKind::Euclidean, std::nullopt}; }
  static SemiMetricSpec fpca(FpcaBasis basis) {
    return {SemiMetricKind::Fpca, std::move(basis)};
  }
  static SemiMetricSpec fpca(const FunctionalSample& sample, Eigen::Index q) {
    return fpca(fit_fpca(sample, q));
  }

  void validate() const {
    if (kind == SemiMetricKind::Fpca && !fitted) {
      throw DimensionError("FPCA semi-metric used before fitting a basis");
    }
  }

  /// Maps each row of `curves` to its feature vector.
  Matrix features(const Grid& grid, const Matrix& curves) const {
    validate();
    grid.check_length(curves.cols());
    switch (kind) {
      case SemiMetricKind::Deriv2: {
        const SecondDerivative d2(grid);
        Matrix out(curves.rows(), curves.cols());
        for (Eigen::Index i = 0; i < curves.rows(); ++i) {
          out.row(i) = d2.apply(curves.row(i).transpose()).transpose();
        }
        return out;
      }
      case SemiMetricKind::Fpca:
        return fitted->scores(grid, curves);
      case SemiMetricKind::RawL2:
      case SemiMetricKind::Euclidean:
        return curves;
    }
    return curves;
  }

  Vector feature_weights(const Grid& grid) const {
    switch (kind) {
      case SemiMetricKind::Deriv2:
      case SemiMetricKind::RawL2:
        return grid.weights();
      case SemiMetricKind::Fpca:
        validate();
        return Vector::Ones(fitted->q);
      case SemiMetricKind::Euclidean:
        return Vector::Ones(grid.size());
    }
    return grid.weights();
  }
};

/// sqrt(sum_k w_k (a_k - b_k)^2), summed in index order so that swapping
/// the arguments gives the identical value.
inline double feature_distance(const Eigen::Ref<const Vector>& a,
                               const Eigen::Ref<const Vector>& b,
                               const Eigen::Ref<const Vector>& w) {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    acc += w[k] * diff * diff;
  }
  return std::sqrt(acc);
}

inline double semimetric_eval(const SemiMetricSpec& spec,
                              const Eigen::Ref<const Vector>& x1,
                              const Eigen::Ref<const Vector>& x2, const Grid& grid) {
  grid.check_length(x1.size());
  grid.check_length(x2.size());
  Matrix both(2, grid.size());
  both.row(0) = x1.transpose();
  both.row(1) = x2.transpose();
  const Matrix f = spec.features(grid, both);
  return feature_distance(f.row(0).transpose(), f.row(1).transpose(),
                          spec.feature_weights(grid));
}

/// Symmetric n x n matrix of semi-metric distances, zero diagonal.
inline Matrix pairwise_distances(const FunctionalSample& sample,
                                 const SemiMetricSpec& spec) {
  const Matrix f = spec.features(sample.grid(), sample.values());
  const Vector w = spec.feature_weights(sample.grid());
  const auto n = sample.size();
  Matrix d = Matrix::Zero(n, n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t ii) {
    const auto i = static_cast<Eigen::Index>(ii);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d(i, j) = feature_distance(f.row(i).transpose(), f.row(j).transpose(), w);
    }
  });
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) d(j, i) = d(i, j);
  }
  return d;
}

/// d(x0, X_i) for every curve of the sample.
inline Vector distances_to(const FunctionalSample& sample, const SemiMetricSpec& spec,
                           const Eigen::Ref<const Vector>& x0) {
  sample.grid().check_length(x0.size());
  const Matrix f = spec.features(sample.grid(), sample.values());
  const Matrix f0 = spec.features(sample.grid(), x0.transpose());
  const Vector w = spec.feature_weights(sample.grid());
  Vector out(sample.size());
  for (Eigen::Index i = 0; i < sample.size(); ++i) {
    out[i] = feature_distance(f0.row(0).transpose(), f.row(i).transpose(), w);
  }
  return out;
}

}  // namespace fmedreg
