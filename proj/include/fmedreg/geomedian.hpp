#pragma once

// Weighted spatial (L1, geometric) median: objective, gradient, the
// Hessian-type matrix sum_i w_i M(Y_i, u), and a Vardi-Zhang modified
// Weiszfeld solver.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "fmedreg/errors.hpp"
#include "fmedreg/kernels.hpp"

namespace fmedreg {

/// Rows Y_i in R^d (d >= 2) with nonnegative weights.
class PointCloud {
 public:
  PointCloud(Eigen::MatrixXd points, Eigen::VectorXd weights)
      : points_(std::move(points)), weights_(std::move(weights)) {
    if (points_.rows() < 1) throw DimensionError("point cloud is empty");
    if (points_.cols() < 2) {
      throw DimensionError("spatial median needs dimension d >= 2, got " +
                           std::to_string(points_.cols()));
    }
    if (weights_.size() != points_.rows()) {
      throw DimensionError("weights length " + std::to_string(weights_.size()) +
                           " != number of points " + std::to_string(points_.rows()));
    }
    for (Eigen::Index i = 0; i < weights_.size(); ++i) {
      if (!(weights_[i] >= 0.0) || !std::isfinite(weights_[i])) {
        throw ArgumentError("weight " + std::to_string(i) + " is negative or not finite");
      }
    }
  }

  PointCloud(Eigen::MatrixXd points, const WeightVector& weights)
      : PointCloud(std::move(points), weights.weights) {}

  /// Equal weights 1/n.
  static PointCloud uniform(Eigen::MatrixXd points) {
    const auto n = points.rows();
    return PointCloud(std::move(points),
                      Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)));
  }

  const Eigen::MatrixXd& points() const { return points_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  Eigen::Index size() const { return points_.rows(); }
  Eigen::Index dim() const { return points_.cols(); }

  /// Diagonal of the bounding box of the positively weighted points; an
  /// upper bound on their diameter.
  double extent() const {
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(dim(), std::numeric_limits<double>::infinity());
    Eigen::VectorXd hi = -lo;
    bool any = false;
    for (Eigen::Index i = 0; i < size(); ++i) {
      if (weights_[i] > 0.0) {
        lo = lo.cwiseMin(points_.row(i).transpose());
        hi = hi.cwiseMax(points_.row(i).transpose());
        any = true;
      }
    }
    return any ? (hi - lo).norm() : 0.0;
  }

  /// Points closer than this to u count as coincident with u.
  double singular_tolerance() const { return 1e-10 * (extent() + 1.0); }

  void check_point(const Eigen::Ref<const Eigen::VectorXd>& u) const {
    if (u.size() != dim()) {
      throw DimensionError("point has dimension " + std::to_string(u.size()) +
                           ", cloud has " + std::to_string(dim()));
    }
  }

 private:
  Eigen::MatrixXd points_;
  Eigen::VectorXd weights_;
};

/// G(u) = sum_i w_i ||Y_i - u||.
inline double objective(const PointCloud& cloud, const Eigen::Ref<const Eigen::VectorXd>& u) {
  cloud.check_point(u);
  double total = 0.0;
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    total += cloud.weights()[i] * (cloud.points().row(i).transpose() - u).norm();
  }
  return total;
}

/// grad G(u) = -sum_i w_i U(Y_i - u), with U(0) = 0.
inline Eigen::VectorXd gradient(const PointCloud& cloud,
                                const Eigen::Ref<const Eigen::VectorXd>& u) {
  cloud.check_point(u);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(cloud.dim());
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const Eigen::VectorXd diff = cloud.points().row(i).transpose() - u;
    const double r = diff.norm();
    if (r > 0.0) g -= cloud.weights()[i] * diff / r;
  }
  return g;
}

struct WeightedHessian {
  Eigen::MatrixXd matrix;
  Eigen::Index dropped = 0;  // summands skipped because Y_i ~= u
};

/// sum_i w_i (1/||Y_i - u||)(I - U U^t), skipping positively weighted
/// summands with ||Y_i - u|| < singular_tolerance() and counting them.
inline WeightedHessian hessian_weighted_dropping(const PointCloud& cloud,
                                                 const Eigen::Ref<const Eigen::VectorXd>& u) {
  cloud.check_point(u);
  const auto d = cloud.dim();
  const double eps = cloud.singular_tolerance();
  WeightedHessian out{Eigen::MatrixXd::Zero(d, d), 0};
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const double w = cloud.weights()[i];
    if (w <= 0.0) continue;
    const Eigen::VectorXd diff = cloud.points().row(i).transpose() - u;
    const double r = diff.norm();
    if (r < eps) {
      ++out.dropped;
      continue;
    }
    const Eigen::VectorXd unit = diff / r;
    out.matrix += (w / r) * (eye - unit * unit.transpose());
  }
  out.matrix = 0.5 * (out.matrix + out.matrix.transpose());
  return out;
}

/// Throws SingularPointError when u coincides with a positively weighted Y_i.
inline Eigen::MatrixXd hessian_weighted(const PointCloud& cloud,
                                        const Eigen::Ref<const Eigen::VectorXd>& u) {
  cloud.check_point(u);
  const double eps = cloud.singular_tolerance();
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    if (cloud.weights()[i] > 0.0 &&
        (cloud.points().row(i).transpose() - u).norm() < eps) {
      throw SingularPointError(static_cast<std::size_t>(i));
    }
  }
  return hessian_weighted_dropping(cloud, u).matrix;
}

struct MedianSolution {
  Eigen::VectorXd point;
  double objective = 0.0;
  double grad_norm = 0.0;   // ||grad G|| with the U(0) = 0 convention
  double last_step = 0.0;   // ||u_k - u_{k-1}|| at termination
  Eigen::Index iterations = 0;
  bool converged = false;
  bool anchored = false;    // solution sits on a data point
  bool collinear = false;   // all weighted points on one line: minimizer may not be unique
};

struct SolverOptions {
  double tol = 1e-9;
  Eigen::Index max_iter = 500;
  /// When set, receives G(u_k) for every accepted iterate (u_0 first).
  std::vector<double>* objective_trace = nullptr;
};

namespace detail {

inline bool is_collinear(const Eigen::MatrixXd& pts_t, const Eigen::VectorXd& w) {
  // pts_t is d x m. Compare the two largest eigenvalues of the weighted
  // scatter matrix.
  if (pts_t.cols() <= 2) return true;
  const double wsum = w.sum();
  const Eigen::VectorXd mean = pts_t * w / wsum;
  const Eigen::MatrixXd centered = pts_t.colwise() - mean;
  const Eigen::MatrixXd scatter = centered * w.asDiagonal() * centered.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(scatter, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const double top = ev[ev.size() - 1];
  const double second = ev[ev.size() - 2];
  return top <= 0.0 || second <= 1e-20 * top;
}

}  // namespace detail

/// Weighted spatial median by the Vardi-Zhang modification of Weiszfeld's
/// iteration. Starts at the weighted mean. Terminates when the optimality
/// certificate holds (||grad|| <= tol * sum w, or, on a data point Y_k,
/// ||R_k|| <= w_k) and the last step is at most tol * (extent + 1).
/// Away from data points a safeguarded Newton step on G competes with the
/// Weiszfeld step. An increase of G beyond rounding level ends the
/// iteration early.
inline MedianSolution solve_median(const PointCloud& cloud, const SolverOptions& opts = {}) {
  const auto d = cloud.dim();
  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    if (cloud.weights()[i] > 0.0) active.push_back(i);
  }
  if (active.empty()) throw ArgumentError("no point carries positive weight");
  const auto m = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd pts(d, m);
  Eigen::VectorXd w(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    pts.col(a) = cloud.points().row(active[a]).transpose();
    w[a] = cloud.weights()[active[a]];
  }
  const double wsum = w.sum();
  const double scale = cloud.extent() + 1.0;
  const double eps = 1e-10 * scale;

  MedianSolution sol;
  sol.collinear = detail::is_collinear(pts, w);

  Eigen::VectorXd u = pts * w / wsum;
  Eigen::VectorXd r(m);
  auto distances_at = [&](const Eigen::VectorXd& at) {
    double obj = 0.0;
    for (Eigen::Index a = 0; a < m; ++a) {
      r[a] = (pts.col(a) - at).norm();
      obj += w[a] * r[a];
    }
    return obj;
  };
  double obj = distances_at(u);
  if (opts.objective_trace) opts.objective_trace->push_back(obj);

  Eigen::VectorXd numer(d);
  Eigen::VectorXd resid(d);
  Eigen::VectorXd next(d);
  Eigen::VectorXd r_next(m);
  Eigen::VectorXd trial(d);
  Eigen::VectorXd r_trial(m);
  for (Eigen::Index iter = 0;; ++iter) {
    // Weiszfeld pieces over non-coincident points; eta = mass sitting on u.
    double eta = 0.0;
    Eigen::Index anchor = -1;
    double denom = 0.0;
    numer.setZero();
    resid.setZero();
    for (Eigen::Index a = 0; a < m; ++a) {
      if (r[a] < eps) {
        eta += w[a];
        if (anchor < 0) anchor = a;
        continue;
      }
      const double c = w[a] / r[a];
      denom += c;
      numer.noalias() += c * pts.col(a);
      resid.noalias() += c * (pts.col(a) - u);
    }
    const double rnorm = resid.norm();
    sol.grad_norm = rnorm;
    sol.iterations = iter;
    const bool certified = eta > 0.0 ? rnorm <= eta : rnorm <= opts.tol * wsum;
    if (certified && sol.last_step <= opts.tol * scale) {
      sol.converged = true;
      if (eta > 0.0) {
        u = pts.col(anchor);
        sol.anchored = true;
        obj = distances_at(u);
      }
      break;
    }
    if (eta == 0.0) {
      // Weiszfeld creeps towards an optimal data point; test the nearest one
      // directly and jump there when it satisfies ||R_k|| <= w_k.
      Eigen::Index k = 0;
      r.minCoeff(&k);
      Eigen::VectorXd rk = Eigen::VectorXd::Zero(d);
      for (Eigen::Index a = 0; a < m; ++a) {
        const double dist = (pts.col(a) - pts.col(k)).norm();
        if (dist >= eps) rk.noalias() += (w[a] / dist) * (pts.col(a) - pts.col(k));
      }
      if (rk.norm() <= w[k]) {
        sol.last_step = (pts.col(k) - u).norm();
        u = pts.col(k);
        obj = distances_at(u);
        if (opts.objective_trace) opts.objective_trace->push_back(obj);
        sol.grad_norm = rk.norm();
        sol.converged = true;
        sol.anchored = true;
        break;
      }
    }
    if (iter >= opts.max_iter) break;

    if (denom <= 0.0) {
      // Every positively weighted point coincides with u.
      sol.converged = true;
      sol.anchored = true;
      u = pts.col(anchor);
      obj = 0.0;
      break;
    }
    next = numer / denom;
    if (eta > 0.0) {
      const double gamma = std::min(1.0, eta / rnorm);
      next = (1.0 - gamma) * next + gamma * u;
    }
    double obj_next = 0.0;
    for (Eigen::Index a = 0; a < m; ++a) {
      r_next[a] = (pts.col(a) - next).norm();
      obj_next += w[a] * r_next[a];
    }
    const double slack = 1e-15 * std::max(1.0, obj);
    if (eta == 0.0) {
      // Safeguarded Newton candidate: plain Weiszfeld crawls when the
      // minimizer sits close to a data point.
      Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(d, d);
      for (Eigen::Index a = 0; a < m; ++a) {
        const Eigen::VectorXd unit = (pts.col(a) - u) / r[a];
        hess.noalias() += (w[a] / r[a]) * (Eigen::MatrixXd::Identity(d, d) - unit * unit.transpose());
      }
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        trial = u + ldlt.solve(resid);
        double obj_trial = 0.0;
        for (Eigen::Index a = 0; a < m; ++a) {
          r_trial[a] = (pts.col(a) - trial).norm();
          obj_trial += w[a] * r_trial[a];
        }
        // Near the minimizer G cannot rank candidates below rounding level,
        // so Newton wins unless it is clearly worse.
        if (trial.allFinite() && obj_trial <= std::max(obj_next, obj + slack)) {
          next = trial;
          obj_next = obj_trial;
          r_next.swap(r_trial);
        }
      }
    }
    // Weiszfeld steps never increase G; anything beyond rounding noise means
    // the iteration has stalled.
    if (obj_next > obj + slack) break;
    sol.last_step = (next - u).norm();
    u = next;
    r.swap(r_next);
    obj = obj_next;
    if (opts.objective_trace) opts.objective_trace->push_back(obj);
  }
  sol.point = u;
  sol.objective = obj;
  return sol;
}

inline MedianSolution solve_median(const PointCloud& cloud, double tol,
                                   Eigen::Index max_iter = 500) {
  SolverOptions opts;
  opts.tol = tol;
  opts.max_iter = max_iter;
  return solve_median(cloud, opts);
}

}  // namespace fmedreg
