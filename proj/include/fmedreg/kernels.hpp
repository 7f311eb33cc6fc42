#pragma once

// Kernels on [0,1], Nadaraya-Watson weights and the empirical small-ball
// quantities (F_{x,n}, tau_n, M_{1,n}, M_{2,n}) used by the plug-in
// covariance.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>

#include "fmedreg/errors.hpp"

namespace fmedreg {

enum class KernelKind {
  Quadratic,   // (3/2)(1 - u^2) on [0,1]
  TruncGauss,  // (2 pi)^-1/2 exp(-u^2/2) on [0,1]
  Gauss,       // untruncated Gaussian; estimation only
};

inline std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::Quadratic: return "quadratic";
    case KernelKind::TruncGauss: return "gauss";
    case KernelKind::Gauss: return "gauss-untruncated";
  }
  return "?";
}

struct KernelSpec {
  KernelKind kind = KernelKind::Quadratic;

  static KernelSpec quadratic() { return {KernelKind::Quadratic}; }
  static KernelSpec trunc_gauss() { return {KernelKind::TruncGauss}; }

  /// The plug-in constants integrate K over [0,1]; only compactly
  /// supported kernels qualify.
  bool supports_inference() const { return kind != KernelKind::Gauss; }
};

inline double kernel_eval(const KernelSpec& spec, double u) {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;  // 1/sqrt(2 pi)
  switch (spec.kind) {
    case KernelKind::Quadratic:
      return (u < 0.0 || u > 1.0) ? 0.0 : 1.5 * (1.0 - u * u);
    case KernelKind::TruncGauss:
      return (u < 0.0 || u > 1.0) ? 0.0 : inv_sqrt_2pi * std::exp(-0.5 * u * u);
    case KernelKind::Gauss:
      return inv_sqrt_2pi * std::exp(-0.5 * u * u);
  }
  return 0.0;
}

/// d/du K(u)^j for u in [0,1].
inline double kernel_power_derivative(const KernelSpec& spec, int j, double u) {
  const double k = kernel_eval(spec, u);
  double dk = 0.0;
  switch (spec.kind) {
    case KernelKind::Quadratic: dk = -3.0 * u; break;
    case KernelKind::TruncGauss:
    case KernelKind::Gauss: dk = -u * k; break;
  }
  return j * std::pow(k, j - 1) * dk;
}

/// Normalized kernel weights. effective_n counts strictly positive entries.
struct WeightVector {
  Eigen::VectorXd weights;
  Eigen::Index effective_n = 0;

  Eigen::Index size() const { return weights.size(); }
  double operator[](Eigen::Index i) const { return weights[i]; }

  static WeightVector uniform(Eigen::Index n) {
    return {Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)), n};
  }
};

/// w_i = K(d_i/h) / sum_j K(d_j/h).
inline WeightVector nw_weights(const Eigen::Ref<const Eigen::VectorXd>& distances,
                               double h, const KernelSpec& spec) {
  if (!(h > 0.0)) throw ArgumentError("bandwidth must be positive");
  WeightVector out;
  out.weights.resize(distances.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < distances.size(); ++i) {
    const double k = kernel_eval(spec, distances[i] / h);
    out.weights[i] = k;
    total += k;
    if (k > 0.0) ++out.effective_n;
  }
  if (out.effective_n == 0 || !(total > 0.0)) {
    const double dmin = distances.size() > 0 ? distances.minCoeff()
                                             : std::numeric_limits<double>::infinity();
    throw EmptyWindowError(dmin, h);
  }
  out.weights /= total;
  return out;
}

/// F_{x,n}(u): fraction of distances <= u.
inline double empirical_small_ball(const Eigen::Ref<const Eigen::VectorXd>& distances,
                                   double u) {
  if (distances.size() == 0) return 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < distances.size(); ++i) {
    if (distances[i] <= u) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(distances.size());
}

/// tau_n(u) = F_{x,n}(u h) / F_{x,n}(h).
inline double tau_n(const Eigen::Ref<const Eigen::VectorXd>& distances, double h,
                    double u) {
  const double denom = empirical_small_ball(distances, h);
  if (!(denom > 0.0)) {
    throw EmptyWindowError(distances.size() ? distances.minCoeff() : 0.0, h);
  }
  return empirical_small_ball(distances, u * h) / denom;
}

struct MomentConstants {
  double m1 = 0.0;
  double m2 = 0.0;
};

/// M_j = K^j(1) tau(1) - int_0^1 (K^j)'(s) tau(s) ds, composite Simpson on
/// 201 nodes.
inline MomentConstants moment_constants(const KernelSpec& spec,
                                        const std::function<double(double)>& tau) {
  constexpr int intervals = 200;
  constexpr double step = 1.0 / intervals;
  MomentConstants out;
  double* targets[2] = {&out.m1, &out.m2};
  for (int j = 1; j <= 2; ++j) {
    double integral = 0.0;
    for (int k = 0; k <= intervals; ++k) {
      const double s = k * step;
      const double coef = (k == 0 || k == intervals) ? 1.0 : (k % 2 ? 4.0 : 2.0);
      integral += coef * kernel_power_derivative(spec, j, s) * tau(s);
    }
    integral *= step / 3.0;
    *targets[j - 1] = std::pow(kernel_eval(spec, 1.0), j) * tau(1.0) - integral;
  }
  return out;
}

/// Exact M_{j,n} for the step function tau_n: the Stieltjes sum
/// (1/#window) sum_{d_i <= h} K^j(d_i/h).
inline MomentConstants moment_constants_step(
    const Eigen::Ref<const Eigen::VectorXd>& distances, double h, const KernelSpec& spec) {
  double s1 = 0.0;
  double s2 = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < distances.size(); ++i) {
    if (distances[i] <= h) {
      const double k = kernel_eval(spec, distances[i] / h);
      s1 += k;
      s2 += k * k;
      ++count;
    }
  }
  if (count == 0) {
    throw EmptyWindowError(distances.size() ? distances.minCoeff() : 0.0, h);
  }
  return {s1 / static_cast<double>(count), s2 / static_cast<double>(count)};
}

struct SmallBallEstimates {
  double f_xn_h = 0.0;           // F_{x,n}(h)
  Eigen::VectorXd tau_grid;      // u values on [0,1]
  Eigen::VectorXd tau_curve;     // tau_n at tau_grid
  double m1 = 0.0;
  double m2 = 0.0;
};

inline SmallBallEstimates small_ball_estimates(
    const Eigen::Ref<const Eigen::VectorXd>& distances, double h, const KernelSpec& spec,
    Eigen::Index tau_points = 101) {
  SmallBallEstimates out;
  out.f_xn_h = empirical_small_ball(distances, h);
  if (!(out.f_xn_h > 0.0)) {
    throw EmptyWindowError(distances.size() ? distances.minCoeff() : 0.0, h);
  }
  out.tau_grid = Eigen::VectorXd::LinSpaced(tau_points, 0.0, 1.0);
  out.tau_curve.resize(tau_points);
  for (Eigen::Index k = 0; k < tau_points; ++k) {
    out.tau_curve[k] = tau_n(distances, h, out.tau_grid[k]);
  }
  const auto m = moment_constants_step(distances, h, spec);
  out.m1 = m.m1;
  out.m2 = m.m2;
  return out;
}

}  // namespace fmedreg
