#pragma once

// Plug-in asymptotic inference for the conditional spatial median:
// Sigma_n, H_n, the small-ball constants, Gamma_n^{-1} and the chi-square
// confidence ellipsoid.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "fmedreg/errors.hpp"
#include "fmedreg/geomedian.hpp"
#include "fmedreg/kernels.hpp"
#include "fmedreg/regression.hpp"

namespace fmedreg {

/// sum_i w_i U(Y_i - mu) U(Y_i - mu)^t; responses within the cloud's
/// singular tolerance of mu contribute nothing (U(0) = 0).
inline Eigen::MatrixXd sigma_n(const Eigen::MatrixXd& responses,
                               const Eigen::Ref<const Eigen::VectorXd>& weights,
                               const Eigen::Ref<const Eigen::VectorXd>& mu) {
  const PointCloud cloud(responses, weights);
  cloud.check_point(mu);
  const double eps = cloud.singular_tolerance();
  const auto d = cloud.dim();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const double w = weights[i];
    if (w <= 0.0) continue;
    const Eigen::VectorXd diff = responses.row(i).transpose() - mu;
    const double r = diff.norm();
    if (r < eps) continue;
    const Eigen::VectorXd unit = diff / r;
    out.noalias() += w * unit * unit.transpose();
  }
  return 0.5 * (out + out.transpose());
}

struct PluginCovariance {
  Eigen::MatrixXd sigma_n;
  Eigen::MatrixXd h_n_mat;
  double m1n = 0.0;
  double m2n = 0.0;
  double f_xn_h = 0.0;  // F_{x,n}(h)
  Eigen::Index n = 0;

  /// n F_{x,n}(h): the number of learning curves inside the window.
  double window_count() const { return static_cast<double>(n) * f_xn_h; }
};

struct GammaInverse {
  Eigen::MatrixXd matrix;
  double ridge = 0.0;
};

/// Gamma_n^{-1} = (M1n^2 n F_{x,n}(h) / M2n) H_n Sigma_n^{-1} H_n, after
/// adding 1e-12 tr(Sigma_n)/d to the diagonal of Sigma_n.
inline GammaInverse gamma_inverse_with_ridge(const PluginCovariance& pc) {
  const auto d = pc.sigma_n.rows();
  if (pc.sigma_n.cols() != d || pc.h_n_mat.rows() != d || pc.h_n_mat.cols() != d) {
    throw DimensionError("plug-in matrices must be square and of equal size");
  }
  if (!(pc.m2n > 0.0) || !(pc.window_count() > 0.0)) {
    throw SingularCovarianceError("M2n and n F_{x,n}(h) must be positive");
  }
  const double trace = pc.sigma_n.trace();
  if (!(trace > 0.0)) throw SingularCovarianceError("Sigma_n has zero trace");
  GammaInverse out;
  out.ridge = 1e-12 * trace / static_cast<double>(d);
  Eigen::MatrixXd sig = pc.sigma_n + out.ridge * Eigen::MatrixXd::Identity(d, d);
  sig = 0.5 * (sig + sig.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sig);
  const Eigen::VectorXd ev = es.eigenvalues();
  if (!(ev[0] > 0.0) || ev[d - 1] / ev[0] > 1e12) {
    throw SingularCovarianceError("Sigma_n is numerically singular (condition number " +
                                  std::to_string(ev[d - 1] / std::max(ev[0], 0.0)) + ")");
  }
  const Eigen::MatrixXd sig_inv =
      es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  const double scale = pc.m1n * pc.m1n * pc.window_count() / pc.m2n;
  Eigen::MatrixXd g = scale * pc.h_n_mat * sig_inv * pc.h_n_mat;
  out.matrix = 0.5 * (g + g.transpose());
  return out;
}

inline Eigen::MatrixXd gamma_inverse(const PluginCovariance& pc) {
  return gamma_inverse_with_ridge(pc).matrix;
}

namespace detail {

// Regularized lower incomplete gamma P(a, x): power series for x < a + 1,
// Lentz continued fraction for Q otherwise.
inline double regularized_gamma_p(double a, double x) {
  if (x <= 0.0) return 0.0;
  const double log_prefix = a * std::log(x) - x - std::lgamma(a);
  if (x < a + 1.0) {
    double term = 1.0 / a;
    double sum = term;
    for (int k = 1; k < 1000; ++k) {
      term *= x / (a + k);
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-17) break;
    }
    return std::min(1.0, sum * std::exp(log_prefix));
  }
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double dd = 1.0 / b;
  double frac = dd;
  for (int k = 1; k < 1000; ++k) {
    const double an = -k * (k - a);
    b += 2.0;
    dd = an * dd + b;
    if (std::abs(dd) < tiny) dd = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    dd = 1.0 / dd;
    const double delta = dd * c;
    frac *= delta;
    if (std::abs(delta - 1.0) < 1e-17) break;
  }
  return std::max(0.0, 1.0 - std::exp(log_prefix) * frac);
}

}  // namespace detail

inline double chi2_cdf(int dof, double x) {
  return detail::regularized_gamma_p(0.5 * dof, 0.5 * x);
}

/// Upper-alpha point of the chi-square distribution with `dof` degrees of
/// freedom, by bisection on the CDF.
inline double chi2_quantile(int dof, double alpha) {
  if (dof < 1) throw ArgumentError("degrees of freedom must be >= 1");
  if (!(alpha > 0.0) || alpha > 1.0) throw ArgumentError("alpha must lie in (0, 1]");
  if (alpha == 1.0) return 0.0;
  const double target = 1.0 - alpha;
  double lo = 0.0;
  double hi = std::max(1.0, static_cast<double>(dof));
  while (chi2_cdf(dof, hi) < target) {
    lo = hi;
    hi *= 2.0;
  }
  for (int it = 0; it < 300 && hi - lo > 1e-13 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    (chi2_cdf(dof, mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct EllipsoidDiagnostics {
  double ridge = 0.0;
  Eigen::Index dropped_terms = 0;
  Eigen::Index effective_n = 0;
  double h = 0.0;
  double m1n = 0.0;
  double m2n = 0.0;
  double f_xn_h = 0.0;
  bool median_converged = true;
};

/// {y : (y - center)^t shape_inv (y - center) <= radius2}.
struct Ellipsoid {
  Eigen::VectorXd center;
  Eigen::MatrixXd shape_inv;
  double level = 0.05;  // alpha
  double radius2 = 0.0;
  EllipsoidDiagnostics diagnostics;
};

struct Membership {
  bool inside = false;
  double statistic = 0.0;
};

inline Membership ellipsoid_contains(const Ellipsoid& e, const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (y.size() != e.center.size()) throw DimensionError("point and ellipsoid differ in dimension");
  const Eigen::VectorXd diff = y - e.center;
  const double stat = diff.dot(e.shape_inv * diff);
  return {stat <= e.radius2, stat};
}

/// Semi-axis lengths sqrt(radius2 / eig(shape_inv)), largest first.
inline Eigen::VectorXd axis_lengths(const Ellipsoid& e) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(e.shape_inv, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd ev = es.eigenvalues();  // ascending
  Eigen::VectorXd out(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    out[i] = ev[i] > 0.0 ? std::sqrt(e.radius2 / ev[i]) : std::numeric_limits<double>::infinity();
  }
  return out;
}

/// All plug-in pieces at x for a CMM model, with bandwidth `rule`
/// (defaults to the model's).
struct PluginFit {
  PluginCovariance covariance;
  Eigen::VectorXd center;
  Eigen::Index dropped_terms = 0;
  Eigen::Index effective_n = 0;
  double h = 0.0;
  bool median_converged = true;
};

inline PluginFit plugin_fit(const FittedModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                            std::optional<BandwidthRule> rule = std::nullopt) {
  if (model.method() != Method::CMM) throw ArgumentError("confidence ellipsoids need a CMM model");
  if (!model.kernel().supports_inference()) {
    throw ArgumentError("the untruncated Gaussian kernel cannot be used for inference");
  }
  const Eigen::VectorXd dist = model.distances(x);
  const double h = resolve_bandwidth(rule.value_or(model.bandwidth()), dist);
  const WeightVector w = nw_weights(dist, h, model.kernel());
  const PointCloud cloud(model.responses(), w);
  const auto sol = solve_median(cloud);
  const auto hess = hessian_weighted_dropping(cloud, sol.point);
  const auto ball = moment_constants_step(dist, h, model.kernel());

  PluginFit out;
  out.center = sol.point;
  out.covariance.sigma_n = sigma_n(model.responses(), w.weights, sol.point);
  out.covariance.h_n_mat = hess.matrix;
  out.covariance.m1n = ball.m1;
  out.covariance.m2n = ball.m2;
  out.covariance.f_xn_h = empirical_small_ball(dist, h);
  out.covariance.n = model.size();
  out.dropped_terms = hess.dropped;
  out.effective_n = w.effective_n;
  out.h = h;
  out.median_converged = sol.converged;
  return out;
}

inline Ellipsoid confidence_ellipsoid(const FittedModel& model,
                                      const Eigen::Ref<const Eigen::VectorXd>& x, double alpha,
                                      std::optional<BandwidthRule> rule = std::nullopt) {
  const PluginFit fit = plugin_fit(model, x, rule);
  const GammaInverse g = gamma_inverse_with_ridge(fit.covariance);
  Ellipsoid e;
  e.center = fit.center;
  e.shape_inv = g.matrix;
  e.level = alpha;
  e.radius2 = chi2_quantile(static_cast<int>(fit.center.size()), alpha);
  e.diagnostics.ridge = g.ridge;
  e.diagnostics.dropped_terms = fit.dropped_terms;
  e.diagnostics.effective_n = fit.effective_n;
  e.diagnostics.h = fit.h;
  e.diagnostics.m1n = fit.covariance.m1n;
  e.diagnostics.m2n = fit.covariance.m2n;
  e.diagnostics.f_xn_h = fit.covariance.f_xn_h;
  e.diagnostics.median_converged = fit.median_converged;
  return e;
}

}  // namespace fmedreg
