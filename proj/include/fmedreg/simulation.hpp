#pragma once

// Brownian-covariate simulation model and Monte Carlo studies of the
// conditional confidence ellipsoid (coverage and axis shrinkage).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "fmedreg/errors.hpp"
#include "fmedreg/fda.hpp"
#include "fmedreg/inference.hpp"
#include "fmedreg/kernels.hpp"
#include "fmedreg/parallel.hpp"
#include "fmedreg/regression.hpp"

namespace fmedreg {

/// Counter-based generator: draw number c of stream s under seed k is
/// splitmix64(key(k, s) + c * golden), where key(k, s) =
/// splitmix64(k ^ splitmix64(s)). Streams are independent of how many
/// draws other streams consume, so replication r can use stream r in any
/// thread order.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix(seed ^ mix(stream + kGolden))) {}

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGolden); }

  /// Uniform on (0, 1) with 53 random bits.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal by the Box-Muller transform.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  std::uint64_t counter() const { return counter_; }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct SimConfig {
  Eigen::Index n = 200;
  Eigen::Index p = 100;
  std::uint64_t seed = 1;
  double noise_sd = 1.0;
  Eigen::Index reps = 100;

  void validate() const {
    if (n < 10) throw ArgumentError("simulation needs n >= 10");
    if (p < 10) throw ArgumentError("simulation needs p >= 10");
    if (reps < 1) throw ArgumentError("simulation needs reps >= 1");
    if (!(noise_sd >= 0.0)) throw ArgumentError("noise_sd must be nonnegative");
  }
};

/// f_j(t) = sqrt(2) sin((j - 1/2) pi t), the Brownian-motion KL eigenfunctions.
inline double eigenfunction(int j, double t) {
  if (j < 1) throw ArgumentError("eigenfunction index starts at 1");
  return std::numbers::sqrt2 * std::sin((j - 0.5) * std::numbers::pi * t);
}

/// KL eigenvalue of f_j: 1 / ((j - 1/2)^2 pi^2).
inline double eigenvalue(int j) {
  const double c = (j - 0.5) * std::numbers::pi;
  return 1.0 / (c * c);
}

inline Eigen::VectorXd eigenfunction_on(const Grid& grid, int j) {
  Eigen::VectorXd out(grid.size());
  for (Eigen::Index k = 0; k < grid.size(); ++k) out[k] = eigenfunction(j, grid.points()[k]);
  return out;
}

/// n Brownian paths on p equispaced points of [0,1]: X(0) = 0, independent
/// N(0, dt) increments.
inline FunctionalSample brownian_paths(Eigen::Index n, Eigen::Index p, CounterRng& rng) {
  const Grid grid = Grid::equispaced(p);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 1; k < p; ++k) {
      const double dt = grid.points()[k] - grid.points()[k - 1];
      x(i, k) = x(i, k - 1) + std::sqrt(dt) * rng.normal();
    }
  }
  return FunctionalSample(grid, std::move(x));
}

inline FunctionalSample brownian_paths(const SimConfig& cfg, std::uint64_t stream = 0) {
  cfg.validate();
  CounterRng rng(cfg.seed, stream);
  return brownian_paths(cfg.n, cfg.p, rng);
}

/// (integral f_1 x, integral f_2 x): the conditional mean, and the spatial
/// median because the noise is spherical.
inline Eigen::VectorXd true_conditional_median(const Grid& grid,
                                               const Eigen::Ref<const Eigen::VectorXd>& x) {
  Eigen::VectorXd out(2);
  out[0] = grid.integrate(eigenfunction_on(grid, 1).cwiseProduct(x));
  out[1] = grid.integrate(eigenfunction_on(grid, 2).cwiseProduct(x));
  return out;
}

struct SimDataset {
  FunctionalSample covariates;
  Eigen::MatrixXd responses;  // n x 2
};

/// Responses from given curves: Y^j = trapz(f_j X) + noise_sd * eps_j with
/// independent standard normal eps_1, eps_2.
inline Eigen::MatrixXd simulate_responses(const FunctionalSample& curves, double noise_sd,
                                          CounterRng& rng) {
  const Grid& grid = curves.grid();
  const Eigen::VectorXd wf1 = grid.weights().cwiseProduct(eigenfunction_on(grid, 1));
  const Eigen::VectorXd wf2 = grid.weights().cwiseProduct(eigenfunction_on(grid, 2));
  Eigen::MatrixXd y(curves.size(), 2);
  for (Eigen::Index i = 0; i < curves.size(); ++i) {
    y(i, 0) = curves.values().row(i).dot(wf1) + noise_sd * rng.normal();
    y(i, 1) = curves.values().row(i).dot(wf2) + noise_sd * rng.normal();
  }
  return y;
}

inline SimDataset generate_dataset(const SimConfig& cfg, std::uint64_t stream = 0) {
  cfg.validate();
  CounterRng rng(cfg.seed, stream);
  SimDataset out{brownian_paths(cfg.n, cfg.p, rng), {}};
  out.responses = simulate_responses(out.covariates, cfg.noise_sd, rng);
  return out;
}

struct CoverageOptions {
  KernelSpec kernel = KernelSpec::trunc_gauss();
  Eigen::Index fpca_q = 2;
  int h_candidates = 15;
};

struct ReplicationRecord {
  Eigen::Index rep = 0;
  std::uint64_t seed = 0;
  double h = 0.0;
  bool inside = false;
  double statistic = 0.0;
  double major_axis = 0.0;  // semi-axis lengths
  double minor_axis = 0.0;
  Eigen::VectorXd center;
  std::string error;  // nonempty when the replication failed
};

struct CoverageReport {
  double alpha = 0.05;
  SimConfig config;
  std::vector<ReplicationRecord> records;
  Eigen::Index successes = 0;  // replications that produced an ellipsoid
  Eigen::Index failures = 0;
  double coverage = 0.0;  // among successful replications
  double standard_error = 0.0;
};

/// One replication: simulate with stream `rep`, fit the FPCA semi-metric,
/// choose h by leave-one-out L1 CV, build the ellipsoid at target_x and
/// test the true conditional median.
inline ReplicationRecord run_replication(const SimConfig& cfg, double alpha,
                                         const Eigen::Ref<const Eigen::VectorXd>& target_x,
                                         Eigen::Index rep, const CoverageOptions& opts) {
  ReplicationRecord rec;
  rec.rep = rep;
  rec.seed = cfg.seed;
  try {
    const SimDataset data = generate_dataset(cfg, static_cast<std::uint64_t>(rep));
    const auto semimetric = SemiMetricSpec::fpca(data.covariates, opts.fpca_q);
    FittedModel model(data.covariates, data.responses, semimetric, opts.kernel,
                      BandwidthRule::fixed(1.0), Method::CMM);
    const Eigen::MatrixXd pairwise = model.learning_distances();
    const auto cv = cross_validate(Method::CMM, pairwise, model.responses(), model.kernel(),
                                   fixed_h_candidates(pairwise, opts.h_candidates));
    model = model.with_bandwidth(cv.best);
    const Ellipsoid e = confidence_ellipsoid(model, target_x, alpha);
    const auto truth = true_conditional_median(data.covariates.grid(), target_x);
    const auto member = ellipsoid_contains(e, truth);
    const auto axes = axis_lengths(e);
    rec.h = e.diagnostics.h;
    rec.inside = member.inside;
    rec.statistic = member.statistic;
    rec.major_axis = axes.maxCoeff();
    rec.minor_axis = axes.minCoeff();
    rec.center = e.center;
  } catch (const Error& err) {
    rec.error = err.kind() + ": " + err.what();
  }
  return rec;
}

inline CoverageReport coverage_experiment(const SimConfig& cfg, double alpha,
                                          const Eigen::Ref<const Eigen::VectorXd>& target_x,
                                          const CoverageOptions& opts = {}) {
  cfg.validate();
  if (target_x.size() != cfg.p) throw DimensionError("target curve does not match the grid");
  CoverageReport report;
  report.alpha = alpha;
  report.config = cfg;
  report.records.resize(static_cast<std::size_t>(cfg.reps));
  const Eigen::VectorXd target = target_x;
  parallel_for(static_cast<std::size_t>(cfg.reps), [&](std::size_t r) {
    report.records[r] = run_replication(cfg, alpha, target, static_cast<Eigen::Index>(r), opts);
  });
  Eigen::Index covered = 0;
  for (const auto& rec : report.records) {
    if (!rec.error.empty()) {
      ++report.failures;
      continue;
    }
    ++report.successes;
    if (rec.inside) ++covered;
  }
  if (report.successes > 0) {
    const double k = static_cast<double>(report.successes);
    report.coverage = static_cast<double>(covered) / k;
    report.standard_error = std::sqrt(report.coverage * (1.0 - report.coverage) / k);
  }
  return report;
}

struct ShrinkageReport {
  Eigen::Index n_small = 0;
  Eigen::Index n_large = 0;
  std::vector<double> major_small;
  std::vector<double> major_large;
  double median_major_small = 0.0;
  double median_major_large = 0.0;
  Eigen::Index pairs = 0;       // pairs where both replications succeeded
  Eigen::Index shrank = 0;      // pairs with major_large < major_small
  double sign_test_p = 1.0;     // one-sided, H1: large-n axis is shorter
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const auto m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// P(Binomial(n, 1/2) >= k).
inline double binomial_upper_tail(Eigen::Index n, Eigen::Index k) {
  double total = 0.0;
  for (Eigen::Index j = k; j <= n; ++j) {
    total += std::exp(std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0) -
                      static_cast<double>(n) * std::log(2.0));
  }
  return std::min(1.0, total);
}

/// Major semi-axis of the ellipsoid at x = 0 for n_small vs n_large over
/// cfg.reps paired replications (replication r uses stream r at both sizes).
inline ShrinkageReport shrinkage_experiment(const SimConfig& cfg, Eigen::Index n_small,
                                            Eigen::Index n_large, double alpha = 0.05,
                                            const CoverageOptions& opts = {}) {
  SimConfig small = cfg;
  small.n = n_small;
  SimConfig large = cfg;
  large.n = n_large;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(cfg.p);
  const auto rs = coverage_experiment(small, alpha, zero, opts);
  const auto rl = coverage_experiment(large, alpha, zero, opts);
  ShrinkageReport out;
  out.n_small = n_small;
  out.n_large = n_large;
  for (std::size_t r = 0; r < rs.records.size(); ++r) {
    if (!rs.records[r].error.empty() || !rl.records[r].error.empty()) continue;
    out.major_small.push_back(rs.records[r].major_axis);
    out.major_large.push_back(rl.records[r].major_axis);
    ++out.pairs;
    if (rl.records[r].major_axis < rs.records[r].major_axis) ++out.shrank;
  }
  out.median_major_small = median_of(out.major_small);
  out.median_major_large = median_of(out.major_large);
  out.sign_test_p = binomial_upper_tail(out.pairs, out.shrank);
  return out;
}

}  // namespace fmedreg
