#pragma once

// Conditional median predictors with a curve covariate:
//   CMM  - spatial median of the responses under Nadaraya-Watson weights,
//   VCCM - vector of component-wise conditional medians (weighted CDF
//          inverted at 1/2),
//   NF   - CMM with the curve treated as a plain Euclidean vector.
// Also leave-one-out L1 bandwidth selection and bandwidth transfer to new
// curves.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "fmedreg/errors.hpp"
#include "fmedreg/fda.hpp"
#include "fmedreg/geomedian.hpp"
#include "fmedreg/kernels.hpp"
#include "fmedreg/parallel.hpp"

namespace fmedreg {

enum class Method { CMM, VCCM, NF };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::CMM: return "cmm";
    case Method::VCCM: return "vccm";
    case Method::NF: return "nf";
  }
  return "?";
}

struct BandwidthRule {
  enum class Kind { FixedH, Knn };
  Kind kind = Kind::Knn;
  double value = 5;  // h for FixedH, k for Knn

  static BandwidthRule fixed(double h) {
    if (!(h > 0.0)) throw ArgumentError("fixed bandwidth must be positive");
    return {Kind::FixedH, h};
  }
  static BandwidthRule knn(Eigen::Index k) {
    if (k < 1) throw ArgumentError("k must be at least 1");
    return {Kind::Knn, static_cast<double>(k)};
  }

  Eigen::Index k() const { return static_cast<Eigen::Index>(value); }

  bool operator==(const BandwidthRule&) const = default;
};

inline std::string to_string(const BandwidthRule& rule) {
  if (rule.kind == BandwidthRule::Kind::Knn) return "knn:" + std::to_string(rule.k());
  return "h:" + std::to_string(rule.value);
}

/// Bandwidth implied by `rule` at a point whose distances to the learning
/// curves are `distances`. kNN uses (1 + 1e-9) times the k-th smallest
/// distance so that the k-th neighbour keeps a positive quadratic weight.
inline double resolve_bandwidth(const BandwidthRule& rule,
                                const Eigen::Ref<const Eigen::VectorXd>& distances) {
  if (rule.kind == BandwidthRule::Kind::FixedH) return rule.value;
  const auto k = rule.k();
  if (k < 1 || k > distances.size()) {
    throw ArgumentError("k=" + std::to_string(k) + " outside [1, " +
                        std::to_string(distances.size()) + "]");
  }
  std::vector<double> d(distances.data(), distances.data() + distances.size());
  std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
  const double h = (1.0 + 1e-9) * d[static_cast<std::size_t>(k - 1)];
  return h > 0.0 ? h : std::numeric_limits<double>::min();
}

struct Prediction {
  Eigen::VectorXd y_hat;
  WeightVector weights_used;
  double h_used = 0.0;
  Method method = Method::CMM;
  // Spatial-median diagnostics (CMM and NF).
  Eigen::Index iterations = 0;
  bool converged = true;
};

/// Learning sample plus everything needed to predict at a new curve.
class FittedModel {
 public:
  FittedModel(FunctionalSample covariates, Eigen::MatrixXd responses,
              SemiMetricSpec semimetric, KernelSpec kernel, BandwidthRule bandwidth,
              Method method)
      : covariates_(std::move(covariates)),
        responses_(std::move(responses)),
        semimetric_(method == Method::NF ? SemiMetricSpec::euclidean()
                                         : std::move(semimetric)),
        kernel_(kernel),
        bandwidth_(bandwidth),
        method_(method) {
    if (covariates_.size() != responses_.rows()) {
      throw ShapeError("covariates have " + std::to_string(covariates_.size()) +
                       " rows but responses have " + std::to_string(responses_.rows()));
    }
    if (covariates_.size() < 1) throw ShapeError("learning sample is empty");
    if (responses_.cols() < 1) throw ShapeError("responses have no columns");
    if (method_ != Method::VCCM && responses_.cols() < 2) {
      throw DimensionError("CMM/NF need a response of dimension >= 2");
    }
    if (!responses_.allFinite()) throw ShapeError("responses contain non-finite values");
    if (bandwidth_.kind == BandwidthRule::Kind::Knn &&
        (bandwidth_.k() < 1 || bandwidth_.k() > covariates_.size())) {
      throw ArgumentError("k outside [1, n]");
    }
    features_ = semimetric_.features(covariates_.grid(), covariates_.values());
    feature_weights_ = semimetric_.feature_weights(covariates_.grid());
  }

  const FunctionalSample& covariates() const { return covariates_; }
  const Eigen::MatrixXd& responses() const { return responses_; }
  const SemiMetricSpec& semimetric() const { return semimetric_; }
  const KernelSpec& kernel() const { return kernel_; }
  const BandwidthRule& bandwidth() const { return bandwidth_; }
  Method method() const { return method_; }
  Eigen::Index size() const { return covariates_.size(); }

  FittedModel with_bandwidth(BandwidthRule rule) const {
    FittedModel copy = *this;
    copy.bandwidth_ = rule;
    return copy;
  }

  /// d(x, X_i) for every learning curve.
  Eigen::VectorXd distances(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    covariates_.grid().check_length(x.size());
    const Eigen::MatrixXd fx = semimetric_.features(covariates_.grid(), x.transpose());
    Eigen::VectorXd out(size());
    for (Eigen::Index i = 0; i < size(); ++i) {
      out[i] = feature_distance(fx.row(0).transpose(), features_.row(i).transpose(),
                                feature_weights_);
    }
    return out;
  }

  /// Distances between learning curves.
  Eigen::MatrixXd learning_distances() const {
    const auto n = size();
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        d(i, j) = d(j, i) = feature_distance(features_.row(i).transpose(),
                                             features_.row(j).transpose(),
                                             feature_weights_);
      }
    }
    return d;
  }

 private:
  FunctionalSample covariates_;
  Eigen::MatrixXd responses_;
  SemiMetricSpec semimetric_;
  KernelSpec kernel_;
  BandwidthRule bandwidth_;
  Method method_;
  Eigen::MatrixXd features_;
  Eigen::VectorXd feature_weights_;
};

/// inf { y in support : F(y) >= 1/2 } for the weighted empirical CDF.
/// Cumulative sums within 1e-12 of 1/2 count as reaching it.
inline double weighted_lower_median(const Eigen::Ref<const Eigen::VectorXd>& values,
                                    const Eigen::Ref<const Eigen::VectorXd>& weights) {
  std::vector<Eigen::Index> order;
  double total = 0.0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (weights[i] > 0.0) {
      order.push_back(i);
      total += weights[i];
    }
  }
  if (order.empty()) throw ArgumentError("no positive weight");
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return values[a] < values[b] || (values[a] == values[b] && a < b);
  });
  double cum = 0.0;
  for (std::size_t s = 0; s < order.size(); ++s) {
    cum += weights[order[s]];
    const bool group_end =
        s + 1 == order.size() || values[order[s + 1]] != values[order[s]];
    if (group_end && cum / total >= 0.5 - 1e-12) return values[order[s]];
  }
  return values[order.back()];
}

namespace detail {

// Spatial median over the responses that carry positive weight.
inline Prediction spatial_median_prediction(const Eigen::MatrixXd& responses,
                                            const WeightVector& w, double h, Method method) {
  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w[i] > 0.0) active.push_back(i);
  }
  Eigen::MatrixXd pts(static_cast<Eigen::Index>(active.size()), responses.cols());
  Eigen::VectorXd wa(static_cast<Eigen::Index>(active.size()));
  for (std::size_t a = 0; a < active.size(); ++a) {
    pts.row(static_cast<Eigen::Index>(a)) = responses.row(active[a]);
    wa[static_cast<Eigen::Index>(a)] = w[active[a]];
  }
  const auto sol = solve_median(PointCloud(std::move(pts), std::move(wa)));
  Prediction out;
  out.y_hat = sol.point;
  out.weights_used = w;
  out.h_used = h;
  out.method = method;
  out.iterations = sol.iterations;
  out.converged = sol.converged;
  return out;
}

inline Prediction component_median_prediction(const Eigen::MatrixXd& responses,
                                              const WeightVector& w, double h) {
  Prediction out;
  out.y_hat.resize(responses.cols());
  for (Eigen::Index j = 0; j < responses.cols(); ++j) {
    out.y_hat[j] = weighted_lower_median(responses.col(j), w.weights);
  }
  out.weights_used = w;
  out.h_used = h;
  out.method = Method::VCCM;
  return out;
}

}  // namespace detail

/// Prediction from precomputed distances d(x, X_i); the shared core of
/// every predictor and of cross-validation.
inline Prediction predict_from_distances(Method method, const Eigen::MatrixXd& responses,
                                         const Eigen::Ref<const Eigen::VectorXd>& distances,
                                         const BandwidthRule& rule, const KernelSpec& kernel) {
  const double h = resolve_bandwidth(rule, distances);
  const WeightVector w = nw_weights(distances, h, kernel);
  if (method == Method::VCCM) return detail::component_median_prediction(responses, w, h);
  return detail::spatial_median_prediction(responses, w, h, method);
}

inline Prediction predict_cmm(const FittedModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                              std::optional<BandwidthRule> rule = std::nullopt) {
  if (model.method() != Method::CMM) throw ArgumentError("model is not a CMM model");
  return predict_from_distances(Method::CMM, model.responses(), model.distances(x),
                                rule.value_or(model.bandwidth()), model.kernel());
}

inline Prediction predict_vccm(const FittedModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                               std::optional<BandwidthRule> rule = std::nullopt) {
  if (model.method() != Method::VCCM) throw ArgumentError("model is not a VCCM model");
  return predict_from_distances(Method::VCCM, model.responses(), model.distances(x),
                                rule.value_or(model.bandwidth()), model.kernel());
}

inline Prediction predict_nf(const FittedModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                             std::optional<BandwidthRule> rule = std::nullopt) {
  if (model.method() != Method::NF) throw ArgumentError("model is not an NF model");
  return predict_from_distances(Method::NF, model.responses(), model.distances(x),
                                rule.value_or(model.bandwidth()), model.kernel());
}

inline Prediction predict(const FittedModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                          std::optional<BandwidthRule> rule = std::nullopt) {
  return predict_from_distances(model.method(), model.responses(), model.distances(x),
                                rule.value_or(model.bandwidth()), model.kernel());
}

/// Weighted conditional CDF of response component j at y.
inline double conditional_cdf(const FittedModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                              Eigen::Index j, double y) {
  if (j < 0 || j >= model.responses().cols()) throw DimensionError("component out of range");
  const auto dist = model.distances(x);
  const WeightVector w = nw_weights(dist, resolve_bandwidth(model.bandwidth(), dist),
                                    model.kernel());
  double cdf = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (model.responses()(i, j) <= y) cdf += w[i];
  }
  return std::min(1.0, cdf);
}

// ---------------------------------------------------------------------------
// Bandwidth selection

/// 15 bandwidths at quantile levels log-spaced in [0.05, 0.95] of the
/// off-diagonal pairwise distances (linear-interpolation quantiles).
/// Duplicates and zeros are dropped.
inline std::vector<BandwidthRule> fixed_h_candidates(const Eigen::MatrixXd& pairwise,
                                                     int count = 15, double lo = 0.05,
                                                     double hi = 0.95) {
  std::vector<double> d;
  for (Eigen::Index i = 0; i < pairwise.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < pairwise.cols(); ++j) d.push_back(pairwise(i, j));
  }
  if (d.empty()) throw ShapeError("need at least two curves for a bandwidth grid");
  std::sort(d.begin(), d.end());
  std::vector<BandwidthRule> out;
  for (int c = 0; c < count; ++c) {
    const double level =
        count == 1 ? hi : std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * c / (count - 1));
    const double pos = level * static_cast<double>(d.size() - 1);
    const auto below = static_cast<std::size_t>(std::floor(pos));
    const auto above = std::min(below + 1, d.size() - 1);
    const double h = d[below] + (pos - static_cast<double>(below)) * (d[above] - d[below]);
    if (h > 0.0 && (out.empty() || h > out.back().value)) out.push_back(BandwidthRule::fixed(h));
  }
  if (out.empty()) throw BandwidthSelectionError("all pairwise distances are zero");
  return out;
}

/// k in {3, 5, ..., min(41, n-1)}; {1, ..., n-1} when n - 1 < 3.
inline std::vector<BandwidthRule> knn_candidates(Eigen::Index n) {
  std::vector<BandwidthRule> out;
  const Eigen::Index kmax = std::min<Eigen::Index>(41, n - 1);
  if (kmax < 3) {
    for (Eigen::Index k = 1; k <= kmax; ++k) out.push_back(BandwidthRule::knn(k));
  } else {
    for (Eigen::Index k = 3; k <= kmax; k += 2) out.push_back(BandwidthRule::knn(k));
  }
  return out;
}

struct CvResult {
  BandwidthRule best;
  std::vector<BandwidthRule> candidates;
  std::vector<double> losses;
  std::vector<Eigen::Index> empty_folds;
};

namespace detail {

inline Eigen::VectorXd loo_row(const Eigen::MatrixXd& pairwise, Eigen::Index i) {
  const auto n = pairwise.rows();
  Eigen::VectorXd out(n - 1);
  for (Eigen::Index j = 0, k = 0; j < n; ++j) {
    if (j != i) out[k++] = pairwise(i, j);
  }
  return out;
}

inline Eigen::MatrixXd loo_responses(const Eigen::MatrixXd& y, Eigen::Index i) {
  Eigen::MatrixXd out(y.rows() - 1, y.cols());
  for (Eigen::Index j = 0, k = 0; j < y.rows(); ++j) {
    if (j != i) out.row(k++) = y.row(j);
  }
  return out;
}

}  // namespace detail

/// Leave-one-out L1 cross-validation: minimizes sum_i ||Y_i - mu_(-i)(X_i)||
/// over the candidates. A fold whose window is empty adds
/// 10 * sum_i ||Y_i - mean(Y)|| and disqualifies the candidate. Ties go to
/// the earlier (smaller) candidate.
inline CvResult cross_validate(Method method, const Eigen::MatrixXd& pairwise,
                               const Eigen::MatrixXd& responses, const KernelSpec& kernel,
                               const std::vector<BandwidthRule>& candidates) {
  const auto n = responses.rows();
  if (n < 3) throw ShapeError("cross-validation needs at least 3 observations");
  if (candidates.empty()) throw BandwidthSelectionError("empty candidate grid");
  if (pairwise.rows() != n || pairwise.cols() != n) {
    throw ShapeError("distance matrix does not match the responses");
  }
  const Eigen::RowVectorXd mean = responses.colwise().mean();
  const double penalty = 10.0 * (responses.rowwise() - mean).rowwise().norm().sum();

  CvResult out;
  out.candidates = candidates;
  out.losses.assign(candidates.size(), 0.0);
  out.empty_folds.assign(candidates.size(), 0);
  std::vector<std::vector<double>> fold_loss(candidates.size(), std::vector<double>(n, 0.0));
  std::vector<std::vector<char>> fold_failed(candidates.size(), std::vector<char>(n, 0));

  std::vector<Eigen::MatrixXd> loo_y(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) loo_y[i] = detail::loo_responses(responses, i);

  parallel_for(static_cast<std::size_t>(n), [&](std::size_t ii) {
    const auto i = static_cast<Eigen::Index>(ii);
    const Eigen::VectorXd dist = detail::loo_row(pairwise, i);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      try {
        const auto pred = predict_from_distances(method, loo_y[ii], dist, candidates[c], kernel);
        fold_loss[c][ii] = (responses.row(i).transpose() - pred.y_hat).norm();
      } catch (const EmptyWindowError&) {
        fold_loss[c][ii] = penalty;
        fold_failed[c][ii] = 1;
      }
    }
  });

  std::optional<std::size_t> best;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    for (Eigen::Index i = 0; i < n; ++i) {
      out.losses[c] += fold_loss[c][i];
      out.empty_folds[c] += fold_failed[c][i];
    }
    if (out.empty_folds[c] == 0 && (!best || out.losses[c] < out.losses[*best])) best = c;
  }
  if (!best) throw BandwidthSelectionError("every candidate bandwidth leaves some window empty");
  out.best = candidates[*best];
  return out;
}

inline BandwidthRule bandwidth_cv_l1(const FittedModel& model,
                                     const std::vector<BandwidthRule>& candidates) {
  return cross_validate(model.method(), model.learning_distances(), model.responses(),
                        model.kernel(), candidates)
      .best;
}

/// Per-observation ("local") leave-one-out selection: for each learning
/// curve X_i the candidate minimizing ||Y_i - mu_(-i)(X_i)|| alone, or
/// |Y_ij - mu_(-i),j(X_i)| when `component` >= 0. Ties go to the earlier
/// candidate; a curve whose windows are all empty gets the last candidate.
inline std::vector<BandwidthRule> local_bandwidth_cv(Method method,
                                                     const Eigen::MatrixXd& pairwise,
                                                     const Eigen::MatrixXd& responses,
                                                     const KernelSpec& kernel,
                                                     const std::vector<BandwidthRule>& candidates,
                                                     Eigen::Index component = -1) {
  const auto n = responses.rows();
  if (n < 3) throw ShapeError("cross-validation needs at least 3 observations");
  if (candidates.empty()) throw BandwidthSelectionError("empty candidate grid");
  std::vector<BandwidthRule> rules(static_cast<std::size_t>(n), candidates.back());
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t ii) {
    const auto i = static_cast<Eigen::Index>(ii);
    const Eigen::VectorXd dist = detail::loo_row(pairwise, i);
    const Eigen::MatrixXd y = detail::loo_responses(responses, i);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& cand : candidates) {
      try {
        const auto pred = predict_from_distances(method, y, dist, cand, kernel);
        const double loss =
            component >= 0 ? std::abs(responses(i, component) - pred.y_hat[component])
                           : (responses.row(i).transpose() - pred.y_hat).norm();
        if (loss < best) {
          best = loss;
          rules[ii] = cand;
        }
      } catch (const EmptyWindowError&) {
      }
    }
  });
  return rules;
}

/// Index of the semi-metric-nearest learning curve (smallest index on ties).
inline Eigen::Index nearest_index(const Eigen::Ref<const Eigen::VectorXd>& distances) {
  if (distances.size() == 0) throw ShapeError("learning sample is empty");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < distances.size(); ++i) {
    if (distances[i] < distances[best]) best = i;
  }
  return best;
}

/// Bandwidth rule attached to the learning curve nearest to the test curve.
inline BandwidthRule transfer_bandwidth(const Eigen::Ref<const Eigen::VectorXd>& distances,
                                        const std::vector<BandwidthRule>& per_sample_rules) {
  if (static_cast<Eigen::Index>(per_sample_rules.size()) != distances.size()) {
    throw ShapeError("one bandwidth rule per learning curve is required");
  }
  return per_sample_rules[static_cast<std::size_t>(nearest_index(distances))];
}

inline BandwidthRule transfer_bandwidth(const Eigen::Ref<const Eigen::VectorXd>& test_x,
                                        const FunctionalSample& learning,
                                        const SemiMetricSpec& spec,
                                        const std::vector<BandwidthRule>& per_sample_rules) {
  return transfer_bandwidth(distances_to(learning, spec, test_x), per_sample_rules);
}

}  // namespace fmedreg
