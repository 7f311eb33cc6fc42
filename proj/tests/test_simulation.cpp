#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <numbers>

#include "fmedreg/simulation.hpp"

using namespace fmedreg;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double correlation(const VectorXd& a, const VectorXd& b) {
  const VectorXd ca = a.array() - a.mean();
  const VectorXd cb = b.array() - b.mean();
  return ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
}

}  // namespace

TEST(CounterRng, StreamsAreIndependentOfOtherStreams) {
  CounterRng a(42, 3), b(42, 3), c(42, 4);
  for (int i = 0; i < 10; ++i) c.next_u64();
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  CounterRng d(42, 3);
  CounterRng e(42, 4);
  EXPECT_NE(d.next_u64(), e.next_u64());
  EXPECT_NE(CounterRng(1, 0).next_u64(), CounterRng(2, 0).next_u64());
}

TEST(CounterRng, UniformAndNormalMoments) {
  CounterRng rng(7, 0);
  double su = 0, sn = 0, sn2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.02);
}

TEST(Eigenfunctions, Values) {
  EXPECT_NEAR(eigenfunction(1, 1.0), std::numbers::sqrt2, 1e-15);
  EXPECT_EQ(eigenfunction(1, 0.0), 0.0);
  EXPECT_THROW(eigenfunction(0, 0.5), ArgumentError);
  EXPECT_NEAR(eigenvalue(1), 0.405284735, 1e-9);
  const Grid g = Grid::equispaced(100);
  const VectorXd f1 = eigenfunction_on(g, 1), f2 = eigenfunction_on(g, 2);
  EXPECT_NEAR(g.integrate(f1.cwiseProduct(f2)), 0.0, 1e-3);
  EXPECT_NEAR(g.integrate(f1.cwiseProduct(f1)), 1.0, 1e-3);
}

TEST(BrownianPaths, StartAtZeroWithUnitTerminalVariance) {
  SimConfig cfg;
  cfg.n = 5000;
  cfg.seed = 3;
  const auto paths = brownian_paths(cfg);
  const MatrixXd& x = paths.values();
  EXPECT_EQ(x.col(0).cwiseAbs().maxCoeff(), 0.0);
  const VectorXd end = x.col(cfg.p - 1);
  const double var = (end.array() - end.mean()).square().sum() / (cfg.n - 1);
  EXPECT_GE(var, 0.92);
  EXPECT_LE(var, 1.08);
  const VectorXd inc1 = x.col(30) - x.col(10);
  const VectorXd inc2 = x.col(80) - x.col(50);
  EXPECT_LT(std::abs(correlation(inc1, inc2)), 0.05);
}

TEST(GenerateDataset, NoiselessExamples) {
  const Grid g = Grid::equispaced(100);
  CounterRng rng(1, 0);
  const FunctionalSample zero(g, MatrixXd::Zero(5, 100));
  EXPECT_EQ(simulate_responses(zero, 0.0, rng), MatrixXd::Zero(5, 2));

  MatrixXd f1(1, 100);
  f1.row(0) = eigenfunction_on(g, 1).transpose();
  const MatrixXd y = simulate_responses(FunctionalSample(g, f1), 0.0, rng);
  EXPECT_NEAR(y(0, 0), 1.0, 1e-3);
  EXPECT_NEAR(y(0, 1), 0.0, 1e-3);
  const VectorXd truth = true_conditional_median(g, f1.row(0).transpose());
  EXPECT_EQ(truth[0], y(0, 0));
  EXPECT_EQ(true_conditional_median(g, VectorXd::Zero(100)), VectorXd::Zero(2));
}

TEST(GenerateDataset, MarginalVarianceAndIndependence) {
  SimConfig cfg;
  cfg.n = 5000;
  cfg.seed = 4;
  const auto ds = generate_dataset(cfg);
  const VectorXd y1 = ds.responses.col(0);
  const double var = (y1.array() - y1.mean()).square().sum() / (cfg.n - 1);
  EXPECT_NEAR(var, 1.0 + eigenvalue(1), 0.1);
  // Scores on the unused third eigenfunction are unrelated to the responses.
  const Grid& g = ds.covariates.grid();
  const VectorXd wf3 = g.weights().cwiseProduct(eigenfunction_on(g, 3));
  const VectorXd s3 = ds.covariates.values() * wf3;
  EXPECT_LT(std::abs(correlation(s3, y1)), 0.1);
  EXPECT_LT(std::abs(correlation(s3, ds.responses.col(1))), 0.1);
}

TEST(GenerateDataset, Deterministic) {
  SimConfig cfg;
  cfg.n = 50;
  cfg.seed = 99;
  const auto a = generate_dataset(cfg, 2);
  const auto b = generate_dataset(cfg, 2);
  EXPECT_EQ(a.covariates.values(), b.covariates.values());
  EXPECT_EQ(a.responses, b.responses);
  const auto c = generate_dataset(cfg, 3);
  EXPECT_NE(a.responses, c.responses);
}

TEST(SimConfig, Validation) {
  SimConfig cfg;
  cfg.n = 5;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = SimConfig{};
  cfg.reps = 0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
}

TEST(CoverageExperiment, AlphaOneNeverCovers) {
  SimConfig cfg;
  cfg.n = 60;
  cfg.reps = 4;
  const auto rep = coverage_experiment(cfg, 1.0, VectorXd::Zero(cfg.p));
  ASSERT_EQ(rep.records.size(), 4u);
  EXPECT_EQ(rep.failures, 0);
  EXPECT_EQ(rep.coverage, 0.0);
  for (const auto& r : rep.records) {
    EXPECT_GE(r.statistic, 0.0);
    EXPECT_GE(r.major_axis, r.minor_axis);
  }
}

TEST(CoverageExperiment, ScheduleIndependent) {
  SimConfig cfg;
  cfg.n = 60;
  cfg.reps = 4;
  cfg.seed = 12;
  setenv("FMEDREG_THREADS", "1", 1);
  const auto a = coverage_experiment(cfg, 0.05, VectorXd::Zero(cfg.p));
  setenv("FMEDREG_THREADS", "3", 1);
  const auto b = coverage_experiment(cfg, 0.05, VectorXd::Zero(cfg.p));
  unsetenv("FMEDREG_THREADS");
  for (std::size_t r = 0; r < a.records.size(); ++r) {
    EXPECT_EQ(a.records[r].statistic, b.records[r].statistic);
    EXPECT_EQ(a.records[r].h, b.records[r].h);
  }
  EXPECT_EQ(a.coverage, b.coverage);
}

TEST(CoverageExperiment, TargetMustMatchGrid) {
  SimConfig cfg;
  EXPECT_THROW(coverage_experiment(cfg, 0.05, VectorXd::Zero(cfg.p + 1)), DimensionError);
}

TEST(Shrinkage, Helpers) {
  EXPECT_NEAR(binomial_upper_tail(10, 10), 1.0 / 1024, 1e-15);
  EXPECT_NEAR(binomial_upper_tail(10, 0), 1.0, 1e-12);
  EXPECT_NEAR(binomial_upper_tail(4, 3), 5.0 / 16, 1e-14);
  EXPECT_EQ(median_of({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median_of({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_TRUE(std::isnan(median_of({})));
}

TEST(Shrinkage, SmallRun) {
  SimConfig cfg;
  cfg.reps = 3;
  cfg.seed = 5;
  const auto rep = shrinkage_experiment(cfg, 40, 160);
  EXPECT_EQ(rep.pairs, 3);
  EXPECT_EQ(rep.major_small.size(), 3u);
  EXPECT_GE(rep.sign_test_p, 1.0 / 8 - 1e-15);
}
