#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fmedreg/geomedian.hpp"

using namespace fmedreg;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Instance {
  MatrixXd points;
  VectorXd weights;
};

Instance random_instance(std::mt19937& gen, Eigen::Index n, Eigen::Index d) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> unif(0.1, 1.0);
  Instance inst{MatrixXd(n, d), VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) inst.points(i, k) = nd(gen);
    inst.weights[i] = unif(gen);
  }
  return inst;
}

MatrixXd random_rotation(std::mt19937& gen, Eigen::Index d) {
  std::normal_distribution<double> nd;
  MatrixXd a(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index k = 0; k < d; ++k) a(i, k) = nd(gen);
  Eigen::HouseholderQR<MatrixXd> qr(a);
  return qr.householderQ();
}

}  // namespace

TEST(PointCloud, Validation) {
  EXPECT_THROW(PointCloud::uniform(MatrixXd::Zero(3, 1)), DimensionError);
  EXPECT_THROW(PointCloud(MatrixXd::Zero(3, 2), VectorXd::Ones(2)), DimensionError);
  VectorXd w = VectorXd::Ones(3);
  w[1] = -0.1;
  EXPECT_THROW(PointCloud(MatrixXd::Zero(3, 2), w), ArgumentError);
}

TEST(Objective, Examples) {
  MatrixXd one(1, 2);
  one << 0.3, -0.7;
  EXPECT_EQ(objective(PointCloud::uniform(one), one.row(0).transpose()), 0.0);

  MatrixXd seg(2, 2);
  seg << 0, 0, 2, 0;
  EXPECT_DOUBLE_EQ(objective(PointCloud::uniform(seg), VectorXd::Unit(2, 0)), 1.0);
}

TEST(Objective, MatchesDirectSummation) {
  std::mt19937 gen(1);
  const auto inst = random_instance(gen, 5, 3);
  const PointCloud cloud(inst.points, inst.weights);
  const VectorXd u = VectorXd::Constant(3, 0.2);
  double oracle = 0.0;
  for (int i = 0; i < 5; ++i) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += std::pow(inst.points(i, k) - u[k], 2);
    oracle += inst.weights[i] * std::sqrt(s);
  }
  EXPECT_NEAR(objective(cloud, u), oracle, 1e-14);
}

TEST(Gradient, SinglePoint) {
  MatrixXd y(1, 2);
  y << 1.0, 2.0;
  const auto cloud = PointCloud::uniform(y);
  VectorXd u(2);
  u << 4.0, 6.0;
  const VectorXd g = gradient(cloud, u);
  EXPECT_NEAR(g[0], 0.6, 1e-15);
  EXPECT_NEAR(g[1], 0.8, 1e-15);
  EXPECT_NEAR(g.norm(), 1.0, 1e-15);
  EXPECT_EQ(gradient(cloud, y.row(0).transpose()), VectorXd::Zero(2));
}

TEST(Gradient, MatchesFiniteDifferences) {
  std::mt19937 gen(2);
  for (int rep = 0; rep < 50; ++rep) {
    const auto inst = random_instance(gen, 6, 2 + rep % 2);
    const PointCloud cloud(inst.points, inst.weights);
    VectorXd u = inst.points.colwise().mean().transpose();
    u.array() += 0.137;
    double nearest = (inst.points.rowwise() - u.transpose()).rowwise().norm().minCoeff();
    if (nearest < 1e-3) continue;
    const VectorXd g = gradient(cloud, u);
    EXPECT_LE(g.norm(), inst.weights.sum() + 1e-12);
    for (Eigen::Index k = 0; k < u.size(); ++k) {
      VectorXd up = u, dn = u;
      up[k] += 1e-6;
      dn[k] -= 1e-6;
      const double fd = (objective(cloud, up) - objective(cloud, dn)) / 2e-6;
      EXPECT_NEAR(g[k], fd, 1e-5);
    }
  }
}

TEST(Hessian, SinglePointEigenvalues) {
  MatrixXd y(1, 2);
  y << 3.0, 4.0;
  const auto h = hessian_weighted(PointCloud::uniform(y), VectorXd::Zero(2));
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(h);
  EXPECT_NEAR(es.eigenvalues()[0], 0.0, 1e-15);
  EXPECT_NEAR(es.eigenvalues()[1], 0.2, 1e-15);
  EXPECT_NEAR(h.trace(), 0.2, 1e-15);
}

TEST(Hessian, SymmetricFourPoints) {
  const double a = 2.5;
  MatrixXd y(4, 2);
  y << a, 0, -a, 0, 0, a, 0, -a;
  const auto h = hessian_weighted(PointCloud::uniform(y), VectorXd::Zero(2));
  EXPECT_LT((h - MatrixXd::Identity(2, 2) / (2 * a)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Hessian, TraceIdentityAndPsd) {
  std::mt19937 gen(3);
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::Index d = 2 + rep % 3;
    const auto inst = random_instance(gen, 8, d);
    const PointCloud cloud(inst.points, inst.weights);
    const VectorXd u = VectorXd::Constant(d, 0.05);
    const MatrixXd h = hessian_weighted(cloud, u);
    double expected = 0.0;
    for (int i = 0; i < 8; ++i) {
      expected += inst.weights[i] * (d - 1) / (inst.points.row(i).transpose() - u).norm();
    }
    EXPECT_NEAR(h.trace(), expected, 1e-12 * (1 + expected));
    EXPECT_EQ(h, h.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(h);
    EXPECT_GE(es.eigenvalues()[0], -1e-12);
  }
}

TEST(Hessian, SingularPointNamesIndex) {
  MatrixXd y(3, 2);
  y << 0, 0, 1, 0, 0, 1;
  const auto cloud = PointCloud::uniform(y);
  try {
    hessian_weighted(cloud, y.row(2).transpose());
    FAIL();
  } catch (const SingularPointError& e) {
    EXPECT_EQ(e.index(), 2u);
  }
  const auto dropped = hessian_weighted_dropping(cloud, y.row(2).transpose());
  EXPECT_EQ(dropped.dropped, 1);
}

TEST(SolveMedian, SinglePointIsAnchored) {
  MatrixXd y(1, 3);
  y << 1.0, -2.0, 0.5;
  const auto sol = solve_median(PointCloud::uniform(y));
  EXPECT_TRUE(sol.converged);
  EXPECT_TRUE(sol.anchored);
  EXPECT_EQ(sol.point, y.row(0).transpose());
}

TEST(SolveMedian, EquilateralTriangleCentroid) {
  MatrixXd y(3, 2);
  y << 0, 0, 1, 0, 0.5, std::sqrt(3.0) / 2;
  const auto sol = solve_median(PointCloud::uniform(y));
  EXPECT_TRUE(sol.converged);
  EXPECT_FALSE(sol.anchored);
  EXPECT_NEAR(sol.point[0], 0.5, 1e-8);
  EXPECT_NEAR(sol.point[1], std::sqrt(3.0) / 6, 1e-8);
  EXPECT_LE(sol.grad_norm, 1e-9);
}

TEST(SolveMedian, RightTriangleFermatPoint) {
  // Brute-force oracle: nested grid refinement of the convex objective.
  MatrixXd y(3, 2);
  y << 0, 0, 1, 0, 0, 1;
  const auto cloud = PointCloud::uniform(y);
  VectorXd best = VectorXd::Zero(2);
  double span = 1.0;
  for (int level = 0; level < 30; ++level) {
    VectorXd centre = best;
    double best_val = objective(cloud, best);
    for (int a = -10; a <= 10; ++a) {
      for (int b = -10; b <= 10; ++b) {
        VectorXd u(2);
        u << centre[0] + span * a / 10, centre[1] + span * b / 10;
        const double v = objective(cloud, u);
        if (v < best_val) {
          best_val = v;
          best = u;
        }
      }
    }
    span *= 0.3;
  }
  const auto sol = solve_median(cloud);
  EXPECT_TRUE(sol.converged);
  EXPECT_NEAR(sol.point[0], best[0], 1e-6);
  EXPECT_NEAR(sol.point[1], best[1], 1e-6);
  // Closed form: all sides subtend 120 degrees.
  const double f = (3.0 - std::sqrt(3.0)) / 6.0;
  EXPECT_NEAR(sol.point[0], f, 1e-8);
}

TEST(SolveMedian, HeavyVertexAnchorsWithCertificate) {
  MatrixXd y(3, 2);
  y << 0, 0, 1, 0, 0, 1;
  VectorXd w(3);
  w << 0.8, 0.1, 0.1;
  const auto sol = solve_median(PointCloud(y, w));
  EXPECT_TRUE(sol.converged);
  EXPECT_TRUE(sol.anchored);
  EXPECT_EQ(sol.point, VectorXd::Zero(2));
  // Vardi-Zhang condition ||R_k|| <= w_k.
  const double rk = std::hypot(0.1, 0.1);
  EXPECT_LE(rk, 0.8);
}

TEST(SolveMedian, ObtuseTriangleVertex) {
  // Angle at the origin exceeds 120 degrees, so the median is that vertex.
  MatrixXd y(3, 2);
  y << 0, 0, 1, 0.1, -1, 0.1;
  const auto sol = solve_median(PointCloud::uniform(y));
  EXPECT_TRUE(sol.converged);
  EXPECT_TRUE(sol.anchored);
  EXPECT_LT(sol.point.norm(), 1e-12);
}

TEST(SolveMedian, CollinearFlag) {
  MatrixXd y(4, 2);
  y << 0, 0, 1, 1, 2, 2, 5, 5;
  const auto sol = solve_median(PointCloud::uniform(y));
  EXPECT_TRUE(sol.collinear);
  // Any point of the segment [(1,1),(2,2)] minimizes.
  const double opt = objective(PointCloud::uniform(y), VectorXd::Constant(2, 1.5));
  EXPECT_NEAR(sol.objective, opt, 1e-8);
  MatrixXd tri(3, 2);
  tri << 0, 0, 1, 0, 0, 1;
  EXPECT_FALSE(solve_median(PointCloud::uniform(tri)).collinear);
}

TEST(SolveMedian, ZeroWeightsIgnoredAndAllZeroRejected) {
  MatrixXd y(3, 2);
  y << 0, 0, 1, 0, 100, 100;
  VectorXd w(3);
  w << 0.5, 0.5, 0.0;
  const auto sol = solve_median(PointCloud(y, w));
  EXPECT_NEAR(sol.point[1], 0.0, 1e-9);
  EXPECT_THROW(solve_median(PointCloud(y, VectorXd::Zero(3))), ArgumentError);
}

TEST(SolveMedian, MaxIterReportsNotConverged) {
  std::mt19937 gen(5);
  const auto inst = random_instance(gen, 10, 2);
  const auto sol = solve_median(PointCloud(inst.points, inst.weights), 1e-15, 1);
  EXPECT_FALSE(sol.converged);
  EXPECT_LE(sol.iterations, 1);
}

TEST(SolveMedian, MonotoneDescentAndDiscreteOptimality) {
  std::mt19937 gen(6);
  for (int rep = 0; rep < 100; ++rep) {
    const auto inst = random_instance(gen, 3 + rep % 10, 2 + rep % 2);
    const PointCloud cloud(inst.points, inst.weights);
    std::vector<double> trace;
    SolverOptions opts;
    opts.objective_trace = &trace;
    const auto sol = solve_median(cloud, opts);
    EXPECT_TRUE(sol.converged);
    for (std::size_t k = 1; k < trace.size(); ++k) EXPECT_LE(trace[k], trace[k - 1] + 1e-15 * std::max(1.0, trace[k - 1]));
    for (Eigen::Index i = 0; i < cloud.size(); ++i) {
      EXPECT_LE(sol.objective, objective(cloud, inst.points.row(i).transpose()) + 1e-12);
    }
  }
}

TEST(SolveMedian, Equivariances) {
  std::mt19937 gen(7);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> unif(0.2, 5.0);
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::Index d = 2 + rep % 2;
    const auto inst = random_instance(gen, 9, d);
    const auto base = solve_median(PointCloud(inst.points, inst.weights)).point;

    VectorXd b(d);
    for (auto& v : b) v = nd(gen);
    const MatrixXd shifted = inst.points.rowwise() + b.transpose();
    EXPECT_LT((solve_median(PointCloud(shifted, inst.weights)).point - (base + b))
                  .cwiseAbs().maxCoeff(), 1e-9);

    const MatrixXd q = random_rotation(gen, d);
    const MatrixXd rotated = inst.points * q.transpose();
    EXPECT_LT((solve_median(PointCloud(rotated, inst.weights)).point - q * base)
                  .cwiseAbs().maxCoeff(), 1e-8);

    const double c = unif(gen);
    const VectorXd scaled = solve_median(PointCloud(c * inst.points, inst.weights)).point;
    EXPECT_LT((scaled - c * base).norm(), 1e-8 * c * (1 + base.norm()));

    const auto reweighted = solve_median(PointCloud(inst.points, c * inst.weights));
    EXPECT_LT((reweighted.point - base).cwiseAbs().maxCoeff(), 1e-10);
  }
}
