#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fmedreg/bench.hpp"

using namespace fmedreg;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::string write_temp(const std::string& name, const std::string& text) {
  const auto dir = std::filesystem::temp_directory_path() / "fmedreg_test_bench";
  std::filesystem::create_directories(dir);
  const auto path = (dir / name).string();
  std::ofstream(path) << text;
  return path;
}

Dataset small_dataset(Eigen::Index n, std::uint64_t seed) {
  return synthetic_spectra(n, seed, 40);
}

}  // namespace

TEST(ParseDataset, SmallFiles) {
  const auto c = write_temp("c.csv", "1,2,3\n4,5,6\n");
  const auto r = write_temp("r.csv", "fat\n0.5\n1.5\n");
  const auto ds = parse_dataset(c, r);
  EXPECT_EQ(ds.size(), 2);
  EXPECT_EQ(ds.curves.grid().size(), 3);
  EXPECT_EQ(ds.responses.cols(), 1);
  EXPECT_EQ(ds.response_names, std::vector<std::string>{"fat"});
  EXPECT_EQ(ds.curves.values()(1, 2), 6.0);
}

TEST(ParseDataset, HeaderAndGridOptions) {
  const auto c = write_temp("ch.csv", "a,b,c\n1,2,3\n4,5,6\n");
  const auto r = write_temp("rh.csv", "y1,y2\n0,1\n1,0\n");
  const auto g = write_temp("g.csv", "850\n900\n1050\n");
  DatasetOptions opts;
  opts.curves_header = true;
  opts.grid_path = g;
  const auto ds = parse_dataset(c, r, opts);
  EXPECT_EQ(ds.curves.grid().points()[2], 1050.0);
  EXPECT_EQ(ds.size(), 2);
}

TEST(ParseDataset, Errors) {
  const auto c = write_temp("c2.csv", "1,2,3\n4,5,6\n");
  const auto r3 = write_temp("r3.csv", "fat\n1\n2\n3\n");
  EXPECT_THROW(parse_dataset(c, r3), ShapeError);

  const auto bad = write_temp("bad.csv", "1,2,3\n4,x,6\n");
  const auto r = write_temp("r2.csv", "fat\n1\n2\n");
  try {
    parse_dataset(bad, r);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.column(), 2u);
  }
  const auto nan = write_temp("nan.csv", "1,2,3\n4,nan,6\n");
  EXPECT_THROW(parse_dataset(nan, r), ParseError);
  const auto ragged = write_temp("ragged.csv", "1,2,3\n4,6\n");
  EXPECT_THROW(parse_dataset(ragged, r), ParseError);
  const auto dup = write_temp("dup.csv", "a,a\n1,2\n3,4\n");
  EXPECT_THROW(parse_dataset(c, dup), ShapeError);
  EXPECT_THROW(parse_dataset("/nonexistent/file.csv", r), ParseError);
}

TEST(Split, FileOrder) {
  const auto ds = synthetic_spectra(215, 1);
  const auto s = split_learn_test(ds, 160);
  ASSERT_EQ(s.test_rows.size(), 55u);
  EXPECT_EQ(s.test_rows.front(), 160);
  EXPECT_EQ(s.test_rows.back(), 214);
  EXPECT_EQ(s.learn.size(), 160);
  EXPECT_EQ(s.test.responses.row(0), ds.responses.row(160));
  const auto single = split_learn_test(ds, 214);
  EXPECT_EQ(single.test.size(), 1);
  EXPECT_THROW(split_learn_test(ds, 215), ShapeError);
  EXPECT_THROW(split_learn_test(ds, 0), ShapeError);
}

TEST(Split, SeededIsDeterministicAndExact) {
  const auto ds = small_dataset(30, 2);
  const auto a = split_learn_test(ds, 20, 7);
  const auto b = split_learn_test(ds, 20, 7);
  EXPECT_EQ(a.learn_rows, b.learn_rows);
  EXPECT_NE(a.learn_rows, split_learn_test(ds, 20, 8).learn_rows);
  std::vector<Eigen::Index> all = a.learn_rows;
  all.insert(all.end(), a.test_rows.begin(), a.test_rows.end());
  std::sort(all.begin(), all.end());
  for (Eigen::Index i = 0; i < 30; ++i) EXPECT_EQ(all[i], i);
}

TEST(Summary, QuantileConvention) {
  EXPECT_EQ(quantile_linear({1, 2, 3, 4}, 0.25), 1.75);
  EXPECT_EQ(quantile_linear({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_EQ(quantile_linear({4, 3, 2, 1}, 0.75), 3.25);
  const auto one = summarize({0.7});
  EXPECT_EQ(one.mean, 0.7);
  EXPECT_EQ(one.q25, 0.7);
  EXPECT_EQ(one.q50, 0.7);
  EXPECT_EQ(one.q75, 0.7);
  EXPECT_TRUE(std::isnan(summarize({}).mean));
}

TEST(Evaluate, PerfectPredictionGivesZeroCells) {
  auto ds = small_dataset(40, 3);
  ds.responses.rowwise() = (Eigen::RowVectorXd(3) << 60, 10, 18).finished();
  const auto s = split_learn_test(ds, 30);
  const auto rep = evaluate({Method::CMM, Method::VCCM, Method::NF}, s.learn, s.test);
  ASSERT_EQ(rep.methods.size(), 3u);
  for (const auto& m : rep.methods) {
    EXPECT_TRUE(m.error.empty()) << m.error;
    EXPECT_EQ(m.r.mean, 0.0);
    EXPECT_EQ(m.r.q75, 0.0);
    for (const auto& s2 : m.abs_error) EXPECT_EQ(s2.mean, 0.0);
  }
}

TEST(Evaluate, SingleTestPointSummaryCollapses) {
  const auto ds = small_dataset(40, 4);
  const auto s = split_learn_test(ds, 39);
  const auto rep = evaluate({Method::CMM}, s.learn, s.test);
  const auto& m = rep.methods[0];
  EXPECT_EQ(m.r.mean, m.r.q25);
  EXPECT_EQ(m.r.q50, m.r.q75);
  EXPECT_EQ(m.r.mean, m.records[0].r);
}

TEST(Evaluate, OnlyRequestedMethodsRunAndNormDominance) {
  const auto ds = small_dataset(60, 5);
  const auto s = split_learn_test(ds, 45);
  const auto rep = evaluate({Method::CMM}, s.learn, s.test);
  EXPECT_EQ(rep.predictor_calls.count("vccm"), 0u);
  EXPECT_EQ(rep.predictor_calls.count("nf"), 0u);
  EXPECT_EQ(rep.predictor_calls.at("cmm"), 15);
  for (const auto& rec : rep.methods[0].records) {
    ASSERT_FALSE(rec.failed);
    EXPECT_GE(rec.r, rec.abs_error.maxCoeff());
  }
  const auto& r = rep.methods[0].r;
  EXPECT_LE(r.q25, r.q50);
  EXPECT_LE(r.q50, r.q75);
  EXPECT_GE(r.mean, 0.0);
}

TEST(Evaluate, LiteralCopyPredictsNearestLearningCurve) {
  const auto ds = small_dataset(50, 6);
  const auto s = split_learn_test(ds, 40);
  BenchConfig cfg;
  cfg.literal_copy = true;
  const auto rep = evaluate({Method::CMM, Method::VCCM}, s.learn, s.test, cfg);
  for (const auto& m : rep.methods) {
    EXPECT_TRUE(m.error.empty());
    EXPECT_EQ(m.missing, 0);
  }
}

TEST(Evaluate, RejectsEmptyMethodList) {
  const auto ds = small_dataset(20, 7);
  const auto s = split_learn_test(ds, 15);
  EXPECT_THROW(evaluate({}, s.learn, s.test), ArgumentError);
}

TEST(Evaluate, ReportSerialization) {
  const auto ds = small_dataset(40, 8);
  const auto s = split_learn_test(ds, 30);
  const auto rep = evaluate({Method::CMM, Method::NF}, s.learn, s.test);
  const json j = to_json(rep);
  EXPECT_EQ(j.at("schema"), "fmedreg/1");
  EXPECT_EQ(j.at("methods").size(), 2u);
  EXPECT_TRUE(j.at("methods")[0].at("abs_error").contains("Fat"));
  std::ostringstream csv;
  write_report_csv(csv, rep);
  std::istringstream lines(csv.str());
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(lines, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "row,cmm_mean,cmm_q25,cmm_q50,cmm_q75,nf_mean,nf_q25,nf_q50,nf_q75");
  EXPECT_EQ(rows[4].substr(0, 2), "R,");
}

TEST(Correlation, Identities) {
  Dataset ds;
  ds.curves = FunctionalSample(Grid::equispaced(3), MatrixXd::Zero(4, 3));
  ds.responses.resize(4, 3);
  ds.responses.col(0) << 1, 2, 4, 3;
  ds.responses.col(1) = -ds.responses.col(0);
  ds.responses.col(2).setConstant(5.0);
  ds.response_names = {"a", "b", "c"};
  const auto c = correlation_summary(ds);
  EXPECT_NEAR(c(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(c(0, 1), -1.0, 1e-15);
  EXPECT_TRUE(std::isnan(c(0, 2)));
}

TEST(SyntheticSpectra, Shape) {
  const auto ds = synthetic_spectra();
  EXPECT_EQ(ds.size(), 215);
  EXPECT_EQ(ds.curves.grid().size(), 100);
  EXPECT_EQ(ds.responses.cols(), 3);
  EXPECT_NO_THROW(ds.validate());
  EXPECT_LT(correlation_summary(ds)(0, 1), -0.9);
}
