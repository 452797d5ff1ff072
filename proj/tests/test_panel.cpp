#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "distcast/panel/features.hpp"
#include "distcast/panel/io.hpp"
#include "test_util.hpp"

using namespace distcast;
using distcast::testing::make_panel;
using distcast::testing::single_series;

namespace {

PanelDataset three_by_24() {
  return make_panel(3, 24, 50000.0, [](int i, int t) { return double((i + 1) * (t % 7)); });
}

}  // namespace

TEST(Validate, WellFormedPanelHasNoViolations) { EXPECT_TRUE(validate(three_by_24()).empty()); }

TEST(Validate, NegativeCountNamesCell) {
  auto p = three_by_24();
  p.cases(0, 5) = -1;
  const auto v = validate(p);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, "cases");
  EXPECT_EQ(v[0].district, 0);
  EXPECT_EQ(v[0].month, 5);
}

TEST(Validate, IsolatedDistrictIsOneViolation) {
  auto p = three_by_24();
  p.adjacency = AdjacencyGraph::from_edges(p.districts, {{"D0", "D1"}});
  const auto v = validate(p);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, "connectivity");
  EXPECT_EQ(v[0].district, 2);
}

TEST(Validate, DetectsGapsDimensionsAndPopulation) {
  auto p = three_by_24();
  p.months[10] = p.months[10].plus(1);
  p.population(1, 3) = 0;
  const auto v = validate(p);
  int months = 0, pop = 0;
  for (const auto& x : v) {
    months += x.kind == "months";
    pop += x.kind == "population";
  }
  EXPECT_GE(months, 1);
  EXPECT_EQ(pop, 1);
}

TEST(Adjacency, OrderIsShortestPath) {
  const auto g = AdjacencyGraph::from_edges({"a", "b", "c", "d"}, {{"a", "b"}, {"b", "c"}, {"c", "d"}});
  EXPECT_EQ(g.order(0, 0), 0);
  EXPECT_EQ(g.order(0, 3), 3);
  EXPECT_EQ(g.order(3, 1), 2);
  EXPECT_TRUE((g.order.array() == g.order.transpose().array()).all());
  EXPECT_TRUE(g.connected());
}

TEST(LagCases, ShiftsSeries) {
  const auto p = single_series({1, 2, 3, 4, 5});
  const auto f = lag_cases(p, 3);
  EXPECT_FALSE(f.valid(0, 0));
  EXPECT_FALSE(f.valid(0, 2));
  EXPECT_DOUBLE_EQ(f.values(0, 3), 1.0);
  EXPECT_DOUBLE_EQ(f.values(0, 4), 2.0);
}

TEST(LagCases, RejectsInvalidLag) {
  const auto p = single_series({1, 2, 3, 4, 5});
  EXPECT_THROW(lag_cases(p, 0), PreconditionError);
  EXPECT_THROW(lag_cases(p, 5), PreconditionError);
}

TEST(LagCases, ConstantSeriesStaysConstant) {
  const auto p = single_series(std::vector<double>(20, 7.0));
  for (int lag = 1; lag < 20; ++lag) {
    const auto f = lag_cases(p, lag);
    for (int t = lag; t < 20; ++t) EXPECT_EQ(f.values(0, t), 7.0);
  }
}

TEST(LagCases, ShiftBackReproducesSource) {
  std::mt19937 rng(3);
  const auto p = make_panel(4, 40, 1e5, [&](int, int) { return double(rng() % 50); });
  for (int lag : {1, 3, 7}) {
    const auto f = lag_cases(p, lag);
    for (int i = 0; i < 4; ++i) {
      for (int t = 0; t + lag < 40; ++t) EXPECT_EQ(f.values(i, t + lag), p.cases(i, t));
    }
  }
}

TEST(LaggedOffset, ZeroCasesOneLakh) {
  const auto p = single_series({0, 0, 0, 0, 0}, 100000.0);
  const auto f = lagged_offset_term(p, 3);
  EXPECT_NEAR(f.values(0, 3), -11.5129, 1e-4);
  EXPECT_NEAR(f.values(0, 3), -std::log(100000.0), 1e-12);
}

TEST(LaggedOffset, RatioOfOneIsZero) {
  const auto p = single_series({99999, 0, 0, 0}, 100000.0);
  EXPECT_NEAR(lagged_offset_term(p, 3).values(0, 3), 0.0, 1e-15);
}

TEST(LaggedOffset, ScaleCancels) {
  const auto a = single_series({4, 0, 0, 0}, 1000.0);
  const auto b = single_series({9, 0, 0, 0}, 2000.0);
  EXPECT_NEAR(lagged_offset_term(a, 3).values(0, 3), lagged_offset_term(b, 3).values(0, 3), 1e-14);
}

TEST(LaggedOffset, ExtendsWithCarriedPopulation) {
  const auto p = single_series({4, 5, 6, 7}, 1000.0);
  const auto f = lagged_offset_term(p, 3, 3);
  ASSERT_EQ(f.cols(), 7);
  EXPECT_NEAR(f.values(0, 6), std::log(8.0 / 1000.0), 1e-14);
  EXPECT_THROW(lagged_offset_term(p, 3, 4), PreconditionError);
}

TEST(CumulativeIncidence, ZeroHistory) {
  const auto p = single_series(std::vector<double>(30, 0.0));
  const auto f = cumulative_incidence(p, 12);
  EXPECT_EQ(f.values(0, 12), 0.0);
}

TEST(CumulativeIncidence, TwelveMonthsOfTen) {
  const auto p = single_series(std::vector<double>(13, 10.0), 100000.0);
  const auto f = cumulative_incidence(p, 12);
  EXPECT_NEAR(f.values(0, 12), std::log(121.0), 1e-12);
  EXPECT_NEAR(f.values(0, 12), 4.7958, 1e-4);
}

TEST(CumulativeIncidence, IncompleteWindowMasked) {
  const auto p = single_series(std::vector<double>(30, 1.0));
  const auto f = cumulative_incidence(p, 24);
  EXPECT_FALSE(f.valid(0, 23));
  EXPECT_TRUE(f.valid(0, 24));
  EXPECT_THROW(cumulative_incidence(p, 36), PreconditionError);
  EXPECT_THROW(cumulative_incidence(p, 6), PreconditionError);
}

TEST(CumulativeIncidence, MonotoneInAddedCases) {
  std::mt19937 rng(9);
  auto p = make_panel(1, 40, 30000.0, [&](int, int) { return double(rng() % 20); });
  const auto before = cumulative_incidence(p, 12, 3);
  p.cases(0, 20) += 5;
  const auto after = cumulative_incidence(p, 12, 3);
  for (int t = 0; t < 40; ++t) {
    if (!before.valid(0, t)) continue;
    EXPECT_GE(after.values(0, t), before.values(0, t));
    const bool inside = t - 3 - 11 <= 20 && 20 <= t - 3;
    if (inside) EXPECT_GT(after.values(0, t), before.values(0, t));
    else EXPECT_EQ(after.values(0, t), before.values(0, t));
  }
}

TEST(Standardize, ThreeValues) {
  FeatureMatrix f;
  f.values = Eigen::MatrixXd{{1.0, 2.0, 3.0}};
  f.valid = BoolMatrix::Constant(1, 3, true);
  f.degenerate = {false};
  const auto s = standardize(f, 0, 3);
  EXPECT_NEAR(s.values(0, 0), -1.0, 1e-15);
  EXPECT_NEAR(s.values(0, 1), 0.0, 1e-15);
  EXPECT_NEAR(s.values(0, 2), 1.0, 1e-15);
  EXPECT_FALSE(s.degenerate[0]);
}

TEST(Standardize, ConstantRowIsDegenerate) {
  FeatureMatrix f;
  f.values = Eigen::MatrixXd::Constant(1, 5, 4.2);
  f.valid = BoolMatrix::Constant(1, 5, true);
  f.degenerate = {false};
  const auto s = standardize(f, 0, 5);
  EXPECT_TRUE(s.degenerate[0]);
  EXPECT_TRUE((s.values.array() == 0.0).all());
}

TEST(Standardize, Idempotent) {
  std::mt19937 rng(1);
  const auto p = make_panel(3, 50, 1e4, [&](int, int) { return double(rng() % 100); });
  const auto once = standardize(log_incidence(p), 0, 50);
  const auto twice = standardize(once, 0, 50);
  EXPECT_LT((once.values - twice.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Features, PureAndBitIdentical) {
  std::mt19937 rng(5);
  const auto p = make_panel(3, 50, 1e4, [&](int, int) { return double(rng() % 100); });
  const auto a = cumulative_incidence(p, 24, 3, 3);
  const auto b = cumulative_incidence(p, 24, 3, 3);
  ASSERT_EQ(a.values.size(), b.values.size());
  EXPECT_EQ(std::memcmp(a.values.data(), b.values.data(), sizeof(double) * a.values.size()), 0);
  EXPECT_TRUE((a.valid == b.valid).all());
}

TEST(Panel, TruncationDropsLaterMonths) {
  const auto p = three_by_24();
  const auto q = p.truncated(11);
  EXPECT_EQ(q.T(), 12);
  EXPECT_EQ(q.months.back(), p.months[11]);
  EXPECT_EQ(q.year_index(13), 1);
  EXPECT_EQ(q.month_of_year(13), 2);
  EXPECT_EQ(q.population_at(0, 30), p.population(0, 11));
}

TEST(PanelIo, RoundTripAndStepPopulation) {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "distcast_panel_io";
  fs::create_directories(dir);
  {
    std::ofstream c(dir / "cases.csv");
    c << "district,year,month,cases,population\n";
    for (const char* d : {"A", "B"}) {
      for (int y = 2015; y <= 2016; ++y) {
        for (int m = 1; m <= 12; ++m) c << d << ',' << y << ',' << m << ',' << m << ',' << (y == 2015 ? 1000 : 1100) + (m == 6 ? 5 : 0) << "\n";
      }
    }
    std::ofstream a(dir / "adj.csv");
    a << "district_a,district_b\nA,B\n";
    std::ofstream t(dir / "tmin.csv");
    t << "district,year,month,tmin\nA,2015,3,21.5\nB,2016,12,NA\n";
  }
  const auto p = read_panel((dir / "cases.csv").string(), (dir / "adj.csv").string(),
                            {(dir / "tmin.csv").string()});
  EXPECT_TRUE(validate(p).empty());
  EXPECT_EQ(p.n(), 2);
  EXPECT_EQ(p.T(), 24);
  EXPECT_EQ(p.population(0, 5), 1000.0);  // held at the January value
  EXPECT_EQ(p.population(1, 12), 1100.0);
  EXPECT_EQ(p.covariate("tmin").values(0, 2), 21.5);
  EXPECT_TRUE(std::isnan(p.covariate("tmin").values(1, 23)));

  write_panel_csv(p, (dir / "out.csv").string());
  write_edge_list(p.adjacency, (dir / "adj2.csv").string());
  const auto q = read_panel((dir / "out.csv").string(), (dir / "adj2.csv").string());
  EXPECT_EQ(q.cases, p.cases);
  EXPECT_EQ(q.population, p.population);
}

TEST(PanelIo, RejectsGapsAndUnknownEdges) {
  const auto csv = parse_csv("district,year,month,cases,population\nA,2015,1,1,10\nA,2015,3,1,10\n", "mem");
  EXPECT_THROW(panel_from_tables(csv, {}), InputError);
  const auto ok = parse_csv("district,year,month,cases,population\nA,2015,1,1,10\n", "mem");
  EXPECT_THROW(panel_from_tables(ok, {{"A", "Z"}}), InputError);
}
