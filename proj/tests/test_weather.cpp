#include <gtest/gtest.h>

#include <Eigen/Cholesky>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "distcast/weather/pipeline.hpp"

using namespace distcast;
using namespace distcast::weather;

namespace {

std::vector<Observation> simulate_field(int n_stations, double extent, double range, double sill,
                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, extent);
  std::vector<Observation> obs(static_cast<std::size_t>(n_stations));
  for (auto& o : obs) o.at = {u(rng), u(rng)};
  Eigen::MatrixXd C(n_stations, n_stations);
  for (int a = 0; a < n_stations; ++a) {
    for (int b = 0; b < n_stations; ++b) C(a, b) = sill * std::exp(-distance(obs[a].at, obs[b].at) / range);
  }
  const Eigen::MatrixXd L = C.llt().matrixL();
  Eigen::VectorXd z(n_stations);
  std::normal_distribution<double> nd;
  for (int a = 0; a < n_stations; ++a) z(a) = nd(rng);
  const Eigen::VectorXd f = L * z;
  for (int a = 0; a < n_stations; ++a) obs[a].value = 20.0 + f(a);
  return obs;
}

}  // namespace

TEST(Variogram, ConstantFieldIsDegenerate) {
  std::vector<Observation> obs{{{0, 0}, 5}, {{1000, 0}, 5}, {{0, 1000}, 5}, {{800, 900}, 5}};
  const auto v = fit_variogram(obs);
  EXPECT_TRUE(v.degenerate);
  EXPECT_NEAR(v.psill, 0.0, 1e-12);
}

TEST(Variogram, ThreeStationsRejected) {
  std::vector<Observation> obs{{{0, 0}, 1}, {{1, 0}, 2}, {{0, 1}, 3}};
  EXPECT_THROW(fit_variogram(obs), PreconditionError);
}

TEST(Variogram, ModelShape) {
  const Variogram v{0.5, 2.0, 1000.0};
  EXPECT_DOUBLE_EQ(v(0.0), 0.5);
  double prev = v(0.0);
  for (double h = 10; h < 1e4; h += 10) {
    EXPECT_GE(v(h), prev);
    prev = v(h);
  }
}

TEST(Variogram, RecoversKnownExponentialField) {
  // Range 50 km, sill 4, 50 stations over 400 km.
  const auto obs = simulate_field(50, 400000.0, 50000.0, 4.0, 11);
  const auto v = fit_variogram(obs);
  EXPECT_NEAR(v.range, 50000.0, 25000.0);
  EXPECT_NEAR(v.sill(), 4.0, 2.0);
  EXPECT_FALSE(v.degenerate);
}

TEST(Variogram, RecoveryAcrossRealizations) {
  // A single realization is noisy (about half of all seeds land inside +-50% on both
  // parameters); the median over realizations must sit inside the band.
  std::vector<double> ranges, sills;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto v = fit_variogram(simulate_field(50, 400000.0, 50000.0, 4.0, 1000 + seed));
    ranges.push_back(v.range);
    sills.push_back(v.sill());
  }
  std::nth_element(ranges.begin(), ranges.begin() + 20, ranges.end());
  std::nth_element(sills.begin(), sills.begin() + 20, sills.end());
  EXPECT_NEAR(ranges[20], 50000.0, 25000.0);
  EXPECT_NEAR(sills[20], 4.0, 2.0);
}

TEST(Kriging, ExactAtStation) {
  const auto obs = simulate_field(12, 100000.0, 30000.0, 2.0, 3);
  const Variogram v{0.0, 2.0, 30000.0};
  const auto r = krige_point(obs, v, obs[4].at);
  EXPECT_NEAR(r.estimate, obs[4].value, 1e-9);
  EXPECT_NEAR(r.variance, 0.0, 1e-9);
}

TEST(Kriging, SymmetricPairAveragesValues) {
  std::vector<Observation> obs{{{0, 0}, 10}, {{2000, 0}, 20}};
  const auto r = krige_point(obs, Variogram{0.0, 1.0, 1500.0}, {1000, 700});
  EXPECT_NEAR(r.estimate, 15.0, 1e-12);
}

TEST(Kriging, ConstantFieldReproduced) {
  auto obs = simulate_field(15, 50000.0, 10000.0, 1.0, 4);
  for (auto& o : obs) o.value = 3.25;
  const auto r = krige_point(obs, Variogram{0.1, 1.0, 10000.0}, {12345, 6789});
  EXPECT_NEAR(r.estimate, 3.25, 1e-10);
}

TEST(Kriging, WeightsSumToOneAndBoundedWhenNonNegative) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 100000);
  int bounded_checks = 0;
  for (int c = 0; c < 100; ++c) {
    const auto obs = simulate_field(8, 100000.0, 20000.0, 3.0, 100 + c);
    const Variogram v{0.0, 3.0, 20000.0};
    const auto r = krige_point(obs, v, {u(rng), u(rng)});
    EXPECT_NEAR(r.weights.sum(), 1.0, 1e-10);
    EXPECT_GE(r.variance, 0.0);
    if (!r.negative_weights) {
      double lo = 1e300, hi = -1e300;
      for (const auto& o : obs) {
        lo = std::min(lo, o.value);
        hi = std::max(hi, o.value);
      }
      EXPECT_GE(r.estimate, lo - 1e-9);
      EXPECT_LE(r.estimate, hi + 1e-9);
      ++bounded_checks;
    } else {
      EXPECT_LT(r.weights.minCoeff(), 0.0);
    }
  }
  EXPECT_GT(bounded_checks, 0);
}

TEST(Kriging, DuplicateStationsUseRegularizedSolve) {
  std::vector<Observation> obs{{{0, 0}, 1}, {{0, 0}, 1}, {{1000, 0}, 3}};
  const auto r = krige_point(obs, Variogram{0.0, 1.0, 500.0}, {500, 0});
  EXPECT_TRUE(r.regularized);
  EXPECT_NEAR(r.weights.sum(), 1.0, 1e-8);
}

TEST(NearestCell, InsideTieAndOutside) {
  GridField g;
  g.cell_size = 10;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) g.cells.push_back({r, c, {c * 10.0, r * 10.0}});
  }
  g.days = {{2020, 1, 1}};
  g.values = {{0, 1, 2, 3, 4, 5, 6, 7, 8}};
  EXPECT_EQ(nearest_cell(g, 0, {11, 19}), 7);
  EXPECT_EQ(nearest_cell(g, 0, {5, 10}), 3);  // between (1,0) and (1,1)
  EXPECT_EQ(nearest_cell(g, 0, {5, 5}), 0);   // four-way tie
  EXPECT_EQ(nearest_cell(g, 0, {100, -50}), 2);
}

TEST(Aggregate, SumsAndMeans) {
  EXPECT_DOUBLE_EQ(aggregate_monthly(std::vector<double>(30, 1.0), Aggregation::Sum).value, 30.0);
  EXPECT_DOUBLE_EQ(aggregate_monthly(std::vector<double>(30, 27.0), Aggregation::Mean).value, 27.0);
  EXPECT_DOUBLE_EQ(aggregate_monthly(std::vector<double>{25, 26, 27}, Aggregation::Mean).value, 26.0);
}

TEST(Aggregate, MissingDays) {
  std::vector<double> d(30, 2.0);
  for (int k = 0; k < 6; ++k) d[k] = std::nan("");
  EXPECT_FALSE(aggregate_monthly(d, Aggregation::Mean).flagged);
  d[6] = std::nan("");
  const auto m = aggregate_monthly(d, Aggregation::Mean);
  EXPECT_TRUE(m.flagged);
  EXPECT_DOUBLE_EQ(m.value, 2.0);
  const auto none = aggregate_monthly(std::vector<double>(31, std::nan("")), Aggregation::Sum);
  EXPECT_TRUE(std::isnan(none.value));
}

TEST(Aggregate, OrderIndependent) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 40);
  for (int c = 0; c < 50; ++c) {
    std::vector<double> d(31);
    for (auto& v : d) v = u(rng);
    const auto a = aggregate_monthly(d, Aggregation::Sum).value;
    std::shuffle(d.begin(), d.end(), rng);
    EXPECT_EQ(a, aggregate_monthly(d, Aggregation::Sum).value);
  }
}

TEST(Ingest, StationsAndGridLayouts) {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "distcast_weather";
  fs::create_directories(dir);
  {
    std::ofstream s(dir / "stations.csv");
    s << "station,x,y,date,tmin,tmax,tavg,rh,rain\n";
    const double xs[5] = {0, 10000, 0, 10000, 5000}, ys[5] = {0, 0, 10000, 10000, 3000};
    for (int k = 0; k < 5; ++k) {
      for (Date d{2020, 1, 1}; d <= Date{2020, 2, 29}; d = next_day(d)) {
        s << "S" << k << ',' << xs[k] << ',' << ys[k] << ',' << d.to_string() << ','
          << 20 + k << ',' << 30 + k << ',' << 25 + k << ",80," << (k == 4 ? "NA" : "1") << "\n";
      }
    }
    std::ofstream c(dir / "centroids.csv");
    c << "district,x,y\nA,2000,2000\nB,9000,9000\n";
  }
  const auto st = read_stations((dir / "stations.csv").string());
  const auto cen = read_centroids((dir / "centroids.csv").string());
  IngestDiagnostics diag;
  const auto tmin = ingest_stations(st, cen, Variable::Tmin, 1, diag);
  ASSERT_EQ(tmin.months.size(), 2u);
  EXPECT_GE(tmin.values.minCoeff(), 20.0 - 1e-9);
  EXPECT_LE(tmin.values.maxCoeff(), 24.0 + 1e-9);
  const auto rain = ingest_stations(st, cen, Variable::Rain, 1, diag);
  EXPECT_NEAR(rain.values(0, 0), 31.0, 1e-9);  // constant 1 mm field
  EXPECT_NEAR(rain.values(1, 1), 29.0, 1e-9);

  GridField g;
  g.cell_size = 5000;
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 3; ++c) g.cells.push_back({r, c, {c * 5000.0, r * 5000.0}});
  }
  for (Date d{2020, 1, 1}; d <= Date{2020, 1, 31}; d = next_day(d)) {
    g.days.push_back(d);
    g.values.push_back({1, 2, 3, 4, 5, double(d.day)});
  }
  {
    std::ofstream gc(dir / "grid.csv");
    gc << "date,row,col,x,y,value\n";
    for (std::size_t k = 0; k < g.days.size(); ++k) {
      for (std::size_t c = 0; c < g.cells.size(); ++c) {
        gc << g.days[k].to_string() << ',' << g.cells[c].row << ',' << g.cells[c].col << ','
           << g.cells[c].centre.x << ',' << g.cells[c].centre.y << ',' << g.values[k][c] << "\n";
      }
    }
  }
  write_grid_binary(g, 2, 3, (dir / "grid.bin").string());
  const auto from_csv = ingest_grid(read_grid_csv((dir / "grid.csv").string()), cen, Variable::Tavg, diag);
  const auto from_bin = ingest_grid(read_grid_binary((dir / "grid.bin").string()), cen, Variable::Tavg, diag);
  EXPECT_EQ(from_csv.values, from_bin.values);
  EXPECT_DOUBLE_EQ(from_csv.values(0, 0), 1.0);   // (2000,2000) -> cell (0,0)
  EXPECT_DOUBLE_EQ(from_csv.values(1, 0), 16.0);  // (9000,9000) -> cell (1,2), mean day 1..31
}

TEST(Ingest, RejectsInconsistentTemperatures) {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "distcast_weather_bad";
  fs::create_directories(dir);
  std::ofstream(dir / "s.csv") << "station,x,y,date,tmin,tmax,tavg,rh,rain\nS,0,0,2020-01-01,25,30,24,50,0\n";
  EXPECT_THROW(read_stations((dir / "s.csv").string()), InputError);
}
