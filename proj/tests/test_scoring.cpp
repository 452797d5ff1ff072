#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "distcast/scoring/scores.hpp"

using namespace distcast;

namespace {

/// Integral of (F(x) - 1{x >= y})^2 over the real line for the empirical CDF, evaluated
/// exactly piecewise between consecutive breakpoints.
double crps_by_integration(std::vector<double> x, double y) {
  std::sort(x.begin(), x.end());
  std::vector<double> pts = x;
  pts.push_back(y);
  std::sort(pts.begin(), pts.end());
  const double n = static_cast<double>(x.size());
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const double a = pts[k], b = pts[k + 1];
    if (b <= a) continue;
    const double mid = 0.5 * (a + b);
    const double F = static_cast<double>(std::upper_bound(x.begin(), x.end(), mid) - x.begin()) / n;
    const double H = mid >= y ? 1.0 : 0.0;
    total += (F - H) * (F - H) * (b - a);
  }
  return total;
}

double crps_pairwise(const std::vector<double>& x, double y) {
  const double n = static_cast<double>(x.size());
  double a = 0.0, b = 0.0;
  for (double u : x) {
    a += std::abs(u - y);
    for (double v : x) b += std::abs(u - v);
  }
  return a / n - 0.5 * b / (n * n);
}

}  // namespace

TEST(Crps, PerfectForecastIsZero) {
  EXPECT_EQ(crps(std::vector<int>{4, 4, 4}, 4.0), 0.0);
}

TEST(Crps, PointMass) { EXPECT_DOUBLE_EQ(crps(std::vector<int>{5, 5, 5}, 2.0), 3.0); }

TEST(Crps, TwoPointExample) {
  EXPECT_NEAR(crps_by_integration({0, 2}, 1.0), 0.5, 1e-15);
  EXPECT_DOUBLE_EQ(crps(std::vector<int>{0, 2}, 1.0), 0.5);
}

TEST(Crps, EnergyFormMatchesIntegrationAndPairwise) {
  std::mt19937_64 rng(17);
  for (int c = 0; c < 100; ++c) {
    const int n = 1 + static_cast<int>(rng() % 60);
    std::vector<double> x(n);
    std::poisson_distribution<int> pois(1 + rng() % 40);
    for (auto& v : x) v = pois(rng);
    const double y = pois(rng);
    const double oracle = crps_by_integration(x, y);
    EXPECT_NEAR(crps(x, y), oracle, 1e-9 * std::max(1.0, oracle));
    EXPECT_NEAR(crps(x, y), crps_pairwise(x, y), 1e-9 * std::max(1.0, oracle));
  }
}

TEST(Crps, TrueDistributionScoresBest) {
  // Truth Poisson(6); the true forecast must not lose to shifted or mis-dispersed ones.
  std::mt19937_64 rng(2);
  std::poisson_distribution<int> truth(6.0);
  std::vector<double> ys(10000);
  for (auto& y : ys) y = truth(rng);
  auto mean_score = [&](auto&& draw) {
    std::vector<double> s(400);
    for (auto& v : s) v = draw();
    double total = 0.0;
    for (double y : ys) total += crps(s, y);
    return total / ys.size();
  };
  std::mt19937_64 r2(3);
  const double good = mean_score([&] { return double(truth(r2)); });
  std::poisson_distribution<int> lo(3.0), hi(10.0);
  std::negative_binomial_distribution<int> wide(2, 0.25);
  std::uniform_int_distribution<int> flat(0, 12);
  std::vector<double> wrong{
      mean_score([&] { return double(lo(r2)); }), mean_score([&] { return double(hi(r2)); }),
      mean_score([&] { return double(wide(r2)); }), mean_score([&] { return double(flat(r2)); }),
      mean_score([] { return 6.0; })};
  for (double w : wrong) EXPECT_LE(good, w);
}

TEST(Bias, AllAbove) { EXPECT_EQ(bias(std::vector<int>{5, 6, 7}, 1.0), 1.0); }

TEST(Bias, MedianNoTies) { EXPECT_EQ(bias(std::vector<int>{1, 2, 4, 5}, 3.0), 0.0); }

TEST(Bias, MidpointTies) { EXPECT_NEAR(bias(std::vector<int>{1, 1, 3}, 1.0), 1.0 / 3.0, 1e-15); }

TEST(Bias, ReflectionAntisymmetry) {
  std::mt19937_64 rng(4);
  for (int c = 0; c < 50; ++c) {
    std::vector<double> x(25), r(25);
    for (auto& v : x) v = double(rng() % 30);
    const double y = double(rng() % 30), a = double(rng() % 30);
    for (int k = 0; k < 25; ++k) r[k] = 2 * a - x[k];
    EXPECT_NEAR(bias(x, y), -bias(r, 2 * a - y), 1e-14);
  }
}

TEST(Diffuseness, ConstantIsZero) { EXPECT_EQ(diffuseness(std::vector<int>{3, 3, 3}), 0.0); }

TEST(Diffuseness, TwoPointExample) { EXPECT_DOUBLE_EQ(diffuseness(std::vector<int>{0, 2}), 0.5); }

TEST(Diffuseness, NormalizedByMean) {
  const std::vector<double> x{1, 4, 9};
  std::vector<double> y;
  for (double v : x) y.push_back(3 * v);
  EXPECT_LT(diffuseness(y), 3 * diffuseness(x));
  EXPECT_GT(diffuseness(y), diffuseness(x));
  EXPECT_THROW(diffuseness(std::vector<int>{1}), PreconditionError);
}

TEST(Brier, Examples) {
  using O = std::optional<bool>;
  EXPECT_EQ(*brier({1.0, 1.0}, {O(true), O(true)}).score, 0.0);
  EXPECT_DOUBLE_EQ(*brier({0.5, 0.5, 0.5}, {O(true), O(false), O(true)}).score, 0.25);
  EXPECT_NEAR(*brier({0.8, 0.2}, {O(true), O(false)}).score, 0.04, 1e-15);
  const auto r = brier({0.3, 0.9}, {O(), O()});
  EXPECT_FALSE(r.score.has_value());
  EXPECT_EQ(r.dropped, 2u);
}

TEST(Brier, LabelSymmetry) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> p(200), q(200);
  std::vector<std::optional<bool>> o(200), oc(200);
  for (int k = 0; k < 200; ++k) {
    p[k] = u(rng);
    q[k] = 1 - p[k];
    o[k] = u(rng) < 0.4;
    oc[k] = !*o[k];
  }
  EXPECT_NEAR(*brier(p, o).score, *brier(q, oc).score, 1e-14);
}

TEST(Calibration, BinningAndEmptyBins) {
  using O = std::optional<bool>;
  const auto bins = calibration_bins({0.95, 1.0, 0.1, 0.0999}, {O(true), O(false), O(true), O()});
  EXPECT_EQ(bins[9].count, 2u);
  EXPECT_EQ(bins[1].count, 1u);
  EXPECT_EQ(bins[0].count, 0u);
  EXPECT_FALSE(bins[5].observed_frequency.has_value());
  EXPECT_DOUBLE_EQ(*bins[9].observed_frequency, 0.5);
}

TEST(Calibration, BernoulliOutcomesAreCalibrated) {
  std::mt19937_64 rng(12);
  std::vector<double> p;
  std::vector<std::optional<bool>> o;
  for (int b = 0; b < 10; ++b) {
    std::uniform_real_distribution<double> u(b / 10.0, (b + 1) / 10.0);
    for (int k = 0; k < 10000; ++k) {
      const double pk = u(rng);
      p.push_back(pk);
      o.push_back(std::bernoulli_distribution(pk)(rng));
    }
  }
  for (const auto& bin : calibration_bins(p, o)) {
    EXPECT_EQ(bin.count, 10000u);
    EXPECT_LT(std::abs(*bin.observed_frequency - *bin.mean_predicted), 0.05);
  }
}

TEST(Classification, Examples) {
  const auto perfect = classification_metrics(Confusion{3, 0, 4, 0});
  EXPECT_EQ(*perfect.accuracy, 1.0);
  EXPECT_EQ(*perfect.sensitivity, 1.0);
  EXPECT_EQ(*perfect.specificity, 1.0);
  EXPECT_EQ(*perfect.ppv, 1.0);

  using O = std::optional<bool>;
  const std::vector<bool> none(4, false);
  const std::vector<O> truth{O(true), O(false), O(true), O(false)};
  const bool pred[4] = {false, false, false, false};
  const auto m = classification_metrics(confusion(std::span<const bool>(pred, 4), truth));
  EXPECT_EQ(*m.sensitivity, 0.0);
  EXPECT_EQ(*m.specificity, 1.0);
  EXPECT_FALSE(m.ppv.has_value());

  const auto c = classification_metrics(Confusion{2, 2, 5, 1});
  EXPECT_DOUBLE_EQ(*c.sensitivity, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(*c.specificity, 5.0 / 7.0);
  EXPECT_DOUBLE_EQ(*c.ppv, 0.5);
  EXPECT_DOUBLE_EQ(*c.accuracy, 0.7);
}

TEST(Crpss, Examples) {
  EXPECT_EQ(*crpss(4.0, 4.0), 0.0);
  EXPECT_EQ(*crpss(0.0, 4.0), 1.0);
  EXPECT_NEAR(*crpss(3.20, 12.2), 0.738, 1e-3);
  EXPECT_FALSE(crpss(1.0, 0.0).has_value());
}

TEST(Aggregate, MeansByGroup) {
  std::vector<ScoreRow> rows{{"A", {2012, 1}, 1, "crps", 2.0}, {"A", {2012, 2}, 1, "crps", 4.0}};
  EXPECT_EQ(aggregate({rows[0]}, Grouping::Overall)[0].value, 2.0);
  EXPECT_EQ(aggregate(rows, Grouping::Overall)[0].value, 3.0);
  EXPECT_EQ(aggregate(rows, Grouping::District)[0].value, 3.0);
  std::vector<ScoreRow> flat;
  for (const char* d : {"A", "B", "C"}) {
    for (int m = 1; m <= 4; ++m) flat.push_back({d, {2012, m}, 2, "crps", 1.5});
  }
  for (const auto& g : aggregate(flat, Grouping::Month)) EXPECT_EQ(g.value, 1.5);
  EXPECT_THROW(aggregate({}, Grouping::Overall), PreconditionError);
}
