#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "distcast/model/hhh4.hpp"
#include "distcast/model/model.hpp"
#include "distcast/synth/generate.hpp"

using namespace distcast;

namespace {

AdjacencyGraph path_graph(int n) {
  std::vector<std::string> nodes;
  std::vector<std::pair<std::string, std::string>> edges;
  for (int k = 0; k < n; ++k) nodes.push_back("P" + std::to_string(k));
  for (int k = 0; k + 1 < n; ++k) edges.emplace_back(nodes[k], nodes[k + 1]);
  return AdjacencyGraph::from_edges(nodes, edges);
}

ModelSpec bare_spec(bool epidemic, bool neighbourhood) {
  auto s = preset("hhh4");
  s.hhh4.endemic.clear();
  s.hhh4.epidemic.clear();
  s.hhh4.neighbourhood.clear();
  s.hhh4.random_intercepts = false;
  s.hhh4.epidemic_component = epidemic;
  s.hhh4.neighbourhood_component = neighbourhood;
  return s;
}

PanelDataset small_panel(int districts, int months, std::uint64_t seed) {
  synth::BaseOptions o;
  o.districts = districts;
  o.months = months;
  return synth::base_panel(o, seed);
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Negative binomial pmf by the ratio recurrence, support 0..cap.
std::vector<double> nb_pmf(double mu, double psi, int cap) {
  std::vector<double> p(static_cast<std::size_t>(cap + 1));
  p[0] = std::pow(psi / (psi + mu), psi);
  for (int k = 1; k <= cap; ++k) p[k] = p[k - 1] * (k - 1 + psi) / k * mu / (psi + mu);
  return p;
}

}  // namespace

TEST(PowerlawWeights, LargeDecayConcentratesOnFirstOrder) {
  const auto g = path_graph(8);
  const auto w = powerlaw_weights(g, 20.0);
  for (int i = 0; i < g.size(); ++i) {
    double first = 0.0;
    for (int j = 0; j < g.size(); ++j) {
      if (g.order(j, i) == 1) first += w(j, i);
    }
    EXPECT_GT(first, 0.99);
  }
}

TEST(PowerlawWeights, CompleteGraphIsUniform) {
  std::vector<std::string> nodes{"a", "b", "c", "d", "e"};
  std::vector<std::pair<std::string, std::string>> edges;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j = i + 1; j < nodes.size(); ++j) edges.emplace_back(nodes[i], nodes[j]);
  }
  const auto w = powerlaw_weights(AdjacencyGraph::from_edges(nodes, edges), 1.7);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) EXPECT_NEAR(w(j, i), i == j ? 0.0 : 0.25, 1e-15);
  }
}

TEST(PowerlawWeights, ColumnsSumToOneOnRandomGraphs) {
  auto rng = make_rng(4, {});
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 3 + rep % 7;
    std::vector<std::string> nodes;
    std::vector<std::pair<std::string, std::string>> edges;
    for (int k = 0; k < n; ++k) nodes.push_back("N" + std::to_string(k));
    for (int k = 1; k < n; ++k) {
      edges.emplace_back(nodes[k], nodes[std::uniform_int_distribution<int>(0, k - 1)(rng)]);
    }
    const auto g = AdjacencyGraph::from_edges(nodes, edges);
    const double d = std::uniform_real_distribution<double>(0.1, 5.0)(rng);
    const auto w = powerlaw_weights(g, d);
    for (int i = 0; i < n; ++i) {
      EXPECT_NEAR(w.col(i).sum(), 1.0, 1e-12);
      EXPECT_EQ(w(i, i), 0.0);
      EXPECT_TRUE((w.col(i).array() >= 0.0).all());
    }
  }
}

TEST(MeanDecomposition, TwoDistrictHandComputation) {
  auto p = small_panel(2, 30, 1);
  p.population.setConstant(1e5);
  p.cases.col(9) << 4.0, 9.0;
  auto spec = bare_spec(true, true);
  spec.hhh4.random_intercepts = true;
  Hhh4Fit f;
  f.layout = hhh4_layout(spec.hhh4, 2);
  const auto& l = f.layout;
  f.mode = Eigen::VectorXd::Zero(l.size);
  f.mode(l.alpha_nu) = std::log(3e-5);
  f.mode(l.gamma_sin) = 0.4;
  f.mode(l.gamma_cos) = -0.2;
  f.mode(l.r) = 0.1;
  f.mode(l.r + 1) = -0.1;
  f.mode(l.alpha_lambda) = std::log(0.35);
  f.mode(l.alpha_phi) = std::log(0.2);
  f.mode(l.log_d) = std::log(1.3);
  f.mode(l.log_psi) = std::log(4.0);
  const int t = 10, m = p.month_of_year(t);
  for (int i = 0; i < 2; ++i) {
    const double nu = 3e-5 * 1e5 * std::exp(0.4 * std::sin(2 * M_PI * m / 12) - 0.2 * std::cos(2 * M_PI * m / 12) +
                                            (i == 0 ? 0.1 : -0.1));
    const double own = i == 0 ? 4.0 : 9.0, other = i == 0 ? 9.0 : 4.0;
    const auto d = mean_decomposition(f, spec.hhh4, p, i, t);
    EXPECT_NEAR(d.endemic, nu, 1e-12);
    EXPECT_NEAR(d.epidemic, 0.35 * own, 1e-12);
    EXPECT_NEAR(d.neighbourhood, 0.2 * other, 1e-12);
    EXPECT_NEAR(d.total, nu + 0.35 * own + 0.2 * other, 1e-12);
  }
}

TEST(MeanDecomposition, ZeroedMultipliersAndZeroHistoryReduceToEndemic) {
  auto p = small_panel(4, 30, 2);
  p.cases.setConstant(6.0);
  const auto spec = bare_spec(true, true);
  Hhh4Fit f;
  f.layout = hhh4_layout(spec.hhh4, 4);
  f.mode = Eigen::VectorXd::Zero(f.layout.size);
  f.mode(f.layout.alpha_nu) = std::log(2e-5);
  f.mode(f.layout.alpha_lambda) = -1e3;
  f.mode(f.layout.alpha_phi) = -1e3;
  f.mode(f.layout.log_d) = 0.0;
  for (int i = 0; i < 4; ++i) {
    const auto d = mean_decomposition(f, spec.hhh4, p, i, 12);
    EXPECT_EQ(d.total, d.endemic);
  }
  f.mode(f.layout.alpha_lambda) = std::log(0.5);
  f.mode(f.layout.alpha_phi) = std::log(0.5);
  p.cases.col(11).setZero();
  for (int i = 0; i < 4; ++i) {
    const auto d = mean_decomposition(f, spec.hhh4, p, i, 12);
    EXPECT_EQ(d.total, d.endemic);
    EXPECT_GE(d.epidemic, 0.0);
    EXPECT_GE(d.neighbourhood, 0.0);
  }
  EXPECT_THROW(mean_decomposition(f, spec.hhh4, p, 0, 0), PreconditionError);
}

TEST(NegativeBinomial, MonteCarloVarianceMatchesFormula) {
  auto rng = make_rng(77, {});
  for (const auto& [mu, psi] : std::vector<std::pair<double, double>>{{7.3, 2.5}, {40.0, 5.0}, {1.2, 0.8}}) {
    const int n = 100000;
    double s = 0.0, ss = 0.0;
    for (int k = 0; k < n; ++k) {
      const double y = static_cast<double>(draw_negbin(rng, mu, psi));
      s += y;
      ss += y * y;
    }
    const double mean = s / n, var = (ss - n * mean * mean) / (n - 1);
    EXPECT_NEAR(var / (mu + mu * mu / psi), 1.0, 0.05) << mu << " " << psi;
  }
}

TEST(Hhh4Objective, GradientMatchesFiniteDifferences) {
  auto p = small_panel(6, 48, 3);
  synth::simulate_hhh4(p, {}, 3);
  const auto spec = preset("hhh4");
  const auto l = hhh4_layout(spec.hhh4, p.n());
  const auto d = hhh4_design(spec.hhh4, p, 0);
  detail::Hhh4Objective obj(l, d, p, 0.3);
  auto rng = make_rng(5, {});
  Eigen::VectorXd b(l.size);
  for (auto& v : b) v = draw_normal(rng, 0.0, 0.2);
  b(l.alpha_nu) = std::log(4e-5);
  b(l.alpha_lambda) = std::log(0.3);
  b(l.alpha_phi) = std::log(0.3);
  b(l.log_d) = std::log(1.4);
  b(l.log_psi) = std::log(4.0);
  Eigen::VectorXd g, gp, gm;
  obj(b, g);
  for (int k = 0; k < l.size; ++k) {
    const double h = 1e-6;
    Eigen::VectorXd bp = b, bm = b;
    bp(k) += h;
    bm(k) -= h;
    const double fd = (obj(bp, gp) - obj(bm, gm)) / (2 * h);
    EXPECT_NEAR(g(k), fd, 1e-5 * std::max(1.0, std::abs(fd))) << k;
  }
}

TEST(Hhh4Fit, NeedsTwoYearsOfData) {
  auto p = small_panel(4, 23, 1);
  synth::simulate_hhh4(p, {}, 1);
  EXPECT_THROW(fit_hhh4(preset("hhh4"), p), PreconditionError);
}

TEST(Hhh4Fit, RecoversKnownParameters) {
  auto p = small_panel(20, 120, 2024);
  const synth::Hhh4Truth tr;
  synth::simulate_hhh4(p, tr, 2024);
  const auto [f, d] = fit_hhh4(preset("hhh4"), p);
  ASSERT_TRUE(d.converged) << d.message;
  EXPECT_NEAR(std::exp(f.mode(f.layout.alpha_lambda)) / tr.lambda, 1.0, 0.2);
  EXPECT_NEAR(std::exp(f.mode(f.layout.alpha_phi)) / tr.phi, 1.0, 0.2);
  EXPECT_NEAR(f.psi() / tr.psi, 1.0, 0.5);
  // Fitted decay keeps the weight columns stochastic.
  const auto w = powerlaw_weights(p.adjacency, f.decay());
  for (int i = 0; i < p.n(); ++i) EXPECT_NEAR(w.col(i).sum(), 1.0, 1e-12);
}

TEST(Hhh4Fit, EndemicOnlyDataGivesSmallEpidemicMultiplier) {
  auto p = small_panel(20, 120, 31);
  synth::Hhh4Truth tr;
  tr.epidemic = false;
  tr.neighbourhood = false;
  synth::simulate_hhh4(p, tr, 31);
  const auto [f, d] = fit_hhh4(preset("hhh4"), p);
  ASSERT_TRUE(d.converged) << d.message;
  EXPECT_LT(std::exp(f.mode(f.layout.alpha_lambda)), 0.1);
}

TEST(Hhh4Forecast, HorizonOneMeanMatchesAnalyticMean) {
  auto p = small_panel(6, 60, 8);
  synth::simulate_hhh4(p, {}, 8);
  const auto spec = preset("hhh4");
  const auto [f, d] = fit_hhh4(spec, p);
  const int n = 20000;
  const auto fc = forecast_hhh4(f, spec, p, {1}, n, 3, false);
  const auto design = hhh4_design(spec.hhh4, p, 1, &f.scales);
  const auto w = powerlaw_weights(p.adjacency, f.decay());
  for (int i = 0; i < p.n(); ++i) {
    const double mu = hhh4_components(f.layout, f.mode, design, p, w, p.cases.col(p.T() - 1), i, p.T()).total;
    const double sd = std::sqrt((mu + mu * mu / f.psi()) / n);
    EXPECT_LT(std::abs(mean_of(fc[static_cast<std::size_t>(i)].samples) - mu), 3.0 * sd);
  }
}

TEST(Hhh4Forecast, HorizonTwoMeanMatchesEnumeration) {
  auto p = small_panel(1, 30, 5);
  p.population.setConstant(1e5);
  p.cases.setConstant(3.0);
  p.cases(0, p.T() - 1) = 8.0;
  const auto spec = bare_spec(true, false);
  Hhh4Fit f;
  f.layout = hhh4_layout(spec.hhh4, 1);
  const auto& l = f.layout;
  f.mode = Eigen::VectorXd::Zero(l.size);
  f.mode(l.alpha_nu) = std::log(4e-5);
  f.mode(l.gamma_sin) = 0.3;
  f.mode(l.gamma_cos) = -0.2;
  f.mode(l.alpha_lambda) = std::log(0.6);
  f.mode(l.log_psi) = std::log(6.0);
  f.cov = Eigen::MatrixXd::Zero(l.size, l.size);
  const double psi = 6.0, lambda = 0.6;
  auto nu = [&](int t) {
    const int m = p.month_of_year(t);
    return 4.0 * std::exp(0.3 * std::sin(2 * M_PI * m / 12) - 0.2 * std::cos(2 * M_PI * m / 12));
  };
  const int T = p.T(), cap = 50;
  const auto p1 = nb_pmf(nu(T) + lambda * 8.0, psi, cap);
  double oracle = 0.0, mass = 0.0;
  for (int y1 = 0; y1 <= cap; ++y1) {
    oracle += p1[y1] * (nu(T + 1) + lambda * y1);
    mass += p1[y1];
  }
  oracle /= mass;
  const int n = 100000;
  const auto fc = forecast_hhh4(f, spec, p, {2}, n, 9, false);
  const auto& s = fc.front().samples;
  const double m = mean_of(s);
  double var = 0.0;
  for (const double v : s) var += (v - m) * (v - m);
  var /= (n - 1);
  EXPECT_LT(std::abs(m - oracle), 3.0 * std::sqrt(var / n)) << m << " vs " << oracle;
}

TEST(Hhh4Forecast, ZeroHistoryAndZeroedCoefficientsGiveEndemicDraws) {
  auto p = small_panel(4, 36, 6);
  synth::simulate_hhh4(p, {}, 6);
  const auto full_spec = bare_spec(true, true);
  const auto endemic_spec = bare_spec(false, false);
  Hhh4Fit full, endemic;
  full.layout = hhh4_layout(full_spec.hhh4, 4);
  endemic.layout = hhh4_layout(endemic_spec.hhh4, 4);
  full.mode = Eigen::VectorXd::Zero(full.layout.size);
  endemic.mode = Eigen::VectorXd::Zero(endemic.layout.size);
  for (auto* f : {&full, &endemic}) {
    f->mode(f->layout.alpha_nu) = std::log(5e-5);
    f->mode(f->layout.gamma_sin) = 0.2;
    f->mode(f->layout.log_psi) = std::log(3.0);
    f->cov = Eigen::MatrixXd::Zero(f->layout.size, f->layout.size);
  }
  full.mode(full.layout.alpha_lambda) = std::log(0.5);
  full.mode(full.layout.alpha_phi) = std::log(0.4);
  full.mode(full.layout.log_d) = 0.0;
  auto spec_named = [](ModelSpec s) {
    s.name = "same-stream";
    return s;
  };

  // Zero history: the first step reduces to the endemic mean.
  auto zero = p;
  zero.cases.col(zero.T() - 1).setZero();
  const auto a = forecast_hhh4(full, spec_named(full_spec), zero, {1}, 500, 2, false);
  const auto b = forecast_hhh4(endemic, spec_named(endemic_spec), zero, {1}, 500, 2, false);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k].samples, b[k].samples);

  // Zeroed multipliers: every horizon matches independent endemic draws.
  full.mode(full.layout.alpha_lambda) = -1e3;
  full.mode(full.layout.alpha_phi) = -1e3;
  const auto c = forecast_hhh4(full, spec_named(full_spec), p, {1, 2, 3}, 500, 2, false);
  const auto e = forecast_hhh4(endemic, spec_named(endemic_spec), p, {1, 2, 3}, 500, 2, false);
  for (std::size_t k = 0; k < c.size(); ++k) EXPECT_EQ(c[k].samples, e[k].samples);
}

TEST(Hhh4Forecast, RejectsHorizonsBeyondThree) {
  auto p = small_panel(4, 36, 6);
  synth::simulate_hhh4(p, {}, 6);
  const auto [f, d] = fit_hhh4(preset("hhh4"), p);
  EXPECT_THROW(forecast_hhh4(f, preset("hhh4"), p, {4}, 10, 1), PreconditionError);
}
