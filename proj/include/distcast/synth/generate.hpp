#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "distcast/core/calendar.hpp"
#include "distcast/core/errors.hpp"
#include "distcast/core/random.hpp"
#include "distcast/model/common.hpp"
#include "distcast/panel/features.hpp"
#include "distcast/panel/panel.hpp"

namespace distcast::synth {

/// Rook-adjacency lattice of rows x cols districts named D01, D02, ...
inline AdjacencyGraph lattice(int rows, int cols) {
  std::vector<std::string> nodes;
  const int n = rows * cols;
  for (int k = 0; k < n; ++k) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "D%02d", k + 1);
    nodes.emplace_back(buf);
  }
  std::vector<std::pair<std::string, std::string>> edges;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int k = r * cols + c;
      if (c + 1 < cols) edges.emplace_back(nodes[k], nodes[k + 1]);
      if (r + 1 < rows) edges.emplace_back(nodes[k], nodes[k + cols]);
    }
  }
  return AdjacencyGraph::from_edges(nodes, edges);
}

/// Near-square lattice shape for n districts.
inline std::pair<int, int> lattice_shape(int n) {
  int rows = static_cast<int>(std::floor(std::sqrt(static_cast<double>(n))));
  while (rows > 1 && n % rows != 0) --rows;
  return {rows, n / rows};
}

struct BaseOptions {
  int districts = 20;
  int months = 120;
  YearMonth start{2004, 1};
  double pop_min = 1e5;
  double pop_max = 5e5;
  double weather_noise = 1.0;  // sd multiplier of the non-seasonal weather component
};

/// Panel skeleton: adjacency, yearly populations, weather covariates tmin, tavg, rain; zero cases.
inline PanelDataset base_panel(const BaseOptions& o, std::uint64_t seed) {
  if (o.districts < 1 || o.months < 1) throw PreconditionError("synthetic panel needs districts and months");
  auto rng = make_rng(seed, {0x62617365});
  const auto [rows, cols] = lattice_shape(o.districts);
  PanelDataset p;
  p.adjacency = lattice(rows, cols);
  p.districts = p.adjacency.nodes;
  for (int t = 0; t < o.months; ++t) p.months.push_back(o.start.plus(t));
  const int n = o.districts, T = o.months;
  p.cases = Eigen::MatrixXd::Zero(n, T);
  p.population.resize(n, T);
  std::uniform_real_distribution<double> upop(std::log(o.pop_min), std::log(o.pop_max));
  for (int i = 0; i < n; ++i) {
    const double p0 = std::exp(upop(rng));
    const double growth = 0.005 + 0.01 * std::uniform_real_distribution<double>(0, 1)(rng);
    for (int t = 0; t < T; ++t) p.population(i, t) = std::round(p0 * std::pow(1.0 + growth, p.year_index(t)));
  }
  Eigen::MatrixXd tmin(n, T), tavg(n, T), rain(n, T);
  std::vector<double> ti(n, 0.0), ri(n, 0.0);
  for (int t = 0; t < T; ++t) {
    const int m = p.month_of_year(t);
    const double shared_t = o.weather_noise * draw_normal(rng, 0.0, 0.8);
    const double shared_r = o.weather_noise * draw_normal(rng, 0.0, 0.5);
    for (int i = 0; i < n; ++i) {
      const double gradient = 0.15 * (i / cols) - 0.1 * (i % cols);
      ti[i] = 0.5 * ti[i] + o.weather_noise * draw_normal(rng, 0.0, 0.6);
      ri[i] = 0.3 * ri[i] + o.weather_noise * draw_normal(rng, 0.0, 0.4);
      tmin(i, t) = 22.5 + gradient + 2.0 * std::sin(2 * M_PI * (m - 2) / 12.0) + shared_t + ti[i];
      tavg(i, t) = tmin(i, t) + 5.5 + 0.5 * std::cos(2 * M_PI * m / 12.0) + draw_normal(rng, 0.0, 0.3);
      const double log_rain = 4.6 + 1.0 * std::sin(2 * M_PI * (m - 5) / 12.0) + shared_r + ri[i];
      rain(i, t) = std::round(std::exp(log_rain) * 10.0) / 10.0;
    }
  }
  p.covariates["tmin"] = {tmin, "degC"};
  p.covariates["tavg"] = {tavg, "degC"};
  p.covariates["rain"] = {rain, "mm"};
  return p;
}

/// z-score of a lagged term over its valid cells, pooled over districts or per district, matching
/// the fit's standardization when the fit uses every panel month.
inline Eigen::MatrixXd standardized_term(const PanelDataset& p, const Term& term, bool per_district = false) {
  const auto f = term_feature(p, term, 0);
  Eigen::MatrixXd z = Eigen::MatrixXd::Constant(p.n(), p.T(), std::nan(""));
  const auto pooled = pooled_scale(f, 0, p.T());
  for (int i = 0; i < p.n(); ++i) {
    auto s = pooled;
    if (per_district) {
      FeatureMatrix row = f;
      row.values = f.values.row(i);
      row.valid = f.valid.row(i);
      s = pooled_scale(row, 0, p.T());
    }
    for (int t = 0; t < p.T(); ++t) {
      if (f.valid(i, t)) z(i, t) = s.apply(f.values(i, t));
    }
  }
  return z;
}

/// Known parameters of the hierarchical Poisson truth (lagged-case offset, tmin and rain).
struct StTruth {
  double alpha = -0.35;
  std::vector<double> beta{0.25, -0.20};  // tmin_lag3, rain_lag3
  double season_amplitude = 0.35;
  double delta_sigma = 0.10;
  double delta_rho = 0.5;
  double theta_sigma = 0.08;
  int burn_in = 3;  // initial months drawn around `initial_level`
  double initial_level = 20.0;
};

/// Simulates cases in place from the lagged-offset spatiotemporal model; returns the seasonal,
/// yearly and district effects that were drawn.
inline void simulate_st(PanelDataset& p, const StTruth& tr, std::uint64_t seed) {
  auto rng = make_rng(seed, {0x73743274});
  const int n = p.n(), T = p.T();
  const std::vector<Term> terms{Term{"covariate", "tmin", 3, 0}, Term{"covariate", "rain", 3, 0}};
  std::vector<Eigen::MatrixXd> z;
  for (const auto& t : terms) z.push_back(standardized_term(p, t));
  std::vector<double> phase(n), theta(n);
  for (int i = 0; i < n; ++i) {
    phase[i] = draw_normal(rng, 0.0, 0.5);
    theta[i] = draw_normal(rng, 0.0, tr.theta_sigma);
  }
  double mean_theta = 0.0;
  for (double v : theta) mean_theta += v / n;
  for (double& v : theta) v -= mean_theta;
  const int years = p.year_index(T - 1) + 1;
  std::vector<double> delta(years);
  delta[0] = draw_normal(rng, 0.0, tr.delta_sigma);
  for (int a = 1; a < years; ++a) {
    delta[a] = tr.delta_rho * delta[a - 1] +
               draw_normal(rng, 0.0, tr.delta_sigma * std::sqrt(1 - tr.delta_rho * tr.delta_rho));
  }
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < T; ++t) {
      const int m = p.month_of_year(t);
      if (t < tr.burn_in) {
        p.cases(i, t) = static_cast<double>(draw_poisson(rng, tr.initial_level));
        continue;
      }
      double eta = tr.alpha + std::log(p.cases(i, t - 3) + 1.0);
      for (std::size_t k = 0; k < z.size(); ++k) eta += tr.beta[k] * z[k](i, t);
      eta += tr.season_amplitude * std::sin(2 * M_PI * m / 12.0 + phase[i]);
      eta += delta[p.year_index(t)] + theta[i];
      p.cases(i, t) = static_cast<double>(draw_poisson_log(rng, eta));
    }
  }
}

/// Known parameters of the endemic-epidemic truth; covariates are tavg_lag3 and rain_lag3 in all
/// of endemic and epidemic, none in the neighbourhood component.
struct Hhh4Truth {
  double endemic_rate = 4e-5;  // per capita per month at the seasonal mean
  double gamma_sin = 0.5;
  double gamma_cos = -0.3;
  std::vector<double> beta_nu{0.2, 0.15};
  double ri_sigma = 0.1;
  double lambda = 0.3;
  std::vector<double> beta_lambda{0.1, 0.0};
  double phi = 0.4;
  double decay = 1.5;
  double psi = 5.0;
  bool epidemic = true;
  bool neighbourhood = true;
};

inline void simulate_hhh4(PanelDataset& p, const Hhh4Truth& tr, std::uint64_t seed) {
  auto rng = make_rng(seed, {0x68686834});
  const int n = p.n(), T = p.T();
  const std::vector<Term> terms{Term{"covariate", "tavg", 3, 0}, Term{"covariate", "rain", 3, 0}};
  std::vector<Eigen::MatrixXd> z;
  for (const auto& t : terms) z.push_back(standardized_term(p, t));
  std::vector<double> ri(n);
  for (auto& v : ri) v = draw_normal(rng, 0.0, tr.ri_sigma);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double zsum = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i || p.adjacency.order(j, i) <= 0) continue;
      w(j, i) = std::pow(static_cast<double>(p.adjacency.order(j, i)), -tr.decay);
      zsum += w(j, i);
    }
    if (zsum > 0) w.col(i) /= zsum;
  }
  for (int t = 0; t < T; ++t) {
    const int m = p.month_of_year(t);
    for (int i = 0; i < n; ++i) {
      double lnu = std::log(tr.endemic_rate * p.population(i, t)) + tr.gamma_sin * harmonic_sin(m) +
                   tr.gamma_cos * harmonic_cos(m) + ri[i];
      double ll = std::log(tr.lambda);
      if (t >= 3) {
        for (std::size_t k = 0; k < z.size(); ++k) {
          lnu += tr.beta_nu[k] * z[k](i, t);
          ll += tr.beta_lambda[k] * z[k](i, t);
        }
      }
      double mu = std::exp(lnu);
      if (t >= 1) {
        if (tr.epidemic) mu += std::exp(ll) * p.cases(i, t - 1);
        if (tr.neighbourhood) mu += tr.phi * w.col(i).dot(p.cases.col(t - 1));
      }
      p.cases(i, t) = static_cast<double>(draw_negbin(rng, mu, tr.psi));
    }
  }
}

/// Known parameters of the principal-components regression truth: a per-capita rate with a
/// harmonic cycle, tmin_lag3 and rain_lag3 effects, a yearly AR(1) intercept and a driver equal to
/// the cross-district mean of lagged log-incidence (centred at `driver_centre`).
struct PcaTruth {
  double rate = 1e-4;
  double gamma_sin = 0.6;
  double gamma_cos = -0.45;
  std::vector<double> beta{0.25, -0.20};  // tmin_lag3, rain_lag3
  double driver = 0.3;
  double driver_centre = 2.3;
  int driver_lag = 5;
  double delta_sigma = 0.10;
  double delta_rho = 0.5;
};

inline void simulate_pca(PanelDataset& p, const PcaTruth& tr, std::uint64_t seed) {
  auto rng = make_rng(seed, {0x70637274});
  const int n = p.n(), T = p.T();
  const std::vector<Term> terms{Term{"covariate", "tmin", 3, 0}, Term{"covariate", "rain", 3, 0}};
  std::vector<Eigen::MatrixXd> z;
  for (const auto& t : terms) z.push_back(standardized_term(p, t, true));
  const int years = p.year_index(T - 1) + 1;
  std::vector<double> delta(years);
  delta[0] = draw_normal(rng, 0.0, tr.delta_sigma);
  for (int a = 1; a < years; ++a) {
    delta[a] = tr.delta_rho * delta[a - 1] +
               draw_normal(rng, 0.0, tr.delta_sigma * std::sqrt(1 - tr.delta_rho * tr.delta_rho));
  }
  for (int t = 0; t < T; ++t) {
    const int m = p.month_of_year(t);
    double drive = 0.0;
    const int tl = t - tr.driver_lag;
    if (tl >= 0) {
      for (int j = 0; j < n; ++j) drive += std::log1p(kIncidenceScale * p.cases(j, tl) / p.population(j, tl));
      drive = drive / n - tr.driver_centre;
    }
    for (int i = 0; i < n; ++i) {
      double eta = std::log(tr.rate * p.population(i, t)) + tr.gamma_sin * harmonic_sin(m) +
                   tr.gamma_cos * harmonic_cos(m) + delta[p.year_index(t)] + tr.driver * drive;
      if (t >= 3) {
        for (std::size_t k = 0; k < z.size(); ++k) eta += tr.beta[k] * z[k](i, t);
      }
      p.cases(i, t) = static_cast<double>(draw_poisson_log(rng, eta));
    }
  }
}

/// A burst planted by the default generator: `factor` times the baseline mean in `district`
/// for `length` months starting at panel column `start`.
struct PlantedOutbreak {
  int district = 0;
  int start = 0;
  int length = 3;
  double factor = 4.0;
};

struct SeasonalOptions {
  BaseOptions base{};
  double rate = 6e-5;             // cases per capita per month at the seasonal mean
  double season_amplitude = 0.8;  // log scale
  double level_rho = 0.8;         // per-district AR(1) log-level persistence
  double level_sd = 0.25;         // stationary sd of that level
  int outbreaks = 6;
  int outbreak_length = 3;
  double outbreak_factor = 4.0;
  int hotspot = 0;  // district index, -1 for none
  double hotspot_factor = 3.0;
  double neighbour_factor = 1.6;
  double size = 8.0;  // negative binomial size
};

struct SeasonalTruth {
  std::vector<PlantedOutbreak> outbreaks;
  int hotspot = -1;
  std::vector<int> hotspot_neighbours;
};

/// Seasonal synthetic panel: harmonic baseline with a persistent district level, planted
/// outbreaks and one spatial hotspot whose neighbours are lifted too. Cases are negative
/// binomial around that mean.
inline std::pair<PanelDataset, SeasonalTruth> seasonal_panel(const SeasonalOptions& o, std::uint64_t seed) {
  auto p = base_panel(o.base, seed);
  auto rng = make_rng(seed, {0x7365736e});
  const int n = p.n(), T = p.T();
  if (o.hotspot >= n) throw PreconditionError("hotspot district outside the panel");
  SeasonalTruth truth;
  truth.hotspot = o.hotspot;
  Eigen::MatrixXd mult = Eigen::MatrixXd::Ones(n, T);
  if (o.hotspot >= 0) {
    truth.hotspot_neighbours = p.adjacency.neighbours[static_cast<std::size_t>(o.hotspot)];
    mult.row(o.hotspot).array() *= o.hotspot_factor;
    for (const int j : truth.hotspot_neighbours) mult.row(j).array() *= o.neighbour_factor;
  }
  std::uniform_int_distribution<int> pick_district(0, n - 1);
  std::uniform_int_distribution<int> pick_start(std::min(12, T - 1), std::max(std::min(12, T - 1), T - o.outbreak_length));
  for (int k = 0; k < o.outbreaks; ++k) {
    PlantedOutbreak ob{pick_district(rng), pick_start(rng), o.outbreak_length, o.outbreak_factor};
    for (int t = ob.start; t < std::min(T, ob.start + ob.length); ++t) mult(ob.district, t) *= ob.factor;
    truth.outbreaks.push_back(ob);
  }
  std::vector<double> phase(n), level(n);
  const double innov = o.level_sd * std::sqrt(1.0 - o.level_rho * o.level_rho);
  for (int i = 0; i < n; ++i) {
    phase[i] = draw_normal(rng, 0.0, 0.4);
    level[i] = draw_normal(rng, 0.0, o.level_sd);
  }
  for (int t = 0; t < T; ++t) {
    const int m = p.month_of_year(t);
    for (int i = 0; i < n; ++i) {
      level[i] = o.level_rho * level[i] + draw_normal(rng, 0.0, innov);
      const double mu = o.rate * p.population(i, t) * mult(i, t) *
                        std::exp(o.season_amplitude * std::sin(2 * M_PI * m / 12.0 + phase[i]) + level[i]);
      p.cases(i, t) = static_cast<double>(draw_negbin(rng, mu, o.size));
    }
  }
  return {std::move(p), std::move(truth)};
}

/// Benchmark panel whose districts each follow one of the three model families (in a seeded
/// shuffle of equal shares). `family[i]` names the generator of district i.
struct MixturePanel {
  PanelDataset panel;
  std::vector<std::string> family;
};

inline MixturePanel mixture_panel(const BaseOptions& o, std::uint64_t seed) {
  MixturePanel out{base_panel(o, seed), {}};
  auto st = out.panel, hh = out.panel, pc = out.panel;
  simulate_st(st, StTruth{}, derive_seed(seed, {1}));
  simulate_hhh4(hh, Hhh4Truth{}, derive_seed(seed, {2}));
  simulate_pca(pc, PcaTruth{}, derive_seed(seed, {3}));
  const int n = out.panel.n();
  std::vector<int> kind(n);
  for (int i = 0; i < n; ++i) kind[i] = i % 3;
  auto rng = make_rng(seed, {0x6d6978});
  std::shuffle(kind.begin(), kind.end(), rng);
  static const char* names[] = {"spatiotemporal", "hhh4", "pca"};
  for (int i = 0; i < n; ++i) {
    const auto& src = kind[i] == 0 ? st : kind[i] == 1 ? hh : pc;
    out.panel.cases.row(i) = src.cases.row(i);
    out.family.emplace_back(names[kind[i]]);
  }
  return out;
}

}  // namespace distcast::synth
