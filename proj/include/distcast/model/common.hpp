#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "distcast/core/errors.hpp"
#include "distcast/core/random.hpp"
#include "distcast/core/text.hpp"
#include "distcast/model/spec.hpp"
#include "distcast/panel/features.hpp"
#include "distcast/panel/panel.hpp"

namespace distcast {

struct FitDiagnostics {
  bool converged = false;
  double objective = 0.0;  // log marginal (latent families) or penalized log-likelihood (hhh4)
  int iterations = 0;
  int evaluations = 0;
  double relative_gradient = 0.0;
  std::string message;
};

inline void to_json(nlohmann::json& j, const FitDiagnostics& d) {
  j = {{"converged", d.converged},
       {"objective", std::isfinite(d.objective) ? nlohmann::json(d.objective) : nlohmann::json()},
       {"iterations", d.iterations},
       {"evaluations", d.evaluations},
       {"relative_gradient", d.relative_gradient},
       {"message", d.message}};
}
inline void from_json(const nlohmann::json& j, FitDiagnostics& d) {
  d.converged = j.at("converged").get<bool>();
  d.objective = j.at("objective").is_null() ? -INFINITY : j.at("objective").get<double>();
  d.iterations = j.at("iterations").get<int>();
  d.evaluations = j.at("evaluations").get<int>();
  d.relative_gradient = j.at("relative_gradient").get<double>();
  d.message = j.at("message").get<std::string>();
}

namespace json_eigen {

inline nlohmann::json vec(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::VectorXd vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Row-major nested arrays.
inline nlohmann::json mat(const Eigen::MatrixXd& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(vec(Eigen::VectorXd(m.row(r).transpose())));
  return out;
}

inline Eigen::MatrixXd mat(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = vec(j.at(static_cast<std::size_t>(r)));
    if (row.size() != cols) throw InputError("ragged matrix in model document");
    m.row(r) = row.transpose();
  }
  return m;
}

}  // namespace json_eigen

/// Stable per-model tag for RNG streams.
inline std::int64_t model_tag(const std::string& name) {
  return static_cast<std::int64_t>(fnv1a64(name) & 0x7fffffffffffffffULL);
}

/// Raw (unstandardized) values of a term, extended `extend` months past the panel end.
inline FeatureMatrix term_feature(const PanelDataset& p, const Term& term, int extend) {
  if (term.kind == "cuminc") return cumulative_incidence(p, term.window, term.lag, extend);
  return covariate_lag(p, term.name, term.lag, extend);
}

/// Mean and sd pooled over all districts and the given cells.
struct PooledScale {
  double mean = 0.0;
  double sd = 1.0;
  bool degenerate = false;

  double apply(double v) const { return degenerate ? 0.0 : (v - mean) / sd; }
};

inline void to_json(nlohmann::json& j, const PooledScale& s) {
  j = {{"mean", s.mean}, {"sd", s.sd}, {"degenerate", s.degenerate}};
}
inline void from_json(const nlohmann::json& j, PooledScale& s) {
  s.mean = j.at("mean").get<double>();
  s.sd = j.at("sd").get<double>();
  s.degenerate = j.at("degenerate").get<bool>();
}

/// Pooled scale over cells (i, t) with t in [begin, end) that are valid in `f`.
inline PooledScale pooled_scale(const FeatureMatrix& f, int begin, int end) {
  double sum = 0.0;
  long k = 0;
  for (int i = 0; i < f.rows(); ++i) {
    for (int t = std::max(begin, 0); t < std::min(end, f.cols()); ++t) {
      if (f.valid(i, t)) {
        sum += f.values(i, t);
        ++k;
      }
    }
  }
  PooledScale s;
  if (k < 2) {
    s.degenerate = true;
    return s;
  }
  s.mean = sum / static_cast<double>(k);
  double ss = 0.0;
  for (int i = 0; i < f.rows(); ++i) {
    for (int t = std::max(begin, 0); t < std::min(end, f.cols()); ++t) {
      if (f.valid(i, t)) ss += (f.values(i, t) - s.mean) * (f.values(i, t) - s.mean);
    }
  }
  s.sd = std::sqrt(ss / static_cast<double>(k - 1));
  s.degenerate = !(s.sd > 1e-12 * std::max(1.0, std::abs(s.mean)));
  if (s.degenerate) s.sd = 1.0;
  return s;
}

/// Gaussian predictor for one forecast cell: mean and variance of the log count.
struct PredictorMoments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Poisson draws around a Gaussian log mean.
inline std::vector<double> draw_lognormal_poisson(Rng& rng, const PredictorMoments& mo, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  const double sd = std::sqrt(mo.variance);
  for (auto& s : out) s = static_cast<double>(draw_poisson_log(rng, mo.mean + sd * draw_normal(rng)));
  return out;
}

/// Seasonal harmonic pair for calendar month m (1..12).
inline double harmonic_sin(int month) { return std::sin(2.0 * M_PI * month / 12.0); }
inline double harmonic_cos(int month) { return std::cos(2.0 * M_PI * month / 12.0); }

/// Names the first missing regressor cell a forecast needs.
[[noreturn]] inline void throw_missing_cell(const PanelDataset& p, const FeatureMatrix& f, int i, int t) {
  throw InputError("forecast needs " + f.name + " for district " + p.districts[static_cast<std::size_t>(i)] +
                   " at " + p.month_at(t).to_string() + ", which is not available");
}

}  // namespace distcast
