#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "distcast/core/errors.hpp"
#include "distcast/panel/panel.hpp"

namespace distcast {

inline constexpr double kIncidenceScale = 100000.0;

/// Panel-aligned feature; columns may run `extend` months past the panel end for forecasting.
struct FeatureMatrix {
  std::string name;
  Eigen::MatrixXd values;  // n x (T + extend)
  BoolMatrix valid;
  int min_source_lag = 0;  // feature at t reads nothing newer than t - min_source_lag
  std::vector<bool> degenerate;  // per district row, set by standardize

  int rows() const { return static_cast<int>(values.rows()); }
  int cols() const { return static_cast<int>(values.cols()); }
  bool ok(int i, int t) const { return t >= 0 && t < cols() && valid(i, t); }
};

namespace detail {

inline FeatureMatrix make_feature(std::string name, int n, int cols, int lag) {
  FeatureMatrix f;
  f.name = std::move(name);
  f.values = Eigen::MatrixXd::Constant(n, cols, std::nan(""));
  f.valid = BoolMatrix::Constant(n, cols, false);
  f.min_source_lag = lag;
  f.degenerate.assign(n, false);
  return f;
}

inline void check_lag(const PanelDataset& p, int lag, int extend) {
  if (lag < 1 || lag >= p.T()) {
    throw PreconditionError("invalid lag " + std::to_string(lag) + " for a panel of " +
                            std::to_string(p.T()) + " months");
  }
  if (extend < 0 || extend > lag) {
    throw PreconditionError("cannot extend a lag-" + std::to_string(lag) + " feature by " +
                            std::to_string(extend) + " months");
  }
}

}  // namespace detail

/// out[i,t] = Y[i,t-L]; the first L months are masked.
inline FeatureMatrix lag_cases(const PanelDataset& p, int lag, int extend = 0) {
  detail::check_lag(p, lag, extend);
  auto f = detail::make_feature("cases_lag" + std::to_string(lag), p.n(), p.T() + extend, lag);
  for (int i = 0; i < p.n(); ++i) {
    for (int t = lag; t < f.cols(); ++t) {
      f.values(i, t) = p.cases(i, t - lag);
      f.valid(i, t) = true;
    }
  }
  return f;
}

/// out[i,t] = log((Y[i,t-L] + 1) / p[i,a[t]]).
inline FeatureMatrix lagged_offset_term(const PanelDataset& p, int lag, int extend = 0) {
  detail::check_lag(p, lag, extend);
  auto f = detail::make_feature("offset_lag" + std::to_string(lag), p.n(), p.T() + extend, lag);
  for (int i = 0; i < p.n(); ++i) {
    for (int t = lag; t < f.cols(); ++t) {
      f.values(i, t) = std::log((p.cases(i, t - lag) + 1.0) / p.population_at(i, t));
      f.valid(i, t) = true;
    }
  }
  return f;
}

/// out[i,t] = log(1 + 1e5 * sum_{s=t-lag-window+1}^{t-lag} Y[i,s] / p[i,a[t]]).
/// lag = 1 is the plain "previous `window` months" definition.
inline FeatureMatrix cumulative_incidence(const PanelDataset& p, int window, int lag = 1,
                                          int extend = 0) {
  if (window != 12 && window != 24 && window != 36) {
    throw PreconditionError("cumulative incidence window must be 12, 24 or 36");
  }
  if (window >= p.T()) throw PreconditionError("cumulative incidence window exceeds the panel");
  detail::check_lag(p, lag, extend);
  auto f = detail::make_feature("cuminc" + std::to_string(window) + "_lag" + std::to_string(lag),
                                p.n(), p.T() + extend, lag);
  for (int i = 0; i < p.n(); ++i) {
    for (int t = lag + window - 1; t < f.cols(); ++t) {
      double sum = 0.0;
      for (int s = t - lag - window + 1; s <= t - lag; ++s) sum += p.cases(i, s);
      f.values(i, t) = std::log1p(kIncidenceScale * sum / p.population_at(i, t));
      f.valid(i, t) = true;
    }
  }
  return f;
}

/// out[i,t] = X_k[i,t-L]; missing covariate cells stay masked.
inline FeatureMatrix covariate_lag(const PanelDataset& p, const std::string& name, int lag,
                                   int extend = 0) {
  detail::check_lag(p, lag, extend);
  const auto& x = p.covariate(name).values;
  auto f = detail::make_feature(name + "_lag" + std::to_string(lag), p.n(), p.T() + extend, lag);
  for (int i = 0; i < p.n(); ++i) {
    for (int t = lag; t < f.cols(); ++t) {
      const double v = x(i, t - lag);
      if (std::isfinite(v)) {
        f.values(i, t) = v;
        f.valid(i, t) = true;
      }
    }
  }
  return f;
}

/// log(1 + 1e5 * Y / p), unlagged and defined on the panel months only.
inline FeatureMatrix log_incidence(const PanelDataset& p) {
  auto f = detail::make_feature("log_incidence", p.n(), p.T(), 0);
  for (int i = 0; i < p.n(); ++i) {
    for (int t = 0; t < p.T(); ++t) {
      f.values(i, t) = std::log1p(kIncidenceScale * p.cases(i, t) / p.population(i, t));
      f.valid(i, t) = true;
    }
  }
  return f;
}

/// Shifts a feature right by `lag` months, appending `extend` columns.
inline FeatureMatrix lag_feature(const FeatureMatrix& src, int lag, int extend = 0) {
  if (lag < 0) throw PreconditionError("negative lag");
  auto f = detail::make_feature(src.name + "_lag" + std::to_string(lag), src.rows(),
                                src.cols() + extend, src.min_source_lag + lag);
  for (int i = 0; i < src.rows(); ++i) {
    for (int t = lag; t < f.cols(); ++t) {
      if (t - lag < src.cols() && src.valid(i, t - lag)) {
        f.values(i, t) = src.values(i, t - lag);
        f.valid(i, t) = true;
      }
    }
  }
  return f;
}

struct Standardization {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;  // 0 marks a degenerate row
};

/// Per-district mean and sample sd over valid cells in [begin, end).
inline Standardization standardization(const FeatureMatrix& f, int begin, int end) {
  if (begin < 0 || end > f.cols() || begin >= end) {
    throw PreconditionError("empty standardization reference period");
  }
  Standardization s{Eigen::VectorXd::Zero(f.rows()), Eigen::VectorXd::Zero(f.rows())};
  for (int i = 0; i < f.rows(); ++i) {
    double sum = 0.0;
    int k = 0;
    for (int t = begin; t < end; ++t) {
      if (f.valid(i, t)) {
        sum += f.values(i, t);
        ++k;
      }
    }
    if (k == 0) continue;
    const double mean = sum / k;
    double ss = 0.0;
    for (int t = begin; t < end; ++t) {
      if (f.valid(i, t)) ss += (f.values(i, t) - mean) * (f.values(i, t) - mean);
    }
    s.mean(i) = mean;
    const double sd = k > 1 ? std::sqrt(ss / (k - 1)) : 0.0;
    s.sd(i) = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? sd : 0.0;
  }
  return s;
}

inline FeatureMatrix apply_standardization(const FeatureMatrix& f, const Standardization& s) {
  FeatureMatrix out = f;
  for (int i = 0; i < f.rows(); ++i) {
    out.degenerate[i] = s.sd(i) == 0.0;
    for (int t = 0; t < f.cols(); ++t) {
      if (!f.valid(i, t)) continue;
      out.values(i, t) = out.degenerate[i] ? 0.0 : (f.values(i, t) - s.mean(i)) / s.sd(i);
    }
  }
  return out;
}

/// Mean 0 / sample sd 1 per district over the reference months [begin, end).
/// Zero-variance rows become all zero and are flagged degenerate.
inline FeatureMatrix standardize(const FeatureMatrix& f, int begin, int end) {
  return apply_standardization(f, standardization(f, begin, end));
}

}  // namespace distcast
