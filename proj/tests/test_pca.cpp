#include <gtest/gtest.h>

#include <cmath>

#include "distcast/model/model.hpp"
#include "distcast/model/pca.hpp"
#include "distcast/synth/generate.hpp"

using namespace distcast;

namespace {

Eigen::MatrixXd noise(int rows, int cols, std::uint64_t seed) {
  auto rng = make_rng(seed, {});
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = draw_normal(rng);
  }
  return m;
}

Eigen::VectorXd standardized(const Eigen::VectorXd& v) {
  const Eigen::VectorXd c = v.array() - v.mean();
  return c / std::sqrt(c.squaredNorm() / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST(YAwareRescale, IdenticalCovariateHasUnitSlope) {
  const Eigen::VectorXd y = standardized(noise(120, 1, 1).col(0));
  Eigen::MatrixXd X = noise(120, 3, 2);
  X.col(1) = y;
  const auto r = y_aware_rescale(X, y);
  EXPECT_NEAR(r.slopes(1), 1.0, 1e-12);
  EXPECT_NEAR((r.rescaled.col(1) - y).norm(), 0.0, 1e-10);
}

TEST(YAwareRescale, PureNoiseSlopeIsSmall) {
  const auto X = noise(200, 1, 3);
  const Eigen::VectorXd y = noise(200, 1, 4).col(0);
  EXPECT_LT(std::abs(y_aware_rescale(X, y).slopes(0)), 0.2);
}

TEST(YAwareRescale, ConstantColumnGetsZeroSlope) {
  Eigen::MatrixXd X = noise(40, 2, 5);
  X.col(0).setConstant(3.5);
  const auto r = y_aware_rescale(X, noise(40, 1, 6).col(0));
  EXPECT_EQ(r.slopes(0), 0.0);
  EXPECT_TRUE(r.rescaled.col(0).isZero());
}

TEST(YAwareRescale, NeedsTwoYearsOfRows) {
  EXPECT_THROW(y_aware_rescale(noise(23, 4, 1), noise(23, 1, 2).col(0)), PreconditionError);
}

TEST(YAwareRescale, ColumnsAreCentredAndShiftsAreAbsorbed) {
  Eigen::MatrixXd X = noise(60, 5, 7);
  const Eigen::VectorXd y = X.col(2) + 0.5 * noise(60, 1, 8).col(0);
  const auto a = y_aware_rescale(X, y);
  for (int c = 0; c < 5; ++c) EXPECT_NEAR(a.rescaled.col(c).mean(), 0.0, 1e-12);
  Eigen::MatrixXd shifted = X;
  shifted.col(3).array() += 12.0;
  const auto b = y_aware_rescale(shifted, y);
  EXPECT_LT((a.rescaled - b.rescaled).cwiseAbs().maxCoeff(), 1e-10);
  const auto sa = fit_pca(a), sb = fit_pca(b);
  const Eigen::VectorXd row = X.row(10).transpose(), srow = shifted.row(10).transpose();
  EXPECT_LT((sa.scores(row) - sb.scores(srow)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(FitPca, PlantedDominantColumnLeadsFirstComponent) {
  Eigen::MatrixXd X = 0.1 * noise(150, 20, 9);
  X.col(6) *= 40.0;
  YAwareRescale r{Eigen::VectorXd::Ones(20), Eigen::VectorXd::Zero(20), X.rowwise() - X.colwise().mean()};
  const auto s = fit_pca(r);
  const double cosine = std::abs(s.loadings(6, 0)) / s.loadings.col(0).norm();
  EXPECT_GT(cosine, 0.99);
}

TEST(FitPca, LoadingsOrthonormalAndVarianceNonIncreasing) {
  Eigen::MatrixXd X = noise(100, 30, 10);
  X.col(1) += 2.0 * X.col(0);
  const auto s = fit_pca(y_aware_rescale(X, X.col(0) + noise(100, 1, 11).col(0)));
  ASSERT_EQ(s.components(), 10);
  EXPECT_FALSE(s.reduced);
  const Eigen::MatrixXd G = s.loadings.transpose() * s.loadings;
  EXPECT_LT((G - Eigen::MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff(), 1e-10);
  for (int c = 1; c < 10; ++c) EXPECT_LE(s.explained(c), s.explained(c - 1));
  for (int c = 0; c < 10; ++c) {
    Eigen::Index arg = 0;
    s.loadings.col(c).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(s.loadings(arg, c), 0.0);
  }
}

TEST(FitPca, DuplicatedColumnsShareLoadings) {
  Eigen::MatrixXd X = noise(80, 14, 12);
  X.col(5) = X.col(2);
  const auto s = fit_pca(y_aware_rescale(X, X.col(2) + X.col(7) + noise(80, 1, 13).col(0)));
  for (int c = 0; c < s.components(); ++c) EXPECT_NEAR(s.loadings(2, c), s.loadings(5, c), 1e-10);
}

TEST(FitPca, LowRankKeepsAvailableComponentsAndFlags) {
  const Eigen::MatrixXd base = noise(60, 4, 14);
  Eigen::MatrixXd X(60, 12);
  for (int c = 0; c < 12; ++c) X.col(c) = base.col(c % 4) * (1.0 + 0.1 * c);
  const auto s = fit_pca(y_aware_rescale(X, base.rowwise().sum()));
  EXPECT_TRUE(s.reduced);
  EXPECT_EQ(s.components(), 4);
}

TEST(FitPca, ColumnOrderOnlyPermutesLoadings) {
  Eigen::MatrixXd X = noise(90, 15, 15);
  const Eigen::VectorXd y = X.col(0) - X.col(4) + noise(90, 1, 16).col(0);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(15);
  perm.setIdentity();
  auto rng = make_rng(1, {});
  std::shuffle(perm.indices().data(), perm.indices().data() + 15, rng);
  const auto a = fit_pca(y_aware_rescale(X, y));
  const auto b = fit_pca(y_aware_rescale(X * perm, y));
  for (int c = 0; c < 10; ++c) {
    const Eigen::VectorXd la = a.loadings.col(c), lb = perm * b.loadings.col(c);
    EXPECT_LT(std::min((la - lb).norm(), (la + lb).norm()), 1e-8) << c;
  }
}

TEST(PcrModel, RecoversHarmonicAndWeatherEffects) {
  auto p = synth::base_panel({}, 1000);
  const synth::PcaTruth tr;
  synth::simulate_pca(p, tr, 1000);
  const auto [f, d] = fit_pca_model(preset("pca"), p);
  ASSERT_TRUE(d.converged) << d.message;
  double s = 0, c = 0, b0 = 0, b1 = 0;
  for (const auto& df : f.districts) {
    s += df.x(df.sin_index());
    c += df.x(df.cos_index());
    b0 += df.x(df.beta(0));
    b1 += df.x(df.beta(1));
  }
  const double n = static_cast<double>(f.districts.size());
  EXPECT_NEAR(s / n / tr.gamma_sin, 1.0, 0.2);
  EXPECT_NEAR(c / n / tr.gamma_cos, 1.0, 0.2);
  EXPECT_NEAR(b0 / n / tr.beta[0], 1.0, 0.2);
  EXPECT_NEAR(b1 / n / tr.beta[1], 1.0, 0.2);
}

namespace {

struct SeasonalFitSummary {
  int insignificant = 0;  // districts whose PC block has Wald statistic below the chi-square 95% point
  double mean_norm = 0.0;
  double sin = 0.0, cos = 0.0;
};

SeasonalFitSummary fit_pure_seasonal(int months, std::uint64_t seed, const synth::PcaTruth& tr) {
  synth::BaseOptions o;
  o.months = months;
  auto p = synth::base_panel(o, seed);
  synth::simulate_pca(p, tr, seed);
  auto spec = preset("pca");
  spec.pca.terms.clear();
  const auto [f, d] = fit_pca_model(spec, p);
  EXPECT_TRUE(d.converged) << d.message;
  constexpr double kChiSq10_95 = 18.307;
  SeasonalFitSummary s;
  for (const auto& df : f.districts) {
    const int k = df.n_pc();
    Eigen::VectorXd b(k);
    for (int c = 0; c < k; ++c) b(c) = df.x(df.beta_pc(c));
    const Eigen::MatrixXd S = df.cov.block(df.beta_pc(0), df.beta_pc(0), k, k);
    if (b.dot(S.ldlt().solve(b)) < kChiSq10_95) ++s.insignificant;
    s.mean_norm += b.norm() / static_cast<double>(f.districts.size());
    s.sin += df.x(df.sin_index()) / static_cast<double>(f.districts.size());
    s.cos += df.x(df.cos_index()) / static_cast<double>(f.districts.size());
  }
  return s;
}

}  // namespace

TEST(PcrModel, PureSeasonalDataLeavesComponentsInsignificant) {
  synth::PcaTruth tr;
  tr.driver = 0.0;
  tr.beta = {0.0, 0.0};
  tr.delta_sigma = 1e-6;
  const auto s = fit_pure_seasonal(120, 41, tr);
  EXPECT_GE(s.insignificant, 18);
  const double amp = std::hypot(s.sin, s.cos), truth = std::hypot(tr.gamma_sin, tr.gamma_cos);
  EXPECT_NEAR(amp / truth, 1.0, 0.2);
  // The component coefficients are sampling noise: their norm falls as the series grows.
  const auto longer = fit_pure_seasonal(480, 41, tr);
  EXPECT_LT(longer.mean_norm, 0.7 * s.mean_norm);
}

TEST(PcrModel, SingleDistrictPanelStillFits) {
  synth::BaseOptions o;
  o.districts = 1;
  auto p = synth::base_panel(o, 2);
  synth::simulate_pca(p, {}, 2);
  const auto m = fit_model(preset("pca"), p);
  EXPECT_TRUE(m.diagnostics.converged) << m.diagnostics.message;
  const auto& f = std::get<PcaFit>(m.state);
  EXPECT_TRUE(f.districts[0].pca.reduced);
  EXPECT_EQ(f.districts[0].n_pc(), 3);
  const auto fc = forecast_model(m, p, 1000, 1);
  EXPECT_EQ(fc.size(), 3u);
}

TEST(PcrModel, StateIgnoresRowsAfterTheWindow) {
  synth::BaseOptions o;
  o.districts = 6;
  o.months = 84;
  auto p = synth::base_panel(o, 3);
  synth::simulate_pca(p, {}, 3);
  const YearMonth origin = p.months[71];
  const auto a = fit_pca_model(preset("pca"), p.truncated(71));
  auto q = p;
  q.cases.rightCols(12).setConstant(500.0);
  const auto b = fit_model(preset("pca"), q, origin);
  EXPECT_EQ(nlohmann::json(a.first).dump(), nlohmann::json(std::get<PcaFit>(b.state)).dump());
}

TEST(PcrModel, LogIncidenceIsStandardizedOnTheWindow) {
  synth::BaseOptions o;
  o.districts = 5;
  o.months = 60;
  auto p = synth::base_panel(o, 4);
  synth::simulate_pca(p, {}, 4);
  const auto f = fit_pca_model(preset("pca"), p).first;
  const auto z = apply_standardization(log_incidence(p), f.incidence);
  for (int i = 0; i < 5; ++i) {
    const Eigen::VectorXd row = z.values.row(i).transpose();
    EXPECT_NEAR(row.mean(), 0.0, 1e-10);
    EXPECT_NEAR(std::sqrt((row.array() - row.mean()).square().sum() / (row.size() - 1)), 1.0, 1e-10);
  }
}
