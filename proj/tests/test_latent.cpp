#include <gtest/gtest.h>

#include <random>

#include "distcast/model/laplace.hpp"

using namespace distcast;
using namespace distcast::latent;

namespace {

AdjacencyGraph ring(int n) {
  std::vector<std::string> nodes;
  std::vector<std::pair<std::string, std::string>> edges;
  for (int i = 0; i < n; ++i) nodes.push_back("n" + std::to_string(i));
  for (int i = 0; i < n; ++i) edges.emplace_back(nodes[i], nodes[(i + 1) % n]);
  edges.emplace_back(nodes[0], nodes[n / 2]);
  return AdjacencyGraph::from_edges(nodes, edges);
}

/// Small panel-shaped model touching every block kind.
LatentModel toy_model(std::uint64_t seed, bool bym2) {
  const int n = 6, years = 3, T = 12 * years;
  const auto g = ring(n);
  LatentModel m;
  Eigen::VectorXd fp(2);
  fp << 1.0 / 25.0, 1.0;
  const int fixed = m.add_fixed("fixed", fp);
  const int season = m.add_rw1_cyclic("season", n);
  const int ar = m.add_ar1("delta", 1, years);
  const int spatial = bym2 ? m.add_bym2("theta", g) : m.add_besag("theta", g);
  const int iid = m.add_iid("u", n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> s(n);
  for (auto& v : s) v = 0.4 * nd(rng);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < T; ++t) {
      const double x = nd(rng);
      const double eta = 1.5 + 0.3 * x + 0.5 * std::sin(2 * M_PI * t / 12) + s[i];
      const double y = std::poisson_distribution<int>(std::exp(eta))(rng);
      const auto& bf = m.blocks[fixed];
      m.add_observation(y, 0.0,
                        {{bf.offset, 1.0},
                         {bf.offset + 1, x},
                         {m.blocks[season].offset + i * 12 + t % 12, 1.0},
                         {m.blocks[ar].offset + t / 12, 1.0},
                         {m.blocks[spatial].offset + i, 1.0},
                         {m.blocks[iid].offset + i, 1.0}});
    }
  }
  return m;
}

}  // namespace

TEST(Latent, PrecisionDerivativesMatchFiniteDifferences) {
  for (bool bym2 : {false, true}) {
    const auto m = toy_model(1, bym2);
    Eigen::VectorXd theta = m.initial_theta();
    for (Eigen::Index j = 0; j < theta.size(); ++j) theta(j) += 0.1 * (j + 1) - 0.3;
    const auto pp = prior_precision(m, theta);
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
      const double h = 1e-6;
      Eigen::VectorXd tp = theta, tm = theta;
      tp(j) += h;
      tm(j) -= h;
      const auto a = prior_precision(m, tp), b = prior_precision(m, tm);
      const Eigen::MatrixXd fd = (Eigen::MatrixXd(a.P) - Eigen::MatrixXd(b.P)) / (2 * h);
      EXPECT_LT((fd - Eigen::MatrixXd(pp.dP[j])).cwiseAbs().maxCoeff(), 1e-5) << m.hypers[j].name;
      EXPECT_NEAR((a.log_det - b.log_det) / (2 * h), pp.d_log_det(j), 1e-5) << m.hypers[j].name;
    }
  }
}

TEST(Latent, LogDetMatchesConstrainedDeterminant) {
  // log|M'PM| differs from the analytic value only by a theta-free constant.
  for (bool bym2 : {false, true}) {
    const auto m = toy_model(2, bym2);
    const auto M = constraint_basis(m);
    auto dense_logdet = [&](const Eigen::VectorXd& th) {
      const Eigen::MatrixXd MPM = Eigen::MatrixXd(M.transpose() * prior_precision(m, th).P * M);
      return 2.0 * Eigen::LLT<Eigen::MatrixXd>(MPM).matrixLLT().diagonal().array().log().sum();
    };
    const Eigen::VectorXd t0 = m.initial_theta();
    Eigen::VectorXd t1 = t0;
    for (Eigen::Index j = 0; j < t1.size(); ++j) t1(j) += 0.37 - 0.11 * j;
    const double analytic = prior_precision(m, t1).log_det - prior_precision(m, t0).log_det;
    EXPECT_NEAR(dense_logdet(t1) - dense_logdet(t0), analytic, 1e-8);
  }
}

TEST(Latent, ConstraintBasisIsOrthonormal) {
  const auto m = toy_model(3, true);
  const Eigen::MatrixXd M = Eigen::MatrixXd(constraint_basis(m));
  EXPECT_LT((M.transpose() * M - Eigen::MatrixXd::Identity(M.cols(), M.cols())).cwiseAbs().maxCoeff(), 1e-12);
  for (const auto& set : m.sum_to_zero) {
    for (Eigen::Index c = 0; c < M.cols(); ++c) {
      double s = 0;
      for (int k : set) s += M(k, c);
      EXPECT_NEAR(s, 0.0, 1e-12);
    }
  }
  EXPECT_EQ(M.cols(), m.p - static_cast<Eigen::Index>(m.sum_to_zero.size()));
}

TEST(Latent, ScaledStructuresHaveUnitGeneralizedVariance) {
  for (const auto& Q : {cyclic_rw1_structure(12), besag_structure(ring(9))}) {
    const auto [S, rank] = scale_intrinsic(Q);
    EXPECT_EQ(rank, Q.rows() - 1);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(S, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::VectorXd inv = svd.singularValues();
    for (Eigen::Index k = 0; k < inv.size(); ++k) inv(k) = inv(k) > 1e-9 ? 1 / inv(k) : 0;
    const Eigen::MatrixXd pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
    EXPECT_NEAR(pinv.diagonal().array().log().mean(), 0.0, 1e-10);
    EXPECT_LT((S * Eigen::VectorXd::Ones(S.rows())).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Laplace, GradientMatchesFiniteDifferences) {
  for (bool bym2 : {false, true}) {
    const auto m = toy_model(4, bym2);
    LaplaceEngine engine(m);
    Eigen::VectorXd theta = m.initial_theta();
    for (Eigen::Index j = 0; j < theta.size(); ++j) theta(j) += 0.2 - 0.07 * j;
    const auto ev = engine.evaluate(theta);
    ASSERT_TRUE(ev.inner_converged);
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
      const double h = 1e-4;
      Eigen::VectorXd tp = theta, tm = theta;
      tp(j) += h;
      tm(j) -= h;
      const double fd = (engine.evaluate(tp, false).log_marginal - engine.evaluate(tm, false).log_marginal) / (2 * h);
      EXPECT_NEAR(ev.gradient(j), fd, 1e-4 * std::max(1.0, std::abs(fd))) << m.hypers[j].name;
    }
  }
}

TEST(Laplace, FixedEffectsOnlyMatchesDirectMap) {
  // Poisson regression with N(0, 25) / N(0, 1) priors, solved independently by plain Newton.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  LatentModel m;
  Eigen::VectorXd fp(3);
  fp << 1.0 / 25.0, 1.0, 1.0;
  m.add_fixed("b", fp);
  const int N = 300;
  Eigen::MatrixXd X(N, 3);
  Eigen::VectorXd y(N);
  for (int r = 0; r < N; ++r) {
    X(r, 0) = 1;
    X(r, 1) = nd(rng);
    X(r, 2) = nd(rng);
    y(r) = std::poisson_distribution<int>(std::exp(1.0 + 0.5 * X(r, 1) - 0.3 * X(r, 2)))(rng);
    m.add_observation(y(r), 0.0, {{0, 1.0}, {1, X(r, 1)}, {2, X(r, 2)}});
  }
  const auto fit = fit_laplace(m);
  ASSERT_TRUE(fit.converged);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(3);
  for (int it = 0; it < 50; ++it) {
    const Eigen::VectorXd mu = (X * b).array().exp();
    const Eigen::VectorXd g = X.transpose() * (y - mu) - fp.asDiagonal() * b;
    const Eigen::MatrixXd H = X.transpose() * mu.asDiagonal() * X + Eigen::MatrixXd(fp.asDiagonal());
    b += H.ldlt().solve(g);
    if (it == 49) {
      EXPECT_LT((fit.x - b).cwiseAbs().maxCoeff(), 1e-8);
      EXPECT_LT((fit.cov - H.inverse()).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(Laplace, FitConvergesAndRespectsConstraints) {
  const auto m = toy_model(6, false);
  const auto fit = fit_laplace(m);
  EXPECT_TRUE(fit.converged) << fit.message;
  EXPECT_LE(fit.relative_gradient, 1e-5);
  for (const auto& set : m.sum_to_zero) {
    double s = 0;
    for (int k : set) s += fit.x(k);
    EXPECT_NEAR(s, 0.0, 1e-9);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fit.cov);
  EXPECT_GT(es.eigenvalues().minCoeff(), -1e-10);
  EXPECT_LT((fit.cov - fit.cov.transpose()).cwiseAbs().maxCoeff(), 1e-14);
}
