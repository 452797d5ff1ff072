#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "distcast/core/errors.hpp"
#include "distcast/panel/panel.hpp"

namespace distcast::latent {

/// Compressed rows of a sparse design: row r owns entries [start[r], start[r+1]).
struct SparseRows {
  std::vector<int> start{0};
  std::vector<int> index;
  std::vector<double> value;

  int rows() const { return static_cast<int>(start.size()) - 1; }

  void add_row(const std::vector<std::pair<int, double>>& entries) {
    for (const auto& [k, v] : entries) {
      index.push_back(k);
      value.push_back(v);
    }
    start.push_back(static_cast<int>(index.size()));
  }

  double dot(int r, const Eigen::VectorXd& x) const {
    double s = 0.0;
    for (int e = start[r]; e < start[r + 1]; ++e) s += value[e] * x(index[e]);
    return s;
  }
};

enum class HyperKind { LogSigma, AtanhRho, LogitPhi };

/// Hyperparameter on its unconstrained scale with its prior:
/// LogSigma: half-normal(scale) on sigma (log-Jacobian included); AtanhRho / LogitPhi:
/// normal(0, scale) on the transformed value.
struct Hyper {
  std::string name;
  HyperKind kind = HyperKind::LogSigma;
  double scale = 1.0;
  double initial = 0.0;

  double natural(double u) const {
    switch (kind) {
      case HyperKind::LogSigma: return std::exp(u);
      case HyperKind::AtanhRho: return std::tanh(u);
      case HyperKind::LogitPhi: return 1.0 / (1.0 + std::exp(-u));
    }
    return u;
  }

  double log_prior(double u) const {
    if (kind == HyperKind::LogSigma) return u - std::exp(2.0 * u) / (2.0 * scale * scale);
    return -0.5 * u * u / (scale * scale);
  }

  double d_log_prior(double u) const {
    if (kind == HyperKind::LogSigma) return 1.0 - std::exp(2.0 * u) / (scale * scale);
    return -u / (scale * scale);
  }
};

enum class BlockKind { Fixed, Iid, Rw1Cyclic, Besag, Ar1, Bym2 };

/// A group of latent coordinates sharing one Gaussian prior.
/// Index layout: Rw1Cyclic / Ar1 use offset + g * length + k; Bym2 stores the total effect b
/// in [offset, offset + n) and the scaled structured part s in [offset + n, offset + 2n).
struct Block {
  BlockKind kind = BlockKind::Fixed;
  std::string name;
  int offset = 0;
  int size = 0;
  int groups = 1;
  int length = 0;
  int sigma = -1, rho = -1, phi = -1;  // hyper indices
  Eigen::VectorXd fixed_precision;     // Fixed blocks
  Eigen::MatrixXd structure;           // scaled per-group structure (Rw1Cyclic, Besag, Bym2)
  int structure_rank = 0;              // per group
};

/// Scales an intrinsic structure so the geometric mean of the generalized-inverse marginal
/// variances is one, and reports its rank.
inline std::pair<Eigen::MatrixXd, int> scale_intrinsic(const Eigen::MatrixXd& Q) {
  const auto n = Q.rows();
  if (n == 0) return {Q, 0};
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q);
  const double tol = 1e-10 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  Eigen::MatrixXd pinv = Eigen::MatrixXd::Zero(n, n);
  int rank = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double lam = es.eigenvalues()(k);
    if (lam > tol) {
      pinv += es.eigenvectors().col(k) * es.eigenvectors().col(k).transpose() / lam;
      ++rank;
    }
  }
  if (rank == 0) return {Q, 0};
  double log_gm = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) log_gm += std::log(pinv(k, k));
  return {Q * std::exp(log_gm / static_cast<double>(n)), rank};
}

/// First-order random walk on a cycle of `length` (December next to January).
inline Eigen::MatrixXd cyclic_rw1_structure(int length) {
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(length, length);
  for (int k = 0; k < length; ++k) {
    const int next = (k + 1) % length;
    Q(k, k) += 1;
    Q(next, next) += 1;
    Q(k, next) -= 1;
    Q(next, k) -= 1;
  }
  return Q;
}

/// Graph Laplacian D - W of the adjacency (the Besag structure).
inline Eigen::MatrixXd besag_structure(const AdjacencyGraph& g) {
  const int n = g.size();
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (const int j : g.neighbours[i]) {
      Q(i, j) = -1.0;
      Q(i, i) += 1.0;
    }
  }
  return Q;
}

/// Latent Gaussian model with a Poisson observation layer:
/// y_r ~ Poisson(exp(offset_r + a_r' x)), x ~ N(0, P(theta)^-1) subject to sum-to-zero sets.
struct LatentModel {
  int p = 0;
  std::vector<Block> blocks;
  std::vector<Hyper> hypers;
  std::vector<std::vector<int>> sum_to_zero;
  SparseRows A;
  std::vector<double> y;
  std::vector<double> offset;

  int add_hyper(Hyper h) {
    hypers.push_back(std::move(h));
    return static_cast<int>(hypers.size()) - 1;
  }

  int add_block(Block b) {
    b.offset = p;
    p += b.size;
    blocks.push_back(std::move(b));
    return static_cast<int>(blocks.size()) - 1;
  }

  /// Fixed effects with independent N(0, 1/precision) priors; returns the block index.
  int add_fixed(const std::string& name, const Eigen::VectorXd& precision) {
    Block b;
    b.kind = BlockKind::Fixed;
    b.name = name;
    b.size = static_cast<int>(precision.size());
    b.fixed_precision = precision;
    return add_block(std::move(b));
  }

  int add_iid(const std::string& name, int size, double sigma0 = 0.5) {
    Block b;
    b.kind = BlockKind::Iid;
    b.name = name;
    b.size = size;
    b.sigma = add_hyper({name + ".log_sigma", HyperKind::LogSigma, 1.0, std::log(sigma0)});
    return add_block(std::move(b));
  }

  int add_rw1_cyclic(const std::string& name, int groups, int length = 12, double sigma0 = 0.5) {
    Block b;
    b.kind = BlockKind::Rw1Cyclic;
    b.name = name;
    b.groups = groups;
    b.length = length;
    b.size = groups * length;
    std::tie(b.structure, b.structure_rank) = scale_intrinsic(cyclic_rw1_structure(length));
    b.sigma = add_hyper({name + ".log_sigma", HyperKind::LogSigma, 1.0, std::log(sigma0)});
    const int idx = add_block(std::move(b));
    for (int g = 0; g < groups; ++g) {
      std::vector<int> set;
      for (int k = 0; k < length; ++k) set.push_back(blocks[idx].offset + g * length + k);
      sum_to_zero.push_back(std::move(set));
    }
    return idx;
  }

  int add_besag(const std::string& name, const AdjacencyGraph& graph, double sigma0 = 0.5) {
    Block b;
    b.kind = BlockKind::Besag;
    b.name = name;
    b.size = graph.size();
    std::tie(b.structure, b.structure_rank) = scale_intrinsic(besag_structure(graph));
    b.sigma = add_hyper({name + ".log_sigma", HyperKind::LogSigma, 1.0, std::log(sigma0)});
    const int idx = add_block(std::move(b));
    std::vector<int> set;
    for (int k = 0; k < graph.size(); ++k) set.push_back(blocks[idx].offset + k);
    sum_to_zero.push_back(std::move(set));
    return idx;
  }

  int add_bym2(const std::string& name, const AdjacencyGraph& graph, double sigma0 = 0.5) {
    Block b;
    b.kind = BlockKind::Bym2;
    b.name = name;
    const int n = graph.size();
    b.size = 2 * n;
    std::tie(b.structure, b.structure_rank) = scale_intrinsic(besag_structure(graph));
    b.sigma = add_hyper({name + ".log_sigma", HyperKind::LogSigma, 1.0, std::log(sigma0)});
    b.phi = add_hyper({name + ".logit_phi", HyperKind::LogitPhi, 1.0, 0.0});
    const int idx = add_block(std::move(b));
    std::vector<int> set;
    for (int k = 0; k < n; ++k) set.push_back(blocks[idx].offset + n + k);
    sum_to_zero.push_back(std::move(set));
    return idx;
  }

  /// Stationary AR(1) with unit marginal variance times sigma^2, one chain per group.
  int add_ar1(const std::string& name, int groups, int length, double sigma0 = 0.5,
              double rho0 = 0.5) {
    Block b;
    b.kind = BlockKind::Ar1;
    b.name = name;
    b.groups = groups;
    b.length = length;
    b.size = groups * length;
    b.sigma = add_hyper({name + ".log_sigma", HyperKind::LogSigma, 1.0, std::log(sigma0)});
    b.rho = add_hyper({name + ".atanh_rho", HyperKind::AtanhRho, 1.0, std::atanh(rho0)});
    return add_block(std::move(b));
  }

  void add_observation(double count, double off, const std::vector<std::pair<int, double>>& entries) {
    y.push_back(count);
    offset.push_back(off);
    A.add_row(entries);
  }

  int n_obs() const { return static_cast<int>(y.size()); }

  Eigen::VectorXd initial_theta() const {
    Eigen::VectorXd t(static_cast<Eigen::Index>(hypers.size()));
    for (std::size_t j = 0; j < hypers.size(); ++j) t(static_cast<Eigen::Index>(j)) = hypers[j].initial;
    return t;
  }

  const Block& block(const std::string& name) const {
    for (const auto& b : blocks) {
      if (b.name == name) return b;
    }
    throw PreconditionError("no latent block '" + name + "'");
  }
};

using Triplets = std::vector<Eigen::Triplet<double>>;

/// Prior precision P(theta), its derivatives dP/dtheta_j, and log det+ P with derivatives
/// (up to theta-free constants) on the constrained subspace.
struct PriorPrecision {
  Eigen::SparseMatrix<double> P;
  std::vector<Eigen::SparseMatrix<double>> dP;
  double log_det = 0.0;
  Eigen::VectorXd d_log_det;
};

inline PriorPrecision prior_precision(const LatentModel& m, const Eigen::VectorXd& theta) {
  const auto J = static_cast<std::size_t>(m.hypers.size());
  Triplets tp;
  std::vector<Triplets> td(J);
  PriorPrecision out;
  out.d_log_det = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(J));
  auto add_dense = [](Triplets& t, int off, const Eigen::MatrixXd& Q, double scale) {
    for (Eigen::Index a = 0; a < Q.rows(); ++a) {
      for (Eigen::Index b = 0; b < Q.cols(); ++b) {
        if (Q(a, b) != 0.0) t.emplace_back(off + static_cast<int>(a), off + static_cast<int>(b), scale * Q(a, b));
      }
    }
  };
  for (const auto& b : m.blocks) {
    switch (b.kind) {
      case BlockKind::Fixed:
        for (int k = 0; k < b.size; ++k) tp.emplace_back(b.offset + k, b.offset + k, b.fixed_precision(k));
        break;
      case BlockKind::Iid: {
        const double prec = std::exp(-2.0 * theta(b.sigma));
        for (int k = 0; k < b.size; ++k) {
          tp.emplace_back(b.offset + k, b.offset + k, prec);
          td[b.sigma].emplace_back(b.offset + k, b.offset + k, -2.0 * prec);
        }
        out.log_det += -2.0 * theta(b.sigma) * b.size;
        out.d_log_det(b.sigma) += -2.0 * b.size;
        break;
      }
      case BlockKind::Rw1Cyclic:
      case BlockKind::Besag: {
        const double prec = std::exp(-2.0 * theta(b.sigma));
        for (int g = 0; g < b.groups; ++g) {
          const int off = b.offset + g * static_cast<int>(b.structure.rows());
          add_dense(tp, off, b.structure, prec);
          add_dense(td[b.sigma], off, b.structure, -2.0 * prec);
        }
        const int rank = b.groups * b.structure_rank;
        out.log_det += -2.0 * theta(b.sigma) * rank;
        out.d_log_det(b.sigma) += -2.0 * rank;
        break;
      }
      case BlockKind::Ar1: {
        const double prec = std::exp(-2.0 * theta(b.sigma));
        const double rho = std::tanh(theta(b.rho));
        const double c = 1.0 / (1.0 - rho * rho);
        const double drho = 1.0 - rho * rho;  // d rho / d atanh(rho)
        // Entries of the unit-variance AR(1) precision and their rho-derivatives.
        const double end = c, mid = c * (1.0 + rho * rho), off = -c * rho;
        const double d_end = 2.0 * rho * c * c;
        const double d_mid = 2.0 * rho * c * c * (1.0 + rho * rho) + 2.0 * rho * c;
        const double d_off = -(2.0 * rho * rho * c * c + c);
        for (int g = 0; g < b.groups; ++g) {
          const int base = b.offset + g * b.length;
          for (int k = 0; k < b.length; ++k) {
            const bool edge = k == 0 || k == b.length - 1;
            const double diag = b.length == 1 ? 1.0 : (edge ? end : mid);
            const double d_diag = b.length == 1 ? 0.0 : (edge ? d_end : d_mid);
            tp.emplace_back(base + k, base + k, prec * diag);
            td[b.sigma].emplace_back(base + k, base + k, -2.0 * prec * diag);
            td[b.rho].emplace_back(base + k, base + k, prec * d_diag * drho);
            if (k + 1 < b.length) {
              for (const auto& [r, s] : {std::pair{base + k, base + k + 1}, std::pair{base + k + 1, base + k}}) {
                tp.emplace_back(r, s, prec * off);
                td[b.sigma].emplace_back(r, s, -2.0 * prec * off);
                td[b.rho].emplace_back(r, s, prec * d_off * drho);
              }
            }
          }
        }
        out.log_det += -2.0 * theta(b.sigma) * b.size -
                       b.groups * (b.length - 1) * std::log(1.0 - rho * rho);
        out.d_log_det(b.sigma) += -2.0 * b.size;
        out.d_log_det(b.rho) += 2.0 * rho * b.groups * (b.length - 1);
        break;
      }
      case BlockKind::Bym2: {
        const int n = b.size / 2;
        const double sigma = std::exp(theta(b.sigma));
        const double phi = 1.0 / (1.0 + std::exp(-theta(b.phi)));
        const double pbb = 1.0 / (sigma * sigma * (1.0 - phi));
        const double pbs = -std::sqrt(phi) / (sigma * (1.0 - phi));
        const double pss = phi / (1.0 - phi);
        const double dphi_pbb = phi / (sigma * sigma * (1.0 - phi));
        const double dphi_pbs = -(1.0 + phi) * std::sqrt(phi) / (2.0 * sigma * (1.0 - phi));
        const double dphi_pss = phi / (1.0 - phi);
        const int bo = b.offset, so = b.offset + n;
        for (int k = 0; k < n; ++k) {
          tp.emplace_back(bo + k, bo + k, pbb);
          tp.emplace_back(bo + k, so + k, pbs);
          tp.emplace_back(so + k, bo + k, pbs);
          tp.emplace_back(so + k, so + k, pss);
          td[b.sigma].emplace_back(bo + k, bo + k, -2.0 * pbb);
          td[b.sigma].emplace_back(bo + k, so + k, -pbs);
          td[b.sigma].emplace_back(so + k, bo + k, -pbs);
          td[b.phi].emplace_back(bo + k, bo + k, dphi_pbb);
          td[b.phi].emplace_back(bo + k, so + k, dphi_pbs);
          td[b.phi].emplace_back(so + k, bo + k, dphi_pbs);
          td[b.phi].emplace_back(so + k, so + k, dphi_pss);
        }
        add_dense(tp, so, b.structure, 1.0);
        out.log_det += -n * (2.0 * theta(b.sigma) + std::log(1.0 - phi));
        out.d_log_det(b.sigma) += -2.0 * n;
        out.d_log_det(b.phi) += n * phi;
        break;
      }
    }
  }
  out.P.resize(m.p, m.p);
  out.P.setFromTriplets(tp.begin(), tp.end());
  out.dP.resize(J);
  for (std::size_t j = 0; j < J; ++j) {
    out.dP[j].resize(m.p, m.p);
    out.dP[j].setFromTriplets(td[j].begin(), td[j].end());
  }
  return out;
}

/// Orthonormal basis (p x q) of {x : sum over each constraint set = 0}. Each set of size k
/// contributes k-1 Helmert columns; unconstrained coordinates keep unit columns.
inline Eigen::SparseMatrix<double> constraint_basis(const LatentModel& m) {
  std::vector<int> set_of(static_cast<std::size_t>(m.p), -1);
  for (std::size_t s = 0; s < m.sum_to_zero.size(); ++s) {
    for (const int k : m.sum_to_zero[s]) {
      if (set_of[k] >= 0) throw PreconditionError("overlapping sum-to-zero constraints");
      set_of[k] = static_cast<int>(s);
    }
  }
  Triplets t;
  int col = 0;
  std::vector<bool> done(m.sum_to_zero.size(), false);
  for (int k = 0; k < m.p; ++k) {
    const int s = set_of[k];
    if (s < 0) {
      t.emplace_back(k, col++, 1.0);
      continue;
    }
    if (done[s]) continue;
    done[s] = true;
    const auto& idx = m.sum_to_zero[s];
    for (std::size_t j = 1; j < idx.size(); ++j) {
      const double jd = static_cast<double>(j);
      const double norm = std::sqrt(jd * (jd + 1.0));
      for (std::size_t i = 0; i < j; ++i) t.emplace_back(idx[i], col, 1.0 / norm);
      t.emplace_back(idx[j], col, -jd / norm);
      ++col;
    }
  }
  Eigen::SparseMatrix<double> M(m.p, col);
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

}  // namespace distcast::latent
