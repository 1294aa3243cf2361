#pragma once

#include <cmath>
#include <limits>

#include "rrpcp/core.hpp"

namespace rrpcp::l1 {

struct SolverTolerances {
  double feasibility_tol = 1e-8;  // absolute, on the squared residual
  double optimality_tol = 1e-5;   // relative, on the weighted l1 objective
  int max_iterations = 100000;    // total Newton-step cap
};

/// min sum_{i not in excluded} |s_i|  s.t.  ||A s - b||_2^2 <= eps.
/// Entries listed in `excluded` carry zero l1 weight (they may be used freely
/// to satisfy the constraint).
struct L1Problem {
  Matrix A;
  Vector b;
  double eps = 0.0;
  IndexSet excluded;
};

struct SolverReport {
  Vector solution;
  double objective = 0.0;    // weighted l1 value
  double residual_sq = 0.0;  // ||A s - b||^2
  double eps_used = 0.0;
  int iterations = 0;  // Newton steps
  bool converged = false;
};

namespace detail {

struct BarrierWork {
  const Matrix& A;
  const Vector& b;
  double eps;
  const std::vector<int>& W;  // penalized coordinates

  double potential(const Vector& x, const Vector& u, double tau) const {
    Vector r = A * x - b;
    double fe = 0.5 * (r.squaredNorm() - eps);
    if (fe >= 0.0) return std::numeric_limits<double>::infinity();
    double val = tau * u.sum() - std::log(-fe);
    for (std::size_t k = 0; k < W.size(); ++k) {
      double f1 = u[static_cast<Eigen::Index>(k)] - x[W[k]];
      double f2 = u[static_cast<Eigen::Index>(k)] + x[W[k]];
      if (f1 <= 0.0 || f2 <= 0.0) return std::numeric_limits<double>::infinity();
      val -= std::log(f1) + std::log(f2);
    }
    return val;
  }
};

// Minimum-norm least-squares point; strictly feasible for any eps > residual.
inline Vector min_norm_start(const Matrix& A, const Vector& b) {
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(A);
  return cod.solve(b);
}

}  // namespace detail

inline SolverReport solve_bp_eq(const Matrix& A, const Vector& b, const IndexSet& excluded,
                                const SolverTolerances& tol);

/// Quadratically constrained basis pursuit via a log-barrier interior-point
/// scheme. The iterates stay strictly feasible, so a converged report always
/// satisfies its own residual budget. The problem is solved in units of
/// ||b|| (solutions of (cA, cb, c^2 eps) coincide up to the scale c).
/// eps == 0 is rerouted through the equality path.
inline SolverReport solve_bpdn(const L1Problem& prob,
                               const SolverTolerances& tol = SolverTolerances{}) {
  const Eigen::Index n = prob.A.rows();
  const Eigen::Index q = prob.A.cols();
  if (prob.b.size() != n) throw std::invalid_argument("solve_bpdn: size mismatch");
  if (prob.eps < 0.0) throw std::invalid_argument("solve_bpdn: eps must be >= 0");
  if (prob.eps == 0.0 && prob.b.norm() > 0.0)
    return solve_bp_eq(prob.A, prob.b, prob.excluded, tol);

  SolverReport rep;
  rep.eps_used = prob.eps;
  const double bnorm = prob.b.norm();
  if (bnorm == 0.0) {
    rep.solution = Vector::Zero(q);
    rep.converged = true;
    return rep;
  }

  IndexSet excl = prob.excluded;
  sort_unique(excl);
  for (int i : excl)
    if (i < 0 || i >= q) throw std::invalid_argument("solve_bpdn: excluded index out of range");
  std::vector<int> W;
  W.reserve(static_cast<std::size_t>(q) - excl.size());
  for (int i = 0; i < q; ++i)
    if (!contains(excl, i)) W.push_back(i);
  const auto p = static_cast<Eigen::Index>(W.size());

  const Vector b = prob.b / bnorm;
  double eps = prob.eps / (bnorm * bnorm);
  const Matrix& A = prob.A;

  Vector x = detail::min_norm_start(A, b);
  {
    double r0 = (A * x - b).squaredNorm();
    if (r0 >= eps) {
      if (r0 > eps + tol.feasibility_tol / (bnorm * bnorm))
        throw std::runtime_error("solve_bpdn: eps is infeasible for this (A, b)");
      // Right on the boundary; nudge the budget open by a hair so the barrier
      // has an interior to work in.
      eps = r0 * (1.0 + 1e-12) + 1e-300;
    }
  }

  if (p == 0) {
    // Nothing is penalized: any feasible point is optimal with objective 0.
    rep.solution = x * bnorm;
    rep.residual_sq = (A * rep.solution - prob.b).squaredNorm();
    rep.converged = true;
    return rep;
  }

  Vector u(p);
  {
    double xmax = 0.0;
    for (Eigen::Index k = 0; k < p; ++k) xmax = std::max(xmax, std::abs(x[W[static_cast<std::size_t>(k)]]));
    double pad = 0.10 * std::max(xmax, 1e-3);
    for (Eigen::Index k = 0; k < p; ++k)
      u[k] = 0.95 * std::abs(x[W[static_cast<std::size_t>(k)]]) + pad;
  }

  const Matrix AtA = A.transpose() * A;
  const double ncon = 2.0 * static_cast<double>(p) + 1.0;
  double tau = std::max(ncon / std::max(u.sum(), 1e-10), 1.0);
  detail::BarrierWork work{A, b, eps, W};

  int total_newton = 0;
  bool hit_cap = false;
  Matrix H(q, q);
  Vector gx(q), rhs(q);

  for (int stage = 0; stage < 60 && !hit_cap; ++stage) {
    for (int it = 0; it < 50; ++it) {
      if (++total_newton > tol.max_iterations) {
        hit_cap = true;
        break;
      }
      Vector r = A * x - b;
      double fe = 0.5 * (r.squaredNorm() - eps);
      double cq = 1.0 / (-fe);
      Vector v = A.transpose() * r;

      Vector a1(p), a2(p);
      for (Eigen::Index k = 0; k < p; ++k) {
        a1[k] = 1.0 / (u[k] - x[W[static_cast<std::size_t>(k)]]);
        a2[k] = 1.0 / (u[k] + x[W[static_cast<std::size_t>(k)]]);
      }

      gx = cq * v;
      Vector gu(p);
      for (Eigen::Index k = 0; k < p; ++k) {
        gx[W[static_cast<std::size_t>(k)]] += a1[k] - a2[k];
        gu[k] = tau - a1[k] - a2[k];
      }

      // Schur complement in x: the u-block is diagonal.
      H.noalias() = cq * AtA;
      H.noalias() += (cq * cq) * (v * v.transpose());
      rhs = -gx;
      Vector dbig(p), dcross(p);
      for (Eigen::Index k = 0; k < p; ++k) {
        double s1 = a1[k] * a1[k], s2 = a2[k] * a2[k];
        dbig[k] = s1 + s2;
        dcross[k] = s2 - s1;
        H(W[static_cast<std::size_t>(k)], W[static_cast<std::size_t>(k)]) += 4.0 * s1 * s2 / dbig[k];
        rhs[W[static_cast<std::size_t>(k)]] += dcross[k] / dbig[k] * gu[k];
      }

      Eigen::LDLT<Matrix> ldlt(H);
      Vector dx = ldlt.solve(rhs);
      if (!dx.allFinite()) {
        // Rank-deficient reduced system (many excluded coordinates); fall
        // back to a regularized solve.
        Matrix Hr = H + 1e-10 * H.diagonal().maxCoeff() * Matrix::Identity(q, q);
        dx = Hr.ldlt().solve(rhs);
        if (!dx.allFinite()) {
          hit_cap = true;
          break;
        }
      }
      Vector du(p);
      for (Eigen::Index k = 0; k < p; ++k)
        du[k] = (-gu[k] - dcross[k] * dx[W[static_cast<std::size_t>(k)]]) / dbig[k];

      // Largest step keeping the cone constraints strictly feasible.
      double smax = 1.0;
      for (Eigen::Index k = 0; k < p; ++k) {
        double dxk = dx[W[static_cast<std::size_t>(k)]];
        double den1 = dxk - du[k];
        if (den1 > 0.0) smax = std::min(smax, 0.99 * (u[k] - x[W[static_cast<std::size_t>(k)]]) / den1);
        double den2 = -dxk - du[k];
        if (den2 > 0.0) smax = std::min(smax, 0.99 * (u[k] + x[W[static_cast<std::size_t>(k)]]) / den2);
      }
      // And the quadratic boundary ||r + s A dx||^2 = eps.
      Vector Adx = A * dx;
      double aa = Adx.squaredNorm();
      double bb = 2.0 * r.dot(Adx);
      double cc = r.squaredNorm() - eps;
      if (aa > 0.0) {
        double disc = bb * bb - 4.0 * aa * cc;
        if (disc > 0.0) {
          double root = (-bb + std::sqrt(disc)) / (2.0 * aa);
          if (root > 0.0) smax = std::min(smax, 0.99 * root);
        }
      }

      double phi0 = work.potential(x, u, tau);
      double gdx = gx.dot(dx) + gu.dot(du);
      double s = smax;
      bool accepted = false;
      for (int back = 0; back < 48; ++back) {
        if (work.potential(x + s * dx, u + s * du, tau) <= phi0 + 0.01 * s * gdx) {
          accepted = true;
          break;
        }
        s *= 0.5;
      }
      if (!accepted) break;
      x += s * dx;
      u += s * du;
      if (-0.5 * gdx < 1e-10 * std::max(tau, 1.0)) break;
    }
    double obj = u.sum();
    if (ncon / tau <= std::max(0.3 * tol.optimality_tol * std::max(obj, 1e-12), 1e-13)) {
      rep.converged = !hit_cap;
      break;
    }
    tau *= 10.0;
  }

  // In the effectively-equality regime the barrier parks near the analytic
  // center of the optimal face; a basis polish (crossover) lands on the
  // exact vertex, removing the O(sqrt(eps)) objective slack.
  if (!hit_cap && eps <= 1e-9) {
    double xmax = x.cwiseAbs().maxCoeff();
    if (xmax > 0.0) {
      std::vector<int> support;
      for (int i = 0; i < q; ++i)
        if (std::abs(x[i]) > 1e-7 * xmax) support.push_back(i);
      if (static_cast<Eigen::Index>(support.size()) > n) {
        std::sort(support.begin(), support.end(),
                  [&](int a, int c) { return std::abs(x[a]) > std::abs(x[c]); });
        support.resize(static_cast<std::size_t>(n));
        std::sort(support.begin(), support.end());
      }
      Matrix As(n, static_cast<Eigen::Index>(support.size()));
      for (std::size_t j = 0; j < support.size(); ++j)
        As.col(static_cast<Eigen::Index>(j)) = A.col(support[j]);
      Eigen::CompleteOrthogonalDecomposition<Matrix> cod(As);
      Vector zs = cod.solve(b);
      if ((As * zs - b).squaredNorm() <= eps) {
        double obj_now = 0.0, obj_pol = 0.0;
        for (Eigen::Index k = 0; k < p; ++k) obj_now += std::abs(x[W[static_cast<std::size_t>(k)]]);
        Vector z = Vector::Zero(q);
        for (std::size_t j = 0; j < support.size(); ++j) z[support[j]] = zs[static_cast<Eigen::Index>(j)];
        for (Eigen::Index k = 0; k < p; ++k) obj_pol += std::abs(z[W[static_cast<std::size_t>(k)]]);
        if (obj_pol <= obj_now + 5e-4 * std::max(obj_now, 1e-6)) x = z;
      }
    }
  }

  rep.solution = x * bnorm;
  rep.iterations = total_newton;
  double objv = 0.0;
  for (int i : W) objv += std::abs(rep.solution[i]);
  rep.objective = objv;
  rep.residual_sq = (A * rep.solution - prob.b).squaredNorm();
  if (rep.residual_sq > prob.eps + tol.feasibility_tol) rep.converged = false;
  return rep;
}

/// Equality-constrained basis pursuit: min weighted l1 s.t. A u = b, realized
/// as the eps -> 0 limit of solve_bpdn with a scale-relative budget. The
/// returned eps_used records the internal budget.
inline SolverReport solve_bp_eq(const Matrix& A, const Vector& b, const IndexSet& excluded,
                                const SolverTolerances& tol) {
  L1Problem prob;
  prob.A = A;
  prob.b = b;
  prob.excluded = excluded;
  prob.eps = 1e-12 * b.squaredNorm();  // scale-relative; the crossover polish
                                       // removes the remaining slack
  return solve_bpdn(prob, tol);
}

inline SolverReport solve_bp_eq(const Matrix& A, const Vector& b) {
  return solve_bp_eq(A, b, IndexSet{}, SolverTolerances{});
}

struct RestrictedLsResult {
  Vector solution;            // zero off T
  double condition = 0.0;     // condition number of A_T (0 when T empty)
  bool ill_conditioned = false;  // cond(A_T) > 1e8
};

/// Minimum-norm least squares restricted to the columns in T; all other
/// entries are zero.
inline RestrictedLsResult restricted_least_squares(const Matrix& A, const IndexSet& T,
                                                   const Vector& b) {
  RestrictedLsResult out;
  out.solution = Vector::Zero(A.cols());
  if (T.empty()) return out;
  IndexSet Ts = T;
  sort_unique(Ts);
  Matrix AT(A.rows(), static_cast<Eigen::Index>(Ts.size()));
  for (std::size_t j = 0; j < Ts.size(); ++j) {
    if (Ts[j] < 0 || Ts[j] >= A.cols())
      throw std::invalid_argument("restricted_least_squares: index out of range");
    AT.col(static_cast<Eigen::Index>(j)) = A.col(Ts[j]);
  }
  Eigen::JacobiSVD<Matrix> svd(AT, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vector vT = svd.solve(b);
  double smax = svd.singularValues()(0);
  double smin = svd.singularValues()(svd.singularValues().size() - 1);
  out.condition = (smin > 0.0) ? smax / smin : std::numeric_limits<double>::infinity();
  out.ill_conditioned = out.condition > 1e8;
  for (std::size_t j = 0; j < Ts.size(); ++j)
    out.solution[Ts[j]] = vT[static_cast<Eigen::Index>(j)];
  return out;
}

}  // namespace rrpcp::l1
