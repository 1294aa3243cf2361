#pragma once

#include <utility>

#include "rrpcp/core.hpp"
#include "rrpcp/l1solver.hpp"
#include "rrpcp/subspace.hpp"

namespace rrpcp::tracker {

enum class EpsRule : std::uint8_t { noise_canceled, basic };

struct TrackerParams {
  double f = 0.9;
  double gamma = 2.5;  // support threshold
  EpsRule eps_rule = EpsRule::noise_canceled;
  double eps_floor = -1.0;  // non-positive selects the default 1e-6 * m
  subspace::SubspaceParams subspace;
  l1::SolverTolerances solver;

  double eps_floor_for(int m) const {
    return eps_floor > 0.0 ? eps_floor : 1e-6 * static_cast<double>(m);
  }
};

/// Per-frame output. L_hat = M - S_hat holds exactly by construction.
struct StepOutput {
  Vector S_hat, L_hat;
  IndexSet T_hat;
  double eps_used = 0.0;
  double residual_sq = 0.0;
  double beta_sq = 0.0;        // ||P_perp^T L_hat_t||^2 after the step
  double beta_resid_sq = 0.0;  // ||P_perp^T (L_hat_t - f L_hat_{t-1})||^2
  int solver_iterations = 0;
  bool solver_converged = true;
  bool flagged = false;  // non-convergence or degenerate refinement
  bool ls_ill_conditioned = false;
};

/// Streaming state. The residual projections beta_hat = P_perp^T L_hat are
/// always taken under the *current* complement basis, so they are recomputed
/// from the stored backgrounds after every subspace revision.
struct TrackerState {
  subspace::SubspaceEstimate est;
  Matrix P_perp;  // cached complement of [P_stable P_new]
  std::uint64_t perp_revision = 0;
  Vector L_hat_prev, L_hat_prev2;
  long long frames_done = 0;

  int dim() const { return static_cast<int>(P_perp.rows()); }
};

/// State from an already-estimated subspace; `L_last` / `L_second_last` seed
/// the difference history (typically the last two training frames).
inline TrackerState make_tracker(Matrix P0, Vector G0, const Vector& L_last,
                                 const Vector& L_second_last) {
  TrackerState st;
  const auto m = static_cast<int>(P0.rows());
  st.est.P_stable = std::move(P0);
  st.est.G_stable = std::move(G0);
  st.est.P_new.resize(m, 0);
  st.est.G_new.resize(0);
  st.P_perp = subspace::orth_complement(st.est.P_stable);
  st.perp_revision = st.est.revision;
  st.L_hat_prev = L_last;
  st.L_hat_prev2 = L_second_last;
  return st;
}

/// Training entry point: estimate the initial subspace from sparse-free
/// frames, then seed the streaming state with the trailing two frames.
inline TrackerState init_tracker(const Matrix& training, const TrackerParams& params) {
  auto [P0, G0] = subspace::train_initial(training, params.f, params.subspace);
  const Eigen::Index t0 = training.cols();
  return make_tracker(std::move(P0), std::move(G0), training.col(t0 - 1), training.col(t0 - 2));
}

/// Analytic residual energies after a subspace miss (per unit coupling):
///   plain:    sum_i B_ii (1 - (1-theta) f^{2 dt}) sigma_i^2
///   canceled: sum_i B_ii (1 - f^2) sigma_i^2
inline std::pair<double, double> expected_noise_energy(const Vector& B_diag,
                                                       const Vector& sigma_sq_on_delta,
                                                       double theta, double f, int dt) {
  if (dt < 1) throw std::invalid_argument("expected_noise_energy: dt must be >= 1");
  if (B_diag.size() != sigma_sq_on_delta.size())
    throw std::invalid_argument("expected_noise_energy: size mismatch");
  const double env = 1.0 - (1.0 - theta) * std::pow(f, 2.0 * dt);
  const double canc = 1.0 - f * f;
  double e_plain = 0.0, e_canceled = 0.0;
  for (Eigen::Index i = 0; i < B_diag.size(); ++i) {
    e_plain += B_diag[i] * env * sigma_sq_on_delta[i];
    e_canceled += B_diag[i] * canc * sigma_sq_on_delta[i];
  }
  return {e_plain, e_canceled};
}

namespace detail {

enum class Mode { noise_canceled, basic, modcs, pj };

inline void refresh_perp(TrackerState& st) {
  if (st.perp_revision != st.est.revision || st.P_perp.size() == 0) {
    st.P_perp = subspace::orth_complement(st.est.P_hat());
    st.perp_revision = st.est.revision;
  }
}

inline StepOutput run_step(const Vector& M_t, TrackerState& st, const TrackerParams& params,
                           Mode mode, const IndexSet& T_pred) {
  const auto m = static_cast<int>(M_t.size());
  StepOutput out;

  // Subspace update consumes differences from two frames back, so this
  // frame's recovery uses the subspace updated through t-1. The detection
  // test runs in the previous complement basis.
  Vector diff = st.L_hat_prev - params.f * st.L_hat_prev2;
  double beta_prev_sq =
      st.frames_done >= 1 ? (st.P_perp.transpose() * st.L_hat_prev).squaredNorm() : 0.0;
  st.est = subspace::update(std::move(st.est), diff, beta_prev_sq, params.subspace);
  refresh_perp(st);
  const Matrix& Pp = st.P_perp;

  // Residual projections of the stored backgrounds under the current basis.
  Vector beta_prev = st.frames_done >= 1 ? Vector(Pp.transpose() * st.L_hat_prev)
                                         : Vector(Vector::Zero(Pp.cols()));
  Vector beta_prev2 = st.frames_done >= 2 ? Vector(Pp.transpose() * st.L_hat_prev2)
                                          : Vector(Vector::Zero(Pp.cols()));

  const bool canceled = (mode == Mode::noise_canceled || mode == Mode::modcs);
  Vector raw;
  if (mode == Mode::pj) {
    Matrix P = st.est.P_hat();
    Matrix A(m, P.cols() + Pp.cols() + m);
    A << P, Pp, Matrix::Identity(m, m);
    auto rep = l1::solve_bp_eq(A, M_t, {}, params.solver);
    raw = rep.solution.tail(m);
    out.eps_used = rep.eps_used;
    out.residual_sq = rep.residual_sq;
    out.solver_iterations = rep.iterations;
    out.solver_converged = rep.converged;
  } else {
    double eps = canceled ? 2.0 * (beta_prev - params.f * beta_prev2).squaredNorm()
                          : 2.0 * beta_prev.squaredNorm();
    eps = std::max(eps, params.eps_floor_for(m));
    l1::L1Problem prob;
    prob.A = Pp.transpose();
    prob.b = canceled ? Vector(Pp.transpose() * (M_t - params.f * st.L_hat_prev))
                      : Vector(Pp.transpose() * M_t);
    prob.eps = eps;
    if (mode == Mode::modcs) prob.excluded = T_pred;
    auto rep = l1::solve_bpdn(prob, params.solver);
    raw = rep.solution;
    out.eps_used = eps;
    out.residual_sq = rep.residual_sq;
    out.solver_iterations = rep.iterations;
    out.solver_converged = rep.converged;
  }

  if (!out.solver_converged) {
    // Keep the pipeline alive: emit the unrefined solve and flag the frame.
    out.flagged = true;
    out.S_hat = raw;
    for (int i = 0; i < m; ++i)
      if (out.S_hat[i] != 0.0) out.T_hat.push_back(i);
  } else {
    for (int i = 0; i < m; ++i)
      if (std::abs(raw[i]) >= params.gamma) out.T_hat.push_back(i);
    // Least-squares refinement on the thresholded support. The noise-canceled
    // variants refine against the canceled measurement, the others against
    // the plain projection.
    Vector b_ls = canceled ? Vector(Pp.transpose() * (M_t - params.f * st.L_hat_prev))
                           : Vector(Pp.transpose() * M_t);
    auto ls = l1::restricted_least_squares(Pp.transpose(), out.T_hat, b_ls);
    out.S_hat = ls.solution;
    out.ls_ill_conditioned = ls.ill_conditioned;
    if (static_cast<int>(out.T_hat.size()) > static_cast<int>(Pp.cols())) out.flagged = true;
  }

  out.L_hat = M_t - out.S_hat;

  // Diagnostics and history roll.
  out.beta_sq = (Pp.transpose() * out.L_hat).squaredNorm();
  out.beta_resid_sq = (Pp.transpose() * (out.L_hat - params.f * st.L_hat_prev)).squaredNorm();
  st.L_hat_prev2 = std::move(st.L_hat_prev);
  st.L_hat_prev = out.L_hat;
  ++st.frames_done;
  return out;
}

}  // namespace detail

inline StepOutput step_noise_canceled(const Vector& M_t, TrackerState& st,
                                      const TrackerParams& params) {
  return detail::run_step(M_t, st, params, detail::Mode::noise_canceled, {});
}

inline StepOutput step_basic(const Vector& M_t, TrackerState& st, const TrackerParams& params) {
  return detail::run_step(M_t, st, params, detail::Mode::basic, {});
}

/// Weighted variant: entries of T_pred carry no l1 penalty. Prediction of
/// T_pred is the caller's business.
inline StepOutput step_modcs(const Vector& M_t, const IndexSet& T_pred, TrackerState& st,
                             const TrackerParams& params) {
  return detail::run_step(M_t, st, params, detail::Mode::modcs, T_pred);
}

/// Baseline: equality-constrained l1 over the stacked dictionary
/// [P_hat P_perp I]; the sparse part is the trailing m entries, then the same
/// refinement stage as the other methods.
inline StepOutput step_pj(const Vector& M_t, TrackerState& st, const TrackerParams& params) {
  return detail::run_step(M_t, st, params, detail::Mode::pj, {});
}

}  // namespace rrpcp::tracker
