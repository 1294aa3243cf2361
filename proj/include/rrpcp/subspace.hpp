#pragma once

#include <cmath>
#include <deque>

#include "rrpcp/core.hpp"

namespace rrpcp::subspace {

enum class Status : std::uint8_t { stable, detection, rotation };

inline const char* status_name(Status s) {
  switch (s) {
    case Status::stable: return "stable";
    case Status::detection: return "detection";
    case Status::rotation: return "rotation";
  }
  return "?";
}

struct SubspaceParams {
  double f = 0.9;
  // Detection threshold on ||beta||^2. Non-positive selects the
  // self-calibrating rule: 3 x running median of the last 50 stable-frame
  // energies, floored at 1e-6.
  double delta = -1.0;
  int tau_d = 20;    // detection buffer length
  int tau_r = 20;    // rotation buffer length
  int tau_del = 20;  // deletion buffer length
  // Eigenvalue thresholds, as fractions of trace(G_stable).
  double xi_d = 1e-3;
  double xi_r = 1e-3;
  // Rotation-convergence test on the restricted rotation matrix.
  double identity_diag_min = 0.9999;
  double identity_offdiag_max = 0.01;
  double delete_frac = 0.05;       // deletion variance fraction
  double train_eig_frac = 1e-6;    // training eigenvalue cutoff (of largest)
};

/// Estimated principal directions split into a stable block and a block of
/// new directions still being rotated in. All variances (G) live in the
/// difference domain, i.e. they are variances of L_t - f L_{t-1}, which is
/// what training, detection, rotation and deletion all consume.
struct SubspaceEstimate {
  Matrix P_stable;  // m x r_s, orthonormal
  Vector G_stable;  // r_s difference-domain variances
  Matrix P_new;     // m x r_n, orthonormal, orthogonal to P_stable
  Vector G_new;
  Status status = Status::stable;
  std::deque<Vector> D;      // difference buffer for detection/rotation
  std::deque<Vector> D_del;  // difference buffer for deletion checks
  int l = 0;                 // accumulated frame count for rotation averaging

  // Bumped whenever span([P_stable P_new]) changes, so callers can refresh
  // cached complements.
  std::uint64_t revision = 0;
  // Recent stable-frame residual energies, feeding the self-calibrating
  // detection threshold.
  std::deque<double> beta_window;

  int dim() const { return static_cast<int>(P_stable.rows()); }
  int rank() const {
    return static_cast<int>(P_stable.cols() + (P_new.size() ? P_new.cols() : 0));
  }

  Matrix P_hat() const {
    if (P_new.size() == 0) return P_stable;
    Matrix P(P_stable.rows(), P_stable.cols() + P_new.cols());
    P << P_stable, P_new;
    return P;
  }
};

namespace detail {

inline Matrix buffer_matrix(const std::deque<Vector>& buf, int m) {
  Matrix D(m, static_cast<Eigen::Index>(buf.size()));
  for (std::size_t j = 0; j < buf.size(); ++j) D.col(static_cast<Eigen::Index>(j)) = buf[j];
  return D;
}

inline double window_median(const std::deque<double>& w) {
  if (w.empty()) return 0.0;
  std::vector<double> tmp(w.begin(), w.end());
  auto mid = tmp.begin() + static_cast<std::ptrdiff_t>(tmp.size() / 2);
  std::nth_element(tmp.begin(), mid, tmp.end());
  return *mid;
}

inline double detection_threshold(const SubspaceEstimate& est, const SubspaceParams& p) {
  if (p.delta > 0.0) return p.delta;
  return std::max(3.0 * window_median(est.beta_window), 1e-6);
}

// EVD with eigenvalues in decreasing order.
inline void evd_desc(const Matrix& C, Matrix& vecs, Vector& vals) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(C);
  const Eigen::Index n = C.rows();
  vecs.resize(n, n);
  vals.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    vecs.col(j) = es.eigenvectors().col(n - 1 - j);
    vals[j] = es.eigenvalues()[n - 1 - j];
  }
}

}  // namespace detail

/// Initial principal directions from sparse-free training frames: EVD of the
/// sample covariance of the serially uncorrelated differences L_t - f L_{t-1},
/// keeping eigenvalues above train_eig_frac of the largest.
inline std::pair<Matrix, Vector> train_initial(const Matrix& L_frames, double f,
                                               const SubspaceParams& params) {
  const Eigen::Index m = L_frames.rows();
  const Eigen::Index t0 = L_frames.cols();
  if (t0 < 2) throw std::invalid_argument("train_initial: need at least 2 frames");
  Matrix Dm(m, t0 - 1);
  for (Eigen::Index t = 1; t < t0; ++t) Dm.col(t - 1) = L_frames.col(t) - f * L_frames.col(t - 1);
  Matrix C = (Dm * Dm.transpose()) / static_cast<double>(t0 - 1);
  Matrix vecs;
  Vector vals;
  detail::evd_desc(C, vecs, vals);
  double lmax = vals.size() ? std::max(vals[0], 0.0) : 0.0;
  if (lmax <= 0.0) return {Matrix(m, 0), Vector(0)};
  Eigen::Index r = 0;
  while (r < vals.size() && vals[r] > params.train_eig_frac * lmax) ++r;
  return {vecs.leftCols(r), vals.head(r)};
}

/// Orthonormal basis of the null space of P^T via QR: the trailing m-r
/// columns of the full Q factor. Only the projector Q Q^T is contractual.
inline Matrix orth_complement(const Matrix& P) {
  const Eigen::Index m = P.rows();
  const Eigen::Index r = P.cols();
  if (r >= m) throw std::invalid_argument("orth_complement: r must be < m");
  if (r == 0) return Matrix::Identity(m, m);
  if (((P.transpose() * P) - Matrix::Identity(r, r)).cwiseAbs().maxCoeff() > 1e-8)
    throw std::invalid_argument("orth_complement: P is not orthonormal");
  Eigen::HouseholderQR<Matrix> qr(P);
  Matrix Q = qr.householderQ() * Matrix::Identity(m, m);
  return Q.rightCols(m - r);
}

/// Step 1a: while stable, compare the previous residual energy against the
/// detection threshold; on a hit, switch to detection and start buffering.
/// Quiet frames feed the running-median window instead.
inline SubspaceEstimate detect_trigger(SubspaceEstimate est, const Vector& diff,
                                       double beta_prev_sq, const SubspaceParams& params) {
  if (est.status != Status::stable)
    throw std::logic_error("detect_trigger: status must be stable");
  if (beta_prev_sq > detail::detection_threshold(est, params)) {
    est.status = Status::detection;
    est.D.clear();
    est.D.push_back(diff);
  } else {
    est.beta_window.push_back(beta_prev_sq);
    while (est.beta_window.size() > 50) est.beta_window.pop_front();
  }
  return est;
}

/// Step 1b: with a full detection buffer, eigen-decompose the sample
/// covariance of the residual differences (I - P_s P_s^T) D and keep
/// directions whose variance clears xi_d * trace(G_stable).
inline SubspaceEstimate detect_new_directions(SubspaceEstimate est, const SubspaceParams& params) {
  if (est.status != Status::detection)
    throw std::logic_error("detect_new_directions: status must be detection");
  const int m = est.dim();
  Matrix D = detail::buffer_matrix(est.D, m);
  Matrix K = D - est.P_stable * (est.P_stable.transpose() * D);
  Matrix C = (K * K.transpose()) / static_cast<double>(params.tau_d);
  Matrix vecs;
  Vector vals;
  detail::evd_desc(C, vecs, vals);
  const double scale = est.G_stable.size() ? est.G_stable.sum() : 1.0;
  Eigen::Index keep = 0;
  while (keep < vals.size() && vals[keep] > params.xi_d * scale) ++keep;
  est.D.clear();
  if (keep == 0) {
    est.P_new.resize(m, 0);
    est.G_new.resize(0);
    est.status = Status::stable;
    est.l = 0;
  } else {
    est.P_new = vecs.leftCols(keep);
    est.G_new = vals.head(keep);
    est.status = Status::rotation;
    est.l = params.tau_d;
    ++est.revision;
  }
  return est;
}

/// Step 1c: rotate the new block against a fresh buffer, prune directions
/// whose variance fell below xi_r * trace(G_stable), and merge into the
/// stable block once the restricted rotation is close enough to an identity.
inline SubspaceEstimate rotate_new_directions(SubspaceEstimate est, const SubspaceParams& params) {
  if (est.status != Status::rotation)
    throw std::logic_error("rotate_new_directions: status must be rotation");
  const int m = est.dim();
  Matrix D = detail::buffer_matrix(est.D, m);
  Matrix K = est.P_new.transpose() * D;
  Matrix C = (static_cast<double>(est.l) * Matrix(est.G_new.asDiagonal()) + K * K.transpose()) /
             static_cast<double>(est.l + params.tau_r);
  Matrix rot;
  Vector vals;
  detail::evd_desc(C, rot, vals);
  const double scale = est.G_stable.size() ? est.G_stable.sum() : 1.0;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < vals.size(); ++j)
    if (vals[j] > params.xi_r * scale) keep.push_back(j);
  est.D.clear();
  ++est.revision;

  if (keep.empty()) {
    est.P_new.resize(m, 0);
    est.G_new.resize(0);
    est.status = Status::stable;
    est.l = 0;
    return est;
  }

  // Convergence test on the surviving block of the rotation matrix; signs of
  // eigenvectors are arbitrary, so compare magnitudes.
  bool identity_like = true;
  for (std::size_t a = 0; a < keep.size() && identity_like; ++a)
    for (std::size_t c = 0; c < keep.size(); ++c) {
      double v = std::abs(rot(keep[a], keep[c]));
      if (a == c ? v < params.identity_diag_min : v > params.identity_offdiag_max) {
        identity_like = false;
        break;
      }
    }

  Matrix Pn(m, static_cast<Eigen::Index>(keep.size()));
  Vector Gn(static_cast<Eigen::Index>(keep.size()));
  Matrix rotated = est.P_new * rot;
  for (std::size_t j = 0; j < keep.size(); ++j) {
    Pn.col(static_cast<Eigen::Index>(j)) = rotated.col(keep[j]);
    Gn[static_cast<Eigen::Index>(j)] = vals[keep[j]];
  }

  if (identity_like) {
    // Merge; one thin QR pass restores orthonormality of the joint basis.
    Matrix P(m, est.P_stable.cols() + Pn.cols());
    P << est.P_stable, Pn;
    Eigen::HouseholderQR<Matrix> qr(P);
    Matrix Q = qr.householderQ() * Matrix::Identity(m, P.cols());
    Matrix R = qr.matrixQR().topRows(P.cols()).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < Q.cols(); ++j)
      if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
    est.P_stable = Q;
    Vector G(est.G_stable.size() + Gn.size());
    G << est.G_stable, Gn;
    est.G_stable = G;
    est.P_new.resize(m, 0);
    est.G_new.resize(0);
    est.status = Status::stable;
    est.l = 0;
  } else {
    est.P_new = Pn;
    est.G_new = Gn;
    est.l += params.tau_d;
  }
  return est;
}

/// Step 2: drop stable directions whose variance over the deletion buffer
/// fell below delete_frac of their bookkept level.
inline SubspaceEstimate remove_decayed(SubspaceEstimate est, const SubspaceParams& params) {
  const int m = est.dim();
  Matrix D = detail::buffer_matrix(est.D_del, m);
  Matrix proj = est.P_stable.transpose() * D;  // r_s x tau_del
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < est.P_stable.cols(); ++i) {
    double v = proj.row(i).squaredNorm() / static_cast<double>(params.tau_del);
    if (v >= params.delete_frac * est.G_stable[i]) keep.push_back(i);
  }
  est.D_del.clear();
  if (keep.size() == static_cast<std::size_t>(est.P_stable.cols())) return est;
  Matrix P(m, static_cast<Eigen::Index>(keep.size()));
  Vector G(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    P.col(static_cast<Eigen::Index>(j)) = est.P_stable.col(keep[j]);
    G[static_cast<Eigen::Index>(j)] = est.G_stable[keep[j]];
  }
  est.P_stable = P;
  est.G_stable = G;
  ++est.revision;
  return est;
}

/// One full update: route by status (trigger / detect / rotate), then run the
/// deletion check. `diff` is the newest background difference
/// L_hat_{t-1} - f L_hat_{t-2}; `beta_prev_sq` the previous residual energy.
inline SubspaceEstimate update(SubspaceEstimate est, const Vector& diff, double beta_prev_sq,
                               const SubspaceParams& params) {
  switch (est.status) {
    case Status::stable:
      est = detect_trigger(std::move(est), diff, beta_prev_sq, params);
      break;
    case Status::detection:
      if (static_cast<int>(est.D.size()) < params.tau_d) est.D.push_back(diff);
      if (static_cast<int>(est.D.size()) == params.tau_d)
        est = detect_new_directions(std::move(est), params);
      break;
    case Status::rotation:
      if (static_cast<int>(est.D.size()) < params.tau_r) est.D.push_back(diff);
      if (static_cast<int>(est.D.size()) == params.tau_r)
        est = rotate_new_directions(std::move(est), params);
      break;
  }
  est.D_del.push_back(diff);
  if (static_cast<int>(est.D_del.size()) >= params.tau_del)
    est = remove_decayed(std::move(est), params);
  return est;
}

}  // namespace rrpcp::subspace
