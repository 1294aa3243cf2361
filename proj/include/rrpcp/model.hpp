#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "rrpcp/core.hpp"

namespace rrpcp::model {

/// One support-change event: at frame `time`, the indices in `add` enter the
/// latent support with a small initial variance, and the indices in `del`
/// begin to decay geometrically (and never come back).
struct SupportEvent {
  int time = 0;
  IndexSet add;
  IndexSet del;
};

/// Full generative description of a synthetic sequence. Indices are 0-based.
struct ScenarioConfig {
  int m = 0;        // ambient dimension (pixels per frame)
  int frame_h = 0;  // frame geometry, frame_h * frame_w == m
  int frame_w = 0;
  double f = 0.9;      // AR coefficient, 0 < f_d < f < 1
  double f_d = 0.1;    // decay coefficient
  double theta = 0.4;  // initial-variance fraction, in (0,1)
  std::vector<double> sigma_sq;  // length m, nonnegative, non-increasing
  std::vector<SupportEvent> events;
  int t0 = 0;       // training length (frames with no sparse part)
  int T_total = 0;  // total frames
  int k_objects = 1;
  double magnitude = 5.0;  // foreground pixel value
  double p_stay = 0.8;     // probability an object stays put
  std::uint64_t seed = 0;

  void validate() const;
};

enum class IndexPhase : std::uint8_t { absent, transient, stable, decaying };

/// Latent AR-1 state x_t together with per-index phase bookkeeping.
/// The support N_t is the set of non-absent indices; decaying indices stay in
/// the support while they shrink toward zero.
struct LatentState {
  Vector x;
  std::vector<IndexPhase> phase;
  std::vector<int> phase_since;  // frame at which the current phase began

  static LatentState zero(int m) {
    LatentState s;
    s.x = Vector::Zero(m);
    s.phase.assign(static_cast<std::size_t>(m), IndexPhase::absent);
    s.phase_since.assign(static_cast<std::size_t>(m), 0);
    return s;
  }

  IndexSet support() const {
    IndexSet n;
    for (int i = 0; i < x.size(); ++i)
      if (phase[static_cast<std::size_t>(i)] != IndexPhase::absent) n.push_back(i);
    return n;
  }

  IndexSet decaying_set() const {
    IndexSet d;
    for (int i = 0; i < x.size(); ++i)
      if (phase[static_cast<std::size_t>(i)] == IndexPhase::decaying) d.push_back(i);
    return d;
  }
};

/// Foreground object positions. Each object covers a 3x3 pixel block centered
/// at (row, col); centers are kept one pixel away from the frame border so the
/// block always fits.
struct SceneState {
  std::vector<std::pair<int, int>> centers;  // (row, col) per object
};

/// Per-frame ground truth: M = L + S exactly, supp(S) = T.
struct FrameRecord {
  int t = 0;
  Vector M, L, S;
  IndexSet N;  // latent support (including decaying indices)
  IndexSet T;  // foreground support
};

inline void ScenarioConfig::validate() const {
  if (m < 1) throw std::invalid_argument("scenario: m must be >= 1");
  if (frame_h * frame_w != m)
    throw std::invalid_argument("scenario: frame_h*frame_w must equal m");
  if (!(0.0 < f_d && f_d < f && f < 1.0))
    throw std::invalid_argument("scenario: need 0 < f_d < f < 1");
  if (!(0.0 < theta && theta < 1.0))
    throw std::invalid_argument("scenario: need 0 < theta < 1");
  if (!(0.0 <= p_stay && p_stay <= 1.0))
    throw std::invalid_argument("scenario: need 0 <= p_stay <= 1");
  if (static_cast<int>(sigma_sq.size()) != m)
    throw std::invalid_argument("scenario: sigma_sq must have length m");
  for (std::size_t i = 0; i < sigma_sq.size(); ++i) {
    if (sigma_sq[i] < 0.0)
      throw std::invalid_argument("scenario: sigma_sq must be nonnegative");
    if (i > 0 && sigma_sq[i] > sigma_sq[i - 1])
      throw std::invalid_argument("scenario: sigma_sq must be non-increasing");
  }
  if (T_total < t0) throw std::invalid_argument("scenario: T_total must be >= t0");

  // Replay the event schedule: adds must be fresh, deletes must target live
  // indices, and a deleted index must never reappear.
  std::vector<IndexPhase> ph(static_cast<std::size_t>(m), IndexPhase::absent);
  int prev_time = 0;
  for (const auto& ev : events) {
    if (ev.time < 1 || ev.time > T_total)
      throw std::invalid_argument("scenario: event time out of range");
    if (ev.time < prev_time)
      throw std::invalid_argument("scenario: events must be time-ordered");
    prev_time = ev.time;
    IndexSet add = ev.add, del = ev.del;
    sort_unique(add);
    sort_unique(del);
    if (add.size() != ev.add.size() || del.size() != ev.del.size())
      throw std::invalid_argument("scenario: duplicate indices in event");
    if (!disjoint(add, del))
      throw std::invalid_argument("scenario: event add/delete sets overlap");
    for (int i : add) {
      if (i < 0 || i >= m) throw std::invalid_argument("scenario: event index out of range");
      if (ph[static_cast<std::size_t>(i)] == IndexPhase::decaying)
        throw std::invalid_argument("scenario: deleted index re-added");
      if (ph[static_cast<std::size_t>(i)] != IndexPhase::absent)
        throw std::invalid_argument("scenario: added index already in support");
      ph[static_cast<std::size_t>(i)] = IndexPhase::stable;
    }
    for (int i : del) {
      if (i < 0 || i >= m) throw std::invalid_argument("scenario: event index out of range");
      if (ph[static_cast<std::size_t>(i)] != IndexPhase::stable)
        throw std::invalid_argument("scenario: delete targets index not in support");
      ph[static_cast<std::size_t>(i)] = IndexPhase::decaying;
    }
  }
}

/// Builds the periodic schedule variant: batch j is applied at
/// `start + j*period`.
inline std::vector<SupportEvent> periodic_schedule(
    int start, int period, const std::vector<std::pair<IndexSet, IndexSet>>& batches) {
  std::vector<SupportEvent> evs;
  evs.reserve(batches.size());
  int t = start;
  for (const auto& [add, del] : batches) {
    evs.push_back(SupportEvent{t, add, del});
    t += period;
  }
  return evs;
}

/// Random orthonormal mixing matrix: QR of an i.i.d. standard-normal matrix
/// with the positive-diagonal sign convention, so the draw is unique per seed
/// and the columns are generic (spread out).
inline Matrix build_mixing_matrix(int m, std::uint64_t seed) {
  if (m < 1) throw std::invalid_argument("build_mixing_matrix: m must be >= 1");
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix G(m, m);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i) G(i, j) = gauss(rng);
  Eigen::HouseholderQR<Matrix> qr(G);
  Matrix U = qr.householderQ() * Matrix::Identity(m, m);
  Matrix R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < m; ++j)
    if (R(j, j) < 0.0) U.col(j) = -U.col(j);
  return U;
}

/// Per-index AR transition for one frame. `decaying` is the cumulative decay
/// set before this frame's event is applied.
///   added index      -> (0,   theta * sigma^2)
///   existing index   -> (f,   (1 - f^2) * sigma^2)
///   decaying index   -> (f_d, 0)
///   outside support  -> (0,   0)
inline void assemble_transition(const IndexSet& support_prev, const IndexSet& decaying_prev,
                                const std::optional<SupportEvent>& event,
                                const ScenarioConfig& cfg, Vector& F_diag, Vector& Q_diag) {
  F_diag = Vector::Zero(cfg.m);
  Q_diag = Vector::Zero(cfg.m);
  IndexSet add, del;
  if (event) {
    add = event->add;
    del = event->del;
    sort_unique(add);
    sort_unique(del);
    if (!disjoint(add, del))
      throw std::invalid_argument("assemble_transition: add/delete sets overlap");
    if (!disjoint(add, support_prev))
      throw std::invalid_argument("assemble_transition: added index already in support");
  }
  const double q_stable = 1.0 - cfg.f * cfg.f;
  for (int i : support_prev) {
    if (contains(decaying_prev, i) || contains(del, i)) {
      F_diag[i] = cfg.f_d;  // Q stays 0: decaying indices get no fresh noise
    } else {
      F_diag[i] = cfg.f;
      Q_diag[i] = q_stable * cfg.sigma_sq[static_cast<std::size_t>(i)];
    }
  }
  for (int i : add) Q_diag[i] = cfg.theta * cfg.sigma_sq[static_cast<std::size_t>(i)];
}

/// x_t = F x_{t-1} + nu,  nu_i ~ N(0, Q_i) independently. Draws are made only
/// for indices with Q_i > 0, in ascending index order, so a fixed seed yields
/// a fixed sequence.
inline LatentState latent_step(const LatentState& prev, const Vector& F_diag,
                               const Vector& Q_diag, Rng& rng,
                               const std::optional<SupportEvent>& event, int t,
                               const ScenarioConfig& cfg) {
  LatentState next = prev;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < prev.x.size(); ++i) {
    double v = F_diag[i] * prev.x[i];
    if (Q_diag[i] > 0.0) v += std::sqrt(Q_diag[i]) * gauss(rng);
    next.x[i] = v;
  }
  if (event) {
    for (int i : event->add) {
      next.phase[static_cast<std::size_t>(i)] = IndexPhase::transient;
      next.phase_since[static_cast<std::size_t>(i)] = t;
    }
    for (int i : event->del) {
      next.phase[static_cast<std::size_t>(i)] = IndexPhase::decaying;
      next.phase_since[static_cast<std::size_t>(i)] = t;
    }
  }
  // Transient -> stable is bookkeeping only; the dynamics already coincide
  // with the stable recursion one frame after the addition.
  for (int i = 0; i < prev.x.size(); ++i) {
    auto idx = static_cast<std::size_t>(i);
    if (next.phase[idx] == IndexPhase::transient) {
      int dt = t - next.phase_since[idx];
      double env = 1.0 - (1.0 - cfg.theta) * std::pow(cfg.f, 2.0 * dt);
      if (env > 0.99) next.phase[idx] = IndexPhase::stable;
    }
  }
  return next;
}

/// Variance multiplier relative to the stable level sigma_i^2.
///   added:    1 - (1-theta) f^{2 dt}
///   decaying: f_d^{2 dt}
enum class EnvelopeKind { added, decaying };

inline double variance_envelope(EnvelopeKind kind, int dt, const ScenarioConfig& cfg) {
  if (dt < 0) throw std::invalid_argument("variance_envelope: dt must be >= 0");
  if (kind == EnvelopeKind::added)
    return 1.0 - (1.0 - cfg.theta) * std::pow(cfg.f, 2.0 * dt);
  return std::pow(cfg.f_d, 2.0 * dt);
}

namespace detail {

inline bool center_valid(int r, int c, const ScenarioConfig& cfg) {
  return r >= 1 && r <= cfg.frame_h - 2 && c >= 1 && c <= cfg.frame_w - 2;
}

inline void rasterize(const SceneState& scene, const ScenarioConfig& cfg, Vector& S,
                      IndexSet& support) {
  S = Vector::Zero(cfg.m);
  support.clear();
  for (const auto& [r, c] : scene.centers) {
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        int idx = (r + dr) * cfg.frame_w + (c + dc);
        if (S[idx] == 0.0) support.push_back(idx);
        S[idx] = cfg.magnitude;  // overlapping blocks do not sum
      }
  }
  sort_unique(support);
}

}  // namespace detail

inline SceneState random_scene(const ScenarioConfig& cfg, Rng& rng) {
  if (cfg.frame_h < 3 || cfg.frame_w < 3)
    throw std::invalid_argument("scene: frame must be at least 3x3");
  std::uniform_int_distribution<int> row(1, cfg.frame_h - 2);
  std::uniform_int_distribution<int> col(1, cfg.frame_w - 2);
  SceneState scene;
  scene.centers.reserve(static_cast<std::size_t>(cfg.k_objects));
  for (int k = 0; k < cfg.k_objects; ++k) scene.centers.emplace_back(row(rng), col(rng));
  return scene;
}

/// One step of the object motion kernel: each center stays with probability
/// p_stay or moves one pixel in one of four directions with probability
/// (1-p_stay)/4 each. A move that would push the 3x3 block outside the frame
/// is rejected and the object stays.
inline SceneState sparse_step(const SceneState& prev, const ScenarioConfig& cfg, Rng& rng,
                              Vector& S, IndexSet& support) {
  static constexpr int kDr[4] = {1, -1, 0, 0};
  static constexpr int kDc[4] = {0, 0, 1, -1};
  SceneState next = prev;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (auto& [r, c] : next.centers) {
    double u = unif(rng);
    if (u >= cfg.p_stay) {
      int dir = static_cast<int>((u - cfg.p_stay) / ((1.0 - cfg.p_stay) / 4.0));
      dir = std::min(dir, 3);
      int nr = r + kDr[dir], nc = c + kDc[dir];
      if (detail::center_valid(nr, nc, cfg)) {
        r = nr;
        c = nc;
      }
    }
  }
  detail::rasterize(next, cfg, S, support);
  return next;
}

struct SequenceData {
  Matrix U;  // mixing matrix
  std::vector<FrameRecord> frames;
  std::vector<SupportEvent> applied_events;
};

/// Generates the full sequence M_t = L_t + S_t with ground truth retained.
/// L_t = U x_t with x following the event-driven AR model; S_t = 0 for
/// t <= t0 and moving 3x3 blocks afterwards. Deterministic per (cfg, seed):
/// the mixing matrix, latent noise, and object motion use three independent
/// sub-streams of cfg.seed.
inline SequenceData generate_sequence(const ScenarioConfig& cfg) {
  cfg.validate();
  SequenceData out;
  out.U = build_mixing_matrix(cfg.m, derive_seed(cfg.seed, 0x11));
  Rng latent_rng(derive_seed(cfg.seed, 0x22));
  Rng scene_rng(derive_seed(cfg.seed, 0x33));

  LatentState state = LatentState::zero(cfg.m);
  SceneState scene;
  bool scene_live = false;
  std::size_t next_event = 0;

  out.frames.reserve(static_cast<std::size_t>(cfg.T_total));
  Vector F_diag, Q_diag, S;
  IndexSet T;
  for (int t = 1; t <= cfg.T_total; ++t) {
    std::optional<SupportEvent> ev;
    if (next_event < cfg.events.size() && cfg.events[next_event].time == t) {
      ev = cfg.events[next_event];
      out.applied_events.push_back(*ev);
      ++next_event;
    }
    assemble_transition(state.support(), state.decaying_set(), ev, cfg, F_diag, Q_diag);
    state = latent_step(state, F_diag, Q_diag, latent_rng, ev, t, cfg);

    FrameRecord rec;
    rec.t = t;
    rec.L = out.U * state.x;
    rec.N = state.support();
    if (t <= cfg.t0 || cfg.k_objects == 0) {
      rec.S = Vector::Zero(cfg.m);
    } else if (!scene_live) {
      scene = random_scene(cfg, scene_rng);
      detail::rasterize(scene, cfg, rec.S, T);
      rec.T = T;
      scene_live = true;
    } else {
      scene = sparse_step(scene, cfg, scene_rng, rec.S, T);
      rec.T = T;
    }
    rec.M = rec.L + rec.S;
    out.frames.push_back(std::move(rec));
  }
  return out;
}

}  // namespace rrpcp::model
