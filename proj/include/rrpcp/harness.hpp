#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <thread>

#include "rrpcp/io.hpp"
#include "rrpcp/metrics.hpp"
#include "rrpcp/model.hpp"
#include "rrpcp/tracker.hpp"

namespace rrpcp::harness {

/// Streams one generated sequence through every selected method with
/// independent tracker states. Training happens once on the sparse-free
/// prefix; a failed frame is flagged and the run continues.
inline RunMetrics run_single(const RunConfig& cfg, std::uint64_t trial_seed) {
  cfg.validate();
  model::ScenarioConfig scen = cfg.scenario;
  scen.seed = trial_seed;
  if (scen.t0 < 2) throw std::invalid_argument("run_single: t0 must be >= 2");
  auto seq = model::generate_sequence(scen);

  Matrix training(scen.m, scen.t0);
  for (int t = 0; t < scen.t0; ++t) training.col(t) = seq.frames[static_cast<std::size_t>(t)].M;
  tracker::TrackerState initial = tracker::init_tracker(training, cfg.tracker);
  const int r0 = static_cast<int>(initial.est.P_stable.cols());

  RunMetrics out;
  out.t0 = scen.t0;
  for (Method method : cfg.methods) {
    tracker::TrackerState st = initial;
    MethodRun run;
    run.frames.reserve(static_cast<std::size_t>(scen.T_total - scen.t0));
    int prev_rank_stable = r0;
    for (int t = scen.t0 + 1; t <= scen.T_total; ++t) {
      const auto& fr = seq.frames[static_cast<std::size_t>(t - 1)];
      tracker::StepOutput step;
      auto start = std::chrono::steady_clock::now();
      switch (method) {
        case Method::nc:
          step = tracker::step_noise_canceled(fr.M, st, cfg.tracker);
          break;
        case Method::basic:
          step = tracker::step_basic(fr.M, st, cfg.tracker);
          break;
        case Method::pj:
          step = tracker::step_pj(fr.M, st, cfg.tracker);
          break;
        case Method::modcs:
          step = tracker::step_modcs(fr.M, cfg.modcs_oracle ? fr.T : IndexSet{}, st, cfg.tracker);
          break;
      }
      auto stop = std::chrono::steady_clock::now();

      FrameMetrics fm;
      fm.t = t;
      fm.percentage_error = percentage_error(fr.S, step.S_hat);
      fm.beta_sq = step.beta_sq;
      fm.beta_resid_sq = step.beta_resid_sq;
      fm.eps_used = step.eps_used;
      fm.rank_est = st.est.rank();
      fm.status = st.est.status;
      fm.support_size = static_cast<int>(step.T_hat.size());
      fm.wall_ms = std::chrono::duration<double, std::milli>(stop - start).count();
      fm.flagged = step.flagged || !step.solver_converged;
      if (std::isnan(fm.percentage_error) && fm.support_size > 0) ++run.false_positive_frames;

      int rank_stable = static_cast<int>(st.est.P_stable.cols());
      if (run.detection_frame < 0 && st.est.status == subspace::Status::detection)
        run.detection_frame = t;
      if (run.rotation_frame < 0 && st.est.status == subspace::Status::rotation)
        run.rotation_frame = t;
      if (run.merge_frame < 0 && rank_stable > prev_rank_stable) run.merge_frame = t;
      if (run.deletion_frame < 0 && rank_stable < prev_rank_stable) run.deletion_frame = t;
      prev_rank_stable = rank_stable;

      run.frames.push_back(fm);
    }
    out.methods.emplace(method, std::move(run));
  }
  return out;
}

inline int worker_count(int trials) {
  unsigned hw = std::thread::hardware_concurrency();
  int n = hw ? static_cast<int>(hw) : 1;
  if (const char* env = std::getenv("RRPCP_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return std::max(1, std::min(n, trials));
}

/// Monte Carlo over deterministic per-trial seeds derived from master_seed.
/// Frames without foreground are excluded from the error averages.
inline MonteCarloResult run_monte_carlo(const RunConfig& cfg) {
  cfg.validate();
  MonteCarloResult mc;
  mc.per_trial.resize(static_cast<std::size_t>(cfg.trials));

  std::atomic<int> next{0};
  auto work = [&] {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= cfg.trials) return;
      mc.per_trial[static_cast<std::size_t>(i)] =
          run_single(cfg, derive_seed(cfg.master_seed, static_cast<std::uint64_t>(i)));
    }
  };
  int workers = worker_count(cfg.trials);
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  for (Method method : cfg.methods) {
    const auto& first = mc.per_trial.front().methods.at(method).frames;
    std::vector<McFrameStat> stats(first.size());
    for (std::size_t k = 0; k < first.size(); ++k) {
      McFrameStat& s = stats[k];
      s.t = first[k].t;
      double sum = 0.0, sum_sq = 0.0;
      int used = 0;
      for (const auto& trial : mc.per_trial) {
        const auto& fm = trial.methods.at(method).frames[k];
        s.beta_sq_mean += fm.beta_sq;
        s.beta_resid_sq_mean += fm.beta_resid_sq;
        if (!std::isnan(fm.percentage_error)) {
          sum += fm.percentage_error;
          sum_sq += fm.percentage_error * fm.percentage_error;
          ++used;
        }
      }
      s.trials_used = used;
      s.beta_sq_mean /= static_cast<double>(cfg.trials);
      s.beta_resid_sq_mean /= static_cast<double>(cfg.trials);
      if (used > 0) {
        s.err_mean = sum / used;
        if (used > 1) {
          double var = (sum_sq - sum * sum / used) / (used - 1);
          s.err_stderr = std::sqrt(std::max(var, 0.0) / used);
        } else {
          s.err_stderr = 0.0;
        }
      }
    }
    mc.methods.emplace(method, std::move(stats));
  }
  return mc;
}

// ---------------------------------------------------------------------------
// Residual-energy curve: analytic factors against an oracle-mode Monte Carlo
// (true subspace and true backgrounds injected).
// ---------------------------------------------------------------------------

struct NoiseCurveRow {
  int dt = 0;
  double analytic_plain = 0.0;
  double analytic_canceled = 0.0;
  double empirical_plain = 0.0;
  double empirical_canceled = 0.0;
};

/// Simulates one direction appearing outside a known subspace and measures
/// mean ||beta||^2 and mean ||beta - f beta_prev||^2 (per unit of missing
/// variance) for dt = 1..dt_max after the addition.
inline std::vector<NoiseCurveRow> noise_curve(double f, double theta, int dt_max, int trials,
                                              std::uint64_t seed) {
  if (dt_max < 1 || trials < 1) throw std::invalid_argument("noise_curve: bad arguments");
  const int m = 16;
  const int r = 4;              // known stable directions
  const int new_index = r;      // direction that appears at tau
  const double sigma_new = 1.0; // unit missing variance

  model::ScenarioConfig cfg;
  cfg.m = m;
  cfg.frame_h = 4;
  cfg.frame_w = 4;
  cfg.f = f;
  cfg.f_d = 0.5 * f;
  cfg.theta = theta;
  cfg.sigma_sq.assign(static_cast<std::size_t>(m), 0.0);
  for (int i = 0; i < r; ++i) cfg.sigma_sq[static_cast<std::size_t>(i)] = 2.0;
  cfg.sigma_sq[static_cast<std::size_t>(new_index)] = sigma_new;
  cfg.k_objects = 0;
  const int tau = 4;
  IndexSet initial;
  for (int i = 0; i < r; ++i) initial.push_back(i);
  cfg.events.push_back(model::SupportEvent{1, initial, {}});
  cfg.events.push_back(model::SupportEvent{tau, {new_index}, {}});
  cfg.t0 = 0;
  cfg.T_total = tau + dt_max;

  std::vector<double> plain(static_cast<std::size_t>(dt_max) + 1, 0.0);
  std::vector<double> canceled(static_cast<std::size_t>(dt_max) + 1, 0.0);
  for (int trial = 0; trial < trials; ++trial) {
    cfg.seed = derive_seed(seed, static_cast<std::uint64_t>(trial));
    auto seq = model::generate_sequence(cfg);
    Matrix P_hat = seq.U.leftCols(r);  // exact pre-change subspace
    Matrix Pp = subspace::orth_complement(P_hat);
    Vector beta_prev;
    for (int dt = 0; dt <= dt_max; ++dt) {
      const auto& fr = seq.frames[static_cast<std::size_t>(tau + dt - 1)];
      Vector beta = Pp.transpose() * fr.L;
      if (dt >= 1) {
        plain[static_cast<std::size_t>(dt)] += beta.squaredNorm();
        canceled[static_cast<std::size_t>(dt)] += (beta - f * beta_prev).squaredNorm();
      }
      beta_prev = beta;
    }
  }

  std::vector<NoiseCurveRow> rows;
  rows.reserve(static_cast<std::size_t>(dt_max));
  for (int dt = 1; dt <= dt_max; ++dt) {
    NoiseCurveRow row;
    row.dt = dt;
    auto [ep, ec] = tracker::expected_noise_energy(Vector::Ones(1), Vector::Ones(1) * sigma_new,
                                                   theta, f, dt);
    row.analytic_plain = ep;
    row.analytic_canceled = ec;
    row.empirical_plain = plain[static_cast<std::size_t>(dt)] / trials;
    row.empirical_canceled = canceled[static_cast<std::size_t>(dt)] / trials;
    rows.push_back(row);
  }
  return rows;
}

inline void write_noise_curve_csv(std::ostream& os, const std::vector<NoiseCurveRow>& rows) {
  os << "dt,analytic_plain,analytic_canceled,empirical_plain,empirical_canceled\n";
  for (const auto& r : rows)
    os << r.dt << ',' << io::csv_double(r.analytic_plain) << ','
       << io::csv_double(r.analytic_canceled) << ',' << io::csv_double(r.empirical_plain) << ','
       << io::csv_double(r.empirical_canceled) << "\n";
}

}  // namespace rrpcp::harness
