// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Criteria 5 and 6 share one Monte Carlo run; run with explicit
// criterion numbers as arguments to execute a subset.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>
#include <vector>

#include "rrpcp/harness.hpp"
#include "rrpcp/io.hpp"
#include "rrpcp/testing/lp_oracle.hpp"
#include "rrpcp/testing/validate.hpp"

#ifndef RRPCP_CONFIG_DIR
#define RRPCP_CONFIG_DIR "configs"
#endif

using namespace rrpcp;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double elapsed_s(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// --------------------------------------------------------------------------
// 1. Residual-energy ratios in oracle mode at dt = 1.
// --------------------------------------------------------------------------
void criterion_1() {
  auto start = std::chrono::steady_clock::now();
  auto rows = harness::noise_curve(0.9, 0.4, 1, 20000, 20250810);
  double plain = rows[0].empirical_plain;
  double canceled = rows[0].empirical_canceled;
  bool pass = std::abs(plain - 0.514) <= 0.03 && std::abs(canceled - 0.19) <= 0.02;
  std::ostringstream ss;
  ss << "noise energies at dt=1: plain " << plain << " (target 0.514 +- 0.03), canceled "
     << canceled << " (target 0.19 +- 0.02), " << elapsed_s(start) << " s";
  report(1, pass, ss.str());
}

// --------------------------------------------------------------------------
// 2. Generator variance envelopes across seeds.
// --------------------------------------------------------------------------
void criterion_2() {
  auto start = std::chrono::steady_clock::now();
  model::ScenarioConfig base;
  base.m = 4;
  base.frame_h = 2;
  base.frame_w = 2;
  base.f = 0.9;
  base.f_d = 0.1;
  base.theta = 0.4;
  base.sigma_sq = {25.0, 16.0, 9.0, 0.0};
  base.k_objects = 0;
  base.t0 = 0;
  const int tau_add = 40;   // index 2 appears here
  const int tau_del = 40;   // index 1 starts decaying here (stationary by then)
  base.T_total = tau_add + 21;
  base.events.push_back(model::SupportEvent{1, {0, 1}, {}});
  base.events.push_back(model::SupportEvent{tau_add, {2}, {1}});

  const int n_seeds = 10000;
  const std::vector<int> add_dts{0, 1, 5, 20};
  const std::vector<int> del_dts{1, 2};
  std::vector<double> add_sum(add_dts.size(), 0.0), add_sq(add_dts.size(), 0.0);
  std::vector<double> del_sum(del_dts.size(), 0.0), del_sq(del_dts.size(), 0.0);
  double del0_sum = 0.0, del0_sq = 0.0;

  for (int s = 0; s < n_seeds; ++s) {
    base.seed = derive_seed(77, static_cast<std::uint64_t>(s));
    auto seq = model::generate_sequence(base);
    for (std::size_t k = 0; k < add_dts.size(); ++k) {
      double x =
          seq.U.col(2).dot(seq.frames[static_cast<std::size_t>(tau_add + add_dts[k] - 1)].L);
      add_sum[k] += x;
      add_sq[k] += x * x;
    }
    // Decay anchor: the last frame before the decaying transition applies.
    double x0 = seq.U.col(1).dot(seq.frames[static_cast<std::size_t>(tau_del - 2)].L);
    del0_sum += x0;
    del0_sq += x0 * x0;
    for (std::size_t k = 0; k < del_dts.size(); ++k) {
      double x =
          seq.U.col(1).dot(seq.frames[static_cast<std::size_t>(tau_del + del_dts[k] - 2)].L);
      del_sum[k] += x;
      del_sq[k] += x * x;
    }
  }

  bool pass = true;
  std::ostringstream ss;
  for (std::size_t k = 0; k < add_dts.size(); ++k) {
    double var = add_sq[k] / n_seeds - std::pow(add_sum[k] / n_seeds, 2);
    double target = base.sigma_sq[2] *
                    model::variance_envelope(model::EnvelopeKind::added, add_dts[k], base);
    double se = target * std::sqrt(2.0 / (n_seeds - 1));
    if (std::abs(var - target) >= 3 * se) pass = false;
    ss << "add dt=" << add_dts[k] << " " << var / base.sigma_sq[2] << "/"
       << target / base.sigma_sq[2] << "; ";
  }
  // Variance at the last pre-decay frame anchors the decay envelope.
  double var0 = del0_sq / n_seeds - std::pow(del0_sum / n_seeds, 2);
  for (std::size_t k = 0; k < del_dts.size(); ++k) {
    double var = del_sq[k] / n_seeds - std::pow(del_sum[k] / n_seeds, 2);
    double mult = std::pow(base.f_d, 2.0 * del_dts[k]);
    double target = var0 * mult;
    double se = target * std::sqrt(2.0 / (n_seeds - 1));
    if (std::abs(var - target) >= 3 * se) pass = false;
    ss << "decay dt=" << del_dts[k] << " mult " << var / var0 << "/" << mult << "; ";
  }
  ss << elapsed_s(start) << " s";
  report(2, pass, ss.str());
}

// --------------------------------------------------------------------------
// 3. Solver vs LP oracle on 100 instances.
// --------------------------------------------------------------------------
void criterion_3() {
  auto start = std::chrono::steady_clock::now();
  Rng rng(314159);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double worst = 0.0;
  int done = 0;
  bool pass = true;
  std::string note;
  for (int trial = 0; trial < 100 && pass; ++trial) {
    int q = 18 + trial % 8;  // up to 25
    Matrix A(10, q);
    for (int j = 0; j < q; ++j) {
      for (int i = 0; i < 10; ++i) A(i, j) = gauss(rng);
      A.col(j).normalize();
    }
    Vector s0 = Vector::Zero(q);
    std::uniform_int_distribution<int> pick(0, q - 1);
    s0[pick(rng)] = 3.0 * gauss(rng);
    s0[pick(rng)] += 2.0 * gauss(rng);
    Vector b = A * s0;
    IndexSet excl;
    if (trial % 2 == 1) {
      for (int k = 0; k < 4; ++k) excl.push_back(pick(rng));
      sort_unique(excl);
    }
    auto oracle = testing::l1_equality_oracle(A, b, excl);
    if (!oracle.feasible) {
      pass = false;
      note = "oracle infeasible";
      break;
    }
    l1::SolverReport rep;
    if (trial % 4 < 2) {
      rep = l1::solve_bp_eq(A, b, excl, l1::SolverTolerances{});
    } else {
      l1::L1Problem prob{A, b, 1e-12 * b.squaredNorm(), excl};
      rep = l1::solve_bpdn(prob);
    }
    if (!rep.converged) {
      pass = false;
      note = "solver did not converge";
      break;
    }
    double rel = std::abs(rep.objective - oracle.objective) / std::max(oracle.objective, 1e-12);
    worst = std::max(worst, rel);
    ++done;
  }
  if (worst > 1e-5) pass = false;
  std::ostringstream ss;
  ss << done << " instances, worst relative objective gap " << worst << " (tol 1e-5)"
     << (note.empty() ? "" : (", " + note)) << ", " << elapsed_s(start) << " s";
  report(3, pass, ss.str());
}

// --------------------------------------------------------------------------
// 4. Exact-regime recovery at the full-scale geometry.
// --------------------------------------------------------------------------
void criterion_4() {
  auto start = std::chrono::steady_clock::now();
  model::ScenarioConfig cfg;
  cfg.m = 128;
  cfg.frame_h = 8;
  cfg.frame_w = 16;
  cfg.f = 0.9;
  cfg.f_d = 0.1;
  cfg.theta = 0.4;
  cfg.sigma_sq.assign(128, 0.0);
  for (int i = 0; i < 32; ++i)
    cfg.sigma_sq[static_cast<std::size_t>(i)] = 1e4 * std::pow(i + 1.0, -2.0235647);
  cfg.t0 = 50;
  cfg.T_total = cfg.t0 + 100;
  cfg.k_objects = 1;
  cfg.magnitude = 5.0;
  cfg.p_stay = 0.8;
  cfg.seed = 4242;
  IndexSet initial;
  for (int i = 0; i < 32; ++i) initial.push_back(i);
  cfg.events.push_back(model::SupportEvent{1, initial, {}});
  auto seq = model::generate_sequence(cfg);

  tracker::TrackerParams params;
  params.f = cfg.f;
  params.subspace.f = cfg.f;
  Vector G0(32);
  for (int i = 0; i < 32; ++i)
    G0[i] = (1.0 - cfg.f * cfg.f) * cfg.sigma_sq[static_cast<std::size_t>(i)];
  auto st = tracker::make_tracker(seq.U.leftCols(32), G0,
                                  seq.frames[static_cast<std::size_t>(cfg.t0 - 1)].L,
                                  seq.frames[static_cast<std::size_t>(cfg.t0 - 2)].L);
  double worst = 0.0;
  int frames = 0;
  for (int t = cfg.t0 + 1; t <= cfg.T_total; ++t) {
    const auto& fr = seq.frames[static_cast<std::size_t>(t - 1)];
    auto out = tracker::step_noise_canceled(fr.M, st, params);
    worst = std::max(worst, harness::percentage_error(fr.S, out.S_hat));
    ++frames;
  }
  bool pass = worst < 1e-3 && frames == 100;
  std::ostringstream ss;
  ss << "worst percentage error over " << frames << " frames: " << worst << " (tol 1e-3), "
     << elapsed_s(start) << " s";
  report(4, pass, ss.str());
}

// --------------------------------------------------------------------------
// 5 + 6. Method ordering and the subspace timeline on the scaled scenario.
// --------------------------------------------------------------------------
struct TrialResult {
  std::map<harness::Method, std::vector<double>> err;  // per streamed frame
  int detection_frame = -1;
  int absorbed_frame = -1;  // span of P_stable first captures the new direction
  int deletion_frame = -1;  // span of P_stable loses the decayed direction
  double span_coherence_end = 0.0;
  double nc_post_absorb_err_sum = 0.0;
  int nc_post_absorb_frames = 0;
  std::vector<double> nc_wall_ms;
};

// Subspace comparisons go through principal angles (span coherence), never
// raw columns: ||P^T u|| is the cosine of the angle between u and span(P).
TrialResult run_trial(const harness::RunConfig& cfg, std::uint64_t trial_seed) {
  model::ScenarioConfig scen = cfg.scenario;
  scen.seed = trial_seed;
  auto seq = model::generate_sequence(scen);
  Matrix training(scen.m, scen.t0);
  for (int t = 0; t < scen.t0; ++t) training.col(t) = seq.frames[static_cast<std::size_t>(t)].M;
  auto initial = tracker::init_tracker(training, cfg.tracker);

  Vector u_new = seq.U.col(scen.events.at(1).add.at(0));
  Vector u_del = seq.U.col(scen.events.at(2).del.at(0));

  TrialResult res;
  std::vector<harness::Method> methods{harness::Method::nc, harness::Method::basic,
                                       harness::Method::pj};
  for (auto method : methods) {
    auto st = initial;
    auto& errs = res.err[method];
    errs.reserve(static_cast<std::size_t>(scen.T_total - scen.t0));
    std::uint64_t seen_revision = st.est.revision;
    for (int t = scen.t0 + 1; t <= scen.T_total; ++t) {
      const auto& fr = seq.frames[static_cast<std::size_t>(t - 1)];
      tracker::StepOutput out;
      auto t_start = std::chrono::steady_clock::now();
      switch (method) {
        case harness::Method::nc:
          out = tracker::step_noise_canceled(fr.M, st, cfg.tracker);
          break;
        case harness::Method::basic:
          out = tracker::step_basic(fr.M, st, cfg.tracker);
          break;
        default:
          out = tracker::step_pj(fr.M, st, cfg.tracker);
          break;
      }
      double wall =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
              .count();
      double err = harness::percentage_error(fr.S, out.S_hat);
      errs.push_back(err);

      if (method == harness::Method::nc) {
        res.nc_wall_ms.push_back(wall);
        if (res.detection_frame < 0 && st.est.status == subspace::Status::detection)
          res.detection_frame = t;
        if (st.est.revision != seen_revision) {
          seen_revision = st.est.revision;
          if (res.absorbed_frame < 0 && (st.est.P_stable.transpose() * u_new).norm() > 0.9)
            res.absorbed_frame = t;
          if (res.deletion_frame < 0 && (st.est.P_stable.transpose() * u_del).norm() < 0.5)
            res.deletion_frame = t;
        }
        if (res.absorbed_frame > 0 && t > res.absorbed_frame && !std::isnan(err)) {
          res.nc_post_absorb_err_sum += err;
          ++res.nc_post_absorb_frames;
        }
      }
    }
    if (method == harness::Method::nc)
      res.span_coherence_end = (st.est.P_stable.transpose() * u_new).norm();
  }
  return res;
}

void criterion_5_and_6(bool want5, bool want6) {
  auto start = std::chrono::steady_clock::now();
  auto cfg = io::load_run_config(std::string(RRPCP_CONFIG_DIR) + "/paper-fast.json");
  const int trials = 20;
  const int t0 = cfg.scenario.t0;
  const int tau = cfg.scenario.events.at(1).time;        // appearance
  const int tau_del_ev = cfg.scenario.events.at(2).time; // decay onset
  const int tau_d = cfg.tracker.subspace.tau_d;
  const int tau_del = cfg.tracker.subspace.tau_del;

  std::vector<TrialResult> results(trials);
  std::atomic<int> next{0};
  auto work = [&] {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= trials) return;
      results[static_cast<std::size_t>(i)] =
          run_trial(cfg, derive_seed(cfg.master_seed, static_cast<std::uint64_t>(i)));
    }
  };
  int workers = harness::worker_count(trials);
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& th : pool) th.join();

  if (want5) {
    const int frames = cfg.scenario.T_total - t0;
    auto mean_err = [&](harness::Method m, int k) {
      double s = 0.0;
      int n = 0;
      for (const auto& r : results) {
        double e = r.err.at(m)[static_cast<std::size_t>(k)];
        if (!std::isnan(e)) {
          s += e;
          ++n;
        }
      }
      return n ? s / n : std::numeric_limits<double>::quiet_NaN();
    };
    int ordered = 0, window = 0;
    for (int t = tau; t <= t0 + 200; ++t) {
      int k = t - t0 - 1;
      if (k < 0 || k >= frames) continue;
      ++window;
      double e_nc = mean_err(harness::Method::nc, k);
      double e_basic = mean_err(harness::Method::basic, k);
      double e_pj = mean_err(harness::Method::pj, k);
      if (e_nc < e_basic && e_basic < e_pj) ++ordered;
    }
    double frac = static_cast<double>(ordered) / window;

    double post_sum = 0.0;
    int post_n = 0;
    int absorbed_trials = 0;
    for (const auto& r : results) {
      if (r.absorbed_frame > 0) ++absorbed_trials;
      post_sum += r.nc_post_absorb_err_sum;
      post_n += r.nc_post_absorb_frames;
    }
    double post_mean = post_n ? post_sum / post_n : std::numeric_limits<double>::quiet_NaN();
    bool pass = frac >= 0.9 && absorbed_trials == trials && post_n > 0 && post_mean < 0.05;
    std::ostringstream ss;
    ss << "nc<basic<pj on " << ordered << "/" << window << " frames (" << 100 * frac
       << "%, need >= 90%); nc post-absorption mean error " << post_mean << " (tol 0.05) over "
       << post_n << " frames, " << absorbed_trials << "/" << trials << " trials absorbed; "
       << elapsed_s(start) << " s";
    report(5, pass, ss.str());
  }

  if (want6) {
    int good = 0;
    std::ostringstream bad;
    for (int i = 0; i < trials; ++i) {
      const auto& r = results[static_cast<std::size_t>(i)];
      bool detect_ok = r.detection_frame >= tau && r.detection_frame <= tau + tau_d;
      bool coh_ok = r.merge_frame > 0 && r.merge_coherence > 0.9;
      // Full decay lands about two frames past the onset with f_d = 0.1.
      bool del_ok = r.deletion_frame >= tau_del_ev &&
                    r.deletion_frame <= tau_del_ev + 2 + tau_del + 20;
      if (detect_ok && coh_ok && del_ok)
        ++good;
      else
        bad << " [trial " << i << ": detect " << r.detection_frame << " merge " << r.merge_frame
            << " coh " << r.merge_coherence << " del " << r.deletion_frame << "]";
    }
    bool pass = good >= 18;
    std::ostringstream ss;
    ss << good << "/" << trials << " trials hit the full timeline (need >= 18)" << bad.str();
    report(6, pass, ss.str());
  }
}

// --------------------------------------------------------------------------
// 7. Structural invariants via the validate suite.
// --------------------------------------------------------------------------
void criterion_7() {
  auto start = std::chrono::steady_clock::now();
  auto checks = testing::validate_all(20250810);
  bool pass = true;
  std::ostringstream ss;
  for (const auto& c : checks) {
    pass = pass && c.pass;
    ss << c.name << (c.pass ? " ok; " : " FAILED (" + c.detail + "); ");
  }
  ss << elapsed_s(start) << " s";
  report(7, pass, ss.str());
}

// --------------------------------------------------------------------------
// 8. Per-frame latency of the noise-canceled step at m = 128.
// --------------------------------------------------------------------------
void criterion_8() {
  auto start = std::chrono::steady_clock::now();
  auto cfg = io::load_run_config(std::string(RRPCP_CONFIG_DIR) + "/paper-fast.json");
  cfg.methods = {harness::Method::nc};
  auto metrics = harness::run_single(cfg, cfg.master_seed);
  std::vector<double> walls;
  for (const auto& f : metrics.methods.at(harness::Method::nc).frames) walls.push_back(f.wall_ms);
  std::sort(walls.begin(), walls.end());
  double median = walls[walls.size() / 2];
  double worst = walls.back();
  bool pass = median <= 2000.0;
  std::ostringstream ss;
  ss << "nc step at m=128: median " << median << " ms, max " << worst << " ms (budget 2000 ms), "
     << elapsed_s(start) << " s";
  report(8, pass, ss.str());
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  auto want = [&](int c) { return wanted.empty() || wanted.count(c) > 0; };

  auto start = std::chrono::steady_clock::now();
  try {
    if (want(1)) criterion_1();
    if (want(2)) criterion_2();
    if (want(3)) criterion_3();
    if (want(4)) criterion_4();
    if (want(5) || want(6)) criterion_5_and_6(want(5), want(6));
    if (want(7)) criterion_7();
    if (want(8)) criterion_8();
  } catch (const std::exception& e) {
    std::printf("[FAIL] acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("acceptance finished in %.1f s with %d failure(s)\n", elapsed_s(start), g_failures);
  return g_failures == 0 ? 0 : 1;
}
