#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "rrpcp/core.hpp"
#include "rrpcp/model.hpp"
#include "rrpcp/subspace.hpp"
#include "rrpcp/tracker.hpp"

namespace rrpcp::harness {

enum class Method : std::uint8_t { nc, basic, pj, modcs };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::nc: return "nc";
    case Method::basic: return "basic";
    case Method::pj: return "pj";
    case Method::modcs: return "modcs";
  }
  return "?";
}

inline Method method_from_name(const std::string& s) {
  if (s == "nc") return Method::nc;
  if (s == "basic") return Method::basic;
  if (s == "pj") return Method::pj;
  if (s == "modcs") return Method::modcs;
  throw std::invalid_argument("unknown method: " + s);
}

/// ||S - S_hat|| / ||S||; frames without foreground report NaN (excluded from
/// averages, counted as false positives when support is claimed).
inline double percentage_error(const Vector& S_true, const Vector& S_hat) {
  double denom = S_true.norm();
  if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (S_true - S_hat).norm() / denom;
}

struct FrameMetrics {
  int t = 0;
  double percentage_error = 0.0;
  double beta_sq = 0.0;
  double beta_resid_sq = 0.0;
  double eps_used = 0.0;
  int rank_est = 0;
  subspace::Status status = subspace::Status::stable;
  int support_size = 0;
  double wall_ms = 0.0;
  bool flagged = false;
};

/// One method's trajectory through a run, plus the frames at which the
/// subspace events first happened (-1 when they did not).
struct MethodRun {
  std::vector<FrameMetrics> frames;
  int detection_frame = -1;
  int rotation_frame = -1;
  int merge_frame = -1;
  int deletion_frame = -1;
  int false_positive_frames = 0;  // S_true == 0 but support claimed
};

struct RunMetrics {
  int t0 = 0;
  std::map<Method, MethodRun> methods;
};

struct RunConfig {
  model::ScenarioConfig scenario;
  tracker::TrackerParams tracker;
  std::vector<Method> methods{Method::nc};
  bool modcs_oracle = false;  // feed the true support as T_pred
  int trials = 1;
  std::uint64_t master_seed = 0;

  void validate() const {
    scenario.validate();
    if (methods.empty()) throw std::invalid_argument("run config: methods must be nonempty");
    if (trials < 1) throw std::invalid_argument("run config: trials must be >= 1");
  }
};

struct McFrameStat {
  int t = 0;
  int trials_used = 0;  // trials with a defined error at this frame
  double err_mean = std::numeric_limits<double>::quiet_NaN();
  double err_stderr = std::numeric_limits<double>::quiet_NaN();
  double beta_sq_mean = 0.0;
  double beta_resid_sq_mean = 0.0;
};

struct MonteCarloResult {
  std::map<Method, std::vector<McFrameStat>> methods;
  std::vector<RunMetrics> per_trial;
};

}  // namespace rrpcp::harness
