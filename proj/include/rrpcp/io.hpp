#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "rrpcp/metrics.hpp"
#include "rrpcp/model.hpp"

namespace rrpcp::io {

using nlohmann::json;

// ---------------------------------------------------------------------------
// CSV primitives. Doubles are written with 17 significant digits so a parsed
// file recovers every value bit-exactly.
// ---------------------------------------------------------------------------

inline std::string csv_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  CsvTable t;
  std::string line;
  if (std::getline(in, line)) t.header = split_csv_line(line);
  while (std::getline(in, line))
    if (!line.empty()) t.rows.push_back(split_csv_line(line));
  return t;
}

// ---------------------------------------------------------------------------
// Configs. Field names mirror the config structs exactly (snake_case);
// indices are 0-based.
// ---------------------------------------------------------------------------

inline model::ScenarioConfig scenario_from_json(const json& j) {
  model::ScenarioConfig cfg;
  cfg.m = j.at("m").get<int>();
  cfg.frame_h = j.at("frame_h").get<int>();
  cfg.frame_w = j.at("frame_w").get<int>();
  cfg.f = j.at("f").get<double>();
  cfg.f_d = j.at("f_d").get<double>();
  cfg.theta = j.at("theta").get<double>();
  cfg.sigma_sq = j.at("sigma_sq").get<std::vector<double>>();
  if (j.contains("events")) {
    for (const auto& e : j.at("events")) {
      model::SupportEvent ev;
      ev.time = e.at("time").get<int>();
      if (e.contains("add")) ev.add = e.at("add").get<IndexSet>();
      if (e.contains("delete")) ev.del = e.at("delete").get<IndexSet>();
      cfg.events.push_back(std::move(ev));
    }
  }
  cfg.t0 = j.at("t0").get<int>();
  cfg.T_total = j.at("T_total").get<int>();
  cfg.k_objects = j.value("k_objects", 1);
  cfg.magnitude = j.value("magnitude", 5.0);
  cfg.p_stay = j.value("p_stay", 0.8);
  cfg.seed = j.value("seed", std::uint64_t{0});
  cfg.validate();
  return cfg;
}

inline json scenario_to_json(const model::ScenarioConfig& cfg) {
  json j;
  j["m"] = cfg.m;
  j["frame_h"] = cfg.frame_h;
  j["frame_w"] = cfg.frame_w;
  j["f"] = cfg.f;
  j["f_d"] = cfg.f_d;
  j["theta"] = cfg.theta;
  j["sigma_sq"] = cfg.sigma_sq;
  j["events"] = json::array();
  for (const auto& ev : cfg.events) {
    json e;
    e["time"] = ev.time;
    e["add"] = ev.add;
    e["delete"] = ev.del;
    j["events"].push_back(e);
  }
  j["t0"] = cfg.t0;
  j["T_total"] = cfg.T_total;
  j["k_objects"] = cfg.k_objects;
  j["magnitude"] = cfg.magnitude;
  j["p_stay"] = cfg.p_stay;
  j["seed"] = cfg.seed;
  return j;
}

inline tracker::TrackerParams tracker_from_json(const json& j, double scenario_f) {
  tracker::TrackerParams p;
  p.f = j.value("f", scenario_f);
  p.gamma = j.value("gamma", 2.5);
  if (j.contains("eps_rule")) {
    std::string r = j.at("eps_rule").get<std::string>();
    if (r == "noise_canceled")
      p.eps_rule = tracker::EpsRule::noise_canceled;
    else if (r == "basic")
      p.eps_rule = tracker::EpsRule::basic;
    else
      throw std::invalid_argument("unknown eps_rule: " + r);
  }
  p.eps_floor = j.value("eps_floor", -1.0);
  if (j.contains("subspace")) {
    const auto& s = j.at("subspace");
    p.subspace.delta = s.value("delta", -1.0);
    p.subspace.tau_d = s.value("tau_d", 20);
    p.subspace.tau_r = s.value("tau_r", 20);
    p.subspace.tau_del = s.value("tau_del", 20);
    p.subspace.xi_d = s.value("xi_d", 1e-3);
    p.subspace.xi_r = s.value("xi_r", 1e-3);
    p.subspace.identity_diag_min = s.value("identity_diag_min", 0.9999);
    p.subspace.identity_offdiag_max = s.value("identity_offdiag_max", 0.01);
    p.subspace.delete_frac = s.value("delete_frac", 0.05);
    p.subspace.train_eig_frac = s.value("train_eig_frac", 1e-6);
  }
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    p.solver.feasibility_tol = s.value("feasibility_tol", 1e-8);
    p.solver.optimality_tol = s.value("optimality_tol", 1e-5);
    p.solver.max_iterations = s.value("max_iterations", 100000);
  }
  p.subspace.f = p.f;
  return p;
}

inline harness::RunConfig run_config_from_json(const json& j) {
  harness::RunConfig cfg;
  cfg.scenario = scenario_from_json(j.at("scenario"));
  cfg.tracker = j.contains("tracker") ? tracker_from_json(j.at("tracker"), cfg.scenario.f)
                                      : tracker::TrackerParams{};
  if (!j.contains("tracker")) {
    cfg.tracker.f = cfg.scenario.f;
    cfg.tracker.subspace.f = cfg.scenario.f;
  }
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& s : j.at("methods"))
      cfg.methods.push_back(harness::method_from_name(s.get<std::string>()));
  }
  cfg.modcs_oracle = j.value("modcs_oracle", false);
  cfg.trials = j.value("trials", 1);
  cfg.master_seed = j.value("master_seed", std::uint64_t{0});
  cfg.validate();
  return cfg;
}

inline harness::RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json j;
  in >> j;
  // A bare scenario document is accepted for generation-only use.
  if (!j.contains("scenario")) {
    harness::RunConfig cfg;
    cfg.scenario = scenario_from_json(j);
    cfg.tracker.f = cfg.scenario.f;
    cfg.tracker.subspace.f = cfg.scenario.f;
    return cfg;
  }
  return run_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Run / Monte Carlo metric files.
// ---------------------------------------------------------------------------

inline constexpr const char* kRunCsvHeader =
    "t,method,percentage_error,beta_sq,beta_resid_sq,eps_used,rank_est,status,support_size,"
    "wall_ms";

inline void write_run_csv(std::ostream& os, const harness::RunMetrics& metrics) {
  os << kRunCsvHeader << "\n";
  for (const auto& [method, run] : metrics.methods) {
    for (const auto& f : run.frames) {
      os << f.t << ',' << harness::method_name(method) << ',' << csv_double(f.percentage_error)
         << ',' << csv_double(f.beta_sq) << ',' << csv_double(f.beta_resid_sq) << ','
         << csv_double(f.eps_used) << ',' << f.rank_est << ',' << subspace::status_name(f.status)
         << ',' << f.support_size << ',' << csv_double(f.wall_ms) << "\n";
    }
  }
}

inline void write_run_csv(const std::string& path, const harness::RunMetrics& metrics) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_run_csv(os, metrics);
}

inline constexpr const char* kMcCsvHeader =
    "t,method,trials_used,err_mean,err_stderr,beta_sq_mean,beta_resid_sq_mean";

inline void write_mc_csv(std::ostream& os, const harness::MonteCarloResult& mc) {
  os << kMcCsvHeader << "\n";
  for (const auto& [method, stats] : mc.methods) {
    for (const auto& s : stats) {
      os << s.t << ',' << harness::method_name(method) << ',' << s.trials_used << ','
         << csv_double(s.err_mean) << ',' << csv_double(s.err_stderr) << ','
         << csv_double(s.beta_sq_mean) << ',' << csv_double(s.beta_resid_sq_mean) << "\n";
    }
  }
}

inline void write_mc_csv(const std::string& path, const harness::MonteCarloResult& mc) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_mc_csv(os, mc);
}

// ---------------------------------------------------------------------------
// Dataset dumps: CSV (t, M..., L..., S...) and the RRPCP1 binary layout
// (magic "RRPCP1", u32 m, u32 T_total, then per frame M|L|S as contiguous
// little-endian 64-bit floats).
// ---------------------------------------------------------------------------

inline void write_dataset_csv(const std::string& path, const model::SequenceData& seq) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "t";
  const auto m = seq.frames.empty() ? 0 : seq.frames.front().M.size();
  for (int i = 0; i < m; ++i) os << ",M" << i;
  for (int i = 0; i < m; ++i) os << ",L" << i;
  for (int i = 0; i < m; ++i) os << ",S" << i;
  os << "\n";
  for (const auto& fr : seq.frames) {
    os << fr.t;
    for (int i = 0; i < m; ++i) os << ',' << csv_double(fr.M[i]);
    for (int i = 0; i < m; ++i) os << ',' << csv_double(fr.L[i]);
    for (int i = 0; i < m; ++i) os << ',' << csv_double(fr.S[i]);
    os << "\n";
  }
}

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
         (std::uint32_t{b[3]} << 24);
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= std::uint64_t{b[i]} << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

}  // namespace detail

inline void write_dataset_binary(const std::string& path, const model::SequenceData& seq) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os.write("RRPCP1", 6);
  const auto m = static_cast<std::uint32_t>(seq.frames.empty() ? 0 : seq.frames.front().M.size());
  detail::put_u32(os, m);
  detail::put_u32(os, static_cast<std::uint32_t>(seq.frames.size()));
  for (const auto& fr : seq.frames) {
    for (int i = 0; i < static_cast<int>(m); ++i) detail::put_f64(os, fr.M[i]);
    for (int i = 0; i < static_cast<int>(m); ++i) detail::put_f64(os, fr.L[i]);
    for (int i = 0; i < static_cast<int>(m); ++i) detail::put_f64(os, fr.S[i]);
  }
}

/// Reads frames back (supports the round-trip tests and external tooling).
/// Supports only the ground-truth payload; N/T index sets are not stored.
inline std::vector<model::FrameRecord> read_dataset_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[6];
  is.read(magic, 6);
  if (std::memcmp(magic, "RRPCP1", 6) != 0)
    throw std::runtime_error("bad dataset magic in " + path);
  const auto m = static_cast<int>(detail::get_u32(is));
  const auto T = static_cast<int>(detail::get_u32(is));
  std::vector<model::FrameRecord> frames(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    auto& fr = frames[static_cast<std::size_t>(t)];
    fr.t = t + 1;
    fr.M.resize(m);
    fr.L.resize(m);
    fr.S.resize(m);
    for (int i = 0; i < m; ++i) fr.M[i] = detail::get_f64(is);
    for (int i = 0; i < m; ++i) fr.L[i] = detail::get_f64(is);
    for (int i = 0; i < m; ++i) fr.S[i] = detail::get_f64(is);
  }
  if (!is) throw std::runtime_error("truncated dataset " + path);
  return frames;
}

// Debugging snapshot of the stable subspace block ("RRSUB1": u32 m, u32 r,
// u8 status, P column-major f64, G f64).
inline void save_subspace_snapshot(const std::string& path, const subspace::SubspaceEstimate& est) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os.write("RRSUB1", 6);
  detail::put_u32(os, static_cast<std::uint32_t>(est.P_stable.rows()));
  detail::put_u32(os, static_cast<std::uint32_t>(est.P_stable.cols()));
  os.put(static_cast<char>(est.status));
  for (Eigen::Index j = 0; j < est.P_stable.cols(); ++j)
    for (Eigen::Index i = 0; i < est.P_stable.rows(); ++i) detail::put_f64(os, est.P_stable(i, j));
  for (Eigen::Index i = 0; i < est.G_stable.size(); ++i) detail::put_f64(os, est.G_stable[i]);
}

inline subspace::SubspaceEstimate load_subspace_snapshot(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[6];
  is.read(magic, 6);
  if (std::memcmp(magic, "RRSUB1", 6) != 0) throw std::runtime_error("bad snapshot magic");
  const auto m = static_cast<Eigen::Index>(detail::get_u32(is));
  const auto r = static_cast<Eigen::Index>(detail::get_u32(is));
  subspace::SubspaceEstimate est;
  est.status = static_cast<subspace::Status>(is.get());
  est.P_stable.resize(m, r);
  est.G_stable.resize(r);
  est.P_new.resize(m, 0);
  est.G_new.resize(0);
  for (Eigen::Index j = 0; j < r; ++j)
    for (Eigen::Index i = 0; i < m; ++i) est.P_stable(i, j) = detail::get_f64(is);
  for (Eigen::Index i = 0; i < r; ++i) est.G_stable[i] = detail::get_f64(is);
  if (!is) throw std::runtime_error("truncated snapshot " + path);
  return est;
}

}  // namespace rrpcp::io
