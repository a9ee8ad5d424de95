#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "ecm/compose.hpp"
#include "ecm/machine.hpp"
#include "ecm/predictor.hpp"
#include "ecm/scaling.hpp"

namespace ecm::report {

// Deterministic short form: same input bytes, same output bytes.
inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

enum class Format { table, csv };

inline const char* level_name(Level l) {
  switch (l) {
    case Level::L1: return "L1";
    case Level::L2: return "L2";
    case Level::L3: return "L3";
    case Level::Mem: return "Mem";
  }
  return "?";
}

inline const char* combined_name(Level l) {
  switch (l) {
    case Level::L1: return "T_L1";
    case Level::L2: return "T_L2";
    case Level::L3: return "T_L3";
    case Level::Mem: return "T_Mem";
  }
  return "?";
}

inline std::string prediction(const Prediction& p, const MachineModel& m,
                              const KernelModel& k, Format f) {
  std::string out;
  if (f == Format::csv) {
    out += "component,cycles_per_it\n";
    for (const auto& c : p.contributions)
      out += std::string(to_string(c.label)) + "," + fmt(c.total()) + "\n";
    for (const auto& [level, t] : p.combined)
      out += std::string(combined_name(level)) + "," + fmt(t) + "\n";
    return out;
  }
  out += "machine " + m.name + "  kernel " + k.name + "  data in " +
         std::string(level_name(p.residence)) + "\n";
  for (const auto& c : p.contributions) {
    out += std::string(to_string(c.label)) + " " + fmt(c.total()) + " cy/it";
    if (c.label != Label::comp && c.label != Label::RegL1) {
      out += "  (" + fmt(c.bytes_down) + " B down, " + fmt(c.bytes_up) +
             " B up";
      if (c.t_penalty > 0) out += ", penalty " + fmt(c.t_penalty) + " cy";
      out += ")";
    }
    out += "\n";
  }
  for (const auto& [level, t] : p.combined)
    out += std::string(combined_name(level)) + " " + fmt(t) + " cy/it\n";
  return out;
}

inline std::string curve(const ScalingCurve& c, Format f) {
  std::string out;
  if (f == Format::csv) {
    out += "cores,u,perf_git_s\n";
    for (const auto& p : c.points)
      out += std::to_string(p.cores) + "," + fmt(p.u) + "," +
             fmt(p.it_per_second / 1e9) + "\n";
    return out;
  }
  out += "cores u t_cy_per_it perf_git_s saturated\n";
  for (const auto& p : c.points)
    out += std::to_string(p.cores) + " " + fmt(p.u) + " " +
           fmt(p.t_cycles) + " " + fmt(p.it_per_second / 1e9) + " " +
           (p.saturated ? "yes" : "no") + "\n";
  if (c.n_sat > 0)
    out += "saturation at " + std::to_string(c.n_sat) + " cores\n";
  return out;
}

inline std::string composite(const CompositeCurve& c, Format f) {
  std::string out;
  if (f == Format::csv) {
    out += "cores,seconds_per_iteration,solver_it_per_s\n";
    for (const auto& p : c.points)
      out += std::to_string(p.cores) + "," + fmt(p.seconds_per_iteration) +
             "," + fmt(p.solver_it_per_s) + "\n";
    return out;
  }
  for (const auto& p : c.points) {
    out += "cores " + std::to_string(p.cores) + "\n";
    for (const auto& part : p.parts)
      out += "  " + part.kernel + " x" + fmt(part.weight) + "  " +
             fmt(part.seconds) + " s\n";
    out += "  total " + fmt(p.seconds_per_iteration) + " s/it  (" +
           fmt(p.solver_it_per_s) + " solver it/s)\n";
  }
  return out;
}

inline std::string comparison(const ComparisonReport& r, Format f) {
  std::string out;
  if (f == Format::csv) {
    out += "cores,measured_it_per_s,predicted_it_per_s,rel_err\n";
    for (const auto& row : r.rows)
      out += std::to_string(row.cores) + "," + fmt(row.measured) + "," +
             fmt(row.predicted) + "," + fmt(row.rel_err) + "\n";
    return out;
  }
  out += "cores measured predicted rel_err\n";
  for (const auto& row : r.rows)
    out += std::to_string(row.cores) + " " + fmt(row.measured) + " " +
           fmt(row.predicted) + " " + fmt(row.rel_err) + "\n";
  out += "mean_rel_err " + fmt(r.mean_abs_rel) + "\n";
  out += "max_rel_err " + fmt(r.max_abs_rel) + "\n";
  return out;
}

inline std::string hypotheses(const std::vector<Hypothesis>& hs, Format f) {
  std::string out;
  if (f == Format::csv) {
    out += "rank,link,bandwidth_b_cy,overlap,score\n";
    for (std::size_t i = 0; i < hs.size(); ++i)
      out += std::to_string(i + 1) + "," + to_string(hs[i].link) + "," +
             fmt(hs[i].bandwidth) + "," +
             (hs[i].overlapped ? "overlap" : "no-overlap") + "," +
             fmt(hs[i].score) + "\n";
    return out;
  }
  out += "rank link bandwidth_b_cy overlap score\n";
  for (std::size_t i = 0; i < hs.size(); ++i)
    out += std::to_string(i + 1) + " " + to_string(hs[i].link) + " " +
           fmt(hs[i].bandwidth) + " " +
           (hs[i].overlapped ? "overlap" : "no-overlap") + " " +
           fmt(hs[i].score) + "\n";
  return out;
}

inline std::string machines(Format f) {
  std::string out;
  if (f == Format::csv) {
    out += "name,frequency_ghz,numa_domains,cores_per_domain\n";
    for (const auto& name : builtin_machine_names()) {
      MachineModel m = builtin_machine(name);
      out += m.name + "," + fmt(m.frequency_ghz) + "," +
             std::to_string(m.topology.numa_domains) + "," +
             std::to_string(m.topology.cores_per_domain) + "\n";
    }
    return out;
  }
  out += "name freq_ghz domains cores_per_domain total_cores\n";
  for (const auto& name : builtin_machine_names()) {
    MachineModel m = builtin_machine(name);
    out += m.name + " " + fmt(m.frequency_ghz) + " " +
           std::to_string(m.topology.numa_domains) + " " +
           std::to_string(m.topology.cores_per_domain) + " " +
           std::to_string(m.topology.total_cores()) + "\n";
  }
  return out;
}

inline std::string fit(const FitResult& r, Format f) {
  if (f == Format::csv)
    return "p0,objective\n" + fmt(r.p0) + "," + fmt(r.objective) + "\n";
  return "p0 " + fmt(r.p0) + "\nobjective " + fmt(r.objective) + "\n";
}

}  // namespace ecm::report
