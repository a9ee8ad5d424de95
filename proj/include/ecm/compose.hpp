#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ecm/config.hpp"
#include "ecm/kernel.hpp"
#include "ecm/machine.hpp"
#include "ecm/predictor.hpp"
#include "ecm/scaling.hpp"

namespace ecm {

// One loop kernel inside a larger solver iteration.
struct CompositePart {
  KernelModel kernel;
  double weight = 1;      // invocations per solver iteration
  double iterations = 0;  // loop iterations per invocation, 0 = whole grid

  double iters() const {
    return iterations > 0 ? iterations
                          : static_cast<double>(kernel.n_i) * kernel.n_j;
  }
};

struct CompositeSpec {
  std::string name;
  std::vector<CompositePart> parts;
};

// PCG solver iteration: one stencil application, two dot products,
// three vector updates and a forward/backward Gauss-Seidel sweep. The
// residual norm is part of the loop body; drop it to model solvers that
// fold it into a dot product.
inline CompositeSpec pcg_composite(bool include_norm = true) {
  CompositeSpec s;
  s.name = include_norm ? "pcg" : "pcg_no_norm";
  s.parts.push_back({builtin_kernel("stencil5"), 1});
  s.parts.push_back({builtin_kernel("dot"), 2});
  s.parts.push_back({builtin_kernel("daxpby"), 3});
  if (include_norm) s.parts.push_back({builtin_kernel("norm"), 1});
  s.parts.push_back({builtin_kernel("gs_fwd"), 1});
  s.parts.push_back({builtin_kernel("gs_bwd"), 1});
  return s;
}

struct CompositePartTime {
  std::string kernel;
  double weight = 1;
  double seconds = 0;  // weight * iterations / performance
};

struct CompositePoint {
  int cores = 0;
  double seconds_per_iteration = 0;
  double solver_it_per_s = 0;
  std::vector<CompositePartTime> parts;
};

struct CompositeCurve {
  std::string name;
  std::vector<CompositePoint> points;
};

inline CompositePoint compose_point(const CompositeSpec& spec,
                                    const MachineModel& m, int cores,
                                    const ScalingOptions& opt = {}) {
  if (spec.parts.empty()) throw ModelError("composite has no parts");
  CompositePoint out;
  out.cores = cores;
  for (const auto& part : spec.parts) {
    if (part.weight <= 0)
      throw ModelError("composite weight for " + part.kernel.name +
                       " must be positive");
    ScalePoint pt = predict_scaling_point(part.kernel, m, cores, opt);
    double sec = part.weight * part.iters() / pt.it_per_second;
    out.parts.push_back({part.kernel.name, part.weight, sec});
    out.seconds_per_iteration += sec;
  }
  out.solver_it_per_s = 1.0 / out.seconds_per_iteration;
  return out;
}

inline CompositeCurve compose(const CompositeSpec& spec,
                              const MachineModel& m, int max_cores,
                              const ScalingOptions& opt = {}) {
  CompositeCurve curve;
  curve.name = spec.name;
  int limit = std::min<int>(max_cores, m.topology.total_cores());
  for (int n = 1; n <= limit; ++n)
    curve.points.push_back(compose_point(spec, m, n, opt));
  return curve;
}

// Composite spec file: name plus a list of {kernel, weight, iterations}
// parts. Kernel names resolve through the caller (preset or file).
inline CompositeSpec parse_composite(
    const std::string& text,
    const std::function<KernelModel(const std::string&)>& resolve_kernel) {
  YAML::Node doc = cfg::parse_document(text, "composite");
  cfg::check_keys(doc, "composite", {"name", "parts"});
  CompositeSpec spec;
  spec.name = cfg::get<std::string>(doc, "composite", "name");
  YAML::Node parts = cfg::require(doc, "composite", "parts");
  if (!parts.IsSequence() || parts.size() == 0)
    throw ConfigError("composite.parts: expected a non-empty list");
  for (std::size_t i = 0; i < parts.size(); ++i) {
    std::string path = "composite.parts[" + std::to_string(i) + "]";
    cfg::check_keys(parts[i], path, {"kernel", "weight", "iterations"});
    CompositePart part;
    part.kernel = resolve_kernel(cfg::get<std::string>(parts[i], path,
                                                       "kernel"));
    part.weight = cfg::get_or<double>(parts[i], path, "weight", 1.0);
    part.iterations = cfg::get_or<double>(parts[i], path, "iterations", 0.0);
    if (part.weight <= 0)
      throw ConfigError(path + ".weight: must be positive");
    spec.parts.push_back(std::move(part));
  }
  return spec;
}

struct ComparisonRow {
  int cores = 0;
  double measured = 0;
  double predicted = 0;
  double rel_err = 0;  // |predicted - measured| / measured
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
  double mean_abs_rel = 0;
  double max_abs_rel = 0;
};

// Model-vs-measurement errors over the core counts present in both.
inline ComparisonReport compare_scaling(
    const KernelModel& k, const MachineModel& m,
    const std::vector<std::pair<int, double>>& measured,
    const ScalingOptions& opt = {}) {
  ComparisonReport rep;
  for (const auto& [n, perf] : measured) {
    if (n < 1 || n > m.topology.total_cores()) continue;
    if (perf <= 0)
      throw ModelError("measured performance at " + std::to_string(n) +
                       " cores must be positive");
    ComparisonRow row;
    row.cores = n;
    row.measured = perf;
    row.predicted = predict_scaling_point(k, m, n, opt).it_per_second;
    row.rel_err = std::abs(row.predicted - row.measured) / row.measured;
    rep.rows.push_back(row);
  }
  if (rep.rows.empty())
    throw ModelError("no overlapping points between model and measurement");
  for (const auto& r : rep.rows) {
    rep.mean_abs_rel += r.rel_err;
    rep.max_abs_rel = std::max(rep.max_abs_rel, r.rel_err);
  }
  rep.mean_abs_rel /= rep.rows.size();
  return rep;
}

struct Hypothesis {
  LinkId link = LinkId::L1L2;
  double bandwidth = 0;
  bool overlapped = false;
  double score = 0;  // mean relative error against the measurements
};

// A machine variant with one link's bandwidth and overlap behavior
// replaced; the studied label swaps between the serial and overlap sets
// of every residence rule it appears in.
inline MachineModel with_link_hypothesis(MachineModel m, LinkId link,
                                         double bw, bool overlapped) {
  for (auto& l : m.links) {
    if (l.id != link) continue;
    l.bw_down = bw;
    l.bw_up = bw;
    l.bw_from_topology = false;
  }
  Label lbl = label_for_link(link);
  for (auto& rule : m.overlap.rules) {
    if (overlapped) {
      if (rule.serial.erase(lbl)) rule.overlap.insert(lbl);
    } else {
      if (rule.overlap.erase(lbl)) rule.serial.insert(lbl);
    }
  }
  require_valid(m);
  return m;
}

// Grid search over bandwidth and overlap candidates for one link,
// scored by mean relative runtime error against measured cycles at the
// given residences. Candidates are evaluated independently; ties keep
// candidate order (bandwidth-major, serialized before overlapped).
inline std::vector<Hypothesis> infer_parameters(
    const KernelModel& k, const MachineModel& m, LinkId link,
    const std::vector<double>& bw_candidates,
    const std::vector<bool>& overlap_candidates,
    const std::vector<std::pair<Level, double>>& measured_cycles) {
  if (bw_candidates.empty() || overlap_candidates.empty())
    throw ModelError("inference needs bandwidth and overlap candidates");
  if (measured_cycles.empty()) throw ModelError("inference needs measurements");

  std::vector<Hypothesis> out;
  for (double bw : bw_candidates) {
    if (bw <= 0) throw ModelError("bandwidth candidates must be positive");
    for (bool ov : overlap_candidates) {
      MachineModel cand = with_link_hypothesis(m, link, bw, ov);
      double err = 0;
      for (const auto& [res, cy] : measured_cycles) {
        if (cy <= 0) throw ModelError("measured cycles must be positive");
        PredictOptions po;
        po.residence = res;
        double pred = predict_single(k, cand, po).cycles_per_it;
        err += std::abs(pred - cy) / cy;
      }
      out.push_back({link, bw, ov, err / measured_cycles.size()});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Hypothesis& a, const Hypothesis& b) {
                     return a.score < b.score;
                   });
  return out;
}

}  // namespace ecm
