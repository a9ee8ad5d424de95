#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "ecm/kernel.hpp"
#include "ecm/machine.hpp"
#include "ecm/predictor.hpp"

namespace ecm {

// Measured barrier cost in core cycles by participating thread count.
// Lookups interpolate linearly and extrapolate with the last segment.
struct BarrierTable {
  std::vector<std::pair<int, double>> points;  // sorted by thread count

  double at(int n) const {
    if (n <= 1 || points.empty()) return 0;
    if (points.size() == 1 || n <= points.front().first)
      return points.front().second;
    for (std::size_t i = 1; i < points.size(); ++i) {
      if (n <= points[i].first) {
        auto [n0, c0] = points[i - 1];
        auto [n1, c1] = points[i];
        return c0 + (c1 - c0) * static_cast<double>(n - n0) / (n1 - n0);
      }
    }
    auto [n0, c0] = points[points.size() - 2];
    auto [n1, c1] = points.back();
    double slope = (c1 - c0) / (n1 - n0);
    return std::max(0.0, c1 + slope * (n - n1));
  }
};

enum class Placement { close, spread };

struct ScalingOptions {
  double p0 = 0;  // added conflict cycles per waiting core
  Placement placement = Placement::close;
  std::optional<BarrierTable> barrier;
  bool contended = false;     // active domains share one memory pool
  double contended_bw = 0;    // aggregate B/cy, 0 = sum of domain points
  std::optional<std::map<LinkId, LinkVolume>> traffic_override;
};

struct ScalePoint {
  int cores = 0;
  double u = 0;               // memory interface busy share
  double t_cycles = 0;        // per-core cycles per iteration, worst core
  double it_per_second = 0;
  double gflops = 0;
  bool saturated = false;
};

struct ScalingCurve {
  std::vector<ScalePoint> points;
  int n_sat = 0;  // first saturated core count, 0 if never

  const ScalePoint& at(int cores) const {
    for (const auto& p : points)
      if (p.cores == cores) return p;
    throw ModelError("no scaling point for " + std::to_string(cores) +
                     " cores");
  }
};

namespace detail {

// Cores per active domain for n cores total.
inline std::vector<int> domain_fill(const Topology& topo, int n,
                                    Placement placement) {
  std::vector<int> fill;
  if (placement == Placement::close) {
    int left = n;
    while (left > 0) {
      int take = std::min(left, topo.cores_per_domain);
      fill.push_back(take);
      left -= take;
    }
  } else {
    int domains = std::min<int>(n, topo.numa_domains);
    for (int d = 0; d < domains; ++d)
      fill.push_back(n / domains + (d < n % domains ? 1 : 0));
  }
  return fill;
}

// How many cores end up in one shared-cache group when n_domain cores
// run in a domain.
inline int group_occupancy(const Topology& topo, const SharedCacheGroup& g,
                           int n_domain, Placement placement) {
  if (placement == Placement::close) {
    return std::min<int>(n_domain, g.group_size);
  }
  int groups = std::max(1, topo.cores_per_domain / g.group_size);
  return static_cast<int>((n_domain + groups - 1) / groups);
}

// Shared cache levels that do not scale with their sharers stretch the
// busy time of the adjacent cache-to-cache links; the memory links are
// governed by the utilization recursion instead.
inline std::vector<Contribution> scale_for_groups(
    const MachineModel& m, const std::vector<Contribution>& contributions,
    int n_domain, Placement placement) {
  std::vector<Contribution> out = contributions;
  for (auto& c : out) {
    if (c.label == Label::comp || c.label == Label::RegL1) continue;
    LinkId id = *link_for_label(c.label);
    if (link_touches_memory(id)) continue;
    int g = 1;
    for (const auto& grp : m.topology.shared_cache_groups) {
      if (m.cache(grp.level)->scalable) continue;
      if (link_outer_level(id) != grp.level &&
          link_inner_level(id) != grp.level)
        continue;
      g = std::max(g, group_occupancy(m.topology, grp, n_domain, placement));
    }
    c.t_data *= g;
    c.t_penalty *= g;
  }
  return out;
}

struct DomainState {
  double u = 0;
  double t_cycles = 0;
};

// Utilization recursion for one memory interface feeding `cores` cores.
// Each added core sees the interface busy with probability u and pays
// p0 conflict cycles per competing core, serialized with the memory
// terms; utilization is the interface busy share and never drops as
// cores join.
inline DomainState domain_utilization(const MachineModel& m, Level residence,
                                      const std::vector<Contribution>& cs,
                                      double t_mem_data, double barrier_cy,
                                      int cores, double p0) {
  DomainState s;
  for (int i = 1; i <= cores; ++i) {
    double conflict = s.u * (i - 1) * p0;
    double d = combine(m, residence, cs, conflict) + barrier_cy;
    s.t_cycles = d;
    double raw = d > 0 ? i * t_mem_data / d : 1.0;
    s.u = std::min(1.0, std::max(s.u, raw));
  }
  return s;
}

}  // namespace detail

// Per-iteration barrier cycles: sync_per_outer_iter barriers amortize
// over one row, which the threads split when the inner axis is
// parallel.
inline double barrier_cycles_per_iter(const KernelModel& k,
                                      const ScalingOptions& opt, int n) {
  if (n <= 1 || k.sync_per_outer_iter <= 0 || !opt.barrier) return 0;
  double per_row = k.sync_per_outer_iter * opt.barrier->at(n);
  double share = per_row / static_cast<double>(k.n_i);
  return k.axis == ParallelAxis::inner ? share * n : share;
}

inline ScalePoint predict_scaling_point(const KernelModel& k,
                                        const MachineModel& m, int n,
                                        const ScalingOptions& opt = {}) {
  if (n < 1 || n > m.topology.total_cores())
    throw ModelError("core count " + std::to_string(n) + " outside 1.." +
                     std::to_string(m.topology.total_cores()));

  ScalePoint pt;
  pt.cores = n;
  double barrier_cy = barrier_cycles_per_iter(k, opt, n);
  auto fill = detail::domain_fill(m.topology, n, opt.placement);

  // Per distinct domain population, one prediction with the shared
  // caches partitioned accordingly.
  std::map<int, Prediction> preds;
  for (int nd : fill) {
    if (preds.count(nd)) continue;
    PredictOptions po;
    po.threads = nd;
    po.traffic_override = opt.traffic_override;
    preds.emplace(nd, predict_single(k, m, po));
  }

  if (preds.begin()->second.residence != Level::Mem ||
      preds.begin()->second.t_mem_data <= 0) {
    // Data lives in cache: cores run independently, only shared cache
    // groups and barriers slow them down.
    double total_its = 0;
    for (int nd : fill) {
      const Prediction& p = preds.at(nd);
      auto cs = detail::scale_for_groups(m, p.contributions, nd,
                                         opt.placement);
      double t = combine(m, p.residence, cs) + barrier_cy;
      pt.t_cycles = std::max(pt.t_cycles, t);
      total_its += nd * m.frequency_ghz * 1e9 * k.work_per_iter / t;
    }
    pt.u = 0;
    pt.saturated = false;
    pt.it_per_second = total_its;
    pt.gflops = total_its * k.flops_per_iter / (k.work_per_iter * 1e9);
    return pt;
  }

  if (opt.contended && fill.size() > 1) {
    // All active cores compete for one memory pool.
    double pool_bw = opt.contended_bw > 0
                         ? opt.contended_bw
                         : m.topology.mem_bw_point * m.topology.numa_domains;
    const Prediction& p = preds.at(fill.front());
    auto cs = detail::scale_for_groups(m, p.contributions, fill.front(),
                                       opt.placement);
    double t_mem = p.t_mem_data * m.topology.mem_bw_point / pool_bw;
    auto st = detail::domain_utilization(m, p.residence, cs, t_mem,
                                         barrier_cy, n, opt.p0);
    double p_sat = m.frequency_ghz * 1e9 * k.work_per_iter / t_mem;
    pt.u = st.u;
    pt.t_cycles = st.t_cycles;
    pt.saturated = st.u >= 1.0 - 1e-12;
    pt.it_per_second = st.u * p_sat;
    pt.gflops = pt.it_per_second * k.flops_per_iter / (k.work_per_iter * 1e9);
    return pt;
  }

  double total_its = 0, u_sum = 0;
  bool all_sat = true;
  for (int nd : fill) {
    const Prediction& p = preds.at(nd);
    auto cs = detail::scale_for_groups(m, p.contributions, nd,
                                       opt.placement);
    auto st = detail::domain_utilization(m, p.residence, cs, p.t_mem_data,
                                         barrier_cy, nd, opt.p0);
    double p_sat = m.frequency_ghz * 1e9 * k.work_per_iter / p.t_mem_data;
    total_its += st.u * p_sat;
    u_sum += st.u;
    all_sat = all_sat && st.u >= 1.0 - 1e-12;
    pt.t_cycles = std::max(pt.t_cycles, st.t_cycles);
  }
  pt.u = u_sum / fill.size();
  pt.saturated = all_sat;
  pt.it_per_second = total_its;
  pt.gflops = total_its * k.flops_per_iter / (k.work_per_iter * 1e9);
  return pt;
}

inline ScalingCurve predict_multicore(const KernelModel& k,
                                      const MachineModel& m, int max_cores,
                                      const ScalingOptions& opt = {}) {
  ScalingCurve curve;
  int limit = std::min<int>(max_cores, m.topology.total_cores());
  for (int n = 1; n <= limit; ++n) {
    curve.points.push_back(predict_scaling_point(k, m, n, opt));
    if (curve.n_sat == 0 && curve.points.back().saturated) curve.n_sat = n;
  }
  return curve;
}

// Least-squares fit of the conflict penalty against measured
// performance over core counts. Coarse grid plus golden-section
// refinement; the returned p0 is the best of every evaluated candidate,
// so exact boundary optima survive.
struct FitResult {
  double p0 = 0;
  double objective = 0;  // sum of squared relative errors
};

inline FitResult fit_p0(const KernelModel& k, const MachineModel& m,
                        const std::vector<std::pair<int, double>>& measured,
                        ScalingOptions opt = {}) {
  if (measured.size() < 2)
    throw ModelError("p0 fit needs at least two measured points");

  ScalingOptions zero = opt;
  zero.p0 = 0;
  int below_sat = 0;
  for (const auto& [n, perf] : measured) {
    if (!predict_scaling_point(k, m, n, zero).saturated) ++below_sat;
  }
  if (below_sat < 2)
    throw ModelError(
        "p0 fit needs at least two measurements below saturation");

  FitResult best{0, std::numeric_limits<double>::infinity()};
  auto eval = [&](double p0) {
    ScalingOptions o = opt;
    o.p0 = p0;
    double sse = 0;
    for (const auto& [n, perf] : measured) {
      double pred = predict_scaling_point(k, m, n, o).it_per_second;
      double rel = (pred - perf) / perf;
      sse += rel * rel;
    }
    if (sse < best.objective) best = {p0, sse};
    return sse;
  };

  const double lo = 0, hi = 100;
  for (int i = 0; i <= 100; ++i) eval(lo + (hi - lo) * i / 100.0);

  double a = std::max(lo, best.p0 - 1.0), b = std::min(hi, best.p0 + 1.0);
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = eval(c), fd = eval(d);
  while (b - a > 1e-4) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = eval(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = eval(d);
    }
  }
  eval((a + b) / 2);
  return best;
}

}  // namespace ecm
