#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <vector>

#include "ecm/kernel.hpp"
#include "ecm/machine.hpp"
#include "ecm/traffic.hpp"

namespace ecm {

// One in-core or transfer term of the model, in cycles per iteration.
struct Contribution {
  Label label = Label::comp;
  double bytes_down = 0;
  double bytes_up = 0;
  double t_data = 0;
  double t_penalty = 0;

  double total() const { return t_data + t_penalty; }
};

// Register-to-L1 time: loads and stores against their issue widths and,
// when the machine has one, the combined load/store limit.
inline double t_regl1(const KernelModel& k, const MachineModel& m) {
  double t = 0;
  double ld = k.ops.load, st = k.ops.store;
  if (ld > 0) t = std::max(t, ld / m.throughput.ops_per_cycle(Op::load));
  if (st > 0) t = std::max(t, st / m.throughput.ops_per_cycle(Op::store));
  if (m.throughput.has(Op::load_store) && ld + st > 0)
    t = std::max(t, (ld + st) / m.throughput.ops_per_cycle(Op::load_store));
  return t;
}

// Arithmetic time: the slowest of the per-class widths, port groups
// shared by several classes, an overall issue limit, and the loop's
// dependency chain.
inline double t_comp(const KernelModel& k, const MachineModel& m) {
  double t = 0;
  double total_ops = 0;
  for (Op op : {Op::add, Op::mul, Op::fma, Op::divide}) {
    double n = k.ops.count(op);
    if (n <= 0) continue;
    total_ops += n;
    t = std::max(t, n / m.throughput.ops_per_cycle(op));
  }
  for (const auto& group : m.ports) {
    double sum = 0;
    for (Op op : group.classes)
      sum += k.ops.count(op) / m.throughput.ops_per_cycle(op);
    t = std::max(t, sum);
  }
  if (m.throughput.has(Op::total) && total_ops > 0)
    t = std::max(t, total_ops / m.throughput.ops_per_cycle(Op::total));
  t = std::max(t, dependency_cycles(k, m));
  return t;
}

// Transfer time of one link for the given per-iteration volumes. Duplex
// links move both directions at once; a single link shares its wires.
// Penalties charge extra cycles per byte moved in the penalized
// direction on top of the data time.
inline Contribution t_link(const MachineModel& m, LinkId id, double down,
                           double up) {
  const TransferLink& l = *m.link(id);
  Contribution c;
  c.label = label_for_link(id);
  c.bytes_down = down;
  c.bytes_up = up;
  if (l.dual)
    c.t_data = std::max(down / l.bw_down, up / l.bw_up);
  else
    c.t_data = (down + up) / l.bw_down;
  if (l.penalty_cy_per_byte > 0) {
    double penalized = l.penalty_direction == Direction::down ? down : up;
    c.t_penalty = l.penalty_cy_per_byte * penalized;
  }
  return c;
}

// Combine contributions for data served from `level` under the
// machine's overlap rule: serialized terms add up, and the total is the
// slowest of that sum and each overlapping term.
inline double combine(const MachineModel& m, Level level,
                      const std::vector<Contribution>& contributions,
                      double extra_serial = 0) {
  const OverlapRule* found = m.overlap.rule_for(level);
  if (!found)
    throw ModelError(std::string("machine '") + m.name +
                     "' has no overlap rule for data in " + to_string(level));
  const OverlapRule& rule = *found;
  double serial = extra_serial;
  double t = 0;
  for (const auto& c : contributions) {
    if (rule.serial.count(c.label)) {
      serial += c.total();
    } else {
      t = std::max(t, c.total());
    }
  }
  return std::max(t, serial);
}

struct Prediction {
  Level residence = Level::L1;
  ReuseAnalysis analysis;
  TrafficProfile traffic;
  std::vector<Contribution> contributions;
  std::map<Level, double> combined;  // T_L1 .. T_residence
  double cycles_per_it = 0;
  double t_mem_data = 0;  // data time on the memory links, drives scaling
  double frequency_ghz = 0;
  double work_per_iter = 1;
  double flops_per_iter = 0;

  const Contribution* find(Label l) const {
    for (const auto& c : contributions)
      if (c.label == l) return &c;
    return nullptr;
  }
  double iterations_per_second() const {
    return frequency_ghz * 1e9 * work_per_iter / cycles_per_it;
  }
  double gflops() const {
    return frequency_ghz * flops_per_iter / cycles_per_it;
  }
};

struct PredictOptions {
  int threads = 1;
  std::optional<Level> residence;  // otherwise placed by footprint
  std::optional<std::map<LinkId, LinkVolume>> traffic_override;
};

inline Prediction predict_single(const KernelModel& k, const MachineModel& m,
                                 const PredictOptions& opt = {}) {
  Prediction p;
  p.residence = opt.residence ? *opt.residence : locate_arrays(k, m);
  p.analysis = analyze_reuse(k, m, p.residence, opt.threads);
  p.traffic = derive_traffic(k, m, p.analysis);
  if (opt.traffic_override)
    p.traffic = override_traffic(p.traffic, *opt.traffic_override);

  p.contributions.push_back(
      {Label::comp, 0, 0, t_comp(k, m), 0});
  p.contributions.push_back(
      {Label::RegL1, 0, 0, t_regl1(k, m), 0});
  for (Label lbl : possible_labels(m, p.residence)) {
    if (lbl == Label::comp || lbl == Label::RegL1) continue;
    LinkId id = *link_for_label(lbl);
    p.contributions.push_back(
        t_link(m, id, p.traffic.down(id), p.traffic.up(id)));
  }

  for (Level l : {Level::L1, Level::L2, Level::L3, Level::Mem}) {
    if (l > p.residence) break;
    auto labels = possible_labels(m, l);
    std::vector<Contribution> subset;
    for (const auto& c : p.contributions)
      if (labels.count(c.label)) subset.push_back(c);
    p.combined[l] = combine(m, l, subset);
  }
  p.cycles_per_it = p.combined.at(p.residence);

  for (LinkId id : {LinkId::L2Mem, LinkId::L3Mem}) {
    if (const Contribution* c = p.find(label_for_link(id)))
      p.t_mem_data += c->t_data;
  }

  p.frequency_ghz = m.frequency_ghz;
  p.work_per_iter = k.work_per_iter;
  p.flops_per_iter = k.flops_per_iter;
  return p;
}

}  // namespace ecm
