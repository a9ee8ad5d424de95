#pragma once

// Shared fixtures for the unit tests and the acceptance runner: glue
// between kernel models and the replay oracle, capacity-scaled machine
// variants, and the synthetic machine/kernel used by the scaling
// property checks.

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ecm/kernel.hpp"
#include "ecm/machine.hpp"
#include "ecm/predictor.hpp"
#include "ecm/scaling.hpp"
#include "ecm/traffic.hpp"
#include "replay_oracle.hpp"

namespace testsupport {

// Per-iteration references in program order: all reads first, then the
// writes, arrays in declaration order.
inline std::vector<replay::Ref> replay_refs(const ecm::KernelModel& k) {
  std::vector<replay::Ref> refs;
  for (int a = 0; a < static_cast<int>(k.arrays.size()); ++a) {
    if (!k.arrays[a].reads()) continue;
    for (const auto& o : k.arrays[a].offsets)
      refs.push_back({a, o.outer, o.inner, false});
  }
  for (int a = 0; a < static_cast<int>(k.arrays.size()); ++a) {
    const auto& arr = k.arrays[a];
    if (!arr.writes()) continue;
    if (arr.kind == ecm::AccessKind::write) {
      for (const auto& o : arr.offsets)
        refs.push_back({a, o.outer, o.inner, true});
    } else {
      refs.push_back({a, 0, 0, true});  // read_write stores to the center
    }
  }
  return refs;
}

inline replay::Policy policy_of(const ecm::MachineModel& m) {
  replay::Policy p;
  p.l1_write_through = m.cache(ecm::Level::L1)->write_through;
  p.victim_receives_clean = m.cache(ecm::Level::L3)->victim_receives_clean;
  p.write_allocate_evasion = m.cache(ecm::Level::L1)->write_allocate_evasion;
  p.fills_direct_to_l2 =
      m.topology.memory_attach == ecm::MemoryAttach::direct_to_l2;
  return p;
}

inline replay::Capacities capacities_of(const ecm::MachineModel& m) {
  replay::Capacities c;
  c.l1 = static_cast<std::size_t>(
      ecm::effective_capacity(m, ecm::Level::L1) / 8);
  c.l2 = static_cast<std::size_t>(
      ecm::effective_capacity(m, ecm::Level::L2) / 8);
  c.l3 = static_cast<std::size_t>(
      ecm::effective_capacity(m, ecm::Level::L3) / 8);
  return c;
}

// Replace cache sizes so the effective capacity is exactly the given
// element counts; policies and links stay as the base machine has them.
inline ecm::MachineModel with_capacities(ecm::MachineModel m,
                                         std::int64_t l1_elems,
                                         std::int64_t l2_elems,
                                         std::int64_t l3_elems) {
  for (auto& c : m.caches) {
    std::int64_t e = c.level == ecm::Level::L1   ? l1_elems
                     : c.level == ecm::Level::L2 ? l2_elems
                                                 : l3_elems;
    c.capacity_bytes = 2 * e * 8;
    c.shared_by = 1;
  }
  return m;
}

inline ecm::KernelModel resized(ecm::KernelModel k, std::int64_t n_i,
                                std::int64_t n_j) {
  k.n_i = n_i;
  k.n_j = n_j;
  return k;
}

inline replay::Volumes oracle_aggregate(const ecm::KernelModel& k,
                                        const replay::Policy& pol,
                                        const replay::Capacities& cap) {
  auto per_array =
      replay::run(replay_refs(k), static_cast<int>(k.arrays.size()), 8, pol,
                  cap, k.n_i, k.n_j, 3, 1, k.n_j / 2, k.n_i / 2);
  replay::Volumes sum;
  for (const auto& v : per_array) {
    sum.l1l2.down += v.l1l2.down;
    sum.l1l2.up += v.l1l2.up;
    sum.l2l3.down += v.l2l3.down;
    sum.l2l3.up += v.l2l3.up;
    sum.l2mem.down += v.l2mem.down;
    sum.l2mem.up += v.l2mem.up;
    sum.l3mem.down += v.l3mem.down;
    sum.l3mem.up += v.l3mem.up;
  }
  return sum;
}

// Derived traffic vs. replayed lifecycle bytes, exact. Empty string on
// agreement, a description on the first mismatch.
inline std::string check_equivalence(const ecm::KernelModel& k,
                                     const ecm::MachineModel& m,
                                     ecm::Level residence) {
  ecm::TrafficProfile derived = ecm::derive_traffic(k, m, residence, 1);
  replay::Volumes replayed =
      oracle_aggregate(k, policy_of(m), capacities_of(m));

  struct Row {
    ecm::LinkId id;
    replay::LinkBytes got;
  };
  const Row rows[] = {{ecm::LinkId::L1L2, replayed.l1l2},
                      {ecm::LinkId::L2L3, replayed.l2l3},
                      {ecm::LinkId::L2Mem, replayed.l2mem},
                      {ecm::LinkId::L3Mem, replayed.l3mem}};
  for (const auto& r : rows) {
    double want_down = derived.down(r.id);
    double want_up = derived.up(r.id);
    if (want_down != static_cast<double>(r.got.down) ||
        want_up != static_cast<double>(r.got.up)) {
      std::ostringstream os;
      os << k.name << " on " << m.name << " data in "
         << ecm::to_string(residence) << ": " << ecm::to_string(r.id)
         << " derived " << want_down << "/" << want_up << " replayed "
         << r.got.down << "/" << r.got.up;
      return os.str();
    }
  }
  return "";
}

// Capacity-scaled scenarios: n_i=64, n_j=16 grids against element-sized
// caches chosen so every kernel lands at the named residence with wide
// margins, and row-window reuse exercises mid-level serving.
struct ScaledScenario {
  const char* name;
  std::int64_t c1, c2, c3;  // effective capacities in elements
  ecm::Level residence;
};

inline std::vector<ScaledScenario> scaled_scenarios() {
  return {
      {"mem-resident", 16, 64, 512, ecm::Level::Mem},
      {"l3-resident", 16, 64, 4096, ecm::Level::L3},
      {"l2-resident", 16, 4096, 8192, ecm::Level::L2},
      {"l1-resident", 4096, 8192, 16384, ecm::Level::L1},
  };
}

// Outer extent that puts a kernel's footprint at the target residence
// on an unmodified preset (n_i fixed at 64): half the L1 for L1
// residence, 3x the next-inner effective capacity otherwise.
inline std::int64_t preset_nj(const ecm::MachineModel& m,
                              const ecm::KernelModel& k, ecm::Level level) {
  double target = level == ecm::Level::L1
                      ? ecm::effective_capacity(m, ecm::Level::L1) / 2.0
                      : 3.0 * ecm::effective_capacity(
                                  m, static_cast<ecm::Level>(
                                         static_cast<int>(level) - 1));
  double per_row = static_cast<double>(k.arrays.size()) * 64 * 8;
  auto n_j = static_cast<std::int64_t>(target / per_row);
  return n_j < 6 ? 6 : n_j;
}

// Toy machine for the scaling property checks: one NUMA domain, 64
// cores, plain write-back hierarchy, memory reads through the L3.
inline ecm::MachineModel synth_machine(double mem_bw = 16.0) {
  using namespace ecm;
  MachineModel m;
  m.name = "synth";
  m.frequency_ghz = 1.0;
  for (Op op : {Op::add, Op::mul, Op::fma, Op::load, Op::store,
                Op::load_store})
    m.throughput.entries[op] = ThroughputEntry{4.0, {}, {}};
  m.latency.cycles = {{Op::add, 4}, {Op::mul, 4}, {Op::fma, 4}};
  m.caches.push_back(presets::cache(Level::L1, 32 * 1024, 1));
  m.caches.push_back(presets::cache(Level::L2, 256 * 1024, 1));
  {
    CacheLevel l3 = presets::cache(Level::L3, 2 * 1024 * 1024, 1);
    l3.victim = true;
    m.caches.push_back(l3);
  }
  m.links.push_back(presets::cache_link(LinkId::L1L2, 64));
  m.links.push_back(presets::cache_link(LinkId::L2L3, 32));
  m.links.push_back(presets::mem_link(LinkId::L3Mem, mem_bw));
  m.topology.numa_domains = 1;
  m.topology.cores_per_domain = 64;
  m.topology.mem_bw_min = mem_bw;
  m.topology.mem_bw_max = mem_bw;
  m.topology.mem_bw_point = mem_bw;
  m.overlap.rules = {
      presets::rule(Level::L1, {Label::RegL1}, {Label::comp}),
      presets::rule(Level::L2, {Label::RegL1, Label::L1L2}, {Label::comp}),
      presets::rule(Level::L3, {Label::RegL1, Label::L1L2, Label::L2L3},
                    {Label::comp}),
      presets::rule(Level::Mem,
                    {Label::RegL1, Label::L1L2, Label::L2L3, Label::L3Mem},
                    {Label::comp}),
  };
  return m;
}

// Compute-heavy streaming kernel: in-core time dominates, so the memory
// interface saturates slowly and the conflict penalty stays observable
// over many core counts.
inline ecm::KernelModel synth_kernel() {
  ecm::KernelModel k;
  k.name = "synth_sweep";
  k.ops.add = 80;
  k.ops.load = 1;
  k.arrays = {ecm::presets::arr("x", ecm::AccessKind::read, {{0, 0}})};
  k.n_i = 1 << 20;
  k.n_j = 1;
  k.flops_per_iter = 80;
  return k;
}

}  // namespace testsupport
