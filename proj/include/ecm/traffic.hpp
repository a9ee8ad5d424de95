#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "ecm/kernel.hpp"
#include "ecm/machine.hpp"

namespace ecm {

// Bytes moved per scalar loop iteration, per link and direction.
struct LinkVolume {
  double down = 0;
  double up = 0;
};

struct TrafficProfile {
  std::map<LinkId, LinkVolume> volumes;

  double down(LinkId id) const {
    auto it = volumes.find(id);
    return it == volumes.end() ? 0.0 : it->second.down;
  }
  double up(LinkId id) const {
    auto it = volumes.find(id);
    return it == volumes.end() ? 0.0 : it->second.up;
  }
  void add_down(LinkId id, double bytes) { volumes[id].down += bytes; }
  void add_up(LinkId id, double bytes) { volumes[id].up += bytes; }
};

// One reference of one array, with the level its data comes from in the
// steady state.
struct RefUse {
  std::string array;
  Offset offset;
  bool is_write = false;
  bool leading = false;  // first touch of the moving window, no prior reuse
  double reuse_distance_bytes = std::numeric_limits<double>::infinity();
  Level served_from = Level::L1;
};

struct ReuseAnalysis {
  Level residence = Level::L1;
  int threads = 1;
  double row_window_bytes = 0;   // working set of one outer iteration
  double iter_window_bytes = 0;  // bytes advanced per inner iteration
  std::vector<RefUse> refs;
};

// Bytes an array moves per iteration: strided accesses pay full lines.
inline double stream_bytes(const ArrayAccess& a) {
  return a.dense ? static_cast<double>(a.elem_bytes) : 64.0;
}

// Innermost level whose effective capacity holds every array of the
// kernel; anything bigger lives in main memory.
inline Level locate_arrays(const KernelModel& k, const MachineModel& m) {
  double fp = 0;
  for (const auto& a : k.arrays)
    fp += static_cast<double>(k.n_i) * static_cast<double>(k.n_j) *
          stream_bytes(a);
  for (Level l : {Level::L1, Level::L2, Level::L3}) {
    if (effective_capacity(m, l) >= fp) return l;
  }
  return Level::Mem;
}

namespace detail {

struct OrderedRef {
  Offset off;
  bool write = false;
};

// References to one element in access order: the highest offset touches
// an element first, reads precede writes of the same iteration.
inline std::vector<OrderedRef> element_access_order(const ArrayAccess& a) {
  std::vector<OrderedRef> order;
  if (a.kind == AccessKind::write) {
    for (const auto& off : a.offsets) order.push_back({off, true});
  } else {
    for (const auto& off : a.offsets) order.push_back({off, false});
    if (a.kind == AccessKind::read_write) order.push_back({{0, 0}, true});
  }
  std::sort(order.begin(), order.end(),
            [](const OrderedRef& x, const OrderedRef& y) {
              if (x.off != y.off) return y.off < x.off;
              return x.write < y.write;
            });
  return order;
}

inline double capacity_per_thread(const MachineModel& m, Level l,
                                  int threads) {
  int sharers = static_cast<int>(
      std::min<long long>(threads, m.cache(l)->shared_by));
  return effective_capacity(m, l) / std::max(1, sharers);
}

}  // namespace detail

// Steady-state reuse analysis: every reference after the first touch of
// an element reuses it at a distance given by the data streamed in
// between, and is served by the innermost cache level that keeps that
// much data per thread. Inner-axis parallelization splits each row
// among the threads, shrinking the distances instead of the per-thread
// cache share.
inline ReuseAnalysis analyze_reuse(const KernelModel& k,
                                   const MachineModel& m, Level residence,
                                   int threads = 1) {
  ReuseAnalysis out;
  out.residence = residence;
  out.threads = threads;
  for (const auto& a : k.arrays) {
    out.row_window_bytes += a.rows_spanned() * k.n_i * stream_bytes(a);
    out.iter_window_bytes += stream_bytes(a);
  }

  for (const auto& a : k.arrays) {
    auto order = detail::element_access_order(a);
    for (std::size_t r = 0; r < order.size(); ++r) {
      RefUse use;
      use.array = a.id;
      use.offset = order[r].off;
      use.is_write = order[r].write;
      if (r == 0) {
        use.leading = true;
        use.served_from = residence;
      } else {
        long long d_outer = order[r - 1].off.outer - order[r].off.outer;
        long long d_inner = order[r - 1].off.inner - order[r].off.inner;
        double dist = d_outer >= 1
                          ? out.row_window_bytes
                          : static_cast<double>(d_outer * k.n_i + d_inner) *
                                out.iter_window_bytes;
        if (k.axis == ParallelAxis::inner) dist /= threads;
        use.reuse_distance_bytes = dist;
        use.served_from = residence;
        for (Level l : {Level::L1, Level::L2, Level::L3}) {
          if (l > residence) break;
          if (detail::capacity_per_thread(m, l, threads) >= dist) {
            use.served_from = l;
            break;
          }
        }
      }
      out.refs.push_back(use);
    }
  }
  return out;
}

// References that miss every cache at or inside `level`, i.e. whose data
// comes from farther out. Leading writes count: a write miss pulls the
// line like a read unless the machine evades the write-allocate.
inline int misses_beyond(const ReuseAnalysis& ra, Level level,
                         const std::string& array = "") {
  int n = 0;
  for (const auto& r : ra.refs) {
    if (!array.empty() && r.array != array) continue;
    if (r.served_from > level) ++n;
  }
  return n;
}

namespace detail {

struct Pass {
  Level fill_from = Level::L1;
  bool starts_with_write = false;
  bool wrote = false;
};

// Fill charges: pull one quantum down every link between the serving
// level and the L1.
inline void charge_fill(TrafficProfile& t, const MachineModel& m,
                        Level from, double q) {
  if (from == Level::Mem) {
    if (m.topology.memory_attach == MemoryAttach::direct_to_l2) {
      t.add_down(LinkId::L2Mem, q);
    } else {
      t.add_down(LinkId::L3Mem, q);  // transits the L3 without allocating
      t.add_down(LinkId::L2L3, q);
    }
    t.add_down(LinkId::L1L2, q);
    return;
  }
  if (from >= Level::L3) t.add_down(LinkId::L2L3, q);
  if (from >= Level::L2) t.add_down(LinkId::L1L2, q);
}

// The line sinks from the L1 out to `depth`. dirty_at tracks the
// innermost level holding unflushed data (0 = clean). Dirtiness means
// "modified relative to memory" and persists until a write-back reaches
// memory; a refetch hands it back to the L2 along with the line.
inline int drain_to(TrafficProfile& t, const MachineModel& m, Level depth,
                    int dirty_at, double q) {
  if (depth >= Level::L2) {
    if (dirty_at == 1) {  // write-back L1
      t.add_up(LinkId::L1L2, q);
      dirty_at = 2;
    }
  }
  if (depth >= Level::L3) {
    if (dirty_at == 2) {
      t.add_up(LinkId::L2L3, q);  // victim receives the modified line
      dirty_at = 3;
    } else if (dirty_at == 0 && m.cache(Level::L3)->victim_receives_clean) {
      t.add_up(LinkId::L2L3, q);
    }
    // A victim that does not receive clean lines still keeps them
    // addressable: silent placement, no bytes.
  }
  if (depth == Level::Mem) {
    // Dirty lines leave the L3 over its own memory link under either
    // attach variant; clean lines age out silently.
    if (dirty_at == 3) {
      t.add_up(LinkId::L3Mem, q);
      dirty_at = 0;
    }
  }
  return dirty_at;
}

}  // namespace detail

// Per-iteration link volumes from the reuse analysis: each array is a
// sequence of passes over the same element, a pass being a fill from
// some level followed by register/L1 work and a drain to wherever the
// element is needed next.
inline TrafficProfile derive_traffic(const KernelModel& k,
                                     const MachineModel& m,
                                     const ReuseAnalysis& ra) {
  TrafficProfile t;
  const bool wt = m.cache(Level::L1)->write_through;
  const bool evade = m.cache(Level::L1)->write_allocate_evasion;

  for (const auto& a : k.arrays) {
    const double q = stream_bytes(a);
    std::vector<detail::Pass> passes;
    bool first = true;
    for (const auto& r : ra.refs) {
      if (r.array != a.id) continue;
      if (first || r.served_from > Level::L1) {
        passes.push_back({first ? ra.residence : r.served_from, r.is_write,
                          r.is_write});
        first = false;
      } else {
        passes.back().wrote = passes.back().wrote || r.is_write;
      }
    }
    if (passes.empty()) continue;

    int write_refs = 0;
    for (const auto& r : ra.refs)
      if (r.array == a.id && r.is_write) ++write_refs;

    int dirty_at = 0;
    for (std::size_t p = 0; p < passes.size(); ++p) {
      const auto& pass = passes[p];
      if (pass.fill_from > Level::L1) {
        bool skip_fill = pass.starts_with_write && evade && a.dense;
        if (!skip_fill) detail::charge_fill(t, m, pass.fill_from, q);
        // Refetched lines keep their modifications; a victim hit hands
        // the dirty state back to the L2.
        if (dirty_at != 0) dirty_at = 2;
      }
      if (pass.wrote) dirty_at = wt ? 2 : 1;
      Level next = p + 1 < passes.size() ? passes[p + 1].fill_from
                                         : ra.residence;
      dirty_at = detail::drain_to(t, m, next, dirty_at, q);
    }

    // Write-through stores push every store through to the L2.
    if (wt && write_refs > 0) t.add_up(LinkId::L1L2, write_refs * q);
  }
  return t;
}

inline TrafficProfile derive_traffic(const KernelModel& k,
                                     const MachineModel& m, Level residence,
                                     int threads = 1) {
  return derive_traffic(k, m, analyze_reuse(k, m, residence, threads));
}

// Replace derived volumes on selected links with measured ones.
inline TrafficProfile override_traffic(TrafficProfile base,
                                       const std::map<LinkId, LinkVolume>&
                                           measured) {
  for (const auto& [id, v] : measured) base.volumes[id] = v;
  return base;
}

}  // namespace ecm
