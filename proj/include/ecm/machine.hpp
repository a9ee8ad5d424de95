#pragma once

// Machine model: per-core instruction throughput and latency, cache
// hierarchy properties, inter-level transfer links, the overlap policy
// that decides which busy times serialize, and chip topology.
//
// Cycle bookkeeping convention for links: "down" is the fill direction
// (toward the core, e.g. L2->L1), "up" is the eviction/write-back
// direction (away from the core).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"

namespace ecm {

// ---------------------------------------------------------------------------
// Basic enums

enum class Op { add, mul, fma, divide, load, store, load_store, total };

enum class Level : int { L1 = 1, L2 = 2, L3 = 3, Mem = 4 };

enum class LinkId { L1L2, L2L3, L2Mem, L3Mem };

// Runtime-contribution labels used by overlap rules and predictions.
enum class Label { comp, RegL1, L1L2, L2L3, L2Mem, L3Mem };

enum class MemoryAttach { through_l3, direct_to_l2 };

enum class Direction { down, up };

inline const char* to_string(Op op) {
  switch (op) {
    case Op::add: return "add";
    case Op::mul: return "mul";
    case Op::fma: return "fma";
    case Op::divide: return "div";
    case Op::load: return "load";
    case Op::store: return "store";
    case Op::load_store: return "load_store";
    case Op::total: return "total";
  }
  return "?";
}

inline std::optional<Op> op_from_string(const std::string& s) {
  for (Op op : {Op::add, Op::mul, Op::fma, Op::divide, Op::load, Op::store,
                Op::load_store, Op::total})
    if (s == to_string(op)) return op;
  return std::nullopt;
}

inline const char* to_string(Level l) {
  switch (l) {
    case Level::L1: return "l1";
    case Level::L2: return "l2";
    case Level::L3: return "l3";
    case Level::Mem: return "mem";
  }
  return "?";
}

inline std::optional<Level> level_from_string(const std::string& s) {
  for (Level l : {Level::L1, Level::L2, Level::L3, Level::Mem})
    if (s == to_string(l)) return l;
  return std::nullopt;
}

inline const char* to_string(LinkId id) {
  switch (id) {
    case LinkId::L1L2: return "l1l2";
    case LinkId::L2L3: return "l2l3";
    case LinkId::L2Mem: return "l2mem";
    case LinkId::L3Mem: return "l3mem";
  }
  return "?";
}

inline std::optional<LinkId> link_from_string(const std::string& s) {
  for (LinkId id : {LinkId::L1L2, LinkId::L2L3, LinkId::L2Mem, LinkId::L3Mem})
    if (s == to_string(id)) return id;
  return std::nullopt;
}

inline const char* to_string(Label l) {
  switch (l) {
    case Label::comp: return "comp";
    case Label::RegL1: return "regl1";
    case Label::L1L2: return "l1l2";
    case Label::L2L3: return "l2l3";
    case Label::L2Mem: return "l2mem";
    case Label::L3Mem: return "l3mem";
  }
  return "?";
}

inline std::optional<Label> label_from_string(const std::string& s) {
  for (Label l : {Label::comp, Label::RegL1, Label::L1L2, Label::L2L3,
                  Label::L2Mem, Label::L3Mem})
    if (s == to_string(l)) return l;
  return std::nullopt;
}

inline Label label_for_link(LinkId id) {
  switch (id) {
    case LinkId::L1L2: return Label::L1L2;
    case LinkId::L2L3: return Label::L2L3;
    case LinkId::L2Mem: return Label::L2Mem;
    case LinkId::L3Mem: return Label::L3Mem;
  }
  return Label::L1L2;
}

inline std::optional<LinkId> link_for_label(Label l) {
  switch (l) {
    case Label::L1L2: return LinkId::L1L2;
    case Label::L2L3: return LinkId::L2L3;
    case Label::L2Mem: return LinkId::L2Mem;
    case Label::L3Mem: return LinkId::L3Mem;
    default: return std::nullopt;
  }
}

// The cache level a link touches on its outer (farther from core) side.
inline Level link_outer_level(LinkId id) {
  switch (id) {
    case LinkId::L1L2: return Level::L2;
    case LinkId::L2L3: return Level::L3;
    case LinkId::L2Mem: return Level::Mem;
    case LinkId::L3Mem: return Level::Mem;
  }
  return Level::Mem;
}

inline Level link_inner_level(LinkId id) {
  switch (id) {
    case LinkId::L1L2: return Level::L1;
    case LinkId::L2L3: return Level::L2;
    case LinkId::L2Mem: return Level::L2;
    case LinkId::L3Mem: return Level::L3;
  }
  return Level::L1;
}

inline bool link_touches_memory(LinkId id) {
  return id == LinkId::L2Mem || id == LinkId::L3Mem;
}

// ---------------------------------------------------------------------------
// Throughput / latency

// Operations per cycle; optionally kept as instructions-per-cycle x SIMD
// lanes, in which case ops_per_cycle must equal their product.
struct ThroughputEntry {
  double ops_per_cycle = 0.0;
  std::optional<double> instr_per_cycle;
  std::optional<double> simd_lanes;

  bool operator==(const ThroughputEntry&) const = default;
};

struct OperationThroughputTable {
  std::map<Op, ThroughputEntry> entries;

  bool has(Op op) const { return entries.count(op) != 0; }
  double ops_per_cycle(Op op) const {
    auto it = entries.find(op);
    if (it == entries.end())
      throw ModelError(std::string("no throughput entry for operation '") +
                       to_string(op) + "'");
    return it->second.ops_per_cycle;
  }

  bool operator==(const OperationThroughputTable&) const = default;
};

struct InstructionLatencyTable {
  std::map<Op, double> cycles;

  bool has(Op op) const { return cycles.count(op) != 0; }
  double latency(Op op) const {
    auto it = cycles.find(op);
    if (it == cycles.end())
      throw ModelError(std::string("no latency entry for operation '") +
                       to_string(op) + "'");
    return it->second;
  }

  bool operator==(const InstructionLatencyTable&) const = default;
};

// Operation classes issued through one shared execution port.
struct PortConstraint {
  std::vector<Op> classes;

  bool operator==(const PortConstraint&) const = default;
};

// ---------------------------------------------------------------------------
// Caches, links, topology

struct CacheLevel {
  Level level = Level::L1;
  std::int64_t capacity_bytes = 0;
  int shared_by = 1;  // cores sharing one instance of this level
  bool write_through = false;
  bool victim = false;
  bool victim_receives_clean = true;
  bool write_allocate_evasion = false;
  bool scalable = true;  // bandwidth scales with active cores

  bool operator==(const CacheLevel&) const = default;
};

struct TransferLink {
  LinkId id = LinkId::L1L2;
  bool dual = false;      // dual: two unidirectional channels; else one
                          // bidirectional channel shared by both directions
  double bw_down = 0.0;   // bytes/cy toward the core
  double bw_up = 0.0;     // bytes/cy away from the core (dual only)
  double penalty_cy_per_byte = 0.0;
  Direction penalty_direction = Direction::up;
  bool bw_from_topology = false;  // memory links may inherit the point value

  bool operator==(const TransferLink&) const = default;
};

// One rule per residence level: which contribution labels serialize and
// which overlap with the serialized sum. comp is always in the overlap set.
struct OverlapRule {
  Level when = Level::L1;
  std::set<Label> serial;
  std::set<Label> overlap;

  bool operator==(const OverlapRule&) const = default;
};

struct OverlapPolicy {
  std::vector<OverlapRule> rules;

  const OverlapRule* rule_for(Level residence) const {
    for (const auto& r : rules)
      if (r.when == residence) return &r;
    return nullptr;
  }

  bool operator==(const OverlapPolicy&) const = default;
};

// Cores whose adjacent cache bandwidth does not scale: within a group of
// g active cores every cache-to-cache link touching `level` gets its busy
// time multiplied by g (aggregate throughput capped at the link rate).
struct SharedCacheGroup {
  Level level = Level::L3;
  int group_size = 1;
  std::optional<double> aggregate_bw;  // bytes/cy; defaults to the link rate

  bool operator==(const SharedCacheGroup&) const = default;
};

struct Topology {
  int numa_domains = 1;
  int cores_per_domain = 1;
  double mem_bw_min = 0.0;    // sustained range, bytes/cy per domain
  double mem_bw_max = 0.0;
  double mem_bw_point = 0.0;  // value used for predictions
  MemoryAttach memory_attach = MemoryAttach::through_l3;
  std::vector<SharedCacheGroup> shared_cache_groups;

  int total_cores() const { return numa_domains * cores_per_domain; }

  bool operator==(const Topology&) const = default;
};

struct MachineModel {
  std::string name;
  double frequency_ghz = 0.0;
  OperationThroughputTable throughput;
  InstructionLatencyTable latency;
  std::vector<PortConstraint> ports;
  std::vector<CacheLevel> caches;
  std::vector<TransferLink> links;
  OverlapPolicy overlap;
  Topology topology;

  const CacheLevel* cache(Level l) const {
    for (const auto& c : caches)
      if (c.level == l) return &c;
    return nullptr;
  }
  const TransferLink* link(LinkId id) const {
    for (const auto& l : links)
      if (l.id == id) return &l;
    return nullptr;
  }
  TransferLink* link(LinkId id) {
    for (auto& l : links)
      if (l.id == id) return &l;
    return nullptr;
  }
  const SharedCacheGroup* shared_group(Level l) const {
    for (const auto& g : topology.shared_cache_groups)
      if (g.level == l) return &g;
    return nullptr;
  }

  bool operator==(const MachineModel&) const = default;
};

// ---------------------------------------------------------------------------
// Capacity heuristic

// Only about half of a cache's nominal capacity is usable for the data set
// of a steady-state streaming loop before misses start; all capacity-based
// placement uses this effective value.
inline double effective_capacity(const MachineModel& m, Level level) {
  const CacheLevel* c = m.cache(level);
  if (!c)
    throw ModelError(std::string("machine '") + m.name + "' has no " +
                     to_string(level) + " cache");
  return static_cast<double>(c->capacity_bytes) / 2.0;
}

// ---------------------------------------------------------------------------
// Structural queries used by validation and the predictor

// Labels that can carry a nonzero busy time when data resides at
// `residence` on this machine.
inline std::set<Label> possible_labels(const MachineModel& m,
                                       Level residence) {
  std::set<Label> s{Label::comp, Label::RegL1};
  const CacheLevel* l1 = m.cache(Level::L1);
  const bool wt = l1 && l1->write_through;
  const int r = static_cast<int>(residence);
  if (r >= static_cast<int>(Level::L2) || wt) s.insert(Label::L1L2);
  if (r >= static_cast<int>(Level::L3)) s.insert(Label::L2L3);
  if (residence == Level::Mem) {
    s.insert(Label::L3Mem);
    if (m.topology.memory_attach == MemoryAttach::direct_to_l2)
      s.insert(Label::L2Mem);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Validation

inline std::vector<std::string> validate_machine(const MachineModel& m) {
  std::vector<std::string> v;
  auto fail = [&](const std::string& s) { v.push_back(s); };

  if (m.name.empty()) fail("machine name must not be empty");
  if (!(m.frequency_ghz > 0)) fail("frequency_ghz must be positive");

  for (const auto& [op, e] : m.throughput.entries) {
    if (!(e.ops_per_cycle > 0))
      fail(std::string("throughput.") + to_string(op) +
           ": throughput must be positive");
    if (e.instr_per_cycle && e.simd_lanes) {
      double derived = *e.instr_per_cycle * *e.simd_lanes;
      if (std::abs(derived - e.ops_per_cycle) > 1e-9)
        fail(std::string("throughput.") + to_string(op) +
             ": ops_per_cycle must equal instr_per_cycle * simd_lanes");
    } else if (e.instr_per_cycle || e.simd_lanes) {
      fail(std::string("throughput.") + to_string(op) +
           ": instr_per_cycle and simd_lanes must be given together");
    }
  }
  if (m.throughput.has(Op::load) && m.throughput.has(Op::store) &&
      m.throughput.has(Op::load_store)) {
    if (m.throughput.ops_per_cycle(Op::load_store) >
        m.throughput.ops_per_cycle(Op::load) +
            m.throughput.ops_per_cycle(Op::store) + 1e-9)
      fail("throughput.load_store exceeds load + store");
  }

  for (const auto& [op, cy] : m.latency.cycles)
    if (!(cy >= 1.0))
      fail(std::string("latency.") + to_string(op) + " must be >= 1");

  {
    std::set<Op> seen;
    for (const auto& pc : m.ports) {
      if (pc.classes.empty()) fail("port constraint with no classes");
      for (Op op : pc.classes) {
        if (!seen.insert(op).second)
          fail(std::string("operation '") + to_string(op) +
               "' appears in more than one port constraint");
        if (!m.throughput.has(op))
          fail(std::string("port constraint references '") + to_string(op) +
               "' which has no throughput entry");
      }
    }
  }

  for (Level l : {Level::L1, Level::L2, Level::L3})
    if (!m.cache(l))
      fail(std::string("missing cache level ") + to_string(l));
  for (const auto& c : m.caches) {
    if (c.capacity_bytes <= 0)
      fail(std::string("cache.") + to_string(c.level) +
           ".capacity_bytes must be positive");
    if (c.shared_by < 1)
      fail(std::string("cache.") + to_string(c.level) +
           ".shared_by must be >= 1");
    if (c.write_through && c.level != Level::L1)
      fail("write_through is only supported on l1");
  }

  const bool direct = m.topology.memory_attach == MemoryAttach::direct_to_l2;
  {
    std::set<LinkId> seen;
    for (const auto& l : m.links) {
      if (!seen.insert(l.id).second)
        fail(std::string("duplicate link ") + to_string(l.id));
      if (!(l.bw_down > 0))
        fail(std::string("link.") + to_string(l.id) +
             ".bw_down must be positive");
      if (l.dual && !(l.bw_up > 0))
        fail(std::string("link.") + to_string(l.id) +
             ".bw_up must be positive for a dual link");
      if (l.penalty_cy_per_byte < 0)
        fail(std::string("link.") + to_string(l.id) + ": negative penalty");
    }
    for (LinkId id : {LinkId::L1L2, LinkId::L2L3, LinkId::L3Mem})
      if (!seen.count(id))
        fail(std::string("missing link ") + to_string(id));
    if (direct && !seen.count(LinkId::L2Mem))
      fail("memory_attach direct_to_l2 requires link l2mem");
    if (!direct && seen.count(LinkId::L2Mem))
      fail("link l2mem requires memory_attach direct_to_l2");
  }

  // Overlap policy: one rule per residence, comp overlapped, coverage
  // exactly equal to the structurally possible labels.
  for (Level res : {Level::L1, Level::L2, Level::L3, Level::Mem}) {
    const OverlapRule* r = m.overlap.rule_for(res);
    if (!r) {
      fail(std::string("overlap policy: no rule for residence ") +
           to_string(res));
      continue;
    }
    if (!r->overlap.count(Label::comp))
      fail(std::string("overlap rule ") + to_string(res) +
           ": comp must be in the overlap set");
    std::set<Label> covered = r->serial;
    for (Label l : r->overlap) {
      if (covered.count(l))
        fail(std::string("overlap rule ") + to_string(res) + ": label '" +
             to_string(l) + "' in both serial and overlap sets");
      covered.insert(l);
    }
    std::set<Label> expect = possible_labels(m, res);
    for (Label l : covered)
      if (!expect.count(l))
        fail(std::string("overlap rule ") + to_string(res) + ": label '" +
             to_string(l) + "' cannot carry traffic at this residence");
    for (Label l : expect)
      if (!covered.count(l))
        fail(std::string("overlap rule ") + to_string(res) +
             ": label '" + to_string(l) + "' is not covered");
  }
  {
    std::set<Level> seen;
    for (const auto& r : m.overlap.rules)
      if (!seen.insert(r.when).second)
        fail(std::string("overlap policy: duplicate rule for ") +
             to_string(r.when));
  }

  if (m.topology.numa_domains < 1) fail("topology.numa_domains must be >= 1");
  if (m.topology.cores_per_domain < 1)
    fail("topology.cores_per_domain must be >= 1");
  if (!(m.topology.mem_bw_min > 0) || !(m.topology.mem_bw_max > 0) ||
      m.topology.mem_bw_min > m.topology.mem_bw_max)
    fail("topology memory bandwidth range is invalid");
  if (m.topology.mem_bw_point < m.topology.mem_bw_min - 1e-9 ||
      m.topology.mem_bw_point > m.topology.mem_bw_max + 1e-9)
    fail("topology.mem_bw_point outside [mem_bw_min, mem_bw_max]");
  for (const auto& g : m.topology.shared_cache_groups) {
    if (!m.cache(g.level))
      fail(std::string("shared cache group references missing level ") +
           to_string(g.level));
    if (g.group_size < 1) fail("shared cache group size must be >= 1");
    if (g.aggregate_bw && !(*g.aggregate_bw > 0))
      fail("shared cache group aggregate_bw must be positive");
  }

  return v;
}

// Throws unless the model validates cleanly.
inline void require_valid(const MachineModel& m) {
  auto v = validate_machine(m);
  if (!v.empty()) {
    std::string msg = "invalid machine model '" + m.name + "':";
    for (const auto& s : v) msg += "\n  - " + s;
    throw ModelError(msg);
  }
}

// ---------------------------------------------------------------------------
// YAML parsing

namespace detail {

inline ThroughputEntry parse_throughput_entry(const YAML::Node& n,
                                              const std::string& path) {
  ThroughputEntry e;
  if (n.IsScalar()) {
    e.ops_per_cycle = cfg::as<double>(n, path);
    return e;
  }
  cfg::check_keys(n, path, {"ops_per_cycle", "instr_per_cycle", "simd_lanes"});
  e.instr_per_cycle = cfg::get_opt<double>(n, path, "instr_per_cycle");
  e.simd_lanes = cfg::get_opt<double>(n, path, "simd_lanes");
  auto ops = cfg::get_opt<double>(n, path, "ops_per_cycle");
  if (ops)
    e.ops_per_cycle = *ops;
  else if (e.instr_per_cycle && e.simd_lanes)
    e.ops_per_cycle = *e.instr_per_cycle * *e.simd_lanes;
  else
    throw ConfigError("'" + path +
                      "' needs ops_per_cycle or instr_per_cycle+simd_lanes");
  return e;
}

inline std::set<Label> parse_label_set(const YAML::Node& n,
                                       const std::string& path) {
  std::set<Label> out;
  if (!n.IsSequence())
    throw ConfigError("'" + path + "' must be a list of labels");
  for (const auto& item : n) {
    std::string s = cfg::as<std::string>(item, path);
    auto l = label_from_string(s);
    if (!l) throw ConfigError("'" + path + "': unknown label '" + s + "'");
    out.insert(*l);
  }
  return out;
}

}  // namespace detail

inline MachineModel parse_machine(const std::string& yaml_text) {
  YAML::Node doc = cfg::parse_document(yaml_text, "machine file");
  cfg::check_keys(doc, "",
                  {"name", "frequency_ghz", "throughput", "latency", "ports",
                   "cache", "link", "overlap", "topology"});
  MachineModel m;
  m.name = cfg::get<std::string>(doc, "", "name");
  m.frequency_ghz = cfg::get<double>(doc, "", "frequency_ghz");

  YAML::Node th = cfg::require(doc, "", "throughput");
  cfg::check_keys(th, "throughput",
                  {"add", "mul", "fma", "div", "load", "store", "load_store",
                   "total"});
  for (Op op : {Op::add, Op::mul, Op::fma, Op::divide, Op::load, Op::store,
                Op::load_store, Op::total}) {
    auto n = cfg::optional_node(th, to_string(op));
    if (n)
      m.throughput.entries[op] = detail::parse_throughput_entry(
          *n, std::string("throughput.") + to_string(op));
  }

  if (auto lat = cfg::optional_node(doc, "latency")) {
    cfg::check_keys(*lat, "latency", {"add", "mul", "fma", "div"});
    for (Op op : {Op::add, Op::mul, Op::fma, Op::divide}) {
      auto n = cfg::optional_node(*lat, to_string(op));
      if (n)
        m.latency.cycles[op] =
            cfg::as<double>(*n, std::string("latency.") + to_string(op));
    }
  }

  if (auto ports = cfg::optional_node(doc, "ports")) {
    if (!ports->IsSequence())
      throw ConfigError("'ports' must be a list of operation-class lists");
    for (const auto& group : *ports) {
      PortConstraint pc;
      if (!group.IsSequence())
        throw ConfigError("'ports' entries must be lists");
      for (const auto& item : group) {
        std::string s = cfg::as<std::string>(item, "ports");
        auto op = op_from_string(s);
        if (!op) throw ConfigError("'ports': unknown operation '" + s + "'");
        pc.classes.push_back(*op);
      }
      m.ports.push_back(std::move(pc));
    }
  }

  YAML::Node cache = cfg::require(doc, "", "cache");
  cfg::check_keys(cache, "cache", {"l1", "l2", "l3"});
  for (Level l : {Level::L1, Level::L2, Level::L3}) {
    auto n = cfg::optional_node(cache, to_string(l));
    if (!n) continue;
    std::string path = std::string("cache.") + to_string(l);
    cfg::check_keys(*n, path,
                    {"capacity_bytes", "shared_by", "write_through", "victim",
                     "victim_receives_clean", "write_allocate_evasion",
                     "scalable"});
    CacheLevel c;
    c.level = l;
    c.capacity_bytes = cfg::get<std::int64_t>(*n, path, "capacity_bytes");
    c.shared_by = cfg::get_or<int>(*n, path, "shared_by", 1);
    c.write_through = cfg::get_or<bool>(*n, path, "write_through", false);
    c.victim = cfg::get_or<bool>(*n, path, "victim", false);
    c.victim_receives_clean =
        cfg::get_or<bool>(*n, path, "victim_receives_clean", true);
    c.write_allocate_evasion =
        cfg::get_or<bool>(*n, path, "write_allocate_evasion", false);
    c.scalable = cfg::get_or<bool>(*n, path, "scalable", true);
    m.caches.push_back(c);
  }

  YAML::Node topo = cfg::require(doc, "", "topology");
  cfg::check_keys(topo, "topology",
                  {"numa_domains", "cores_per_domain", "mem_bw_min",
                   "mem_bw_max", "mem_bw_point", "memory_attach",
                   "shared_cache_groups"});
  m.topology.numa_domains = cfg::get<int>(topo, "topology", "numa_domains");
  m.topology.cores_per_domain =
      cfg::get<int>(topo, "topology", "cores_per_domain");
  m.topology.mem_bw_min = cfg::get<double>(topo, "topology", "mem_bw_min");
  m.topology.mem_bw_max = cfg::get<double>(topo, "topology", "mem_bw_max");
  m.topology.mem_bw_point = cfg::get_or<double>(
      topo, "topology", "mem_bw_point", m.topology.mem_bw_max);
  {
    std::string s =
        cfg::get<std::string>(topo, "topology", "memory_attach");
    if (s == "through_l3")
      m.topology.memory_attach = MemoryAttach::through_l3;
    else if (s == "direct_to_l2")
      m.topology.memory_attach = MemoryAttach::direct_to_l2;
    else
      throw ConfigError("topology.memory_attach must be 'through_l3' or "
                        "'direct_to_l2'");
  }
  if (auto groups = cfg::optional_node(topo, "shared_cache_groups")) {
    if (!groups->IsSequence())
      throw ConfigError("topology.shared_cache_groups must be a list");
    for (const auto& gn : *groups) {
      std::string path = "topology.shared_cache_groups";
      cfg::check_keys(gn, path, {"level", "group_size", "aggregate_bw"});
      SharedCacheGroup g;
      std::string ls = cfg::get<std::string>(gn, path, "level");
      auto lvl = level_from_string(ls);
      if (!lvl || *lvl == Level::Mem)
        throw ConfigError(path + ": bad cache level '" + ls + "'");
      g.level = *lvl;
      g.group_size = cfg::get<int>(gn, path, "group_size");
      g.aggregate_bw = cfg::get_opt<double>(gn, path, "aggregate_bw");
      m.topology.shared_cache_groups.push_back(g);
    }
  }

  if (auto links = cfg::optional_node(doc, "link")) {
    cfg::check_keys(*links, "link", {"l1l2", "l2l3", "l2mem", "l3mem"});
    for (LinkId id :
         {LinkId::L1L2, LinkId::L2L3, LinkId::L2Mem, LinkId::L3Mem}) {
      auto n = cfg::optional_node(*links, to_string(id));
      if (!n) continue;
      std::string path = std::string("link.") + to_string(id);
      cfg::check_keys(*n, path,
                      {"duplex", "bw_down", "bw_up", "penalty_cy_per_byte",
                       "penalty_direction"});
      TransferLink l;
      l.id = id;
      std::string duplex =
          cfg::get_or<std::string>(*n, path, "duplex", "single");
      if (duplex == "dual")
        l.dual = true;
      else if (duplex != "single")
        throw ConfigError(path + ".duplex must be 'single' or 'dual'");
      auto down = cfg::get_opt<double>(*n, path, "bw_down");
      if (down) {
        l.bw_down = *down;
        l.bw_up = cfg::get_or<double>(*n, path, "bw_up", *down);
      } else if (link_touches_memory(id)) {
        // Memory links default to the per-domain sustained point value.
        l.bw_down = m.topology.mem_bw_point;
        l.bw_up = m.topology.mem_bw_point;
        l.bw_from_topology = true;
      } else {
        throw ConfigError(path + ".bw_down is required");
      }
      l.penalty_cy_per_byte =
          cfg::get_or<double>(*n, path, "penalty_cy_per_byte", 0.0);
      std::string dir =
          cfg::get_or<std::string>(*n, path, "penalty_direction", "up");
      if (dir == "up")
        l.penalty_direction = Direction::up;
      else if (dir == "down")
        l.penalty_direction = Direction::down;
      else
        throw ConfigError(path + ".penalty_direction must be 'down' or 'up'");
      m.links.push_back(l);
    }
  }
  // Memory links may be omitted entirely; build them from the topology.
  auto ensure_mem_link = [&](LinkId id) {
    if (m.link(id)) return;
    TransferLink l;
    l.id = id;
    l.bw_down = l.bw_up = m.topology.mem_bw_point;
    l.bw_from_topology = true;
    m.links.push_back(l);
  };
  ensure_mem_link(LinkId::L3Mem);
  if (m.topology.memory_attach == MemoryAttach::direct_to_l2)
    ensure_mem_link(LinkId::L2Mem);

  YAML::Node ov = cfg::require(doc, "", "overlap");
  cfg::check_keys(ov, "overlap", {"rules"});
  YAML::Node rules = cfg::require(ov, "overlap", "rules");
  if (!rules.IsSequence())
    throw ConfigError("overlap.rules must be a list");
  for (const auto& rn : rules) {
    std::string path = "overlap.rules";
    cfg::check_keys(rn, path, {"when", "serial", "overlap"});
    OverlapRule r;
    std::string when = cfg::get<std::string>(rn, path, "when");
    std::optional<Level> lvl = when == "mem_involved"
                                   ? std::optional<Level>(Level::Mem)
                                   : level_from_string(when);
    if (!lvl) throw ConfigError(path + ": unknown residence '" + when + "'");
    r.when = *lvl;
    if (auto s = cfg::optional_node(rn, "serial"))
      r.serial = detail::parse_label_set(*s, path + ".serial");
    if (auto o = cfg::optional_node(rn, "overlap"))
      r.overlap = detail::parse_label_set(*o, path + ".overlap");
    m.overlap.rules.push_back(std::move(r));
  }

  require_valid(m);
  return m;
}

// ---------------------------------------------------------------------------
// YAML serialization (round-trips through parse_machine)

namespace detail {

inline std::string fmt_num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

inline std::string serialize_machine(const MachineModel& m) {
  using detail::fmt_num;
  std::ostringstream os;
  os << "name: " << m.name << "\n";
  os << "frequency_ghz: " << fmt_num(m.frequency_ghz) << "\n";
  os << "throughput:\n";
  for (const auto& [op, e] : m.throughput.entries) {
    os << "  " << to_string(op) << ":";
    if (e.instr_per_cycle && e.simd_lanes) {
      os << "\n    ops_per_cycle: " << fmt_num(e.ops_per_cycle)
         << "\n    instr_per_cycle: " << fmt_num(*e.instr_per_cycle)
         << "\n    simd_lanes: " << fmt_num(*e.simd_lanes) << "\n";
    } else {
      os << " " << fmt_num(e.ops_per_cycle) << "\n";
    }
  }
  if (!m.latency.cycles.empty()) {
    os << "latency:\n";
    for (const auto& [op, cy] : m.latency.cycles)
      os << "  " << to_string(op) << ": " << fmt_num(cy) << "\n";
  }
  if (!m.ports.empty()) {
    os << "ports:\n";
    for (const auto& pc : m.ports) {
      os << "  - [";
      for (std::size_t i = 0; i < pc.classes.size(); ++i)
        os << (i ? ", " : "") << to_string(pc.classes[i]);
      os << "]\n";
    }
  }
  os << "cache:\n";
  for (const auto& c : m.caches) {
    os << "  " << to_string(c.level) << ":\n";
    os << "    capacity_bytes: " << c.capacity_bytes << "\n";
    os << "    shared_by: " << c.shared_by << "\n";
    if (c.write_through) os << "    write_through: true\n";
    if (c.victim) os << "    victim: true\n";
    if (!c.victim_receives_clean) os << "    victim_receives_clean: false\n";
    if (c.write_allocate_evasion) os << "    write_allocate_evasion: true\n";
    if (!c.scalable) os << "    scalable: false\n";
  }
  os << "link:\n";
  for (const auto& l : m.links) {
    os << "  " << to_string(l.id) << ":\n";
    if (l.dual) os << "    duplex: dual\n";
    if (!l.bw_from_topology) {
      os << "    bw_down: " << fmt_num(l.bw_down) << "\n";
      if (l.dual || l.bw_up != l.bw_down)
        os << "    bw_up: " << fmt_num(l.bw_up) << "\n";
    }
    if (l.penalty_cy_per_byte != 0.0) {
      os << "    penalty_cy_per_byte: " << fmt_num(l.penalty_cy_per_byte)
         << "\n";
      os << "    penalty_direction: "
         << (l.penalty_direction == Direction::up ? "up" : "down") << "\n";
    }
  }
  os << "overlap:\n  rules:\n";
  for (const auto& r : m.overlap.rules) {
    os << "    - when: " << to_string(r.when) << "\n";
    os << "      serial: [";
    std::size_t i = 0;
    for (Label l : r.serial) os << (i++ ? ", " : "") << to_string(l);
    os << "]\n      overlap: [";
    i = 0;
    for (Label l : r.overlap) os << (i++ ? ", " : "") << to_string(l);
    os << "]\n";
  }
  os << "topology:\n";
  os << "  numa_domains: " << m.topology.numa_domains << "\n";
  os << "  cores_per_domain: " << m.topology.cores_per_domain << "\n";
  os << "  mem_bw_min: " << fmt_num(m.topology.mem_bw_min) << "\n";
  os << "  mem_bw_max: " << fmt_num(m.topology.mem_bw_max) << "\n";
  os << "  mem_bw_point: " << fmt_num(m.topology.mem_bw_point) << "\n";
  os << "  memory_attach: "
     << (m.topology.memory_attach == MemoryAttach::through_l3
             ? "through_l3"
             : "direct_to_l2")
     << "\n";
  if (!m.topology.shared_cache_groups.empty()) {
    os << "  shared_cache_groups:\n";
    for (const auto& g : m.topology.shared_cache_groups) {
      os << "    - level: " << to_string(g.level) << "\n";
      os << "      group_size: " << g.group_size << "\n";
      if (g.aggregate_bw)
        os << "      aggregate_bw: " << fmt_num(*g.aggregate_bw) << "\n";
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Builtin machines
//
// Four server-CPU presets. Memory point bandwidths are the single values
// (inside the published sustained ranges) that reproduce the bundled
// single-core reference timings: skl 60 GB/s / 2.2 GHz, epyc 13 B/cy,
// tx2 56 B/cy, pwr9 44.4 B/cy (all per NUMA domain).

namespace presets {

inline ThroughputEntry tp(double instr_per_cycle, double lanes) {
  ThroughputEntry e;
  e.instr_per_cycle = instr_per_cycle;
  e.simd_lanes = lanes;
  e.ops_per_cycle = instr_per_cycle * lanes;
  return e;
}

inline OverlapRule rule(Level when, std::set<Label> serial,
                        std::set<Label> overlap) {
  OverlapRule r;
  r.when = when;
  r.serial = std::move(serial);
  r.overlap = std::move(overlap);
  return r;
}

inline TransferLink cache_link(LinkId id, double bw) {
  TransferLink l;
  l.id = id;
  l.bw_down = l.bw_up = bw;
  return l;
}

inline TransferLink dual_link(LinkId id, double down, double up) {
  TransferLink l;
  l.id = id;
  l.dual = true;
  l.bw_down = down;
  l.bw_up = up;
  return l;
}

inline TransferLink mem_link(LinkId id, double bw) {
  TransferLink l;
  l.id = id;
  l.bw_down = l.bw_up = bw;
  l.bw_from_topology = true;
  return l;
}

inline CacheLevel cache(Level level, std::int64_t bytes, int shared_by) {
  CacheLevel c;
  c.level = level;
  c.capacity_bytes = bytes;
  c.shared_by = shared_by;
  return c;
}

// Skylake-SP class: AVX-512, non-scalable-free hierarchy, victim L3,
// in-memory fills routed through the L3. Sub-NUMA clustering on.
inline MachineModel skl() {
  MachineModel m;
  m.name = "skl";
  m.frequency_ghz = 2.2;
  m.throughput.entries[Op::add] = tp(2, 8);
  m.throughput.entries[Op::mul] = tp(2, 8);
  m.throughput.entries[Op::fma] = tp(2, 8);
  m.throughput.entries[Op::load] = tp(2, 8);
  m.throughput.entries[Op::store] = tp(1, 8);
  m.throughput.entries[Op::load_store] = tp(2, 8);
  m.latency.cycles = {{Op::add, 4}, {Op::mul, 4}, {Op::fma, 4}};
  m.caches.push_back(cache(Level::L1, 32 * 1024, 1));
  m.caches.push_back(cache(Level::L2, 1024 * 1024, 1));
  {
    CacheLevel l3 = cache(Level::L3, 28835840 /* 27.5 MiB */, 20);
    l3.victim = true;
    m.caches.push_back(l3);
  }
  const double bw = 60.0 / 2.2;  // measured GB/s over de-facto GHz
  m.links.push_back(cache_link(LinkId::L1L2, 64));
  m.links.push_back(cache_link(LinkId::L2L3, 32));
  m.links.push_back(mem_link(LinkId::L3Mem, bw));
  m.topology.numa_domains = 2;
  m.topology.cores_per_domain = 10;
  m.topology.mem_bw_min = 25;
  m.topology.mem_bw_max = 28;
  m.topology.mem_bw_point = bw;
  m.topology.memory_attach = MemoryAttach::through_l3;
  m.overlap.rules = {
      rule(Level::L1, {Label::RegL1}, {Label::comp}),
      rule(Level::L2, {Label::RegL1, Label::L1L2}, {Label::comp}),
      rule(Level::L3, {Label::RegL1, Label::L1L2, Label::L2L3},
           {Label::comp}),
      rule(Level::Mem,
           {Label::RegL1, Label::L1L2, Label::L2L3, Label::L3Mem},
           {Label::comp}),
  };
  return m;
}

// Zen-class: AVX2 executed as 2x128-bit, CCX groups of three cores with a
// non-scalable shared L3 that only receives modified lines, in-memory
// fills go straight into the L2.
inline MachineModel epyc() {
  MachineModel m;
  m.name = "epyc";
  m.frequency_ghz = 2.3;
  m.throughput.entries[Op::add] = tp(2, 2);
  m.throughput.entries[Op::mul] = tp(2, 2);
  m.throughput.entries[Op::fma] = tp(2, 2);
  m.throughput.entries[Op::load] = tp(2, 2);
  m.throughput.entries[Op::store] = tp(1, 2);
  m.throughput.entries[Op::load_store] = tp(2, 2);
  m.latency.cycles = {{Op::add, 3}, {Op::mul, 4}, {Op::fma, 5}};
  m.caches.push_back(cache(Level::L1, 32 * 1024, 1));
  m.caches.push_back(cache(Level::L2, 512 * 1024, 1));
  {
    CacheLevel l3 = cache(Level::L3, 8 * 1024 * 1024, 3);
    l3.victim = true;
    l3.victim_receives_clean = false;
    l3.scalable = false;
    m.caches.push_back(l3);
  }
  m.links.push_back(dual_link(LinkId::L1L2, 32, 32));
  m.links.push_back(cache_link(LinkId::L2L3, 32));
  m.links.push_back(mem_link(LinkId::L2Mem, 13));
  m.links.push_back(mem_link(LinkId::L3Mem, 13));
  m.topology.numa_domains = 4;
  m.topology.cores_per_domain = 6;
  m.topology.mem_bw_min = 13;
  m.topology.mem_bw_max = 16;
  m.topology.mem_bw_point = 13;
  m.topology.memory_attach = MemoryAttach::direct_to_l2;
  {
    SharedCacheGroup g;
    g.level = Level::L3;
    g.group_size = 3;
    g.aggregate_bw = 32;
    m.topology.shared_cache_groups.push_back(g);
  }
  m.overlap.rules = {
      rule(Level::L1, {}, {Label::comp, Label::RegL1}),
      rule(Level::L2, {}, {Label::comp, Label::RegL1, Label::L1L2}),
      rule(Level::L3, {Label::L2L3},
           {Label::comp, Label::RegL1, Label::L1L2}),
      rule(Level::Mem, {Label::L2L3, Label::L2Mem, Label::L3Mem},
           {Label::comp, Label::RegL1, Label::L1L2}),
  };
  return m;
}

// ThunderX2-class: NEON, single NUMA domain, victim L3; every transfer
// serializes once main memory is involved.
inline MachineModel tx2() {
  MachineModel m;
  m.name = "tx2";
  m.frequency_ghz = 2.2;
  m.throughput.entries[Op::add] = tp(2, 2);
  m.throughput.entries[Op::mul] = tp(2, 2);
  m.throughput.entries[Op::fma] = tp(2, 2);
  m.throughput.entries[Op::load] = tp(2, 2);
  m.throughput.entries[Op::store] = tp(1, 2);
  m.throughput.entries[Op::load_store] = tp(2, 2);
  m.latency.cycles = {{Op::add, 6}, {Op::mul, 6}, {Op::fma, 6}};
  m.caches.push_back(cache(Level::L1, 32 * 1024, 1));
  m.caches.push_back(cache(Level::L2, 256 * 1024, 1));
  {
    CacheLevel l3 = cache(Level::L3, 32 * 1024 * 1024, 32);
    l3.victim = true;
    m.caches.push_back(l3);
  }
  m.links.push_back(cache_link(LinkId::L1L2, 64));
  m.links.push_back(cache_link(LinkId::L2L3, 32));
  m.links.push_back(mem_link(LinkId::L2Mem, 56));
  m.links.push_back(mem_link(LinkId::L3Mem, 56));
  m.topology.numa_domains = 1;
  m.topology.cores_per_domain = 32;
  m.topology.mem_bw_min = 47;
  m.topology.mem_bw_max = 56;
  m.topology.mem_bw_point = 56;
  m.topology.memory_attach = MemoryAttach::direct_to_l2;
  m.overlap.rules = {
      rule(Level::L1, {Label::RegL1}, {Label::comp}),
      rule(Level::L2, {Label::RegL1, Label::L1L2}, {Label::comp}),
      rule(Level::L3, {Label::RegL1, Label::L1L2},
           {Label::comp, Label::L2L3}),
      rule(Level::Mem,
           {Label::RegL1, Label::L1L2, Label::L2L3, Label::L2Mem,
            Label::L3Mem},
           {Label::comp}),
  };
  return m;
}

// POWER9-class: write-through L1, asymmetric L1<->L2 channels, core pairs
// share non-scalable L2/L3 segments, and L3->Mem write-backs pay an extra
// per-byte penalty.
inline MachineModel pwr9() {
  MachineModel m;
  m.name = "pwr9";
  m.frequency_ghz = 3.1;
  m.throughput.entries[Op::add] = tp(2, 2);
  m.throughput.entries[Op::mul] = tp(2, 2);
  m.throughput.entries[Op::fma] = tp(2, 2);
  m.throughput.entries[Op::load] = tp(2, 2);
  m.throughput.entries[Op::store] = tp(2, 2);
  m.throughput.entries[Op::load_store] = tp(2, 2);
  m.latency.cycles = {{Op::add, 6}, {Op::mul, 6}, {Op::fma, 6}};
  {
    CacheLevel l1 = cache(Level::L1, 32 * 1024, 1);
    l1.write_through = true;
    m.caches.push_back(l1);
  }
  {
    CacheLevel l2 = cache(Level::L2, 512 * 1024, 2);
    l2.scalable = false;
    m.caches.push_back(l2);
  }
  {
    CacheLevel l3 = cache(Level::L3, 115343360 /* 110 MiB */, 22);
    l3.victim = true;
    l3.scalable = false;
    m.caches.push_back(l3);
  }
  m.links.push_back(dual_link(LinkId::L1L2, 64, 16));
  m.links.push_back(cache_link(LinkId::L2L3, 32));
  m.links.push_back(mem_link(LinkId::L2Mem, 44.4));
  {
    TransferLink l = mem_link(LinkId::L3Mem, 44.4);
    l.penalty_cy_per_byte = 0.04;
    l.penalty_direction = Direction::up;
    m.links.push_back(l);
  }
  m.topology.numa_domains = 1;
  m.topology.cores_per_domain = 22;
  m.topology.mem_bw_min = 41;
  m.topology.mem_bw_max = 45;
  m.topology.mem_bw_point = 44.4;
  m.topology.memory_attach = MemoryAttach::direct_to_l2;
  {
    SharedCacheGroup l2g;
    l2g.level = Level::L2;
    l2g.group_size = 2;
    m.topology.shared_cache_groups.push_back(l2g);
    SharedCacheGroup l3g;
    l3g.level = Level::L3;
    l3g.group_size = 2;
    m.topology.shared_cache_groups.push_back(l3g);
  }
  m.overlap.rules = {
      rule(Level::L1, {Label::RegL1, Label::L1L2}, {Label::comp}),
      rule(Level::L2, {Label::RegL1, Label::L1L2}, {Label::comp}),
      rule(Level::L3, {Label::RegL1, Label::L1L2},
           {Label::comp, Label::L2L3}),
      rule(Level::Mem,
           {Label::RegL1, Label::L1L2, Label::L2Mem, Label::L3Mem},
           {Label::comp, Label::L2L3}),
  };
  return m;
}

}  // namespace presets

inline std::vector<std::string> builtin_machine_names() {
  return {"skl", "epyc", "tx2", "pwr9"};
}

inline MachineModel builtin_machine(const std::string& name) {
  if (name == "skl") return presets::skl();
  if (name == "epyc") return presets::epyc();
  if (name == "tx2") return presets::tx2();
  if (name == "pwr9") return presets::pwr9();
  throw ModelError("unknown machine preset '" + name + "'");
}

inline std::vector<MachineModel> builtin_machines() {
  std::vector<MachineModel> out;
  for (const auto& n : builtin_machine_names())
    out.push_back(builtin_machine(n));
  return out;
}

}  // namespace ecm
