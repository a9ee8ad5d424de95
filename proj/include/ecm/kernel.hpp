#pragma once

// Kernel model: operation mix, latency-bound dependency chain, array
// access pattern (per-array element size and -- relative to the current
// (outer, inner) loop point -- the offsets it reads), and loop geometry.
//
// Arrays of kind read_write read at the listed offsets and store to
// (0, 0); write-only arrays store at the listed offsets. Kernels with a
// reverse traversal are stored in forward form with mirrored offsets,
// which produces identical steady-state behavior.

#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "machine.hpp"

namespace ecm {

struct OpMix {
  double add = 0, mul = 0, fma = 0, divide = 0, load = 0, store = 0;

  double count(Op op) const {
    switch (op) {
      case Op::add: return add;
      case Op::mul: return mul;
      case Op::fma: return fma;
      case Op::divide: return divide;
      case Op::load: return load;
      case Op::store: return store;
      default: return 0;
    }
  }

  bool operator==(const OpMix&) const = default;
};

// Ordered list of operations forming the longest loop-carried dependency
// path; empty when unrolling hides the recurrence.
struct DependencyChain {
  std::vector<Op> ops;

  bool operator==(const DependencyChain&) const = default;
};

enum class AccessKind { read, write, read_write };

inline const char* to_string(AccessKind k) {
  switch (k) {
    case AccessKind::read: return "read";
    case AccessKind::write: return "write";
    case AccessKind::read_write: return "read_write";
  }
  return "?";
}

struct Offset {
  int outer = 0;
  int inner = 0;

  auto operator<=>(const Offset&) const = default;
};

struct ArrayAccess {
  std::string id;
  int elem_bytes = 8;
  AccessKind kind = AccessKind::read;
  std::vector<Offset> offsets;
  bool dense = true;  // unit-stride; false charges whole lines per miss

  bool reads() const { return kind != AccessKind::write; }
  bool writes() const { return kind != AccessKind::read; }

  // Rows of this array live in the loop's steady-state working set.
  int rows_spanned() const {
    int lo = 0, hi = 0;  // read_write/write always touch row 0
    for (const auto& o : offsets) {
      lo = std::min(lo, o.outer);
      hi = std::max(hi, o.outer);
    }
    return hi - lo + 1;
  }

  bool operator==(const ArrayAccess&) const = default;
};

enum class ParallelAxis { outer, inner };

struct KernelModel {
  std::string name;
  OpMix ops;
  DependencyChain dep_chain;
  std::vector<ArrayAccess> arrays;
  std::int64_t n_i = 0;  // inner (contiguous) extent
  std::int64_t n_j = 1;  // outer extent
  ParallelAxis axis = ParallelAxis::outer;
  double sync_per_outer_iter = 0.0;  // barriers per outer iteration
  double work_per_iter = 1.0;        // abstract work units ("it")
  double flops_per_iter = 0.0;       // reporting only

  const ArrayAccess* array(const std::string& id) const {
    for (const auto& a : arrays)
      if (a.id == id) return &a;
    return nullptr;
  }

  // Combined data-set footprint in bytes, halo rows ignored.
  double footprint_bytes() const {
    double total = 0;
    for (const auto& a : arrays)
      total += static_cast<double>(n_i) * static_cast<double>(n_j) *
               a.elem_bytes;
    return total;
  }

  bool operator==(const KernelModel&) const = default;
};

// ---------------------------------------------------------------------------
// Dependency cycles

// Latency of the loop-carried dependency path: the sum of the machine's
// instruction latencies along the chain.
inline double dependency_cycles(const KernelModel& k, const MachineModel& m) {
  double total = 0;
  for (Op op : k.dep_chain.ops) total += m.latency.latency(op);
  return total;
}

// ---------------------------------------------------------------------------
// Validation

inline std::vector<std::string> validate_kernel(const KernelModel& k) {
  std::vector<std::string> v;
  auto fail = [&](const std::string& s) { v.push_back(s); };

  if (k.name.empty()) fail("kernel name must not be empty");
  for (Op op : {Op::add, Op::mul, Op::fma, Op::divide, Op::load, Op::store})
    if (k.ops.count(op) < 0)
      fail(std::string("ops.") + to_string(op) + " must be >= 0");
  if (k.n_i < 1) fail("loop.ni must be >= 1");
  if (k.n_j < 1) fail("loop.nj must be >= 1");
  if (k.sync_per_outer_iter < 0) fail("sync_per_outer_iter must be >= 0");
  if (!(k.work_per_iter > 0)) fail("work_per_iter must be positive");

  double reads = 0, writes = 0;
  std::map<std::string, int> ids;
  for (const auto& a : k.arrays) {
    if (++ids[a.id] > 1) fail("duplicate array id '" + a.id + "'");
    if (a.elem_bytes < 1) fail("array '" + a.id + "': elem_bytes must be >= 1");
    if (a.offsets.empty()) fail("array '" + a.id + "' has no offsets");
    switch (a.kind) {
      case AccessKind::read: reads += a.offsets.size(); break;
      case AccessKind::write: writes += a.offsets.size(); break;
      case AccessKind::read_write:
        reads += a.offsets.size();
        writes += 1;
        break;
    }
  }
  if (reads != k.ops.load)
    fail("ops.load does not match the number of read offsets");
  if (writes != k.ops.store)
    fail("ops.store does not match the number of write offsets");

  return v;
}

inline void require_valid(const KernelModel& k) {
  auto v = validate_kernel(k);
  if (!v.empty()) {
    std::string msg = "invalid kernel model '" + k.name + "':";
    for (const auto& s : v) msg += "\n  - " + s;
    throw ModelError(msg);
  }
}

// ---------------------------------------------------------------------------
// YAML parsing

inline KernelModel parse_kernel(const std::string& yaml_text) {
  YAML::Node doc = cfg::parse_document(yaml_text, "kernel file");
  cfg::check_keys(doc, "",
                  {"name", "ops", "dep_chain", "arrays", "loop", "axis",
                   "sync_per_outer_iter", "work_per_iter", "flops_per_iter"});
  KernelModel k;
  k.name = cfg::get<std::string>(doc, "", "name");

  YAML::Node ops = cfg::require(doc, "", "ops");
  cfg::check_keys(ops, "ops", {"add", "mul", "fma", "div", "load", "store"});
  k.ops.add = cfg::get_or<double>(ops, "ops", "add", 0);
  k.ops.mul = cfg::get_or<double>(ops, "ops", "mul", 0);
  k.ops.fma = cfg::get_or<double>(ops, "ops", "fma", 0);
  k.ops.divide = cfg::get_or<double>(ops, "ops", "div", 0);
  k.ops.load = cfg::get_or<double>(ops, "ops", "load", 0);
  k.ops.store = cfg::get_or<double>(ops, "ops", "store", 0);

  if (auto chain = cfg::optional_node(doc, "dep_chain")) {
    if (!chain->IsSequence())
      throw ConfigError("'dep_chain' must be a list of operations");
    for (const auto& item : *chain) {
      std::string s = cfg::as<std::string>(item, "dep_chain");
      auto op = op_from_string(s);
      if (!op)
        throw ConfigError("'dep_chain': unknown operation '" + s + "'");
      k.dep_chain.ops.push_back(*op);
    }
  }

  YAML::Node arrays = cfg::require(doc, "", "arrays");
  if (!arrays.IsMap()) throw ConfigError("'arrays' must be a mapping");
  for (const auto& kv : arrays) {
    ArrayAccess a;
    a.id = kv.first.as<std::string>();
    std::string path = "arrays." + a.id;
    YAML::Node n = kv.second;
    cfg::check_keys(n, path, {"elem_bytes", "kind", "offsets", "dense"});
    a.elem_bytes = cfg::get_or<int>(n, path, "elem_bytes", 8);
    std::string kind = cfg::get<std::string>(n, path, "kind");
    if (kind == "read")
      a.kind = AccessKind::read;
    else if (kind == "write")
      a.kind = AccessKind::write;
    else if (kind == "read_write")
      a.kind = AccessKind::read_write;
    else
      throw ConfigError(path + ".kind must be read, write or read_write");
    a.dense = cfg::get_or<bool>(n, path, "dense", true);
    YAML::Node offs = cfg::require(n, path, "offsets");
    if (!offs.IsSequence())
      throw ConfigError(path + ".offsets must be a list of [outer, inner]");
    for (const auto& o : offs) {
      if (!o.IsSequence() || o.size() != 2)
        throw ConfigError(path + ".offsets entries must be [outer, inner]");
      Offset off;
      off.outer = cfg::as<int>(o[0], path + ".offsets");
      off.inner = cfg::as<int>(o[1], path + ".offsets");
      a.offsets.push_back(off);
    }
    k.arrays.push_back(std::move(a));
  }

  YAML::Node loop = cfg::require(doc, "", "loop");
  cfg::check_keys(loop, "loop", {"ni", "nj"});
  k.n_i = cfg::get<std::int64_t>(loop, "loop", "ni");
  k.n_j = cfg::get_or<std::int64_t>(loop, "loop", "nj", 1);

  std::string axis = cfg::get_or<std::string>(doc, "", "axis", "outer");
  if (axis == "outer")
    k.axis = ParallelAxis::outer;
  else if (axis == "inner")
    k.axis = ParallelAxis::inner;
  else
    throw ConfigError("'axis' must be 'outer' or 'inner'");

  k.sync_per_outer_iter =
      cfg::get_or<double>(doc, "", "sync_per_outer_iter", 0.0);
  k.work_per_iter = cfg::get_or<double>(doc, "", "work_per_iter", 1.0);
  k.flops_per_iter = cfg::get_or<double>(doc, "", "flops_per_iter", 0.0);

  require_valid(k);
  return k;
}

// ---------------------------------------------------------------------------
// YAML serialization

inline std::string serialize_kernel(const KernelModel& k) {
  using detail::fmt_num;
  std::ostringstream os;
  os << "name: " << k.name << "\n";
  os << "ops:\n";
  auto emit_op = [&](const char* key, double v) {
    if (v != 0) os << "  " << key << ": " << fmt_num(v) << "\n";
  };
  emit_op("add", k.ops.add);
  emit_op("mul", k.ops.mul);
  emit_op("fma", k.ops.fma);
  emit_op("div", k.ops.divide);
  emit_op("load", k.ops.load);
  emit_op("store", k.ops.store);
  if (!k.dep_chain.ops.empty()) {
    os << "dep_chain: [";
    for (std::size_t i = 0; i < k.dep_chain.ops.size(); ++i)
      os << (i ? ", " : "") << to_string(k.dep_chain.ops[i]);
    os << "]\n";
  }
  os << "arrays:\n";
  for (const auto& a : k.arrays) {
    os << "  " << a.id << ":\n";
    os << "    elem_bytes: " << a.elem_bytes << "\n";
    os << "    kind: " << to_string(a.kind) << "\n";
    os << "    offsets: [";
    for (std::size_t i = 0; i < a.offsets.size(); ++i)
      os << (i ? ", " : "") << "[" << a.offsets[i].outer << ", "
         << a.offsets[i].inner << "]";
    os << "]\n";
    if (!a.dense) os << "    dense: false\n";
  }
  os << "loop:\n  ni: " << k.n_i << "\n  nj: " << k.n_j << "\n";
  if (k.axis == ParallelAxis::inner) os << "axis: inner\n";
  if (k.sync_per_outer_iter != 0)
    os << "sync_per_outer_iter: " << fmt_num(k.sync_per_outer_iter) << "\n";
  if (k.work_per_iter != 1)
    os << "work_per_iter: " << fmt_num(k.work_per_iter) << "\n";
  if (k.flops_per_iter != 0)
    os << "flops_per_iter: " << fmt_num(k.flops_per_iter) << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Builtin kernels
//
// Streaming and stencil loops over double-precision arrays, sized
// 25000 x 2000 to keep the combined data set well out of any cache.

namespace presets {

inline ArrayAccess arr(const std::string& id, AccessKind kind,
                       std::vector<Offset> offsets) {
  ArrayAccess a;
  a.id = id;
  a.kind = kind;
  a.offsets = std::move(offsets);
  return a;
}

// y[i] = a*x[i] + b*y[i]
inline KernelModel daxpby() {
  KernelModel k;
  k.name = "daxpby";
  k.ops.fma = 1;
  k.ops.mul = 1;
  k.ops.load = 2;
  k.ops.store = 1;
  k.arrays = {arr("x", AccessKind::read, {{0, 0}}),
              arr("y", AccessKind::read_write, {{0, 0}})};
  k.n_i = 25000;
  k.n_j = 2000;
  k.flops_per_iter = 3;
  return k;
}

// s += x[i]*y[i], unrolled into independent partial sums
inline KernelModel dot() {
  KernelModel k;
  k.name = "dot";
  k.ops.fma = 1;
  k.ops.load = 2;
  k.arrays = {arr("x", AccessKind::read, {{0, 0}}),
              arr("y", AccessKind::read, {{0, 0}})};
  k.n_i = 25000;
  k.n_j = 2000;
  k.flops_per_iter = 2;
  return k;
}

// s += x[i]*x[i]
inline KernelModel norm() {
  KernelModel k;
  k.name = "norm";
  k.ops.fma = 1;
  k.ops.load = 1;
  k.arrays = {arr("x", AccessKind::read, {{0, 0}})};
  k.n_i = 25000;
  k.n_j = 2000;
  k.flops_per_iter = 2;
  return k;
}

// a[i] = b[i] + s*c[i]
inline KernelModel stream_triad() {
  KernelModel k;
  k.name = "stream_triad";
  k.ops.fma = 1;
  k.ops.load = 2;
  k.ops.store = 1;
  k.arrays = {arr("a", AccessKind::write, {{0, 0}}),
              arr("b", AccessKind::read, {{0, 0}}),
              arr("c", AccessKind::read, {{0, 0}})};
  k.n_i = 25000;
  k.n_j = 2000;
  k.flops_per_iter = 2;
  return k;
}

// v[j][i] = wc*p[j][i] + wy*(p[j-1][i] + p[j+1][i])
//                      + wx*(p[j][i-1] + p[j][i+1])
inline KernelModel stencil5() {
  KernelModel k;
  k.name = "stencil5";
  k.ops.fma = 2;
  k.ops.add = 2;
  k.ops.mul = 1;
  k.ops.load = 5;
  k.ops.store = 1;
  k.arrays = {
      arr("p", AccessKind::read, {{0, 0}, {0, -1}, {0, 1}, {-1, 0}, {1, 0}}),
      arr("v", AccessKind::write, {{0, 0}})};
  k.n_i = 25000;
  k.n_j = 2000;
  k.flops_per_iter = 7;
  return k;
}

// z[j][i] = wc*(r[j][i] + wy*z[j-1][i] + wx*z[j][i-1]); forward sweep of a
// Gauss-Seidel smoother, wavefront-parallel over the inner dimension with
// one barrier per row.
inline KernelModel gs_fwd() {
  KernelModel k;
  k.name = "gs_fwd";
  k.ops.fma = 2;
  k.ops.mul = 1;
  k.ops.load = 3;
  k.ops.store = 1;
  k.dep_chain.ops = {Op::fma, Op::mul};
  k.arrays = {arr("r", AccessKind::read, {{0, 0}}),
              arr("z", AccessKind::read_write, {{-1, 0}, {0, -1}})};
  k.n_i = 25000;
  k.n_j = 2000;
  k.axis = ParallelAxis::inner;
  k.sync_per_outer_iter = 1;
  k.flops_per_iter = 5;
  return k;
}

// Backward sweep: z[j][i] = wc*(z[j][i] + wy*z[j+1][i] + wx*z[j][i+1]),
// traversed in reverse; stored forwardized (offsets mirrored), which drops
// the separate right-hand-side stream and with it one load miss.
inline KernelModel gs_bwd() {
  KernelModel k;
  k.name = "gs_bwd";
  k.ops.fma = 2;
  k.ops.mul = 1;
  k.ops.load = 3;
  k.ops.store = 1;
  k.dep_chain.ops = {Op::fma, Op::mul};
  k.arrays = {
      arr("z", AccessKind::read_write, {{0, 0}, {-1, 0}, {0, -1}})};
  k.n_i = 25000;
  k.n_j = 2000;
  k.axis = ParallelAxis::inner;
  k.sync_per_outer_iter = 1;
  k.flops_per_iter = 5;
  return k;
}

}  // namespace presets

inline std::vector<std::string> builtin_kernel_names() {
  return {"daxpby", "dot",      "norm",  "stream_triad",
          "stencil5", "gs_fwd", "gs_bwd"};
}

inline KernelModel builtin_kernel(const std::string& name) {
  if (name == "daxpby") return presets::daxpby();
  if (name == "dot") return presets::dot();
  if (name == "norm") return presets::norm();
  if (name == "stream_triad") return presets::stream_triad();
  if (name == "stencil5") return presets::stencil5();
  if (name == "gs_fwd") return presets::gs_fwd();
  if (name == "gs_bwd") return presets::gs_bwd();
  throw ModelError("unknown kernel preset '" + name + "'");
}

inline std::vector<KernelModel> builtin_kernels() {
  std::vector<KernelModel> out;
  for (const auto& n : builtin_kernel_names())
    out.push_back(builtin_kernel(n));
  return out;
}

}  // namespace ecm
