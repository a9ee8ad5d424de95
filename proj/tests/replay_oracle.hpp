#pragma once

// Brute-force cache replay used to cross-check the analytic traffic
// derivation. Three fully associative LRU levels at element granularity;
// policies cover write-through L1, victim L3 (exclusive: hits promote the
// line out of the L3), clean-eviction handling, write-allocate evasion
// and the two memory attach variants.
//
// Volumes are collected per tagged element: in steady state every
// interior element of an array has the same lifecycle, and each array
// advances by exactly one element per iteration, so the per-iteration
// link volumes of the loop equal the sum of one interior element's
// lifecycle bytes over all arrays. Counting for a tag runs from its
// first access in the measured traversal to its first access in the
// following traversal, which captures exactly one period.
//
// Deliberately independent of the library headers.

#include <cstdint>
#include <list>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace replay {

struct Policy {
  bool l1_write_through = false;
  bool victim_receives_clean = true;
  bool write_allocate_evasion = false;
  bool fills_direct_to_l2 = false;  // else in-memory fills transit the L3
};

struct Capacities {
  std::size_t l1 = 0, l2 = 0, l3 = 0;  // elements
};

// One access per iteration relative to the current (outer, inner) point.
struct Ref {
  int array = 0;
  int d_outer = 0;
  int d_inner = 0;
  bool write = false;
};

struct LinkBytes {
  long long down = 0, up = 0;

  bool operator==(const LinkBytes&) const = default;
};

struct Volumes {
  LinkBytes l1l2, l2l3, l2mem, l3mem;

  bool operator==(const Volumes&) const = default;
};

using Key = std::int64_t;

class LruCache {
public:
  explicit LruCache(std::size_t capacity) : cap_(capacity) {}

  bool contains(Key k) const { return index_.count(k) != 0; }

  bool dirty(Key k) const { return index_.at(k)->dirty; }

  void touch(Key k) {
    auto it = index_.at(k);
    order_.splice(order_.begin(), order_, it);
  }

  void set_dirty(Key k, bool d) { index_.at(k)->dirty = d; }

  void insert(Key k, bool d) {
    if (auto it = index_.find(k); it != index_.end()) {
      it->second->dirty = it->second->dirty || d;
      order_.splice(order_.begin(), order_, it->second);
      return;
    }
    order_.push_front(Entry{k, d});
    index_[k] = order_.begin();
  }

  void erase(Key k) {
    auto it = index_.find(k);
    if (it == index_.end()) return;
    order_.erase(it->second);
    index_.erase(it);
  }

  bool over_capacity() const { return order_.size() > cap_; }

  // LRU victim; caller handles where it goes.
  std::pair<Key, bool> pop_lru() {
    Entry e = order_.back();
    order_.pop_back();
    index_.erase(e.key);
    return {e.key, e.dirty};
  }

private:
  struct Entry {
    Key key;
    bool dirty;
  };
  std::size_t cap_;
  std::list<Entry> order_;
  std::unordered_map<Key, std::list<Entry>::iterator> index_;
};

class Hierarchy {
public:
  Hierarchy(const Policy& pol, const Capacities& cap, int elem_bytes)
      : pol_(pol), elem_bytes_(elem_bytes), l1_(cap.l1), l2_(cap.l2),
        l3_(cap.l3) {}

  // Per-tag accounting hooks.
  void set_tag(Key k, Volumes* sink) { tags_[k] = TagState{sink, false}; }
  void open_tag(Key k) { tags_.at(k).counting = true; }
  void close_tag(Key k) { tags_.at(k).counting = false; }
  bool tag_open(Key k) const {
    auto it = tags_.find(k);
    return it != tags_.end() && it->second.counting;
  }

  void read(Key k) {
    if (l1_.contains(k)) {
      l1_.touch(k);
      return;
    }
    fill(k);
  }

  void write(Key k) {
    if (pol_.l1_write_through) {
      if (!l1_.contains(k)) {
        if (pol_.write_allocate_evasion) {
          l1_.insert(k, false);
          settle_l1();
        } else {
          fill(k);
        }
      } else {
        l1_.touch(k);
      }
      // The store itself goes through to the L2 and dirties it there.
      charge(k, &Volumes::l1l2, Dir::up);
      if (!l2_.contains(k)) {
        l2_.insert(k, true);
        settle_l2();
      } else {
        l2_.set_dirty(k, true);
        l2_.touch(k);
      }
      return;
    }
    if (l1_.contains(k)) {
      l1_.touch(k);
      l1_.set_dirty(k, true);
      return;
    }
    if (pol_.write_allocate_evasion) {
      l1_.insert(k, true);
      settle_l1();
      return;
    }
    fill(k);
    l1_.set_dirty(k, true);
  }

private:
  enum class Dir { down, up };

  struct TagState {
    Volumes* sink;
    bool counting;
  };

  void charge(Key k, LinkBytes Volumes::*link, Dir d) {
    auto it = tags_.find(k);
    if (it == tags_.end() || !it->second.counting) return;
    LinkBytes& lb = it->second.sink->*link;
    if (d == Dir::down)
      lb.down += elem_bytes_;
    else
      lb.up += elem_bytes_;
  }

  // Pull a missing line into L1 (and L2) from wherever it lives.
  void fill(Key k) {
    if (l2_.contains(k)) {
      l2_.touch(k);
      charge(k, &Volumes::l1l2, Dir::down);
      l1_.insert(k, false);
      settle_l1();
      return;
    }
    if (l3_.contains(k)) {
      // Exclusive victim: a hit moves the line (and its dirty state) up.
      bool d = l3_.dirty(k);
      l3_.erase(k);
      charge(k, &Volumes::l2l3, Dir::down);
      charge(k, &Volumes::l1l2, Dir::down);
      l2_.insert(k, d);
      settle_l2();
      l1_.insert(k, false);
      settle_l1();
      return;
    }
    // Main memory.
    if (pol_.fills_direct_to_l2) {
      charge(k, &Volumes::l2mem, Dir::down);
    } else {
      charge(k, &Volumes::l3mem, Dir::down);  // transit, no L3 allocation
      charge(k, &Volumes::l2l3, Dir::down);
    }
    charge(k, &Volumes::l1l2, Dir::down);
    l2_.insert(k, false);
    settle_l2();
    l1_.insert(k, false);
    settle_l1();
  }

  void settle_l1() {
    while (l1_.over_capacity()) {
      auto [k, dirty] = l1_.pop_lru();
      if (pol_.l1_write_through) continue;  // never dirty, drop
      if (!dirty) continue;
      charge(k, &Volumes::l1l2, Dir::up);
      if (l2_.contains(k)) {
        l2_.set_dirty(k, true);
        l2_.touch(k);
      } else {
        l2_.insert(k, true);
        settle_l2();
      }
    }
  }

  void settle_l2() {
    while (l2_.over_capacity()) {
      auto [k, dirty] = l2_.pop_lru();
      // Victim L3: dirty lines always move in; clean lines move in
      // silently unless the victim accepts them as charged transfers.
      if (dirty || pol_.victim_receives_clean)
        charge(k, &Volumes::l2l3, Dir::up);
      l3_.insert(k, dirty);
      settle_l3();
    }
  }

  void settle_l3() {
    while (l3_.over_capacity()) {
      auto [k, dirty] = l3_.pop_lru();
      if (dirty) charge(k, &Volumes::l3mem, Dir::up);
    }
  }

  Policy pol_;
  int elem_bytes_;
  LruCache l1_, l2_, l3_;
  std::unordered_map<Key, TagState> tags_;
};

// Replays `traversals` sweeps of the (n_j x n_i) loop nest and returns,
// per array, the lifecycle volumes of one interior element, keyed so the
// sum over arrays equals the loop's per-iteration link traffic.
//
// refs must be listed in program order (reads before the writes of the
// same iteration).
inline std::vector<Volumes> run(const std::vector<Ref>& refs, int n_arrays,
                                int elem_bytes, const Policy& pol,
                                const Capacities& cap, std::int64_t n_i,
                                std::int64_t n_j, int traversals,
                                int measure_traversal, std::int64_t tag_j,
                                std::int64_t tag_i) {
  if (measure_traversal + 1 > traversals)
    throw std::runtime_error("need one traversal after the measured one");
  const std::int64_t halo = 4;
  const std::int64_t width = n_i + 2 * halo;
  const std::int64_t rows = n_j + 2 * halo;
  auto key = [&](int array, std::int64_t j, std::int64_t i) -> Key {
    return (static_cast<Key>(array) * rows + (j + halo)) * width + (i + halo);
  };

  Hierarchy h(pol, cap, elem_bytes);
  std::vector<Volumes> out(n_arrays);
  for (int a = 0; a < n_arrays; ++a)
    h.set_tag(key(a, tag_j, tag_i), &out[a]);

  for (int t = 0; t < traversals; ++t) {
    for (std::int64_t j = 0; j < n_j; ++j) {
      for (std::int64_t i = 0; i < n_i; ++i) {
        for (const auto& r : refs) {
          Key k = key(r.array, j + r.d_outer, i + r.d_inner);
          if (j + r.d_outer == tag_j && i + r.d_inner == tag_i) {
            if (t == measure_traversal && !h.tag_open(k))
              h.open_tag(k);
            else if (t == measure_traversal + 1)
              h.close_tag(k);
          }
          if (r.write)
            h.write(k);
          else
            h.read(k);
        }
      }
    }
  }
  return out;
}

}  // namespace replay
