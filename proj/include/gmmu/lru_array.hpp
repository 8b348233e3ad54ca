#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace gmmu {

// Set-associative tag store with true LRU replacement. Set selection is the
// caller's job; the array only sees (set, key).
template <class Key, class Value>
class SetAssocLru {
 public:
  struct Way {
    bool valid = false;
    Key key{};
    Value value{};
    std::uint64_t stamp = 0;
  };

  struct Evicted {
    Key key;
    Value value;
  };

  SetAssocLru(std::size_t sets, std::size_t ways) : sets_(sets), ways_(ways), store_(sets * ways) {
    if (sets == 0 || ways == 0) throw std::invalid_argument("SetAssocLru: empty geometry");
  }

  std::size_t sets() const { return sets_; }
  std::size_t ways() const { return ways_; }
  std::size_t capacity() const { return store_.size(); }

  // Probe without touching replacement state.
  const Way* find(std::size_t set, const Key& key) const {
    const Way* base = &store_[set * ways_];
    for (std::size_t w = 0; w < ways_; ++w) {
      if (base[w].valid && base[w].key == key) return &base[w];
    }
    return nullptr;
  }

  // Probe and promote to MRU on hit.
  Value* lookup(std::size_t set, const Key& key) {
    Way* way = const_cast<Way*>(find(set, key));
    if (!way) return nullptr;
    way->stamp = ++clock_;
    return &way->value;
  }

  // Inserts as MRU. Victim search is limited to [way_begin, way_end) so a
  // caller can carve the ways up between owners; an existing copy of `key`
  // anywhere in the set is updated in place instead.
  std::optional<Evicted> insert(std::size_t set, const Key& key, Value value,
                                std::size_t way_begin = 0, std::size_t way_end = SIZE_MAX) {
    Way* base = &store_[set * ways_];
    if (Way* hit = const_cast<Way*>(find(set, key))) {
      hit->value = std::move(value);
      hit->stamp = ++clock_;
      return std::nullopt;
    }
    way_end = std::min(way_end, ways_);
    if (way_begin >= way_end) throw std::invalid_argument("SetAssocLru: empty way range");
    Way* victim = nullptr;
    for (std::size_t w = way_begin; w < way_end; ++w) {
      if (!base[w].valid) {
        victim = &base[w];
        break;
      }
      if (!victim || base[w].stamp < victim->stamp) victim = &base[w];
    }
    std::optional<Evicted> out;
    if (victim->valid) out = Evicted{victim->key, std::move(victim->value)};
    victim->valid = true;
    victim->key = key;
    victim->value = std::move(value);
    victim->stamp = ++clock_;
    return out;
  }

  bool erase(std::size_t set, const Key& key) {
    Way* way = const_cast<Way*>(find(set, key));
    if (!way) return false;
    way->valid = false;
    return true;
  }

  template <class Pred>
  std::size_t erase_if(Pred pred) {
    std::size_t n = 0;
    for (auto& way : store_) {
      if (way.valid && pred(way.key, way.value)) {
        way.valid = false;
        ++n;
      }
    }
    return n;
  }

  void clear() {
    for (auto& way : store_) way.valid = false;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& way : store_) n += way.valid ? 1 : 0;
    return n;
  }

  // Visits every valid way in storage order.
  template <class F>
  void for_each(F&& f) const {
    for (const auto& way : store_) {
      if (way.valid) f(way);
    }
  }

 private:
  std::size_t sets_;
  std::size_t ways_;
  std::vector<Way> store_;
  std::uint64_t clock_ = 0;
};

}  // namespace gmmu
