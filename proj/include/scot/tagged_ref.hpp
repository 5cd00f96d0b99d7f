#pragma once

// Node references with two stolen low-order bits, and the atomic cell that
// stores them. Lists use bit 0 as the logical-deletion mark; the tree uses
// bit 0 as "flag" and bit 1 as "tag".

#include <atomic>
#include <cstdint>

#include "scot/instrument.hpp"

namespace scot {

enum class MarkBit : std::uintptr_t {
  kMark = 0x1,  // list deletion mark / tree flag
  kTag = 0x2,
};

inline constexpr std::uintptr_t kFlagBit = static_cast<std::uintptr_t>(MarkBit::kMark);
inline constexpr std::uintptr_t kTagBit = static_cast<std::uintptr_t>(MarkBit::kTag);
inline constexpr std::uintptr_t kMarkMask = kFlagBit | kTagBit;

// Nodes must be at least 4-byte aligned so both low bits are free.
inline constexpr std::size_t kMinNodeAlignment = 4;

class TaggedRef {
 public:
  constexpr TaggedRef() = default;
  constexpr explicit TaggedRef(std::uintptr_t raw) : raw_(raw) {}

  template <typename T>
  static TaggedRef from(const T* node) {
    return TaggedRef(reinterpret_cast<std::uintptr_t>(node));
  }

  constexpr std::uintptr_t raw() const { return raw_; }
  constexpr std::uintptr_t bits() const { return raw_ & kMarkMask; }
  constexpr std::uintptr_t address() const { return raw_ & ~kMarkMask; }
  constexpr bool is_null() const { return address() == 0; }

  template <typename T>
  T* get() const {
    return reinterpret_cast<T*>(address());
  }

  friend constexpr bool operator==(TaggedRef, TaggedRef) = default;

 private:
  std::uintptr_t raw_ = 0;
};

constexpr TaggedRef with_mark(TaggedRef r, MarkBit bit) {
  return TaggedRef(r.raw() | static_cast<std::uintptr_t>(bit));
}

constexpr TaggedRef strip_marks(TaggedRef r) { return TaggedRef(r.address()); }

constexpr bool is_marked(TaggedRef r, MarkBit bit) {
  return (r.raw() & static_cast<std::uintptr_t>(bit)) != 0;
}

constexpr bool has_any_mark(TaggedRef r) { return r.bits() != 0; }

// A shared, atomically updatable TaggedRef. CAS compares the full word,
// mark bits included. Every access is an instrumentation point and every
// value read is checked against the poison canary.
class AtomicCell {
 public:
  AtomicCell() = default;
  explicit AtomicCell(TaggedRef initial) : word_(initial.raw()) {}
  AtomicCell(const AtomicCell&) = delete;
  AtomicCell& operator=(const AtomicCell&) = delete;

  TaggedRef load(std::memory_order order = std::memory_order_acquire) const {
    instrument::point(instrument::Site::kLoad);
    auto raw = word_.load(order);
    instrument::check_word(raw, "AtomicCell::load");
    return TaggedRef(raw);
  }

  void store(TaggedRef value, std::memory_order order = std::memory_order_release) {
    instrument::point(instrument::Site::kStore);
    word_.store(value.raw(), order);
  }

  // On failure `expected` is updated to the observed value.
  bool compare_exchange(TaggedRef& expected, TaggedRef desired) {
    instrument::point(instrument::Site::kCas);
    auto raw = expected.raw();
    bool ok = word_.compare_exchange_strong(raw, desired.raw(), std::memory_order_seq_cst,
                                            std::memory_order_acquire);
    if (!ok) {
      instrument::check_word(raw, "AtomicCell::compare_exchange");
      expected = TaggedRef(raw);
    }
    return ok;
  }

  // Atomically sets `bit`; returns the previous value.
  TaggedRef fetch_or(MarkBit bit) {
    instrument::point(instrument::Site::kFetchOr);
    auto raw = word_.fetch_or(static_cast<std::uintptr_t>(bit), std::memory_order_seq_cst);
    instrument::check_word(raw, "AtomicCell::fetch_or");
    return TaggedRef(raw);
  }

  // Uninstrumented access for single-threaded setup and teardown.
  TaggedRef load_quiescent() const { return TaggedRef(word_.load(std::memory_order_relaxed)); }

 private:
  std::atomic<std::uintptr_t> word_{0};
};

static_assert(sizeof(AtomicCell) == sizeof(std::uintptr_t));

// Keys of reclaimable nodes are immutable after publication but may be
// overwritten by the poison fill once a node is reclaimed; they are read
// atomically and checked against the canary like links are.
inline constexpr std::uint64_t kMaxKey = (std::uint64_t{1} << 62) - 1;

inline std::uint64_t load_key(const std::uint64_t& key) {
  auto value = std::atomic_ref<std::uint64_t>(const_cast<std::uint64_t&>(key))
                   .load(std::memory_order_relaxed);
  instrument::check_word(value, "key read");
  return value;
}

}  // namespace scot
