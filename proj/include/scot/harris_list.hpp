#pragma once

// Sorted lock-free set of 64-bit keys.
//
// kHarris: Harris' list with optimistic traversals. Searches are read-only
// and skip logically deleted nodes; updates unlink a whole chain of marked
// nodes with one CAS. Safe under HP/IBR because every step through a chain
// of marked nodes (the dangerous zone) re-validates that the last unmarked
// node still points at the first marked one, with that first marked node
// kept reserved in its own slot.
//
// kHarrisMichael: marked nodes are unlinked one at a time on first
// encounter, by every operation including search.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "scot/smr.hpp"
#include "scot/tagged_ref.hpp"

namespace scot {

enum class ListVariant { kHarris, kHarrisMichael };
enum class TraversalMode { kSearch, kUpdate };

const char* variant_name(ListVariant variant);

struct ListNode : smr::NodeHeader {
  explicit ListNode(std::uint64_t k) : key(k) {}
  std::uint64_t key;
  AtomicCell next;  // mark bit = logically deleted
};

struct ListOptions {
  ListVariant variant = ListVariant::kHarris;
  // Test-only switch. When false the dangerous-zone validation and the
  // first-unsafe-node reservation are skipped; nothing else changes.
  bool scot_validation = true;
  // Abort if a traversal ever dereferences a node past the first marked
  // node without a fresh validation (and, under HP, without the first
  // marked node reserved).
  bool check_invariants = false;
};

struct ShapeReport {
  bool ok = true;
  std::string problem;
  std::size_t nodes = 0;   // reachable nodes, sentinels excluded
  std::size_t marked = 0;  // reachable but logically deleted
  std::size_t keys = 0;    // members of the set
};

class HarrisList {
 public:
  static constexpr std::size_t kHpNext = 0;
  static constexpr std::size_t kHpCurr = 1;
  static constexpr std::size_t kHpPrev = 2;  // last safe node
  static constexpr std::size_t kHpFirstUnsafe = 3;
  static constexpr std::size_t kSlotsUsed = 4;

  struct FindResult {
    AtomicCell* prev = nullptr;  // cell that pointed at curr
    ListNode* curr = nullptr;    // first unmarked node with key >= search key
    TaggedRef next;              // curr's successor as read
    bool found = false;
  };

  explicit HarrisList(smr::Domain& domain, ListOptions options = {});
  // Frees every node still linked, marked or not. Requires quiescence.
  ~HarrisList();
  HarrisList(const HarrisList&) = delete;
  HarrisList& operator=(const HarrisList&) = delete;

  bool insert(smr::ThreadHandle& handle, std::uint64_t key);
  bool remove(smr::ThreadHandle& handle, std::uint64_t key);
  bool search(smr::ThreadHandle& handle, std::uint64_t key);

  // The traversal shared by all operations. The caller must be inside an
  // operation (OperationScope). Restarts are internal.
  FindResult do_find(smr::ThreadHandle& handle, std::uint64_t key, TraversalMode mode);

  // Sets the mark on `key`'s node without unlinking it. Returns false if
  // the key is absent. Lets tests build chains of marked nodes.
  bool mark_only(smr::ThreadHandle& handle, std::uint64_t key);

  // Quiescent inspection.
  std::vector<std::uint64_t> keys() const;
  ShapeReport check_shape() const;

  const ListOptions& options() const { return options_; }

 private:
  FindResult find_harris(smr::ThreadHandle& handle, std::uint64_t key, TraversalMode mode);
  FindResult find_michael(smr::ThreadHandle& handle, std::uint64_t key);

  smr::Domain& domain_;
  ListOptions options_;
  AtomicCell head_;
};

}  // namespace scot
