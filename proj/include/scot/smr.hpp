#pragma once

// Safe memory reclamation: one reservation/retire interface with Hazard
// Pointer, Epoch-Based and Interval-Based backends, plus a LEAK baseline
// that never frees.
//
// A Domain owns the shared reservation tables; each participating thread
// registers a ThreadHandle and calls begin_op/end_op around every data
// structure operation (OperationScope does this). Inside an operation,
// shared node references are read with protect() into numbered slots and
// copied between slots with duplicate(). Unlinked nodes are retire()d and
// freed by a later scan once no reservation can cover them.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <new>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "scot/instrument.hpp"
#include "scot/tagged_ref.hpp"

namespace scot::smr {

enum class Scheme { kHP, kEBR, kIBR, kLeak };

const char* scheme_name(Scheme scheme);
std::optional<Scheme> parse_scheme(std::string_view name);

inline constexpr std::size_t kDefaultScanThreshold = 64;
inline constexpr std::size_t kDefaultEraFrequency = 32;
inline constexpr std::size_t kDefaultQuarantine = std::size_t{1} << 18;
inline constexpr std::size_t kMinSlotCount = 4;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class RegistrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every reclaimable node derives from NodeHeader as its first base.
struct NodeHeader {
  std::uint64_t birth_era = 0;
};

struct DomainOptions {
  Scheme scheme = Scheme::kHP;
  std::size_t max_threads = 1;
  std::size_t slot_count = 5;
  std::size_t scan_threshold = kDefaultScanThreshold;
  std::size_t era_frequency = kDefaultEraFrequency;
  // Overwrite reclaimed memory with the canary and hold it in a per-thread
  // quarantine of `quarantine_capacity` nodes before returning it to the
  // allocator.
  bool poison = false;
  std::size_t quarantine_capacity = kDefaultQuarantine;
  // HP only. Readers order a reservation before the re-read with a
  // compiler barrier, and each scan issues a process-wide membarrier
  // instead. Falls back to a full fence per protect when the kernel lacks
  // expedited membarrier.
  bool asymmetric_fence = true;
};

// True once expedited private membarrier is registered for this process.
bool asymmetric_fence_supported();

// Applies SCOT_SCAN_THRESHOLD / SCOT_ERA_FREQ from the environment.
// Throws ConfigError on a value that is not a positive decimal integer.
DomainOptions apply_env_overrides(DomainOptions options);

struct Stats {
  std::uint64_t allocations = 0;
  std::uint64_t retirements = 0;
  std::uint64_t reclamations = 0;
  // Nodes freed without passing through retire: never-published
  // allocations and the live contents of a structure at teardown.
  std::uint64_t direct_frees = 0;
  std::uint64_t unreclaimed = 0;
  std::uint64_t peak_unreclaimed = 0;

  std::uint64_t cas_attempts = 0;
  std::uint64_t cas_failures = 0;
  std::uint64_t unlink_cas = 0;
  std::uint64_t validation_restarts = 0;
  // -1 when no slot was ever written.
  int max_slot_written = -1;
};

struct RetiredRecord {
  void* node = nullptr;
  void (*destruct)(void*) = nullptr;
  std::uint32_t size = 0;
  std::uint64_t birth_era = 0;
  std::uint64_t retire_era = 0;
};

namespace detail {

inline constexpr std::uint64_t kNoEra = ~std::uint64_t{0};

// Owner-written counter readable by other threads.
struct Counter {
  std::atomic<std::uint64_t> value{0};
  void add(std::uint64_t n = 1) {
    value.store(value.load(std::memory_order_relaxed) + n, std::memory_order_relaxed);
  }
  std::uint64_t get() const { return value.load(std::memory_order_relaxed); }
};

// Hazard slots live in their own cache-line-aligned, padded block so no
// two threads share a line.
struct SlotArrayDeleter {
  void operator()(std::atomic<std::uintptr_t>* p) const {
    ::operator delete(p, std::align_val_t{64});
  }
};
using SlotArray = std::unique_ptr<std::atomic<std::uintptr_t>[], SlotArrayDeleter>;
SlotArray make_slot_array(std::size_t count);

struct alignas(64) ThreadState {
  std::atomic<bool> in_use{false};
  SlotArray slots;

  // EBR: (epoch << 1) | 1 while inside an operation, 0 when quiescent.
  std::atomic<std::uint64_t> announce{0};
  // IBR reservation interval; kNoEra when quiescent.
  std::atomic<std::uint64_t> lower{kNoEra};
  std::atomic<std::uint64_t> upper{kNoEra};

  // Everything below is touched only by the owning thread (or by drain()
  // once the domain is quiescent).
  bool in_op = false;
  std::size_t slot_limit = 0;
  std::vector<RetiredRecord> retired;
  std::size_t next_scan_at = 0;
  std::uint64_t allocs_since_era_bump = 0;
  std::vector<std::uintptr_t> scratch;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> interval_scratch;
  std::deque<std::pair<void*, std::size_t>> quarantine;

  Counter allocations;
  Counter retirements;
  Counter reclamations;
  Counter direct_frees;
  Counter cas_attempts;
  Counter cas_failures;
  Counter unlink_cas;
  Counter validation_restarts;
  std::atomic<int> max_slot_written{-1};
};

template <typename T>
void destruct_as(void* p) {
  static_cast<T*>(p)->~T();
}

}  // namespace detail

class ThreadHandle;

class Domain {
 public:
  explicit Domain(const DomainOptions& options);
  ~Domain();
  Domain(const Domain&) = delete;
  Domain& operator=(const Domain&) = delete;

  const DomainOptions& options() const { return options_; }
  bool uses_asymmetric_fence() const { return light_reads_; }
  Scheme scheme() const { return options_.scheme; }
  std::size_t slot_count() const { return options_.slot_count; }
  std::size_t max_threads() const { return options_.max_threads; }

  // Throws RegistrationError when max_threads handles are outstanding.
  ThreadHandle register_thread();

  // Allocation outside any registered thread (sentinels, single-threaded
  // setup). Counted and era-stamped like handle allocations.
  template <typename T, typename... Args>
  T* allocate(Args&&... args);

  // Frees a node that was never retired (teardown of live structure
  // contents, unpublished allocations). Requires that no other thread can
  // reference it.
  template <typename T>
  void free_direct(T* node);

  // Frees every retired record regardless of reservations, and empties the
  // quarantines. Only valid once no operation is in flight.
  std::size_t drain();

  Stats stats();
  // Folds the current unreclaimed count into the peak.
  void sample_peak();

  std::uint64_t global_epoch() const { return epoch_.load(std::memory_order_acquire); }
  std::uint64_t global_era() const { return era_.load(std::memory_order_acquire); }
  // EBR: advances the epoch if every active thread announced the current
  // one. Returns true on advance.
  bool try_advance_epoch();

 private:
  friend class ThreadHandle;

  void* allocate_raw(std::size_t size, detail::ThreadState* owner, std::uint64_t& birth);
  void release_memory(detail::ThreadState* owner, void* node, void (*destruct)(void*),
                      std::size_t size);
  void release(detail::ThreadState* state);
  std::size_t scan(detail::ThreadState& self);
  std::size_t scan_hp(detail::ThreadState& self);
  std::size_t scan_ebr(detail::ThreadState& self);
  std::size_t scan_ibr(detail::ThreadState& self);
  std::uint64_t current_unreclaimed() const;

  DomainOptions options_;
  bool light_reads_ = false;
  std::unique_ptr<detail::ThreadState[]> states_;
  alignas(64) std::atomic<std::uint64_t> epoch_{0};
  alignas(64) std::atomic<std::uint64_t> era_{0};
  alignas(64) std::atomic<std::uint64_t> peak_{0};
  std::atomic<std::uint64_t> shared_allocations_{0};
  std::atomic<std::uint64_t> shared_direct_frees_{0};
  std::atomic<std::uint64_t> shared_reclamations_{0};
  std::atomic<std::uint64_t> shared_allocs_since_era_bump_{0};
};

// Equivalent of Domain(options) with environment overrides applied.
std::unique_ptr<Domain> create_domain(Scheme scheme, std::size_t max_threads,
                                      std::size_t slot_count);

// Per-thread view of a Domain. Move-only; releasing the handle returns its
// id to the pool. Used by one thread at a time.
class ThreadHandle {
 public:
  ThreadHandle(ThreadHandle&& other) noexcept
      : domain_(std::exchange(other.domain_, nullptr)),
        state_(std::exchange(other.state_, nullptr)),
        id_(other.id_) {}
  ThreadHandle& operator=(ThreadHandle&& other) noexcept;
  ~ThreadHandle();

  std::size_t id() const { return id_; }
  Domain& domain() const { return *domain_; }
  Scheme scheme() const { return domain_->scheme(); }

  void begin_op();
  void end_op();
  bool in_op() const { return state_->in_op; }

  // Reads `source` and reserves the referenced node in `slot` (HP) or
  // extends the era interval to cover it (IBR). The returned value keeps
  // its mark bits.
  TaggedRef protect(const AtomicCell& source, std::size_t slot);

  // Copies the reservation in `from` to `to`. Requires from < to so that a
  // scan, which reads slots in ascending order, cannot miss a reservation
  // while it moves upward.
  void duplicate(std::size_t from, std::size_t to);

  // Reserves a reference obtained by other means (the value must already
  // be safe to access, e.g. a sentinel).
  void reserve(TaggedRef value, std::size_t slot);

  template <typename T, typename... Args>
  T* allocate(Args&&... args);

  template <typename T>
  void retire(T* node);

  // Frees an allocation that was never made reachable.
  template <typename T>
  void free_unpublished(T* node);

  std::size_t scan_reclaim();

  std::size_t retired_count() const { return state_->retired.size(); }
  TaggedRef hazard(std::size_t slot) const;
  // EBR announced epoch, nullopt when quiescent.
  std::optional<std::uint64_t> announced_epoch() const;
  // IBR reservation interval, nullopt when quiescent.
  std::optional<std::pair<std::uint64_t, std::uint64_t>> reserved_interval() const;

  // Instrumentation used by the data structures.
  void note_cas(bool succeeded) {
    state_->cas_attempts.add();
    if (!succeeded) state_->cas_failures.add();
  }
  void note_unlink_cas() { state_->unlink_cas.add(); }
  void note_validation_restart() { state_->validation_restarts.add(); }

  // Any protect/duplicate/reserve on a slot >= limit aborts the process.
  void set_slot_limit(std::size_t limit);
  std::size_t slot_limit() const { return state_->slot_limit; }
  int max_slot_written() const { return state_->max_slot_written.load(std::memory_order_relaxed); }

 private:
  friend class Domain;
  ThreadHandle(Domain* domain, detail::ThreadState* state, std::size_t id)
      : domain_(domain), state_(state), id_(id) {}

  void note_slot(std::size_t slot) {
    SCOT_CHECK(slot < state_->slot_limit, "hazard slot index outside the permitted range");
    if (static_cast<int>(slot) > state_->max_slot_written.load(std::memory_order_relaxed)) {
      state_->max_slot_written.store(static_cast<int>(slot), std::memory_order_relaxed);
    }
  }
  void retire_raw(void* node, void (*destruct)(void*), std::size_t size, std::uint64_t birth);

  Domain* domain_ = nullptr;
  detail::ThreadState* state_ = nullptr;
  std::size_t id_ = 0;
};

// begin_op on construction, end_op on destruction.
class OperationScope {
 public:
  explicit OperationScope(ThreadHandle& handle) : handle_(handle) { handle_.begin_op(); }
  ~OperationScope() { handle_.end_op(); }
  OperationScope(const OperationScope&) = delete;
  OperationScope& operator=(const OperationScope&) = delete;

 private:
  ThreadHandle& handle_;
};

// ---------------------------------------------------------------------------

template <typename T, typename... Args>
T* Domain::allocate(Args&&... args) {
  static_assert(std::is_base_of_v<NodeHeader, T>);
  static_assert(alignof(T) >= kMinNodeAlignment);
  std::uint64_t birth = 0;
  void* memory = allocate_raw(sizeof(T), nullptr, birth);
  T* node = ::new (memory) T(std::forward<Args>(args)...);
  node->birth_era = birth;
  return node;
}

template <typename T>
void Domain::free_direct(T* node) {
  if (node == nullptr) return;
  shared_direct_frees_.fetch_add(1, std::memory_order_relaxed);
  release_memory(nullptr, node, &detail::destruct_as<T>, sizeof(T));
}

template <typename T, typename... Args>
T* ThreadHandle::allocate(Args&&... args) {
  static_assert(std::is_base_of_v<NodeHeader, T>);
  static_assert(alignof(T) >= kMinNodeAlignment);
  std::uint64_t birth = 0;
  void* memory = domain_->allocate_raw(sizeof(T), state_, birth);
  T* node = ::new (memory) T(std::forward<Args>(args)...);
  node->birth_era = birth;
  return node;
}

template <typename T>
void ThreadHandle::retire(T* node) {
  static_assert(std::is_base_of_v<NodeHeader, T>);
  retire_raw(node, &detail::destruct_as<T>, sizeof(T), node->birth_era);
}

template <typename T>
void ThreadHandle::free_unpublished(T* node) {
  state_->direct_frees.add();
  domain_->release_memory(state_, node, &detail::destruct_as<T>, sizeof(T));
}

}  // namespace scot::smr
