#pragma once

// Instrumentation points shared by the SMR core and the data structures.
//
// Every atomic access on a shared cell and every hazard-slot write is a
// schedule point. A thread may install a Hook; with no hook installed a
// point costs one thread-local load and a predictable branch. Tests use
// hooks to drive deterministic interleavings, the stress harness uses them
// to inject preemptions and to stall a thread mid-traversal.

#include <cstdint>
#include <stdexcept>
#include <string>

namespace scot::instrument {

enum class Site : std::uint8_t {
  kLoad,
  kStore,
  kCas,
  kFetchOr,
  kSlotWrite,
  kAnnounce,
  // List traversal is about to read curr->next (arg = curr's key).
  kListStep,
  // List traversal found curr marked (arg = curr's key).
  kListDangerZone,
  // Delete set the mark bit and has not yet tried to unlink (arg = key).
  kListAfterMark,
  // Tree seek is about to read leaf's child cell (arg = leaf's key).
  kTreeStep,
  // Tree seek crossed a flagged or tagged edge (arg = target key).
  kTreeDangerZone,
  // Tree delete flagged its leaf, cleanup not yet attempted (arg = key).
  kTreeAfterFlag,
};

const char* site_name(Site site);

class Hook {
 public:
  virtual ~Hook() = default;
  virtual void at(Site site, std::uint64_t arg) = 0;
};

namespace detail {
inline thread_local Hook* tl_hook = nullptr;
}  // namespace detail

inline Hook* current_hook() { return detail::tl_hook; }

inline void point(Site site, std::uint64_t arg = 0) {
  if (Hook* h = detail::tl_hook) [[unlikely]] {
    h->at(site, arg);
  }
}

// Installs a hook on the calling thread for the lifetime of the scope.
class ScopedHook {
 public:
  explicit ScopedHook(Hook* hook) : previous_(detail::tl_hook) { detail::tl_hook = hook; }
  ~ScopedHook() { detail::tl_hook = previous_; }
  ScopedHook(const ScopedHook&) = delete;
  ScopedHook& operator=(const ScopedHook&) = delete;

 private:
  Hook* previous_;
};

// Word written over every byte of reclaimed node memory in poison mode.
// No valid tagged reference or key can equal it: keys are < 2^62 and the
// pattern is a non-canonical address with both low bits set.
inline constexpr std::uint64_t kCanary = 0xDEADBEEFDEADBEEFull;

// Raised when a read through a (supposedly) protected reference observes
// the canary: a use-after-free made visible.
class CanaryViolation : public std::runtime_error {
 public:
  explicit CanaryViolation(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] void report_canary(const char* where);

inline void check_word(std::uint64_t word, const char* where) {
  if (word == kCanary) [[unlikely]] {
    report_canary(where);
  }
}

// Always-on usage check. Aborts with a message; used for the contracts
// whose violation means the caller is broken (slot ordering, nesting).
[[noreturn]] void check_failed(const char* expr, const char* msg, const char* file, int line);

}  // namespace scot::instrument

#define SCOT_CHECK(cond, msg)                                                     \
  do {                                                                            \
    if (!(cond)) [[unlikely]] {                                                   \
      ::scot::instrument::check_failed(#cond, (msg), __FILE__, __LINE__);         \
    }                                                                             \
  } while (false)
