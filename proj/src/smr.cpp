#include "scot/smr.hpp"

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <string>

#include <linux/membarrier.h>
#include <sys/syscall.h>
#include <unistd.h>

namespace scot::smr {

using detail::kNoEra;
using detail::ThreadState;

const char* scheme_name(Scheme scheme) {
  switch (scheme) {
    case Scheme::kHP:
      return "hp";
    case Scheme::kEBR:
      return "ebr";
    case Scheme::kIBR:
      return "ibr";
    case Scheme::kLeak:
      return "leak";
  }
  return "?";
}

std::optional<Scheme> parse_scheme(std::string_view name) {
  if (name == "hp") return Scheme::kHP;
  if (name == "ebr") return Scheme::kEBR;
  if (name == "ibr") return Scheme::kIBR;
  if (name == "leak") return Scheme::kLeak;
  return std::nullopt;
}

namespace {

std::optional<std::size_t> env_positive(const char* name) {
  const char* text = std::getenv(name);
  if (text == nullptr) return std::nullopt;
  std::string value(text);
  if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError(std::string(name) + " must be a positive decimal integer, got '" + value +
                      "'");
  }
  errno = 0;
  unsigned long long parsed = std::strtoull(value.c_str(), nullptr, 10);
  if (errno != 0 || parsed == 0) {
    throw ConfigError(std::string(name) + " must be a positive decimal integer, got '" + value +
                      "'");
  }
  return static_cast<std::size_t>(parsed);
}

void validate(const DomainOptions& o) {
  if (o.max_threads < 1) throw ConfigError("max_threads must be >= 1");
  if (o.slot_count < kMinSlotCount) throw ConfigError("slot_count must be >= 4");
  if (o.scan_threshold < 1) throw ConfigError("scan_threshold must be >= 1");
  if (o.era_frequency < 1) throw ConfigError("era_frequency must be >= 1");
}

void poison_fill(void* node, std::size_t size) {
  auto* words = static_cast<std::uint64_t*>(node);
  for (std::size_t i = 0; i < size / sizeof(std::uint64_t); ++i) {
    std::atomic_ref<std::uint64_t>(words[i]).store(instrument::kCanary, std::memory_order_relaxed);
  }
}

bool intersects(std::uint64_t birth, std::uint64_t retire,
                const std::pair<std::uint64_t, std::uint64_t>& reserved) {
  return birth <= reserved.second && retire >= reserved.first;
}

long membarrier(int cmd) { return syscall(__NR_membarrier, cmd, 0, 0); }

void heavy_fence() {
  membarrier(MEMBARRIER_CMD_PRIVATE_EXPEDITED);
  std::atomic_thread_fence(std::memory_order_seq_cst);
}

}  // namespace

namespace detail {

SlotArray make_slot_array(std::size_t count) {
  std::size_t bytes = (count * sizeof(std::uintptr_t) + 63) / 64 * 64;
  void* raw = ::operator new(bytes, std::align_val_t{64});
  auto* words = static_cast<std::atomic<std::uintptr_t>*>(raw);
  for (std::size_t i = 0; i < bytes / sizeof(std::uintptr_t); ++i) {
    ::new (&words[i]) std::atomic<std::uintptr_t>(0);
  }
  return SlotArray(words);
}

}  // namespace detail

bool asymmetric_fence_supported() {
  static const bool supported = [] {
    long mask = membarrier(MEMBARRIER_CMD_QUERY);
    if (mask < 0 || (mask & MEMBARRIER_CMD_PRIVATE_EXPEDITED) == 0) return false;
    return membarrier(MEMBARRIER_CMD_REGISTER_PRIVATE_EXPEDITED) == 0;
  }();
  return supported;
}

DomainOptions apply_env_overrides(DomainOptions options) {
  if (auto v = env_positive("SCOT_SCAN_THRESHOLD")) options.scan_threshold = *v;
  if (auto v = env_positive("SCOT_ERA_FREQ")) options.era_frequency = *v;
  return options;
}

std::unique_ptr<Domain> create_domain(Scheme scheme, std::size_t max_threads,
                                      std::size_t slot_count) {
  DomainOptions options;
  options.scheme = scheme;
  options.max_threads = max_threads;
  options.slot_count = slot_count;
  return std::make_unique<Domain>(apply_env_overrides(options));
}

// ---------------------------------------------------------------------------
// Domain

Domain::Domain(const DomainOptions& options) : options_(options) {
  validate(options_);
  light_reads_ = options_.scheme == Scheme::kHP && options_.asymmetric_fence &&
                 asymmetric_fence_supported();
  states_ = std::make_unique<ThreadState[]>(options_.max_threads);
  for (std::size_t t = 0; t < options_.max_threads; ++t) {
    auto& s = states_[t];
    s.slots = detail::make_slot_array(options_.slot_count);
    for (std::size_t i = 0; i < options_.slot_count; ++i) s.slots[i].store(0);
    s.slot_limit = options_.slot_count;
    s.next_scan_at = options_.scan_threshold;
  }
}

Domain::~Domain() { drain(); }

ThreadHandle Domain::register_thread() {
  for (std::size_t t = 0; t < options_.max_threads; ++t) {
    bool expected = false;
    if (states_[t].in_use.compare_exchange_strong(expected, true, std::memory_order_acq_rel)) {
      auto& s = states_[t];
      s.in_op = false;
      s.slot_limit = options_.slot_count;
      for (std::size_t i = 0; i < options_.slot_count; ++i) {
        s.slots[i].store(0, std::memory_order_release);
      }
      s.announce.store(0, std::memory_order_release);
      s.lower.store(kNoEra, std::memory_order_release);
      s.upper.store(kNoEra, std::memory_order_release);
      return ThreadHandle(this, &s, t);
    }
  }
  throw RegistrationError("domain supports at most " + std::to_string(options_.max_threads) +
                          " registered threads");
}

void Domain::release(ThreadState* state) {
  SCOT_CHECK(!state->in_op, "thread handle released inside an operation");
  for (std::size_t i = 0; i < options_.slot_count; ++i) {
    state->slots[i].store(0, std::memory_order_release);
  }
  state->announce.store(0, std::memory_order_release);
  state->lower.store(kNoEra, std::memory_order_release);
  state->upper.store(kNoEra, std::memory_order_release);
  state->in_use.store(false, std::memory_order_release);
}

void* Domain::allocate_raw(std::size_t size, ThreadState* owner, std::uint64_t& birth) {
  void* memory = ::operator new(size);
  if (options_.scheme == Scheme::kIBR) {
    birth = era_.load(std::memory_order_acquire);
  }
  if (owner != nullptr) {
    owner->allocations.add();
    if (options_.scheme == Scheme::kIBR && ++owner->allocs_since_era_bump >= options_.era_frequency) {
      owner->allocs_since_era_bump = 0;
      era_.fetch_add(1, std::memory_order_acq_rel);
    }
  } else {
    shared_allocations_.fetch_add(1, std::memory_order_relaxed);
    if (options_.scheme == Scheme::kIBR &&
        shared_allocs_since_era_bump_.fetch_add(1, std::memory_order_relaxed) + 1 >=
            options_.era_frequency) {
      shared_allocs_since_era_bump_.store(0, std::memory_order_relaxed);
      era_.fetch_add(1, std::memory_order_acq_rel);
    }
  }
  return memory;
}

void Domain::release_memory(ThreadState* owner, void* node, void (*destruct)(void*),
                            std::size_t size) {
  destruct(node);
  if (!options_.poison) {
    ::operator delete(node);
    return;
  }
  poison_fill(node, size);
  if (owner == nullptr || options_.quarantine_capacity == 0) {
    // Shared-path frees happen only in quiescent setup/teardown.
    ::operator delete(node);
    return;
  }
  owner->quarantine.emplace_back(node, size);
  if (owner->quarantine.size() > options_.quarantine_capacity) {
    ::operator delete(owner->quarantine.front().first);
    owner->quarantine.pop_front();
  }
}

std::size_t Domain::scan(ThreadState& self) {
  switch (options_.scheme) {
    case Scheme::kHP:
      return scan_hp(self);
    case Scheme::kEBR:
      return scan_ebr(self);
    case Scheme::kIBR:
      return scan_ibr(self);
    case Scheme::kLeak:
      return 0;
  }
  return 0;
}

// Reads every thread's slots in ascending index order. duplicate() only
// copies a reservation upward, so a reservation moving from slot i to
// slot j > i is seen in at least one of the two reads.
std::size_t Domain::scan_hp(ThreadState& self) {
  auto& hazards = self.scratch;
  hazards.clear();
  // Pairs with the fence in protect(): either the reader sees the unlink
  // or this scan sees the reservation. With light reads the membarrier
  // acts as that fence on every running thread.
  if (light_reads_) {
    heavy_fence();
  } else {
    std::atomic_thread_fence(std::memory_order_seq_cst);
  }
  for (std::size_t t = 0; t < options_.max_threads; ++t) {
    auto& other = states_[t];
    for (std::size_t i = 0; i < options_.slot_count; ++i) {
      instrument::point(instrument::Site::kLoad);
      auto v = other.slots[i].load(std::memory_order_seq_cst);
      if (v != 0) hazards.push_back(v);
    }
  }
  std::sort(hazards.begin(), hazards.end());

  std::size_t freed = 0;
  auto& retired = self.retired;
  std::size_t kept = 0;
  for (std::size_t r = 0; r < retired.size(); ++r) {
    auto address = reinterpret_cast<std::uintptr_t>(retired[r].node);
    if (std::binary_search(hazards.begin(), hazards.end(), address)) {
      retired[kept++] = retired[r];
    } else {
      release_memory(&self, retired[r].node, retired[r].destruct, retired[r].size);
      ++freed;
    }
  }
  retired.resize(kept);
  self.reclamations.add(freed);
  return freed;
}

bool Domain::try_advance_epoch() {
  auto current = epoch_.load(std::memory_order_acquire);
  for (std::size_t t = 0; t < options_.max_threads; ++t) {
    instrument::point(instrument::Site::kLoad);
    auto a = states_[t].announce.load(std::memory_order_seq_cst);
    if ((a & 1) != 0 && (a >> 1) != current) return false;
  }
  instrument::point(instrument::Site::kCas);
  return epoch_.compare_exchange_strong(current, current + 1, std::memory_order_acq_rel);
}

// Records are appended in non-decreasing epoch order, so the freeable ones
// form a prefix: anything retired at least two epochs before the current
// global epoch.
std::size_t Domain::scan_ebr(ThreadState& self) {
  try_advance_epoch();
  auto current = epoch_.load(std::memory_order_acquire);
  auto& retired = self.retired;
  std::size_t n = 0;
  while (n < retired.size() && retired[n].retire_era + 2 <= current) {
    release_memory(&self, retired[n].node, retired[n].destruct, retired[n].size);
    ++n;
  }
  if (n > 0) retired.erase(retired.begin(), retired.begin() + static_cast<std::ptrdiff_t>(n));
  self.reclamations.add(n);
  return n;
}

std::size_t Domain::scan_ibr(ThreadState& self) {
  auto& reserved = self.interval_scratch;
  reserved.clear();
  for (std::size_t t = 0; t < options_.max_threads; ++t) {
    instrument::point(instrument::Site::kLoad);
    auto lo = states_[t].lower.load(std::memory_order_seq_cst);
    auto hi = states_[t].upper.load(std::memory_order_seq_cst);
    if (lo != kNoEra && hi != kNoEra) reserved.emplace_back(lo, hi);
  }

  std::size_t freed = 0;
  auto& retired = self.retired;
  std::size_t kept = 0;
  for (std::size_t r = 0; r < retired.size(); ++r) {
    const auto& rec = retired[r];
    bool covered = std::any_of(reserved.begin(), reserved.end(),
                               [&](const auto& iv) { return intersects(rec.birth_era, rec.retire_era, iv); });
    if (covered) {
      retired[kept++] = rec;
    } else {
      release_memory(&self, rec.node, rec.destruct, rec.size);
      ++freed;
    }
  }
  retired.resize(kept);
  self.reclamations.add(freed);
  return freed;
}

std::size_t Domain::drain() {
  std::size_t freed = 0;
  for (std::size_t t = 0; t < options_.max_threads; ++t) {
    auto& s = states_[t];
    for (auto& rec : s.retired) {
      rec.destruct(rec.node);
      ::operator delete(rec.node);
      ++freed;
    }
    shared_reclamations_.fetch_add(s.retired.size(), std::memory_order_relaxed);
    s.retired.clear();
    s.next_scan_at = options_.scan_threshold;
    for (auto& [node, size] : s.quarantine) ::operator delete(node);
    s.quarantine.clear();
  }
  return freed;
}

std::uint64_t Domain::current_unreclaimed() const {
  std::uint64_t retired = 0;
  std::uint64_t reclaimed = shared_reclamations_.load(std::memory_order_relaxed);
  for (std::size_t t = 0; t < options_.max_threads; ++t) {
    retired += states_[t].retirements.get();
    reclaimed += states_[t].reclamations.get();
  }
  return retired > reclaimed ? retired - reclaimed : 0;
}

void Domain::sample_peak() {
  auto now = current_unreclaimed();
  auto peak = peak_.load(std::memory_order_relaxed);
  while (now > peak && !peak_.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
  }
}

Stats Domain::stats() {
  sample_peak();
  Stats s;
  s.allocations = shared_allocations_.load(std::memory_order_relaxed);
  s.direct_frees = shared_direct_frees_.load(std::memory_order_relaxed);
  s.reclamations = shared_reclamations_.load(std::memory_order_relaxed);
  for (std::size_t t = 0; t < options_.max_threads; ++t) {
    const auto& st = states_[t];
    s.allocations += st.allocations.get();
    s.retirements += st.retirements.get();
    s.reclamations += st.reclamations.get();
    s.direct_frees += st.direct_frees.get();
    s.cas_attempts += st.cas_attempts.get();
    s.cas_failures += st.cas_failures.get();
    s.unlink_cas += st.unlink_cas.get();
    s.validation_restarts += st.validation_restarts.get();
    s.max_slot_written = std::max(s.max_slot_written, st.max_slot_written.load(std::memory_order_relaxed));
  }
  s.unreclaimed = s.retirements > s.reclamations ? s.retirements - s.reclamations : 0;
  s.peak_unreclaimed = std::max(peak_.load(std::memory_order_relaxed), s.unreclaimed);
  return s;
}

// ---------------------------------------------------------------------------
// ThreadHandle

ThreadHandle& ThreadHandle::operator=(ThreadHandle&& other) noexcept {
  if (this != &other) {
    if (state_ != nullptr) domain_->release(state_);
    domain_ = std::exchange(other.domain_, nullptr);
    state_ = std::exchange(other.state_, nullptr);
    id_ = other.id_;
  }
  return *this;
}

ThreadHandle::~ThreadHandle() {
  if (state_ != nullptr) domain_->release(state_);
}

void ThreadHandle::begin_op() {
  SCOT_CHECK(!state_->in_op, "begin_op called inside an operation");
  state_->in_op = true;
  switch (domain_->scheme()) {
    case Scheme::kHP:
    case Scheme::kLeak:
      break;
    case Scheme::kEBR: {
      // Re-announce until the announced epoch is still current after the
      // announcement became visible; otherwise an advancer could have
      // skipped past us.
      auto e = domain_->epoch_.load(std::memory_order_acquire);
      while (true) {
        instrument::point(instrument::Site::kAnnounce);
        state_->announce.store((e << 1) | 1, std::memory_order_seq_cst);
        std::atomic_thread_fence(std::memory_order_seq_cst);
        auto now = domain_->epoch_.load(std::memory_order_acquire);
        if (now == e) break;
        e = now;
      }
      break;
    }
    case Scheme::kIBR: {
      auto e = domain_->era_.load(std::memory_order_acquire);
      instrument::point(instrument::Site::kAnnounce);
      state_->lower.store(e, std::memory_order_seq_cst);
      state_->upper.store(e, std::memory_order_seq_cst);
      std::atomic_thread_fence(std::memory_order_seq_cst);
      break;
    }
  }
}

void ThreadHandle::end_op() {
  SCOT_CHECK(state_->in_op, "end_op called outside an operation");
  switch (domain_->scheme()) {
    case Scheme::kHP:
      for (std::size_t i = 0; i < domain_->slot_count(); ++i) {
        state_->slots[i].store(0, std::memory_order_release);
      }
      break;
    case Scheme::kEBR:
      instrument::point(instrument::Site::kAnnounce);
      state_->announce.store(0, std::memory_order_release);
      break;
    case Scheme::kIBR:
      instrument::point(instrument::Site::kAnnounce);
      state_->upper.store(kNoEra, std::memory_order_release);
      state_->lower.store(kNoEra, std::memory_order_release);
      break;
    case Scheme::kLeak:
      break;
  }
  state_->in_op = false;
}

TaggedRef ThreadHandle::protect(const AtomicCell& source, std::size_t slot) {
  note_slot(slot);
  switch (domain_->scheme()) {
    case Scheme::kHP: {
      auto& hazard = state_->slots[slot];
      TaggedRef value = source.load();
      while (true) {
        instrument::point(instrument::Site::kSlotWrite);
        // The store must be globally visible before the re-read below.
        hazard.store(value.address(), std::memory_order_release);
        if (domain_->light_reads_) {
          std::atomic_signal_fence(std::memory_order_seq_cst);
        } else {
          std::atomic_thread_fence(std::memory_order_seq_cst);
        }
        TaggedRef again = source.load();
        if (again == value) return value;
        value = again;
      }
    }
    case Scheme::kIBR: {
      auto reserved = state_->upper.load(std::memory_order_relaxed);
      while (true) {
        TaggedRef value = source.load();
        auto era = domain_->era_.load(std::memory_order_acquire);
        if (era == reserved) return value;
        instrument::point(instrument::Site::kSlotWrite);
        state_->upper.store(era, std::memory_order_seq_cst);
        std::atomic_thread_fence(std::memory_order_seq_cst);
        reserved = era;
      }
    }
    case Scheme::kEBR:
    case Scheme::kLeak:
      return source.load();
  }
  return source.load();
}

void ThreadHandle::duplicate(std::size_t from, std::size_t to) {
  SCOT_CHECK(from < to, "duplicate must copy a reservation to a higher slot index");
  note_slot(to);
  if (domain_->scheme() != Scheme::kHP) return;
  auto v = state_->slots[from].load(std::memory_order_relaxed);
  instrument::point(instrument::Site::kSlotWrite);
  // `from` still holds the node, so no fence: a later overwrite of `from`
  // is ordered after this store, and scans read `from` before `to`.
  state_->slots[to].store(v, std::memory_order_release);
}

void ThreadHandle::reserve(TaggedRef value, std::size_t slot) {
  note_slot(slot);
  if (domain_->scheme() != Scheme::kHP) return;
  instrument::point(instrument::Site::kSlotWrite);
  state_->slots[slot].store(value.address(), std::memory_order_seq_cst);
}

void ThreadHandle::retire_raw(void* node, void (*destruct)(void*), std::size_t size,
                              std::uint64_t birth) {
  RetiredRecord rec;
  rec.node = node;
  rec.destruct = destruct;
  rec.size = static_cast<std::uint32_t>(size);
  rec.birth_era = birth;
  switch (domain_->scheme()) {
    case Scheme::kEBR:
      rec.retire_era = domain_->epoch_.load(std::memory_order_acquire);
      break;
    case Scheme::kIBR:
      rec.retire_era = domain_->era_.load(std::memory_order_acquire);
      break;
    default:
      break;
  }
  state_->retired.push_back(rec);
  state_->retirements.add();
  if (domain_->scheme() == Scheme::kLeak) return;
  if (state_->retired.size() >= state_->next_scan_at) {
    domain_->sample_peak();
    scan_reclaim();
  }
}

std::size_t ThreadHandle::scan_reclaim() {
  auto freed = domain_->scan(*state_);
  const auto threshold = domain_->options().scan_threshold;
  // IBR can keep a large residue behind a stalled interval; spacing the
  // next scan by the threshold keeps retire amortized O(1). HP residue is
  // bounded by the slot table, EBR scans only inspect a prefix.
  state_->next_scan_at = domain_->scheme() == Scheme::kIBR
                             ? state_->retired.size() + threshold
                             : threshold;
  return freed;
}

TaggedRef ThreadHandle::hazard(std::size_t slot) const {
  return TaggedRef(state_->slots[slot].load(std::memory_order_acquire));
}

std::optional<std::uint64_t> ThreadHandle::announced_epoch() const {
  auto a = state_->announce.load(std::memory_order_acquire);
  if ((a & 1) == 0) return std::nullopt;
  return a >> 1;
}

std::optional<std::pair<std::uint64_t, std::uint64_t>> ThreadHandle::reserved_interval() const {
  auto lo = state_->lower.load(std::memory_order_acquire);
  auto hi = state_->upper.load(std::memory_order_acquire);
  if (lo == kNoEra || hi == kNoEra) return std::nullopt;
  return std::make_pair(lo, hi);
}

void ThreadHandle::set_slot_limit(std::size_t limit) {
  SCOT_CHECK(limit >= 1 && limit <= domain_->slot_count(), "slot limit outside [1, slot_count]");
  state_->slot_limit = limit;
}

}  // namespace scot::smr
