#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <random>
#include <set>
#include <thread>
#include <unordered_set>

#include "scot/harness.hpp"

namespace scot::harness {

using Clock = std::chrono::steady_clock;
using instrument::Site;

std::uint64_t hp_bound(std::size_t threads, std::size_t scan_threshold, std::size_t slots) {
  return threads * (scan_threshold + slots * threads);
}

// Nodes that may stay reserved by a stalled IBR thread: everything born
// before it stalled, plus at most one era's worth of allocations per
// thread, plus the usual per-thread scan backlog.
std::uint64_t ibr_bound(std::uint64_t allocations_at_stall, std::size_t threads,
                        std::size_t era_frequency, std::size_t scan_threshold,
                        std::size_t slots) {
  return allocations_at_stall + threads * (era_frequency + scan_threshold + slots * threads);
}

namespace {

enum class OpKind { kSearch, kInsert, kRemove };

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::kSearch: return "search";
    case OpKind::kInsert: return "insert";
    case OpKind::kRemove: return "delete";
  }
  return "?";
}

struct FailureLog {
  std::atomic<bool> any{false};
  std::mutex mu;
  std::string first;
  std::uint64_t canary = 0;
  std::uint64_t invariant = 0;

  void record(bool is_canary, const std::string& what) {
    std::lock_guard lock(mu);
    (is_canary ? canary : invariant)++;
    if (first.empty()) first = what;
    any.store(true, std::memory_order_release);
  }
};

struct StallControl {
  std::atomic<bool> release{false};
  std::atomic<bool> stalled{false};
  Clock::time_point fallback_at;
  smr::Domain* domain = nullptr;
  std::uint64_t allocations_at_stall = 0;
};

// Per-thread hook: optional stall (robustness runs) and optional forced
// yields, which is what makes interleavings inside traversals reachable on
// machines with few cores.
class WorkerHook final : public instrument::Hook {
 public:
  WorkerHook(double chaos, std::uint64_t seed, StallControl* stall) : stall_(stall) {
    state_ = seed | 1;
    if (chaos > 0) {
      hot_ = chaos >= 1.0 ? std::numeric_limits<std::uint64_t>::max()
                          : static_cast<std::uint64_t>(chaos * 18446744073709551616.0);
      cold_ = hot_ / 32;
    }
  }

  void at(Site site, std::uint64_t) override {
    bool hot = site == Site::kListDangerZone || site == Site::kListAfterMark ||
               site == Site::kTreeDangerZone || site == Site::kTreeAfterFlag;
    if (stall_ != nullptr && !stall_->stalled.load(std::memory_order_relaxed) &&
        (hot || Clock::now() >= stall_->fallback_at)) {
      stall_->allocations_at_stall = stall_->domain->stats().allocations;
      stall_->stalled.store(true, std::memory_order_release);
      while (!stall_->release.load(std::memory_order_acquire)) {
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
      }
      stall_ = nullptr;
    }
    if (hot_ == 0) return;
    if (next() < (hot ? hot_ : cold_)) std::this_thread::yield();
  }

 private:
  std::uint64_t next() {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1Dull;
  }

  StallControl* stall_;
  std::uint64_t state_;
  std::uint64_t hot_ = 0;
  std::uint64_t cold_ = 0;
};

struct alignas(64) WorkerResult {
  std::atomic<std::uint64_t> ops{0};
  std::uint64_t searches = 0;
  std::uint64_t inserts = 0;
  std::uint64_t removes = 0;
  std::uint64_t search_hits = 0;
  std::uint64_t inserts_ok = 0;
  std::uint64_t removes_ok = 0;
  std::set<std::uint64_t> oracle;
  std::uint64_t slice_lo = 0;
  std::uint64_t slice_hi = 0;
};

std::vector<std::uint64_t> choose_prefill(const BenchConfig& c) {
  std::mt19937_64 rng(c.seed ^ 0x5bd1e9955bd1e995ull);
  std::vector<std::uint64_t> keys;
  keys.reserve(c.prefill);
  if (c.prefill * 2 <= c.key_range) {
    std::unordered_set<std::uint64_t> seen;
    std::uniform_int_distribution<std::uint64_t> dist(0, c.key_range - 1);
    while (keys.size() < c.prefill) {
      auto k = dist(rng);
      if (seen.insert(k).second) keys.push_back(k);
    }
  } else {
    std::vector<std::uint64_t> all(c.key_range);
    for (std::uint64_t i = 0; i < c.key_range; ++i) all[i] = i;
    for (std::uint64_t i = 0; i < c.prefill; ++i) {
      std::uniform_int_distribution<std::uint64_t> dist(i, c.key_range - 1);
      std::swap(all[i], all[dist(rng)]);
      keys.push_back(all[i]);
    }
  }
  return keys;
}

struct RunShared {
  const BenchConfig& config;
  ConcurrentSet& set;
  FailureLog& failures;
  std::atomic<bool> go{false};
  std::atomic<bool> stop{false};
  bool check_oracle = false;
};

void worker_main(RunShared& shared, std::size_t index, smr::ThreadHandle handle,
                 WorkerResult& out, StallControl* stall) {
  const BenchConfig& c = shared.config;
  std::seed_seq seq{c.seed, std::uint64_t{index}, std::uint64_t{0x7f4a7c15}};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<std::uint64_t> key_dist(out.slice_lo, out.slice_hi - 1);
  std::uniform_int_distribution<unsigned> op_dist(0, 99);
  WorkerHook hook(c.chaos, c.seed * 0x9E3779B97F4A7C15ull + index, stall);
  std::optional<instrument::ScopedHook> installed;
  if (c.chaos > 0 || stall != nullptr) installed.emplace(&hook);

  while (!shared.go.load(std::memory_order_acquire)) std::this_thread::yield();

  std::uint64_t done = 0;
  OpKind op = OpKind::kSearch;
  std::uint64_t key = 0;
  try {
    while (!shared.stop.load(std::memory_order_relaxed) &&
           (c.ops_per_thread == 0 || done < c.ops_per_thread)) {
      key = key_dist(rng);
      unsigned roll = op_dist(rng);
      op = roll < c.mix.search                  ? OpKind::kSearch
           : roll < c.mix.search + c.mix.insert ? OpKind::kInsert
                                                : OpKind::kRemove;
      bool result = false;
      bool expected = false;
      switch (op) {
        case OpKind::kSearch:
          result = shared.set.search(handle, key);
          ++out.searches;
          out.search_hits += result;
          if (shared.check_oracle) expected = out.oracle.count(key) != 0;
          break;
        case OpKind::kInsert:
          result = shared.set.insert(handle, key);
          ++out.inserts;
          out.inserts_ok += result;
          if (shared.check_oracle) expected = out.oracle.insert(key).second;
          break;
        case OpKind::kRemove:
          result = shared.set.remove(handle, key);
          ++out.removes;
          out.removes_ok += result;
          if (shared.check_oracle) expected = out.oracle.erase(key) != 0;
          break;
      }
      if (shared.check_oracle && result != expected) {
        shared.failures.record(false, "thread " + std::to_string(index) + " " + op_name(op) +
                                          "(" + std::to_string(key) + ") returned " +
                                          (result ? "true" : "false") +
                                          ", sequential oracle says " +
                                          (expected ? "true" : "false"));
        shared.stop.store(true);
        break;
      }
      ++done;
      out.ops.store(done, std::memory_order_relaxed);
    }
  } catch (const instrument::CanaryViolation& e) {
    shared.failures.record(true, "thread " + std::to_string(index) + " " + op_name(op) + "(" +
                                     std::to_string(key) + "): " + e.what());
    shared.stop.store(true);
  } catch (const std::exception& e) {
    shared.failures.record(false, "thread " + std::to_string(index) + " " + op_name(op) + "(" +
                                      std::to_string(key) + "): " + e.what());
    shared.stop.store(true);
  }
}

std::uint64_t total_ops(const std::vector<std::unique_ptr<WorkerResult>>& results) {
  std::uint64_t sum = 0;
  for (const auto& r : results) sum += r->ops.load(std::memory_order_relaxed);
  return sum;
}

void copy_stats(BenchReport& report, const smr::Stats& s) {
  report.cas_attempts = s.cas_attempts;
  report.cas_failures = s.cas_failures;
  report.unlink_cas = s.unlink_cas;
  report.allocations = s.allocations;
  report.retirements = s.retirements;
  report.reclamations = s.reclamations;
  report.direct_frees = s.direct_frees;
  report.peak_unreclaimed = s.peak_unreclaimed;
  report.validation_restarts = s.validation_restarts;
  report.max_slot_written = s.max_slot_written;
}

BenchReport execute(const BenchConfig& config) {
  validate(config);
  BenchReport report;
  report.config = config;

  smr::DomainOptions options;
  options.scheme = config.scheme;
  options.max_threads = config.threads;
  options.slot_count = kDomainSlots;
  options.poison = config.poison;
  options = smr::apply_env_overrides(options);

  auto domain = std::make_unique<smr::Domain>(options);
  auto set = make_set(config, *domain);
  FailureLog failures;
  RunShared shared{config, *set, failures};
  shared.check_oracle =
      config.mode != Mode::kBench && (config.threads == 1 || config.partition_keys);

  auto prefill = choose_prefill(config);
  {
    auto handle = domain->register_thread();
    handle.set_slot_limit(set->slots_used());
    for (auto key : prefill) {
      if (!set->insert(handle, key)) {
        failures.record(false, "prefill insert(" + std::to_string(key) + ") returned false");
      }
    }
  }

  const std::size_t n = config.threads;
  std::vector<std::unique_ptr<WorkerResult>> results;
  for (std::size_t t = 0; t < n; ++t) {
    auto r = std::make_unique<WorkerResult>();
    if (config.partition_keys) {
      r->slice_lo = config.key_range * t / n;
      r->slice_hi = config.key_range * (t + 1) / n;
    } else {
      r->slice_lo = 0;
      r->slice_hi = config.key_range;
    }
    if (shared.check_oracle) {
      for (auto key : prefill) {
        if (key >= r->slice_lo && key < r->slice_hi) r->oracle.insert(key);
      }
    }
    results.push_back(std::move(r));
  }

  StallControl stall;
  stall.domain = domain.get();
  const bool robustness = config.mode == Mode::kRobustness;

  std::vector<std::thread> workers;
  for (std::size_t t = 0; t < n; ++t) {
    auto handle = domain->register_thread();
    handle.set_slot_limit(set->slots_used());
    StallControl* stall_for = robustness && t == n - 1 ? &stall : nullptr;
    workers.emplace_back(worker_main, std::ref(shared), t, std::move(handle),
                         std::ref(*results[t]), stall_for);
  }

  std::atomic<bool> sampling{true};
  std::thread sampler([&] {
    while (sampling.load(std::memory_order_relaxed)) {
      domain->sample_peak();
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    domain->sample_peak();
  });

  const auto duration = std::chrono::milliseconds(config.duration_ms);
  const auto warmup = config.mode == Mode::kBench ? duration / 10 : duration * 0;
  auto start = Clock::now();
  stall.fallback_at = start + std::min<Clock::duration>(std::chrono::milliseconds(200), duration / 10);
  shared.go.store(true, std::memory_order_release);

  auto wait_until = [&](Clock::time_point deadline) {
    while (Clock::now() < deadline && !failures.any.load(std::memory_order_acquire)) {
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  };

  std::uint64_t ops_at_window_start = 0;
  Clock::time_point window_start = start;
  Clock::time_point window_end;
  if (config.ops_per_thread == 0) {
    if (warmup.count() > 0) {
      wait_until(start + warmup);
      ops_at_window_start = total_ops(results);
      window_start = Clock::now();
    }
    wait_until(start + duration);
    window_end = Clock::now();
    report.total_ops = total_ops(results) - ops_at_window_start;
    shared.stop.store(true);
    stall.release.store(true, std::memory_order_release);
    for (auto& w : workers) w.join();
  } else {
    for (auto& w : workers) w.join();
    window_end = Clock::now();
    report.total_ops = total_ops(results);
  }
  sampling.store(false);
  sampler.join();

  report.elapsed_ms = std::chrono::duration<double, std::milli>(window_end - window_start).count();
  report.throughput =
      report.elapsed_ms > 0 ? static_cast<double>(report.total_ops) * 1000.0 / report.elapsed_ms : 0;
  for (const auto& r : results) {
    report.searches += r->searches;
    report.inserts += r->inserts;
    report.removes += r->removes;
    report.search_hits += r->search_hits;
    report.inserts_ok += r->inserts_ok;
    report.removes_ok += r->removes_ok;
  }

  if (robustness) {
    if (!stall.stalled.load()) {
      failures.record(false, "stall thread never stalled");
    } else if (config.scheme == smr::Scheme::kHP) {
      report.unreclaimed_bound = hp_bound(n, options.scan_threshold, kDomainSlots);
    } else if (config.scheme == smr::Scheme::kIBR) {
      report.unreclaimed_bound = ibr_bound(stall.allocations_at_stall, n, options.era_frequency,
                                           options.scan_threshold, kDomainSlots);
    }
  }

  if (failures.canary > 0) {
    // Memory is known to be corrupt: report and leave everything in place.
    copy_stats(report, domain->stats());
    report.canary_hits = failures.canary;
    report.invariant_violations = failures.invariant;
    report.diagnostic = failures.first;
    (void)set.release();
    (void)domain.release();
    return report;
  }

  auto shape = set->check_shape();
  auto keys = set->keys();
  report.final_size = keys.size();
  if (!shape.ok) failures.record(false, "shape: " + shape.problem);
  std::uint64_t expected_size = config.prefill + report.inserts_ok - report.removes_ok;
  if (report.final_size != expected_size) {
    failures.record(false, "final size " + std::to_string(report.final_size) +
                               " != prefill + successful inserts - successful deletes = " +
                               std::to_string(expected_size));
  }
  if (shared.check_oracle) {
    for (std::size_t t = 0; t < n; ++t) {
      std::vector<std::uint64_t> slice;
      for (auto k : keys) {
        if (k >= results[t]->slice_lo && k < results[t]->slice_hi) slice.push_back(k);
      }
      if (!std::equal(slice.begin(), slice.end(), results[t]->oracle.begin(),
                      results[t]->oracle.end())) {
        failures.record(false, "final membership of thread " + std::to_string(t) +
                                   "'s keys differs from its sequential oracle");
      }
    }
  }

  auto live = domain->stats();
  if (report.unreclaimed_bound != 0 && live.peak_unreclaimed > report.unreclaimed_bound) {
    failures.record(false, "peak unreclaimed " + std::to_string(live.peak_unreclaimed) +
                               " exceeds bound " + std::to_string(report.unreclaimed_bound));
  }
  if (live.max_slot_written >= static_cast<int>(set->slots_used())) {
    failures.record(false, "slot " + std::to_string(live.max_slot_written) + " written");
  }

  set.reset();
  domain->drain();
  auto final_stats = domain->stats();
  copy_stats(report, final_stats);
  if (final_stats.allocations != final_stats.reclamations + final_stats.direct_frees ||
      final_stats.unreclaimed != 0) {
    failures.record(false, "allocation balance: " + std::to_string(final_stats.allocations) +
                               " allocated, " + std::to_string(final_stats.reclamations) +
                               " reclaimed, " + std::to_string(final_stats.direct_frees) +
                               " freed directly");
  }

  report.canary_hits = failures.canary;
  report.invariant_violations = failures.invariant;
  report.diagnostic = failures.first;
  return report;
}

}  // namespace

BenchReport run_stress(const BenchConfig& config) {
  BenchConfig c = config;
  c.mode = Mode::kStress;
  return execute(c);
}

BenchReport run_robustness(const BenchConfig& config) {
  BenchConfig c = config;
  c.mode = Mode::kRobustness;
  c.stall_thread = true;
  return execute(c);
}

BenchReport run_benchmark(const BenchConfig& config) {
  BenchConfig c = config;
  c.mode = Mode::kBench;
  return execute(c);
}

BenchReport run(const BenchConfig& config) {
  switch (config.mode) {
    case Mode::kRobustness: return run_robustness(config);
    case Mode::kBench: return run_benchmark(config);
    case Mode::kStress: break;
  }
  return run_stress(config);
}

}  // namespace scot::harness
