#pragma once

// Stress, robustness and throughput driver over every structure/scheme
// pair. The CLI in tools/ is a thin wrapper around parse_cli + run +
// emit_report.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "scot/harris_list.hpp"
#include "scot/smr.hpp"

namespace scot::harness {

enum class Structure { kHarris, kHarrisMichael, kNmTree, kHashMap };
enum class Mode { kStress, kRobustness, kBench };
enum class Format { kCsv, kHuman };

const char* structure_name(Structure s);
const char* mode_name(Mode m);
std::optional<Structure> parse_structure(const std::string& name);

struct OpMix {
  unsigned search = 80;
  unsigned insert = 10;
  unsigned remove = 10;
};

struct BenchConfig {
  Mode mode = Mode::kStress;
  Structure structure = Structure::kHarris;
  smr::Scheme scheme = smr::Scheme::kHP;
  std::size_t threads = 1;
  std::uint64_t duration_ms = 1000;
  // Per-thread operation budget; 0 = run for duration_ms instead.
  std::uint64_t ops_per_thread = 0;
  std::uint64_t key_range = 10000;
  OpMix mix;
  std::uint64_t prefill = 5000;
  std::uint64_t seed = 1;
  bool stall_thread = false;
  bool scot_validation = true;
  std::size_t buckets = 1024;
  // Probability of a forced yield at deletion/traversal hot spots; memory
  // accesses yield at 1/32 of it. 0 disables injection.
  double chaos = 0.0;
  bool poison = true;
  // Thread t draws keys only from the t-th slice of the key range and
  // checks every result against a private sequential set.
  bool partition_keys = false;
  Format format = Format::kCsv;
};

// Default config for a given machine: threads = hardware concurrency.
BenchConfig default_config();

struct BenchReport {
  BenchConfig config;

  double elapsed_ms = 0;
  std::uint64_t total_ops = 0;  // inside the measured window
  double throughput = 0;        // ops per second, measured window
  std::uint64_t searches = 0;
  std::uint64_t inserts = 0;
  std::uint64_t removes = 0;
  std::uint64_t search_hits = 0;
  std::uint64_t inserts_ok = 0;
  std::uint64_t removes_ok = 0;
  std::uint64_t final_size = 0;

  std::uint64_t cas_attempts = 0;
  std::uint64_t cas_failures = 0;
  std::uint64_t unlink_cas = 0;
  std::uint64_t allocations = 0;
  std::uint64_t retirements = 0;
  std::uint64_t reclamations = 0;
  std::uint64_t direct_frees = 0;
  std::uint64_t peak_unreclaimed = 0;
  // Analytic ceiling on peak_unreclaimed for HP/IBR robustness runs, 0
  // when none applies.
  std::uint64_t unreclaimed_bound = 0;
  std::uint64_t validation_restarts = 0;
  int max_slot_written = -1;

  std::uint64_t canary_hits = 0;
  std::uint64_t invariant_violations = 0;
  // First failure, with thread, operation and key where known.
  std::string diagnostic;

  bool passed() const { return canary_hits == 0 && invariant_violations == 0; }
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Outcome of parsing: either a config, or a request to exit immediately
// (--help) with `text` on stdout.
struct CliResult {
  BenchConfig config;
  bool exit_now = false;
  std::string text;
};

// Throws UsageError naming the offending flag.
CliResult parse_cli(const std::vector<std::string>& args);

// Throws UsageError on invariant violations such as a mix not summing to
// 100.
void validate(const BenchConfig& config);

// Thin uniform interface over the four structures.
class ConcurrentSet {
 public:
  virtual ~ConcurrentSet() = default;
  virtual bool insert(smr::ThreadHandle& h, std::uint64_t key) = 0;
  virtual bool remove(smr::ThreadHandle& h, std::uint64_t key) = 0;
  virtual bool search(smr::ThreadHandle& h, std::uint64_t key) = 0;
  virtual std::vector<std::uint64_t> keys() const = 0;
  virtual ShapeReport check_shape() const = 0;
  // Hazard slots the structure may write; any other write aborts.
  virtual std::size_t slots_used() const = 0;
};

std::unique_ptr<ConcurrentSet> make_set(const BenchConfig& config, smr::Domain& domain);

// Slot count the domain is created with, for every structure.
inline constexpr std::size_t kDomainSlots = 5;

std::uint64_t hp_bound(std::size_t threads, std::size_t scan_threshold, std::size_t slots);
std::uint64_t ibr_bound(std::uint64_t allocations_at_stall, std::size_t threads,
                        std::size_t era_frequency, std::size_t scan_threshold,
                        std::size_t slots);

BenchReport run_stress(const BenchConfig& config);
BenchReport run_robustness(const BenchConfig& config);
BenchReport run_benchmark(const BenchConfig& config);
// Dispatches on config.mode.
BenchReport run(const BenchConfig& config);

std::vector<std::string> report_columns();
std::vector<std::string> report_values(const BenchReport& report);
std::string emit_report(const BenchReport& report, Format format);

}  // namespace scot::harness
