// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Multi-threaded runs go through the
// scot_bench binary so a crash in one run cannot take the suite down.

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "model_check.hpp"
#include "scot/harris_list.hpp"
#include "scot/nm_tree.hpp"
#include "scot/smr.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct BenchRun {
  int status = -1;  // exit code, or 128 + signal
  double seconds = 0;
  std::map<std::string, std::string> row;

  std::uint64_t u(const std::string& column) const {
    auto it = row.find(column);
    return it == row.end() ? 0 : std::stoull(it->second);
  }
  double d(const std::string& column) const {
    auto it = row.find(column);
    return it == row.end() ? 0.0 : std::stod(it->second);
  }
};

BenchRun bench(const std::string& args) {
  std::string cmd = SCOT_BENCH_PATH " " + args + " 2>/dev/null";
  BenchRun run;
  auto start = Clock::now();
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return run;
  std::string out;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), n);
  int raw = pclose(pipe);
  run.seconds = seconds_since(start);
  run.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : 128 + WTERMSIG(raw);

  std::istringstream in(out);
  std::string header, values;
  if (std::getline(in, header) && std::getline(in, values)) {
    std::istringstream h(header), v(values);
    std::string name, value;
    while (std::getline(h, name, ',') && std::getline(v, value, ',')) run.row[name] = value;
  }
  return run;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

int failures = 0;

void report(int number, const char* name, bool pass, const std::string& detail) {
  std::printf("criterion %d %-32s %s  %s\n", number, name, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* format, auto... args) {
  char buffer[512];
  std::snprintf(buffer, sizeof buffer, format, args...);
  return buffer;
}

const char* kStructures[] = {"harris", "harris-michael", "nm-tree", "hash-map"};
const char* kSchemes[] = {"hp", "ebr", "ibr"};

// 1: sequential oracle equivalence.
void oracle_equivalence() {
  bool pass = true;
  std::string detail;
  for (const char* ds : kStructures) {
    auto r = bench(fmt("--ds %s --smr hp --threads 1 --ops 100000 --key-range 1000 --mix 34:33:33",
                       ds));
    bool ok = r.status == 0 && r.u("total_ops") == 100000 && r.seconds < 10.0;
    pass &= ok;
    detail += fmt("%s %.2fs%s ", ds, r.seconds, ok ? "" : " (mismatch)");
  }
  report(1, "oracle equivalence", pass, detail);
}

// 2 and 8 share these runs.
std::vector<std::pair<std::string, BenchRun>> safety_runs;

void safety_suite() {
  bool pass = true;
  std::string bad;
  for (const char* ds : kStructures) {
    for (const char* smr : kSchemes) {
      auto r = bench(fmt("--ds %s --smr %s --threads 8 --duration-ms 2000 --key-range 1000 "
                         "--mix 10:30:60 --poison --buckets 64",
                         ds, smr));
      bool ok = r.status == 0 && r.u("canary_hits") == 0 && r.u("invariant_violations") == 0 &&
                r.u("allocations") == r.u("reclamations") + r.u("direct_frees");
      if (!ok) bad += fmt("%s/%s(exit %d) ", ds, smr, r.status);
      pass &= ok;
      safety_runs.emplace_back(std::string(ds), r);
    }
  }
  report(2, "safety suite", pass,
         pass ? fmt("%zu runs clean, allocations balanced", safety_runs.size()) : bad);
}

// 3: with validation off the same workload must trip.
void validation_necessity() {
  bool pass = true;
  std::string detail;
  for (const char* ds : {"harris", "nm-tree"}) {
    int tripped = 0;
    bool false_success = false;
    double slowest = 0;
    for (int seed = 1; seed <= 10; ++seed) {
      auto r = bench(fmt("--ds %s --smr hp --threads 8 --duration-ms 10000 --key-range 1000 "
                         "--mix 10:30:60 --poison --no-scot-validation --seed %d",
                         ds, seed));
      slowest = std::max(slowest, r.seconds);
      bool trip = (r.status == 2 && r.u("canary_hits") + r.u("invariant_violations") > 0) ||
                  r.status == 128 + SIGABRT || r.status == 128 + SIGSEGV;
      if (trip && r.seconds <= 10.5) ++tripped;
      if (r.status == 0 && r.row["status"] != "pass") false_success = true;
    }
    pass &= tripped >= 9 && !false_success;
    detail += fmt("%s %d/10 tripped (slowest %.2fs) ", ds, tripped, slowest);
  }
  report(3, "validation necessity", pass, detail);
}

// 4: stalled reader, 7 active threads.
void robustness_bound() {
  std::string base =
      "--ds harris --threads 8 --duration-ms 5000 --key-range 1000 --mix 10:30:60 --stall-thread";
  auto hp = bench(base + " --smr hp");
  auto ibr = bench(base + " --smr ibr");
  auto ebr = bench(base + " --smr ebr");
  const std::uint64_t hp_limit = 8 * (64 + 5 * 8);
  bool hp_ok = hp.status == 0 && hp.u("unreclaimed_bound") == hp_limit &&
               hp.u("peak_unreclaimed") < hp_limit;
  bool ibr_ok = ibr.status == 0 && ibr.u("unreclaimed_bound") > 0 &&
                ibr.u("peak_unreclaimed") < ibr.u("unreclaimed_bound");
  bool ebr_ok = ebr.status == 0 && ebr.u("peak_unreclaimed") > 10 * hp_limit;
  report(4, "robustness bound", hp_ok && ibr_ok && ebr_ok,
         fmt("hp peak %llu < %llu; ibr peak %llu < %llu; ebr peak %llu > %llu",
             (unsigned long long)hp.u("peak_unreclaimed"), (unsigned long long)hp_limit,
             (unsigned long long)ibr.u("peak_unreclaimed"),
             (unsigned long long)ibr.u("unreclaimed_bound"),
             (unsigned long long)ebr.u("peak_unreclaimed"), (unsigned long long)(10 * hp_limit)));
}

// Unlink CAS count through a chain of 16 marked nodes in front of key 17.
std::uint64_t chain_unlink_cas(scot::ListVariant variant) {
  scot::smr::DomainOptions o;
  o.scheme = scot::smr::Scheme::kHP;
  o.max_threads = 1;
  scot::smr::Domain domain(o);
  scot::ListOptions lo;
  lo.variant = variant;
  scot::HarrisList list(domain, lo);
  auto h = domain.register_thread();
  for (std::uint64_t k = 1; k <= 17; ++k) list.insert(h, k);
  for (std::uint64_t k = 16; k >= 1; --k) list.mark_only(h, k);
  auto before = domain.stats().unlink_cas;
  list.insert(h, 17);  // update traversal to 17, returns false
  return domain.stats().unlink_cas - before;
}

// 5: one CAS per chain, and contended throughput no worse than eager
// unlinking.
void optimistic_benefit() {
  auto harris_cas = chain_unlink_cas(scot::ListVariant::kHarris);
  auto hm_cas = chain_unlink_cas(scot::ListVariant::kHarrisMichael);
  std::vector<double> harris, hm;
  bool runs_ok = true;
  for (int i = 0; i < 5; ++i) {
    for (auto [ds, out] : {std::pair{"harris", &harris}, std::pair{"harris-michael", &hm}}) {
      auto r = bench(fmt("--mode bench --ds %s --smr hp --threads 8 --duration-ms 2000 "
                         "--key-range 1000 --mix 10:30:60 --seed %d",
                         ds, i + 1));
      runs_ok &= r.status == 0;
      out->push_back(r.d("throughput"));
    }
  }
  double ratio = median(harris) / std::max(1.0, median(hm));
  bool pass = harris_cas == 1 && hm_cas >= 16 && runs_ok && ratio >= 0.95;
  report(5, "optimistic traversal benefit", pass,
         fmt("chain unlink CAS %llu vs %llu; median ops/s %.0f vs %.0f, ratio %.2f",
             (unsigned long long)harris_cas, (unsigned long long)hm_cas, median(harris), median(hm),
             ratio));
}

// 6: tree under HP close to EBR on a read-mostly mix.
void tree_parity() {
  std::vector<double> hp, ebr;
  bool runs_ok = true;
  for (int i = 0; i < 5; ++i) {
    for (auto [smr, out] : {std::pair{"hp", &hp}, std::pair{"ebr", &ebr}}) {
      auto r = bench(fmt("--mode bench --ds nm-tree --smr %s --threads 8 --duration-ms 2000 "
                         "--key-range 10000 --mix 90:5:5 --seed %d",
                         smr, i + 1));
      runs_ok &= r.status == 0;
      out->push_back(r.d("throughput"));
    }
  }
  double ratio = median(hp) / std::max(1.0, median(ebr));
  report(6, "tree throughput parity", runs_ok && ratio >= 0.7,
         fmt("median ops/s hp %.0f ebr %.0f, ratio %.2f", median(hp), median(ebr), ratio));
}

// 7: bounded-preemption exploration of small programs.
void small_model() {
  using namespace scot::testing;
  bool pass = true;
  std::string detail;
  struct Plan {
    ModelStructure structure;
    const char* name;
    std::size_t sampled;
  };
  for (auto plan : {Plan{ModelStructure::kHarris, "harris", 300},
                    Plan{ModelStructure::kNmTree, "nm-tree", 100}}) {
    ModelOptions o;
    o.structure = plan.structure;
    auto start = Clock::now();
    auto r = explore_all(single_op_programs({1, 2, 3}), o);
    auto r2 = explore_all(sampled_programs({1, 2, 3}, 2, plan.sampled, 11), o);
    auto r3 = explore_all(sampled_programs({1, 2, 3}, 3, plan.sampled, 13), o);
    double took = seconds_since(start);
    std::size_t violations = r.violations + r2.violations + r3.violations;
    bool ok = violations == 0 && took < 60.0;
    pass &= ok;
    detail += fmt("%s %zu programs %zu schedules %zu violations %.1fs; ", plan.name,
                  r.programs + r2.programs + r3.programs,
                  r.executions + r2.executions + r3.executions, violations, took);
    if (violations) {
      std::fprintf(stderr, "%s\n",
                   (!r.first_violation.empty() ? r.first_violation
                    : !r2.first_violation.empty() ? r2.first_violation
                                                  : r3.first_violation)
                       .c_str());
    }
  }
  report(7, "small-model linearizability", pass, detail);
}

// Child process writes one slot past `limit`; must die with SIGABRT.
bool out_of_range_slot_aborts(std::size_t limit) {
  pid_t pid = fork();
  if (pid == 0) {
    int devnull = open("/dev/null", O_WRONLY);
    dup2(devnull, STDERR_FILENO);
    scot::smr::DomainOptions o;
    o.max_threads = 1;
    o.slot_count = limit + 1;
    scot::smr::Domain domain(o);
    auto h = domain.register_thread();
    h.set_slot_limit(limit);
    scot::AtomicCell cell;
    h.begin_op();
    h.protect(cell, limit);
    _exit(0);
  }
  int status = 0;
  waitpid(pid, &status, 0);
  return WIFSIGNALED(status) && WTERMSIG(status) == SIGABRT;
}

// 8: slot usage recorded during the safety suite.
void slot_discipline() {
  bool pass = !safety_runs.empty();
  int list_max = -1, tree_max = -1;
  for (const auto& [ds, r] : safety_runs) {
    int used = static_cast<int>(r.d("max_slot_written"));
    if (ds == "nm-tree") {
      tree_max = std::max(tree_max, used);
    } else {
      list_max = std::max(list_max, used);
    }
  }
  bool list_abort = out_of_range_slot_aborts(scot::HarrisList::kSlotsUsed);
  bool tree_abort = out_of_range_slot_aborts(scot::NatarajanMittalTree::kSlotsUsed);
  pass &= list_max >= 0 && list_max <= 3 && tree_max >= 0 && tree_max <= 4 && list_abort &&
          tree_abort;
  report(8, "slot discipline", pass,
         fmt("highest slot: lists %d, tree %d; out-of-range write aborts: %s/%s", list_max,
             tree_max, list_abort ? "yes" : "no", tree_abort ? "yes" : "no"));
}

}  // namespace

int main() {
  oracle_equivalence();
  safety_suite();
  validation_necessity();
  robustness_bound();
  optimistic_benefit();
  tree_parity();
  small_model();
  slot_discipline();
  std::printf("%s: %d of 8 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
