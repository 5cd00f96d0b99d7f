#include <algorithm>
#include <cstdio>
#include <sstream>

#include "scot/harness.hpp"

namespace scot::harness {

namespace {

std::string fixed(double value, int digits) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.*f", digits, value);
  return buffer;
}

std::string yes_no(bool b) { return b ? "1" : "0"; }

}  // namespace

std::vector<std::string> report_columns() {
  return {
      // configuration
      "mode", "ds", "smr", "threads", "duration_ms", "ops_per_thread", "key_range", "search_pct",
      "insert_pct", "delete_pct", "prefill", "seed", "stall_thread", "scot_validation", "buckets",
      "chaos", "poison", "partition_keys",
      // metrics
      "elapsed_ms", "total_ops", "throughput", "searches", "inserts", "deletes", "search_hits",
      "inserts_ok", "deletes_ok", "final_size", "cas_attempts", "cas_failures", "unlink_cas",
      "allocations", "retirements", "reclamations", "direct_frees", "peak_unreclaimed",
      "unreclaimed_bound", "validation_restarts", "max_slot_written", "canary_hits",
      "invariant_violations", "status"};
}

std::vector<std::string> report_values(const BenchReport& r) {
  const BenchConfig& c = r.config;
  auto u = [](auto v) { return std::to_string(v); };
  return {mode_name(c.mode),
          structure_name(c.structure),
          smr::scheme_name(c.scheme),
          u(c.threads),
          u(c.duration_ms),
          u(c.ops_per_thread),
          u(c.key_range),
          u(c.mix.search),
          u(c.mix.insert),
          u(c.mix.remove),
          u(c.prefill),
          u(c.seed),
          yes_no(c.stall_thread),
          yes_no(c.scot_validation),
          u(c.buckets),
          fixed(c.chaos, 4),
          yes_no(c.poison),
          yes_no(c.partition_keys),
          fixed(r.elapsed_ms, 1),
          u(r.total_ops),
          fixed(r.throughput, 0),
          u(r.searches),
          u(r.inserts),
          u(r.removes),
          u(r.search_hits),
          u(r.inserts_ok),
          u(r.removes_ok),
          u(r.final_size),
          u(r.cas_attempts),
          u(r.cas_failures),
          u(r.unlink_cas),
          u(r.allocations),
          u(r.retirements),
          u(r.reclamations),
          u(r.direct_frees),
          u(r.peak_unreclaimed),
          u(r.unreclaimed_bound),
          u(r.validation_restarts),
          std::to_string(r.max_slot_written),
          u(r.canary_hits),
          u(r.invariant_violations),
          r.passed() ? "pass" : "fail"};
}

std::string emit_report(const BenchReport& report, Format format) {
  auto columns = report_columns();
  auto values = report_values(report);
  std::ostringstream out;
  if (format == Format::kCsv) {
    for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
    out << '\n';
    for (std::size_t i = 0; i < values.size(); ++i) out << (i ? "," : "") << values[i];
    out << '\n';
    return out.str();
  }
  std::size_t width = 0;
  for (const auto& name : columns) width = std::max(width, name.size());
  for (std::size_t i = 0; i < columns.size(); ++i) {
    out << columns[i] << std::string(width - columns[i].size() + 2, ' ') << values[i] << '\n';
  }
  return out.str();
}

}  // namespace scot::harness
