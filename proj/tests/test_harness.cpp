#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "scot/harness.hpp"

namespace scot::harness {
namespace {

CliResult parse(std::vector<std::string> args) { return parse_cli(args); }

TEST(Cli, EmptyArgsGiveDefaults) {
  auto r = parse({});
  EXPECT_FALSE(r.exit_now);
  const auto& c = r.config;
  EXPECT_EQ(c.mode, Mode::kStress);
  EXPECT_EQ(c.structure, Structure::kHarris);
  EXPECT_EQ(c.scheme, smr::Scheme::kHP);
  EXPECT_GE(c.threads, 1u);
  EXPECT_EQ(c.duration_ms, 1000u);
  EXPECT_EQ(c.key_range, 10000u);
  EXPECT_EQ(c.prefill, 5000u);
  EXPECT_EQ(c.mix.search, 80u);
  EXPECT_TRUE(c.scot_validation);
  EXPECT_TRUE(c.poison);
  EXPECT_EQ(c.format, Format::kCsv);
}

TEST(Cli, ParsesEveryFlag) {
  auto c = parse({"--ds", "nm-tree", "--smr", "ibr", "--threads", "8", "--duration-ms", "250",
                  "--key-range", "1000", "--mix", "10:30:60", "--prefill", "100", "--seed", "9",
                  "--no-scot-validation", "--buckets", "64", "--format", "human", "--chaos",
                  "0.25", "--partition-keys"})
               .config;
  EXPECT_EQ(c.structure, Structure::kNmTree);
  EXPECT_EQ(c.scheme, smr::Scheme::kIBR);
  EXPECT_EQ(c.threads, 8u);
  EXPECT_EQ(c.duration_ms, 250u);
  EXPECT_EQ(c.key_range, 1000u);
  EXPECT_EQ(c.mix.search, 10u);
  EXPECT_EQ(c.mix.insert, 30u);
  EXPECT_EQ(c.mix.remove, 60u);
  EXPECT_EQ(c.prefill, 100u);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_FALSE(c.scot_validation);
  EXPECT_EQ(c.buckets, 64u);
  EXPECT_EQ(c.format, Format::kHuman);
  EXPECT_DOUBLE_EQ(c.chaos, 0.25);
  EXPECT_TRUE(c.partition_keys);
}

TEST(Cli, PrefillDefaultsToHalfTheKeyRange) {
  EXPECT_EQ(parse({"--key-range", "1000"}).config.prefill, 500u);
}

TEST(Cli, StallThreadSelectsRobustnessWithoutPoison) {
  auto c = parse({"--stall-thread", "--threads", "4"}).config;
  EXPECT_EQ(c.mode, Mode::kRobustness);
  EXPECT_TRUE(c.stall_thread);
  EXPECT_FALSE(c.poison);
  EXPECT_TRUE(parse({"--stall-thread", "--threads", "4", "--poison"}).config.poison);
  EXPECT_FALSE(parse({"--mode", "bench"}).config.poison);
}

TEST(Cli, BadInputNamesTheFlag) {
  auto message = [](std::vector<std::string> args) -> std::string {
    try {
      parse_cli(args);
    } catch (const UsageError& e) {
      return e.what();
    }
    return "";
  };
  EXPECT_NE(message({"--mix", "50:50:50"}).find("--mix"), std::string::npos);
  EXPECT_NE(message({"--mix", "80:20"}).find("--mix"), std::string::npos);
  EXPECT_NE(message({"--mix", "a:b:c"}).find("--mix"), std::string::npos);
  EXPECT_NE(message({"--prefill", "20", "--key-range", "10"}).find("--prefill"), std::string::npos);
  EXPECT_NE(message({"--ds", "hash-map", "--buckets", "100"}).find("--buckets"), std::string::npos);
  EXPECT_NE(message({"--chaos", "2"}).find("--chaos"), std::string::npos);
  EXPECT_NE(message({"--stall-thread", "--threads", "1"}).find("--threads"), std::string::npos);
  EXPECT_THROW(parse({"--ds", "skiplist"}), UsageError);
  EXPECT_THROW(parse({"--smr", "rcu"}), UsageError);
  EXPECT_THROW(parse({"--threads", "0"}), UsageError);
  EXPECT_THROW(parse({"--frobnicate"}), UsageError);
  EXPECT_THROW(parse({"--threads"}), UsageError);
}

TEST(Cli, HelpListsFlags) {
  auto r = parse({"--help"});
  EXPECT_TRUE(r.exit_now);
  for (const char* flag : {"--ds", "--smr", "--threads", "--duration-ms", "--key-range", "--mix",
                           "--prefill", "--seed", "--stall-thread", "--no-scot-validation",
                           "--buckets", "--format"}) {
    EXPECT_NE(r.text.find(flag), std::string::npos) << flag;
  }
}

TEST(Report, CsvHasOneHeaderAndOneRow) {
  BenchReport report;
  auto csv = emit_report(report, Format::kCsv);
  std::istringstream in(csv);
  std::string header, row, extra;
  ASSERT_TRUE(std::getline(in, header));
  ASSERT_TRUE(std::getline(in, row));
  EXPECT_FALSE(std::getline(in, extra));
  auto count = [](const std::string& s) { return std::count(s.begin(), s.end(), ',') + 1; };
  EXPECT_EQ(count(header), static_cast<long>(report_columns().size()));
  EXPECT_EQ(count(row), count(header));
  EXPECT_EQ(row.substr(row.rfind(',') + 1), "pass");
}

TEST(Report, HumanFormatListsEveryColumn) {
  BenchReport report;
  report.canary_hits = 1;
  auto text = emit_report(report, Format::kHuman);
  for (const auto& name : report_columns()) EXPECT_NE(text.find(name), std::string::npos) << name;
  EXPECT_NE(text.find("fail"), std::string::npos);
}

TEST(Bounds, Formulas) {
  EXPECT_EQ(hp_bound(8, 64, 5), 832u);
  EXPECT_EQ(ibr_bound(1000, 8, 32, 64, 5), 1000u + 8 * (32 + 64 + 40));
}

BenchConfig small_config(Structure s, smr::Scheme scheme) {
  BenchConfig c;
  c.structure = s;
  c.scheme = scheme;
  c.threads = 1;
  c.ops_per_thread = 20000;
  c.key_range = 256;
  c.prefill = 128;
  c.mix = {40, 30, 30};
  c.buckets = 16;
  return c;
}

TEST(Run, SingleThreadIsDeterministic) {
  for (auto s : {Structure::kHarris, Structure::kHarrisMichael, Structure::kNmTree,
                 Structure::kHashMap}) {
    auto a = run(small_config(s, smr::Scheme::kHP));
    auto b = run(small_config(s, smr::Scheme::kEBR));
    ASSERT_TRUE(a.passed()) << a.diagnostic;
    ASSERT_TRUE(b.passed()) << b.diagnostic;
    EXPECT_EQ(a.total_ops, 20000u);
    EXPECT_EQ(a.search_hits, b.search_hits) << structure_name(s);
    EXPECT_EQ(a.inserts_ok, b.inserts_ok);
    EXPECT_EQ(a.removes_ok, b.removes_ok);
    EXPECT_EQ(a.final_size, b.final_size);
    EXPECT_EQ(a.final_size, 128 + a.inserts_ok - a.removes_ok);
    EXPECT_EQ(a.allocations, a.reclamations + a.direct_frees);
  }
  auto c1 = small_config(Structure::kHarris, smr::Scheme::kHP);
  auto c2 = c1;
  c2.seed = 2;
  EXPECT_NE(run(c1).search_hits, run(c2).search_hits);
}

TEST(Run, PartitionedThreadsPassEveryPair) {
  for (auto s : {Structure::kHarris, Structure::kHarrisMichael, Structure::kNmTree,
                 Structure::kHashMap}) {
    for (auto scheme : {smr::Scheme::kHP, smr::Scheme::kEBR, smr::Scheme::kIBR}) {
      auto c = small_config(s, scheme);
      c.threads = 8;
      c.ops_per_thread = 2000;
      c.partition_keys = true;
      c.chaos = 0.05;
      auto r = run(c);
      EXPECT_TRUE(r.passed()) << structure_name(s) << "/" << smr::scheme_name(scheme) << ": "
                              << r.diagnostic;
      EXPECT_EQ(r.total_ops, 16000u);
      EXPECT_LE(r.max_slot_written, s == Structure::kNmTree ? 4 : 3);
    }
  }
}

TEST(Run, StalledThreadRobustness) {
  BenchConfig c;
  c.mode = Mode::kRobustness;
  c.stall_thread = true;
  c.poison = false;
  c.threads = 4;
  c.duration_ms = 300;
  c.key_range = 1000;
  c.prefill = 500;
  c.mix = {10, 30, 60};
  for (auto scheme : {smr::Scheme::kHP, smr::Scheme::kIBR}) {
    c.scheme = scheme;
    auto r = run(c);
    ASSERT_TRUE(r.passed()) << r.diagnostic;
    ASSERT_GT(r.unreclaimed_bound, 0u);
    EXPECT_LE(r.peak_unreclaimed, r.unreclaimed_bound) << smr::scheme_name(scheme);
  }
  c.scheme = smr::Scheme::kHP;
  EXPECT_EQ(run(c).unreclaimed_bound, hp_bound(4, 64, kDomainSlots));
  c.scheme = smr::Scheme::kEBR;
  auto r = run(c);
  EXPECT_TRUE(r.passed()) << r.diagnostic;
  EXPECT_EQ(r.unreclaimed_bound, 0u);
  EXPECT_GT(r.peak_unreclaimed, hp_bound(4, 64, kDomainSlots));
}

TEST(Run, BadEnvironmentOverrideIsAConfigError) {
  setenv("SCOT_ERA_FREQ", "zero", 1);
  EXPECT_THROW(run(small_config(Structure::kHarris, smr::Scheme::kIBR)), smr::ConfigError);
  unsetenv("SCOT_ERA_FREQ");
}

struct Exec {
  int status = -1;
  std::string out;
};

Exec exec(const std::string& args, const std::string& env = "") {
  std::string cmd = env + " " SCOT_BENCH_PATH " " + args + " 2>/dev/null";
  Exec e;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return e;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) e.out.append(buf.data(), n);
  int raw = pclose(pipe);
  e.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : 128 + WTERMSIG(raw);
  return e;
}

TEST(Binary, ExitCodes) {
  auto ok = exec("--threads 2 --ops 1000 --key-range 100");
  EXPECT_EQ(ok.status, 0);
  EXPECT_EQ(ok.out.rfind("mode,ds,smr,", 0), 0u) << ok.out;
  EXPECT_NE(ok.out.find(",pass\n"), std::string::npos);

  EXPECT_EQ(exec("--help").status, 0);
  EXPECT_EQ(exec("--mix 50:50:50").status, 1);
  EXPECT_EQ(exec("--frobnicate").status, 1);
  EXPECT_TRUE(exec("--mix 50:50:50").out.empty()) << "diagnostics go to stderr";
  EXPECT_EQ(exec("--ops 10", "SCOT_SCAN_THRESHOLD=0").status, 1);
  EXPECT_EQ(exec("--threads 1 --ops 100 --format human").status, 0);
}

}  // namespace
}  // namespace scot::harness
