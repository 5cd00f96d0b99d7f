#include <algorithm>
#include <charconv>
#include <map>
#include <thread>

#include "CLI11.hpp"
#include "scot/harness.hpp"

namespace scot::harness {

const char* structure_name(Structure s) {
  switch (s) {
    case Structure::kHarris: return "harris";
    case Structure::kHarrisMichael: return "harris-michael";
    case Structure::kNmTree: return "nm-tree";
    case Structure::kHashMap: return "hash-map";
  }
  return "?";
}

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::kStress: return "stress";
    case Mode::kRobustness: return "robustness";
    case Mode::kBench: return "bench";
  }
  return "?";
}

std::optional<Structure> parse_structure(const std::string& name) {
  for (auto s : {Structure::kHarris, Structure::kHarrisMichael, Structure::kNmTree,
                 Structure::kHashMap}) {
    if (name == structure_name(s)) return s;
  }
  return std::nullopt;
}

BenchConfig default_config() {
  BenchConfig config;
  config.threads = std::max(1u, std::thread::hardware_concurrency());
  return config;
}

namespace {

bool parse_unsigned(const std::string& text, unsigned& out) {
  auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end && !text.empty();
}

OpMix parse_mix(const std::string& text) {
  OpMix mix;
  auto first = text.find(':');
  auto second = first == std::string::npos ? first : text.find(':', first + 1);
  if (second == std::string::npos || text.find(':', second + 1) != std::string::npos ||
      !parse_unsigned(text.substr(0, first), mix.search) ||
      !parse_unsigned(text.substr(first + 1, second - first - 1), mix.insert) ||
      !parse_unsigned(text.substr(second + 1), mix.remove)) {
    throw UsageError("--mix: expected search:insert:delete percentages, got '" + text + "'");
  }
  return mix;
}

}  // namespace

void validate(const BenchConfig& c) {
  if (c.mix.search + c.mix.insert + c.mix.remove != 100) {
    throw UsageError("--mix: percentages must sum to 100");
  }
  if (c.threads < 1) throw UsageError("--threads: must be at least 1");
  if (c.key_range < 1 || c.key_range - 1 > kMaxKey) {
    throw UsageError("--key-range: must be between 1 and 2^62");
  }
  if (c.prefill > c.key_range) throw UsageError("--prefill: must not exceed --key-range");
  if (c.ops_per_thread == 0 && c.duration_ms == 0) {
    throw UsageError("--duration-ms: must be positive unless --ops is given");
  }
  if (c.structure == Structure::kHashMap &&
      (c.buckets == 0 || (c.buckets & (c.buckets - 1)) != 0)) {
    throw UsageError("--buckets: must be a power of two");
  }
  if (c.chaos < 0.0 || c.chaos > 1.0) throw UsageError("--chaos: must be within [0, 1]");
  if (c.mode == Mode::kRobustness) {
    if (!c.stall_thread) throw UsageError("--mode: robustness runs need --stall-thread");
    if (c.threads < 2) throw UsageError("--threads: robustness runs need at least 2");
    if (c.ops_per_thread != 0) throw UsageError("--ops: not supported with --stall-thread");
  } else if (c.stall_thread) {
    throw UsageError("--stall-thread: only valid with --mode robustness");
  }
  if (c.partition_keys && c.key_range < c.threads) {
    throw UsageError("--partition-keys: key range smaller than thread count");
  }
}

CliResult parse_cli(const std::vector<std::string>& args) {
  CliResult result;
  BenchConfig& c = result.config;
  c = default_config();

  CLI::App app{"Concurrent set stress, robustness and throughput driver", "scot_bench"};
  const std::map<std::string, Structure> structures{
      {"harris", Structure::kHarris},
      {"harris-michael", Structure::kHarrisMichael},
      {"nm-tree", Structure::kNmTree},
      {"hash-map", Structure::kHashMap}};
  const std::map<std::string, smr::Scheme> schemes{{"hp", smr::Scheme::kHP},
                                                   {"ebr", smr::Scheme::kEBR},
                                                   {"ibr", smr::Scheme::kIBR},
                                                   {"leak", smr::Scheme::kLeak}};
  const std::map<std::string, Mode> modes{
      {"stress", Mode::kStress}, {"robustness", Mode::kRobustness}, {"bench", Mode::kBench}};
  const std::map<std::string, Format> formats{{"csv", Format::kCsv}, {"human", Format::kHuman}};

  std::string mix_text;
  std::optional<bool> poison;
  bool no_scot = false;
  bool mode_given = false;

  app.add_option("--ds", c.structure, "Structure under test")
      ->transform(CLI::CheckedTransformer(structures, CLI::ignore_case));
  app.add_option("--smr", c.scheme, "Reclamation scheme")
      ->transform(CLI::CheckedTransformer(schemes, CLI::ignore_case));
  auto* mode_opt = app.add_option("--mode", c.mode, "stress, robustness or bench")
                       ->transform(CLI::CheckedTransformer(modes, CLI::ignore_case));
  app.add_option("--threads", c.threads, "Worker threads (default: hardware threads)")
      ->check(CLI::PositiveNumber);
  app.add_option("--duration-ms", c.duration_ms, "Run length in milliseconds");
  app.add_option("--ops", c.ops_per_thread, "Operations per thread instead of a duration");
  app.add_option("--key-range", c.key_range, "Keys are drawn uniformly from [0, key-range)")
      ->check(CLI::PositiveNumber);
  app.add_option("--mix", mix_text, "search:insert:delete percentages");
  auto* prefill_opt = app.add_option("--prefill", c.prefill, "Distinct keys inserted first (default: key-range/2)");
  app.add_option("--seed", c.seed, "Seed for key and operation streams");
  app.add_flag("--stall-thread", c.stall_thread, "Stall one thread mid-operation for the whole run");
  app.add_flag("--no-scot-validation", no_scot, "Disable traversal validation (negative test)");
  app.add_option("--buckets", c.buckets, "Hash map bucket count (power of two)");
  app.add_option("--format", c.format, "csv or human")
      ->transform(CLI::CheckedTransformer(formats, CLI::ignore_case));
  app.add_option("--chaos", c.chaos, "Forced-yield probability at hot spots, 0 to 1");
  app.add_flag("--poison,!--no-poison", poison, "Fill reclaimed memory with a canary");
  app.add_flag("--partition-keys", c.partition_keys, "Disjoint key slice per thread, checked per op");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    result.exit_now = true;
    result.text = app.help();
    return result;
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }
  mode_given = mode_opt->count() > 0;

  if (!mix_text.empty()) c.mix = parse_mix(mix_text);
  c.scot_validation = !no_scot;
  if (c.stall_thread && !mode_given) c.mode = Mode::kRobustness;
  if (c.mode == Mode::kRobustness) c.stall_thread = true;
  if (prefill_opt->count() == 0) c.prefill = c.key_range / 2;
  // Poisoning keeps reclaimed memory in quarantine, which would distort
  // throughput and peak-memory figures.
  c.poison = poison.value_or(c.mode == Mode::kStress);
  validate(c);
  return result;
}

}  // namespace scot::harness
