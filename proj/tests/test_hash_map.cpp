#include <gtest/gtest.h>

#include <atomic>
#include <random>
#include <thread>
#include <unordered_set>

#include "scot/hash_map.hpp"

namespace scot {
namespace {

using smr::Scheme;

smr::DomainOptions options_for(Scheme scheme, std::size_t threads) {
  smr::DomainOptions o;
  o.scheme = scheme;
  o.max_threads = threads;
  o.scan_threshold = 16;
  o.poison = true;
  return o;
}

TEST(Mix64, KnownValues) {
  // Computed independently with Python big-int arithmetic.
  EXPECT_EQ(mix64(0), 0u);
  EXPECT_EQ(mix64(1), 0x5692161d100b05e5ull);
  EXPECT_EQ(mix64(0x1234), 0xbbab031d6fc0f336ull);
  EXPECT_EQ(mix64(kMaxKey), 0xad34157e3cb2ef5eull);
}

TEST(Mix64, SpreadsSequentialKeys) {
  std::vector<int> hits(64);
  for (std::uint64_t k = 0; k < 64000; ++k) hits[mix64(k) & 63]++;
  for (int h : hits) {
    EXPECT_GT(h, 800);
    EXPECT_LT(h, 1200);
  }
}

TEST(HashMap, BucketCountMustBePowerOfTwo) {
  smr::Domain domain(options_for(Scheme::kHP, 1));
  EXPECT_THROW(HashMapSet(domain, 0), smr::ConfigError);
  EXPECT_THROW(HashMapSet(domain, 3), smr::ConfigError);
  EXPECT_THROW(HashMapSet(domain, 1000), smr::ConfigError);
  EXPECT_NO_THROW(HashMapSet(domain, 1));
  EXPECT_EQ(HashMapSet(domain, 1024).bucket_count(), 1024u);
}

TEST(HashMap, IdentityHashPlacesKeysByLowBits) {
  smr::Domain domain(options_for(Scheme::kHP, 1));
  HashMapSet map(domain, 8, {}, HashFunction::kIdentity);
  auto h = domain.register_thread();
  for (std::uint64_t k : {3, 11, 19, 4}) EXPECT_TRUE(map.insert(h, k));
  EXPECT_EQ(map.bucket_index(11), 3u);
  EXPECT_EQ(map.bucket(3).keys(), (std::vector<std::uint64_t>{3, 11, 19}));
  EXPECT_EQ(map.bucket(4).keys(), std::vector<std::uint64_t>{4});
  EXPECT_TRUE(map.bucket(0).keys().empty());
}

TEST(HashMap, MixHashUsesMixedLowBits) {
  smr::Domain domain(options_for(Scheme::kHP, 1));
  HashMapSet map(domain, 16);
  for (std::uint64_t k = 0; k < 100; ++k) EXPECT_EQ(map.bucket_index(k), mix64(k) & 15);
}

class MapOracle : public ::testing::TestWithParam<Scheme> {};

TEST_P(MapOracle, RandomOpsMatchUnorderedSet) {
  smr::Domain domain(options_for(GetParam(), 1));
  std::unordered_set<std::uint64_t> oracle;
  {
    HashMapSet map(domain, 16);
    auto h = domain.register_thread();
    std::mt19937_64 rng(9);
    for (int i = 0; i < 20000; ++i) {
      std::uint64_t key = rng() % 256;
      switch (rng() % 3) {
        case 0:
          ASSERT_EQ(map.insert(h, key), oracle.insert(key).second);
          break;
        case 1:
          ASSERT_EQ(map.remove(h, key), oracle.erase(key) == 1);
          break;
        default:
          ASSERT_EQ(map.search(h, key), oracle.count(key) == 1);
      }
    }
    std::vector<std::uint64_t> expect(oracle.begin(), oracle.end());
    std::sort(expect.begin(), expect.end());
    EXPECT_EQ(map.keys(), expect) << "keys() is sorted across buckets";
    auto shape = map.check_shape();
    EXPECT_TRUE(shape.ok) << shape.problem;
    EXPECT_EQ(shape.keys, oracle.size());
  }
  domain.drain();
  auto s = domain.stats();
  EXPECT_EQ(s.allocations, s.reclamations + s.direct_frees);
}

INSTANTIATE_TEST_SUITE_P(AllSchemes, MapOracle,
                         ::testing::Values(Scheme::kHP, Scheme::kEBR, Scheme::kIBR, Scheme::kLeak),
                         [](const auto& info) { return std::string(smr::scheme_name(info.param)); });

TEST(HashMap, PartitionedThreadsMatchOracle) {
  constexpr int kThreads = 4;
  smr::Domain domain(options_for(Scheme::kHP, kThreads));
  std::atomic<int> mismatches{0};
  std::unordered_set<std::uint64_t> oracles[kThreads];
  {
    ListOptions lo;
    lo.check_invariants = true;
    HashMapSet map(domain, 4, lo);
    std::vector<std::thread> threads;
    for (int t = 0; t < kThreads; ++t) {
      threads.emplace_back([&, t] {
        auto h = domain.register_thread();
        h.set_slot_limit(HarrisList::kSlotsUsed);
        std::mt19937_64 rng(t);
        auto& oracle = oracles[t];
        for (int i = 0; i < 5000; ++i) {
          std::uint64_t key = (rng() % 128) * kThreads + t;
          bool got, want;
          switch (rng() % 3) {
            case 0:
              got = map.insert(h, key);
              want = oracle.insert(key).second;
              break;
            case 1:
              got = map.remove(h, key);
              want = oracle.erase(key) == 1;
              break;
            default:
              got = map.search(h, key);
              want = oracle.count(key) == 1;
          }
          if (got != want) mismatches++;
        }
      });
    }
    for (auto& th : threads) th.join();
    EXPECT_EQ(mismatches.load(), 0);
    std::size_t total = 0;
    for (auto& o : oracles) total += o.size();
    EXPECT_EQ(map.keys().size(), total);
    EXPECT_TRUE(map.check_shape().ok);
  }
  domain.drain();
  auto s = domain.stats();
  EXPECT_EQ(s.allocations, s.reclamations + s.direct_frees);
}

}  // namespace
}  // namespace scot
