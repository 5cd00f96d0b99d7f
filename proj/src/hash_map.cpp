#include "scot/hash_map.hpp"

#include <algorithm>
#include <bit>
#include <string>

namespace scot {

std::uint64_t mix64(std::uint64_t key) {
  // splitmix64 finalizer
  key ^= key >> 30;
  key *= 0xbf58476d1ce4e5b9ull;
  key ^= key >> 27;
  key *= 0x94d049bb133111ebull;
  key ^= key >> 31;
  return key;
}

HashMapSet::HashMapSet(smr::Domain& domain, std::size_t bucket_count, ListOptions list_options,
                       HashFunction hash)
    : hash_(hash) {
  if (bucket_count == 0 || !std::has_single_bit(bucket_count)) {
    throw smr::ConfigError("bucket count must be a power of two, got " +
                           std::to_string(bucket_count));
  }
  buckets_.reserve(bucket_count);
  for (std::size_t i = 0; i < bucket_count; ++i) {
    buckets_.push_back(std::make_unique<HarrisList>(domain, list_options));
  }
}

std::size_t HashMapSet::bucket_index(std::uint64_t key) const {
  auto h = hash_ == HashFunction::kMix ? mix64(key) : key;
  return static_cast<std::size_t>(h & (buckets_.size() - 1));
}

std::vector<std::uint64_t> HashMapSet::keys() const {
  std::vector<std::uint64_t> out;
  for (const auto& b : buckets_) {
    auto k = b->keys();
    out.insert(out.end(), k.begin(), k.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

ShapeReport HashMapSet::check_shape() const {
  ShapeReport total;
  for (std::size_t i = 0; i < buckets_.size(); ++i) {
    auto r = buckets_[i]->check_shape();
    if (!r.ok) {
      r.problem = "bucket " + std::to_string(i) + ": " + r.problem;
      return r;
    }
    for (auto k : buckets_[i]->keys()) {
      if (bucket_index(k) != i) {
        total.ok = false;
        total.problem = "key " + std::to_string(k) + " stored in bucket " + std::to_string(i);
        return total;
      }
    }
    total.nodes += r.nodes;
    total.marked += r.marked;
    total.keys += r.keys;
  }
  return total;
}

}  // namespace scot
