#pragma once

// Fixed-size lock-free hash set: a power-of-two array of HarrisList
// buckets sharing one SMR domain. No resizing.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "scot/harris_list.hpp"
#include "scot/smr.hpp"

namespace scot {

enum class HashFunction {
  kMix,       // 64-bit avalanche finalizer
  kIdentity,  // key itself; lets tests place keys in chosen buckets
};

std::uint64_t mix64(std::uint64_t key);

class HashMapSet {
 public:
  // Throws smr::ConfigError unless bucket_count is a power of two >= 1.
  HashMapSet(smr::Domain& domain, std::size_t bucket_count, ListOptions list_options = {},
             HashFunction hash = HashFunction::kMix);

  bool insert(smr::ThreadHandle& handle, std::uint64_t key) { return bucket_for(key).insert(handle, key); }
  bool remove(smr::ThreadHandle& handle, std::uint64_t key) { return bucket_for(key).remove(handle, key); }
  bool search(smr::ThreadHandle& handle, std::uint64_t key) { return bucket_for(key).search(handle, key); }

  std::size_t bucket_count() const { return buckets_.size(); }
  std::size_t bucket_index(std::uint64_t key) const;
  HarrisList& bucket(std::size_t index) { return *buckets_[index]; }
  const HarrisList& bucket(std::size_t index) const { return *buckets_[index]; }

  // Quiescent inspection: every bucket's shape plus bucket membership of
  // each key.
  std::vector<std::uint64_t> keys() const;
  ShapeReport check_shape() const;

 private:
  HarrisList& bucket_for(std::uint64_t key) { return *buckets_[bucket_index(key)]; }

  HashFunction hash_;
  std::vector<std::unique_ptr<HarrisList>> buckets_;
};

// Convenience factory.
inline std::unique_ptr<HashMapSet> new_map(smr::Domain& domain, std::size_t bucket_count) {
  return std::make_unique<HashMapSet>(domain, bucket_count);
}

}  // namespace scot
