#include "scot/harness.hpp"
#include "scot/hash_map.hpp"
#include "scot/nm_tree.hpp"

namespace scot::harness {

namespace {

class ListSet final : public ConcurrentSet {
 public:
  ListSet(smr::Domain& domain, ListOptions options) : list_(domain, options) {}
  bool insert(smr::ThreadHandle& h, std::uint64_t key) override { return list_.insert(h, key); }
  bool remove(smr::ThreadHandle& h, std::uint64_t key) override { return list_.remove(h, key); }
  bool search(smr::ThreadHandle& h, std::uint64_t key) override { return list_.search(h, key); }
  std::vector<std::uint64_t> keys() const override { return list_.keys(); }
  ShapeReport check_shape() const override { return list_.check_shape(); }
  std::size_t slots_used() const override { return HarrisList::kSlotsUsed; }

 private:
  HarrisList list_;
};

class TreeSet final : public ConcurrentSet {
 public:
  TreeSet(smr::Domain& domain, TreeOptions options) : tree_(domain, options) {}
  bool insert(smr::ThreadHandle& h, std::uint64_t key) override { return tree_.insert(h, key); }
  bool remove(smr::ThreadHandle& h, std::uint64_t key) override { return tree_.remove(h, key); }
  bool search(smr::ThreadHandle& h, std::uint64_t key) override { return tree_.search(h, key); }
  std::vector<std::uint64_t> keys() const override { return tree_.keys(); }
  ShapeReport check_shape() const override { return tree_.check_shape(); }
  std::size_t slots_used() const override { return NatarajanMittalTree::kSlotsUsed; }

 private:
  NatarajanMittalTree tree_;
};

class MapSet final : public ConcurrentSet {
 public:
  MapSet(smr::Domain& domain, std::size_t buckets, ListOptions options)
      : map_(domain, buckets, options) {}
  bool insert(smr::ThreadHandle& h, std::uint64_t key) override { return map_.insert(h, key); }
  bool remove(smr::ThreadHandle& h, std::uint64_t key) override { return map_.remove(h, key); }
  bool search(smr::ThreadHandle& h, std::uint64_t key) override { return map_.search(h, key); }
  std::vector<std::uint64_t> keys() const override { return map_.keys(); }
  ShapeReport check_shape() const override { return map_.check_shape(); }
  std::size_t slots_used() const override { return HarrisList::kSlotsUsed; }

 private:
  HashMapSet map_;
};

}  // namespace

std::unique_ptr<ConcurrentSet> make_set(const BenchConfig& config, smr::Domain& domain) {
  // The invariant checks are cheap; keep them on outside throughput runs.
  const bool checked = config.mode != Mode::kBench;
  ListOptions list;
  list.scot_validation = config.scot_validation;
  list.check_invariants = checked;
  switch (config.structure) {
    case Structure::kHarris:
      return std::make_unique<ListSet>(domain, list);
    case Structure::kHarrisMichael:
      list.variant = ListVariant::kHarrisMichael;
      return std::make_unique<ListSet>(domain, list);
    case Structure::kNmTree: {
      TreeOptions tree;
      tree.scot_validation = config.scot_validation;
      tree.check_invariants = checked;
      return std::make_unique<TreeSet>(domain, tree);
    }
    case Structure::kHashMap:
      return std::make_unique<MapSet>(domain, config.buckets, list);
  }
  return nullptr;
}

}  // namespace scot::harness
