#pragma once

// Natarajan-Mittal lock-free external binary search tree.
//
// Keys live in leaves; internal nodes only route (left if key < node key).
// Deleting a leaf flags the edge to it, then tags the sibling edge, then a
// single CAS on `ancestor` replaces the whole chain of tagged edges hanging
// below `successor` with the surviving sibling.
//
// Seek reads are optimistic: they walk across flagged and tagged edges
// without helping. Under HP/IBR every step across such an edge is followed
// by a check that `ancestor` still points to `successor` with a clean edge;
// if not, the seek restarts from the root. Five reservation slots:
// current, leaf, parent, successor, ancestor.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "scot/harris_list.hpp"  // ShapeReport
#include "scot/smr.hpp"
#include "scot/tagged_ref.hpp"

namespace scot {

struct TreeNode : smr::NodeHeader {
  explicit TreeNode(std::uint64_t k) : key(k) {}
  TreeNode(std::uint64_t k, TreeNode* l, TreeNode* r)
      : key(k), left(TaggedRef::from(l)), right(TaggedRef::from(r)) {}
  std::uint64_t key;
  AtomicCell left;   // bit0 = flag, bit1 = tag
  AtomicCell right;
};

struct TreeOptions {
  // Test-only switch: false skips the ancestor/successor validation.
  bool scot_validation = true;
  // Abort if a seek dereferences a node reached through a flagged or
  // tagged edge without a successful validation since its reservation.
  bool check_invariants = false;
};

class NatarajanMittalTree {
 public:
  // Sentinel keys, above every user key.
  static constexpr std::uint64_t kInf0 = kMaxKey + 1;
  static constexpr std::uint64_t kInf1 = kMaxKey + 2;
  static constexpr std::uint64_t kInf2 = kMaxKey + 3;

  static constexpr std::size_t kHpCurrent = 0;
  static constexpr std::size_t kHpLeaf = 1;
  static constexpr std::size_t kHpParent = 2;
  static constexpr std::size_t kHpSuccessor = 3;
  static constexpr std::size_t kHpAncestor = 4;
  static constexpr std::size_t kSlotsUsed = 5;

  struct SeekRecord {
    TreeNode* ancestor = nullptr;
    TreeNode* successor = nullptr;
    TreeNode* parent = nullptr;
    TreeNode* leaf = nullptr;
    TaggedRef leaf_edge;  // parent -> leaf as read
  };

  explicit NatarajanMittalTree(smr::Domain& domain, TreeOptions options = {});
  ~NatarajanMittalTree();
  NatarajanMittalTree(const NatarajanMittalTree&) = delete;
  NatarajanMittalTree& operator=(const NatarajanMittalTree&) = delete;

  bool insert(smr::ThreadHandle& handle, std::uint64_t key);
  bool remove(smr::ThreadHandle& handle, std::uint64_t key);
  bool search(smr::ThreadHandle& handle, std::uint64_t key);

  // Caller must be inside an operation.
  SeekRecord seek(smr::ThreadHandle& handle, std::uint64_t key);

  // Flags `key`'s leaf and tags its sibling edge, leaving the chain in
  // place for a later operation to remove. Returns false if absent.
  bool flag_and_tag_only(smr::ThreadHandle& handle, std::uint64_t key);

  // Quiescent inspection. Sentinel leaves are excluded from keys().
  std::vector<std::uint64_t> keys() const;
  ShapeReport check_shape() const;

  const TreeNode* root() const { return root_; }

 private:
  bool cleanup(smr::ThreadHandle& handle, std::uint64_t key, const SeekRecord& record);
  void retire_chain(smr::ThreadHandle& handle, std::uint64_t key, const SeekRecord& record,
                    const TreeNode* survivor);

  smr::Domain& domain_;
  TreeOptions options_;
  TreeNode* root_;      // key kInf2
  TreeNode* sentinel_;  // key kInf1, root's left child
};

}  // namespace scot
