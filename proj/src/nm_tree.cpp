#include "scot/nm_tree.hpp"

#include <string>
#include <utility>

namespace scot {

using instrument::Site;
using smr::ThreadHandle;

namespace {

// On failure `expected` receives the observed value.
bool cas(ThreadHandle& h, AtomicCell& cell, TaggedRef& expected, TaggedRef desired) {
  bool ok = cell.compare_exchange(expected, desired);
  h.note_cas(ok);
  return ok;
}

AtomicCell& child_toward(TreeNode* node, std::uint64_t key) {
  return key < load_key(node->key) ? node->left : node->right;
}

void hook_at(Site site, std::uint64_t key) { instrument::point(site, key); }

}  // namespace

NatarajanMittalTree::NatarajanMittalTree(smr::Domain& domain, TreeOptions options)
    : domain_(domain), options_(options) {
  auto* leaf0 = domain_.allocate<TreeNode>(kInf0);
  auto* leaf1 = domain_.allocate<TreeNode>(kInf1);
  auto* leaf2 = domain_.allocate<TreeNode>(kInf2);
  sentinel_ = domain_.allocate<TreeNode>(kInf1, leaf0, leaf1);
  root_ = domain_.allocate<TreeNode>(kInf2, sentinel_, leaf2);
}

NatarajanMittalTree::~NatarajanMittalTree() {
  std::vector<TreeNode*> stack{root_};
  while (!stack.empty()) {
    TreeNode* node = stack.back();
    stack.pop_back();
    if (auto* l = node->left.load_quiescent().get<TreeNode>()) stack.push_back(l);
    if (auto* r = node->right.load_quiescent().get<TreeNode>()) stack.push_back(r);
    domain_.free_direct(node);
  }
}

NatarajanMittalTree::SeekRecord NatarajanMittalTree::seek(ThreadHandle& h, std::uint64_t key) {
  const bool scot = options_.scot_validation;
  const bool checked = options_.check_invariants && scot;
again:
  // root_ and sentinel_ are never removed and need no reservation.
  SeekRecord rec;
  rec.ancestor = root_;
  rec.successor = sentinel_;
  rec.parent = sentinel_;
  TaggedRef parent_field = h.protect(sentinel_->left, kHpLeaf);
  rec.leaf = parent_field.get<TreeNode>();
  rec.leaf_edge = parent_field;
  bool leaf_needs_validation = false;
  bool leaf_validated = false;

  while (true) {
    if (checked) {
      SCOT_CHECK(!leaf_needs_validation || leaf_validated,
                 "node behind a flagged/tagged edge dereferenced without validation");
    }
    hook_at(Site::kTreeStep, load_key(rec.leaf->key));
    TaggedRef current_field = h.protect(child_toward(rec.leaf, key), kHpCurrent);
    auto* current = current_field.get<TreeNode>();
    if (current == nullptr) break;

    // successor: last node reached through an untagged edge.
    if (!is_marked(parent_field, MarkBit::kTag)) {
      rec.ancestor = rec.parent;
      h.duplicate(kHpParent, kHpAncestor);
      rec.successor = rec.leaf;
      h.duplicate(kHpLeaf, kHpSuccessor);
    }

    // The edge to current is flagged or tagged, or leaf itself hangs below
    // successor through tagged edges: current may belong to a chain that a
    // concurrent cleanup has already cut off. It is safe only if the chain
    // is still attached, i.e. ancestor still points to successor through a
    // clean edge after current's reservation became visible.
    bool dangerous = has_any_mark(current_field) || is_marked(parent_field, MarkBit::kTag);
    bool validated = false;
    if (dangerous) {
      hook_at(Site::kTreeDangerZone, key);
      if (scot) {
        TaggedRef anchor = child_toward(rec.ancestor, key).load();
        if (anchor != TaggedRef::from(rec.successor)) {
          h.note_validation_restart();
          goto again;
        }
        validated = true;
      }
    }

    rec.parent = rec.leaf;
    h.duplicate(kHpLeaf, kHpParent);
    rec.leaf = current;
    h.duplicate(kHpCurrent, kHpLeaf);
    parent_field = current_field;
    rec.leaf_edge = current_field;
    leaf_needs_validation = dangerous;
    leaf_validated = validated;
  }
  return rec;
}

bool NatarajanMittalTree::cleanup(ThreadHandle& h, std::uint64_t key, const SeekRecord& rec) {
  AtomicCell& successor_cell = child_toward(rec.ancestor, key);
  AtomicCell* child_cell;
  AtomicCell* sibling_cell;
  if (key < load_key(rec.parent->key)) {
    child_cell = &rec.parent->left;
    sibling_cell = &rec.parent->right;
  } else {
    child_cell = &rec.parent->right;
    sibling_cell = &rec.parent->left;
  }
  // If the edge toward key is not flagged, the flagged leaf is on the
  // other side and the edge toward key is the one that survives.
  if (!is_marked(child_cell->load(), MarkBit::kMark)) sibling_cell = child_cell;

  // Once tagged, the surviving edge can no longer change.
  sibling_cell->fetch_or(MarkBit::kTag);
  h.note_cas(true);
  TaggedRef survivor = sibling_cell->load();
  TaggedRef replacement(survivor.address() | (survivor.raw() & kFlagBit));

  TaggedRef expected = TaggedRef::from(rec.successor);
  h.note_unlink_cas();
  if (!cas(h, successor_cell, expected, replacement)) return false;
  retire_chain(h, key, rec, survivor.get<TreeNode>());
  return true;
}

// Retires everything the successful ancestor CAS cut off: the internal
// nodes from successor down to parent, and the flagged leaf hanging off
// each of them. The path edges are tagged and the side edges flagged, so
// none of them can change, and only this thread can retire these nodes.
void NatarajanMittalTree::retire_chain(ThreadHandle& h, std::uint64_t key, const SeekRecord& rec,
                                       const TreeNode* survivor) {
  TreeNode* node = rec.successor;
  while (node != rec.parent) {
    bool go_left = key < load_key(node->key);
    auto* path = (go_left ? node->left : node->right).load().get<TreeNode>();
    auto* side = (go_left ? node->right : node->left).load().get<TreeNode>();
    h.retire(side);
    h.retire(node);
    node = path;
  }
  auto* l = rec.parent->left.load().get<TreeNode>();
  auto* r = rec.parent->right.load().get<TreeNode>();
  h.retire(l == survivor ? r : l);
  h.retire(rec.parent);
}

bool NatarajanMittalTree::insert(ThreadHandle& h, std::uint64_t key) {
  SCOT_CHECK(key <= kMaxKey, "key out of range");
  smr::OperationScope scope(h);
  TreeNode* new_leaf = nullptr;
  TreeNode* new_internal = nullptr;
  while (true) {
    auto rec = seek(h, key);
    std::uint64_t leaf_key = load_key(rec.leaf->key);
    if (leaf_key == key) {
      if (new_leaf != nullptr) {
        h.free_unpublished(new_leaf);
        h.free_unpublished(new_internal);
      }
      return false;
    }
    if (new_leaf == nullptr) {
      new_leaf = h.allocate<TreeNode>(key);
      new_internal = h.allocate<TreeNode>(0);
    }
    if (key < leaf_key) {
      new_internal->key = leaf_key;
      new_internal->left.store(TaggedRef::from(new_leaf), std::memory_order_relaxed);
      new_internal->right.store(TaggedRef::from(rec.leaf), std::memory_order_relaxed);
    } else {
      new_internal->key = key;
      new_internal->left.store(TaggedRef::from(rec.leaf), std::memory_order_relaxed);
      new_internal->right.store(TaggedRef::from(new_leaf), std::memory_order_relaxed);
    }
    AtomicCell& child = child_toward(rec.parent, key);
    TaggedRef expected = TaggedRef::from(rec.leaf);
    if (cas(h, child, expected, TaggedRef::from(new_internal))) return true;
    // Help a pending deletion at this edge before retrying.
    if (expected.get<TreeNode>() == rec.leaf && has_any_mark(expected)) cleanup(h, key, rec);
  }
}

bool NatarajanMittalTree::remove(ThreadHandle& h, std::uint64_t key) {
  SCOT_CHECK(key <= kMaxKey, "key out of range");
  smr::OperationScope scope(h);
  bool injecting = true;
  TreeNode* target = nullptr;
  while (true) {
    auto rec = seek(h, key);
    if (injecting) {
      target = rec.leaf;
      if (load_key(target->key) != key) return false;
      AtomicCell& child = child_toward(rec.parent, key);
      TaggedRef expected = TaggedRef::from(target);
      if (cas(h, child, expected, with_mark(TaggedRef::from(target), MarkBit::kMark))) {
        hook_at(Site::kTreeAfterFlag, key);
        injecting = false;
        if (cleanup(h, key, rec)) return true;
      } else if (expected.get<TreeNode>() == target && has_any_mark(expected)) {
        cleanup(h, key, rec);
      }
    } else {
      // The flag travels with the leaf until it is removed. A different
      // node, or the same address no longer flagged (a reincarnation),
      // means our leaf is gone.
      if (rec.leaf != target || !is_marked(rec.leaf_edge, MarkBit::kMark)) return true;
      if (cleanup(h, key, rec)) return true;
    }
  }
}

bool NatarajanMittalTree::search(ThreadHandle& h, std::uint64_t key) {
  SCOT_CHECK(key <= kMaxKey, "key out of range");
  smr::OperationScope scope(h);
  auto rec = seek(h, key);
  return load_key(rec.leaf->key) == key;
}

bool NatarajanMittalTree::flag_and_tag_only(ThreadHandle& h, std::uint64_t key) {
  smr::OperationScope scope(h);
  while (true) {
    auto rec = seek(h, key);
    if (load_key(rec.leaf->key) != key) return false;
    AtomicCell& child = child_toward(rec.parent, key);
    TaggedRef expected = TaggedRef::from(rec.leaf);
    if (!cas(h, child, expected, with_mark(expected, MarkBit::kMark))) continue;
    AtomicCell& sibling = &child == &rec.parent->left ? rec.parent->right : rec.parent->left;
    sibling.fetch_or(MarkBit::kTag);
    h.note_cas(true);
    return true;
  }
}

std::vector<std::uint64_t> NatarajanMittalTree::keys() const {
  std::vector<std::uint64_t> out;
  std::vector<const TreeNode*> stack{root_};
  // Iterative in-order walk: push right then left so left pops first.
  while (!stack.empty()) {
    const TreeNode* node = stack.back();
    stack.pop_back();
    auto* l = node->left.load_quiescent().get<TreeNode>();
    auto* r = node->right.load_quiescent().get<TreeNode>();
    if (l == nullptr && r == nullptr) {
      if (node->key <= kMaxKey) out.push_back(node->key);
      continue;
    }
    if (r != nullptr) stack.push_back(r);
    if (l != nullptr) stack.push_back(l);
  }
  return out;
}

ShapeReport NatarajanMittalTree::check_shape() const {
  ShapeReport report;
  struct Frame {
    const TreeNode* node;
    std::uint64_t low;   // inclusive
    std::uint64_t high;  // exclusive, 0 = unbounded
  };
  std::vector<Frame> stack{{root_, 0, 0}};
  std::vector<std::uint64_t> leaves;
  auto fail = [&](std::string why) {
    report.ok = false;
    report.problem = std::move(why);
    return report;
  };
  while (!stack.empty()) {
    auto [node, low, high] = stack.back();
    stack.pop_back();
    ++report.nodes;
    if (node->key == instrument::kCanary) return fail("reachable node holds the poison canary");
    auto lv = node->left.load_quiescent();
    auto rv = node->right.load_quiescent();
    if (lv.raw() == instrument::kCanary || rv.raw() == instrument::kCanary) {
      return fail("reachable node holds the poison canary");
    }
    if (has_any_mark(lv) || has_any_mark(rv)) {
      ++report.marked;
      return fail("flagged or tagged edge left behind at key " + std::to_string(node->key));
    }
    if (node->key < low || (high != 0 && node->key >= high)) {
      return fail("routing order violated at key " + std::to_string(node->key));
    }
    if (lv.is_null() != rv.is_null()) return fail("internal node with a single child");
    if (lv.is_null()) {
      leaves.push_back(node->key);
      if (node->key <= kMaxKey) ++report.keys;
      continue;
    }
    stack.push_back({rv.get<TreeNode>(), node->key, high});
    stack.push_back({lv.get<TreeNode>(), low, node->key});
  }
  for (std::size_t i = 1; i < leaves.size(); ++i) {
    if (leaves[i] <= leaves[i - 1]) return fail("leaf keys not strictly increasing");
  }
  return report;
}

}  // namespace scot
