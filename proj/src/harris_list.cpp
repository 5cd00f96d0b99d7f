#include "scot/harris_list.hpp"

#include <string>

namespace scot {

using instrument::Site;
using smr::ThreadHandle;

const char* variant_name(ListVariant variant) {
  return variant == ListVariant::kHarris ? "harris" : "harris-michael";
}

namespace {

bool cas(ThreadHandle& h, AtomicCell& cell, TaggedRef expected, TaggedRef desired) {
  bool ok = cell.compare_exchange(expected, desired);
  h.note_cas(ok);
  return ok;
}

// Keys are only passed to hooks when one is installed.
void hook_at(Site site, const ListNode* node) {
  if (auto* hook = instrument::current_hook()) hook->at(site, load_key(node->key));
}

}  // namespace

HarrisList::HarrisList(smr::Domain& domain, ListOptions options)
    : domain_(domain), options_(options) {}

HarrisList::~HarrisList() {
  auto* node = head_.load_quiescent().get<ListNode>();
  while (node != nullptr) {
    auto* after = node->next.load_quiescent().get<ListNode>();
    domain_.free_direct(node);
    node = after;
  }
}

HarrisList::FindResult HarrisList::do_find(ThreadHandle& h, std::uint64_t key,
                                           TraversalMode mode) {
  if (options_.variant == ListVariant::kHarrisMichael) return find_michael(h, key);
  return find_harris(h, key, mode);
}

HarrisList::FindResult HarrisList::find_harris(ThreadHandle& h, std::uint64_t key,
                                               TraversalMode mode) {
  const bool scot = options_.scot_validation;
  const bool checked = options_.check_invariants && scot;
again:
  AtomicCell* prev = &head_;
  TaggedRef first = h.protect(head_, kHpCurr);
  // prev_next is the value of *prev when prev last moved: the first node
  // after the last safe node. head_ is never marked.
  TaggedRef prev_next = first;
  auto* curr = first.get<ListNode>();
  TaggedRef next;
  bool zone_validated = false;

  while (true) {
    if (curr == nullptr) break;
    if (checked && curr != prev_next.get<ListNode>()) {
      // Past the first marked node: only reachable through a validation.
      SCOT_CHECK(zone_validated, "dangerous zone entered without validation");
      SCOT_CHECK(h.scheme() != smr::Scheme::kHP ||
                     h.hazard(kHpFirstUnsafe) == strip_marks(prev_next),
                 "first unsafe node not reserved in the dangerous zone");
    }
    hook_at(Site::kListStep, curr);
    next = h.protect(curr->next, kHpNext);
    if (!is_marked(next, MarkBit::kMark)) {
      if (load_key(curr->key) >= key) break;
      prev = &curr->next;
      prev_next = next;
      h.duplicate(kHpCurr, kHpPrev);
      zone_validated = false;
    } else {
      // First marked node after the last safe one: pin it in its own slot
      // for the rest of the zone. kHpCurr still holds it here.
      if (scot && curr == prev_next.get<ListNode>()) h.duplicate(kHpCurr, kHpFirstUnsafe);
      hook_at(Site::kListDangerZone, curr);
      // The successor is reserved in kHpNext. If the last safe node still
      // points at the first marked node, no part of the chain has been
      // unlinked yet, so the successor was not retired before the
      // reservation became visible.
      if (scot && prev->load() != prev_next) {
        h.note_validation_restart();
        goto again;
      }
      zone_validated = true;
    }
    curr = strip_marks(next).get<ListNode>();
    // kHpFirstUnsafe is left as is when the zone ends; it pins one stale
    // node until the next zone or end_op.
    h.duplicate(kHpNext, kHpCurr);
  }

  if (mode == TraversalMode::kUpdate && prev_next != TaggedRef::from(curr)) {
    // *prev belongs to an unmarked node (or is head_), so this never
    // unlinks from the middle of a chain.
    SCOT_CHECK(!has_any_mark(prev_next), "unlink anchored at a marked value");
    h.note_unlink_cas();
    if (!cas(h, *prev, prev_next, TaggedRef::from(curr))) goto again;
    // This thread unlinked the chain and is its only retirer, so the
    // chain's links stay readable until retired here.
    auto* node = prev_next.get<ListNode>();
    while (node != curr) {
      auto* after = strip_marks(node->next.load()).get<ListNode>();
      h.retire(node);
      node = after;
    }
  }

  FindResult result;
  result.prev = prev;
  result.curr = curr;
  result.next = next;
  result.found = curr != nullptr && load_key(curr->key) == key;
  return result;
}

HarrisList::FindResult HarrisList::find_michael(ThreadHandle& h, std::uint64_t key) {
again:
  AtomicCell* prev = &head_;
  auto* curr = h.protect(head_, kHpCurr).get<ListNode>();
  TaggedRef next;
  while (true) {
    if (curr == nullptr) break;
    hook_at(Site::kListStep, curr);
    next = h.protect(curr->next, kHpNext);
    // curr is still linked behind an unmarked prev, so next was reserved
    // while reachable.
    if (prev->load() != TaggedRef::from(curr)) goto again;
    if (!is_marked(next, MarkBit::kMark)) {
      if (load_key(curr->key) >= key) break;
      prev = &curr->next;
      h.duplicate(kHpCurr, kHpPrev);
    } else {
      hook_at(Site::kListDangerZone, curr);
      h.note_unlink_cas();
      if (!cas(h, *prev, TaggedRef::from(curr), strip_marks(next))) goto again;
      h.retire(curr);
    }
    curr = strip_marks(next).get<ListNode>();
    h.duplicate(kHpNext, kHpCurr);
  }

  FindResult result;
  result.prev = prev;
  result.curr = curr;
  result.next = next;
  result.found = curr != nullptr && load_key(curr->key) == key;
  return result;
}

bool HarrisList::insert(ThreadHandle& h, std::uint64_t key) {
  SCOT_CHECK(key <= kMaxKey, "key out of range");
  smr::OperationScope scope(h);
  auto* node = h.allocate<ListNode>(key);
  while (true) {
    auto found = do_find(h, key, TraversalMode::kUpdate);
    if (found.found) {
      h.free_unpublished(node);
      return false;
    }
    node->next.store(TaggedRef::from(found.curr), std::memory_order_relaxed);
    if (cas(h, *found.prev, TaggedRef::from(found.curr), TaggedRef::from(node))) return true;
  }
}

bool HarrisList::remove(ThreadHandle& h, std::uint64_t key) {
  SCOT_CHECK(key <= kMaxKey, "key out of range");
  smr::OperationScope scope(h);
  while (true) {
    auto found = do_find(h, key, TraversalMode::kUpdate);
    if (!found.found) return false;
    if (!cas(h, found.curr->next, found.next, with_mark(found.next, MarkBit::kMark))) continue;
    instrument::point(Site::kListAfterMark, key);
    // One unlink attempt; on failure a later traversal removes the node.
    h.note_unlink_cas();
    if (cas(h, *found.prev, TaggedRef::from(found.curr), found.next)) h.retire(found.curr);
    return true;
  }
}

bool HarrisList::search(ThreadHandle& h, std::uint64_t key) {
  SCOT_CHECK(key <= kMaxKey, "key out of range");
  smr::OperationScope scope(h);
  return do_find(h, key, TraversalMode::kSearch).found;
}

bool HarrisList::mark_only(ThreadHandle& h, std::uint64_t key) {
  smr::OperationScope scope(h);
  while (true) {
    auto found = do_find(h, key, TraversalMode::kUpdate);
    if (!found.found) return false;
    if (cas(h, found.curr->next, found.next, with_mark(found.next, MarkBit::kMark))) return true;
  }
}

std::vector<std::uint64_t> HarrisList::keys() const {
  std::vector<std::uint64_t> out;
  for (auto* node = head_.load_quiescent().get<ListNode>(); node != nullptr;) {
    auto next = node->next.load_quiescent();
    if (!is_marked(next, MarkBit::kMark)) out.push_back(node->key);
    node = next.get<ListNode>();
  }
  return out;
}

ShapeReport HarrisList::check_shape() const {
  ShapeReport report;
  bool have_previous = false;
  std::uint64_t previous = 0;
  for (auto* node = head_.load_quiescent().get<ListNode>(); node != nullptr;) {
    auto next = node->next.load_quiescent();
    ++report.nodes;
    if (next.raw() == instrument::kCanary || node->key == instrument::kCanary) {
      report.ok = false;
      report.problem = "reachable node holds the poison canary";
      return report;
    }
    if (is_marked(next, MarkBit::kTag)) {
      report.ok = false;
      report.problem = "list link carries the tag bit";
      return report;
    }
    if (have_previous && node->key <= previous) {
      report.ok = false;
      report.problem = "keys not strictly increasing at " + std::to_string(node->key);
      return report;
    }
    if (is_marked(next, MarkBit::kMark)) {
      ++report.marked;
    } else {
      ++report.keys;
    }
    have_previous = true;
    previous = node->key;
    node = next.get<ListNode>();
  }
  return report;
}

}  // namespace scot
