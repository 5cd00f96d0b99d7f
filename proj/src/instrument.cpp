#include "scot/instrument.hpp"

#include <cstdio>
#include <cstdlib>

namespace scot::instrument {

const char* site_name(Site site) {
  switch (site) {
    case Site::kLoad:
      return "load";
    case Site::kStore:
      return "store";
    case Site::kCas:
      return "cas";
    case Site::kFetchOr:
      return "fetch_or";
    case Site::kSlotWrite:
      return "slot_write";
    case Site::kAnnounce:
      return "announce";
    case Site::kListStep:
      return "list_step";
    case Site::kListDangerZone:
      return "list_danger_zone";
    case Site::kListAfterMark:
      return "list_after_mark";
    case Site::kTreeStep:
      return "tree_step";
    case Site::kTreeDangerZone:
      return "tree_danger_zone";
    case Site::kTreeAfterFlag:
      return "tree_after_flag";
  }
  return "?";
}

void report_canary(const char* where) {
  throw CanaryViolation(std::string("canary observed in ") + where +
                        " (read of reclaimed node memory)");
}

void check_failed(const char* expr, const char* msg, const char* file, int line) {
  std::fprintf(stderr, "%s:%d: check failed: %s (%s)\n", file, line, expr, msg);
  std::fflush(stderr);
  std::abort();
}

}  // namespace scot::instrument
