#pragma once

#include <cstdint>
#include <span>

#include "cesim/types.hpp"

namespace cesim {

// Sentinel for "no block" (b0) when blocks are referenced by arena index.
inline constexpr uint32_t kNone = 0xffffffffu;

class BlockArena;

// The five pointers of a node's finality vector, as arena indices.
// fn starts at the genesis block (index 0).
struct EngineState {
  uint32_t nv = kNone;
  uint32_t pp = kNone;
  uint32_t pc = kNone;
  uint32_t cm = kNone;
  uint32_t fn = 0;

  bool operator==(const EngineState&) const = default;
};

// Reduced pre-commit send memory: which view the holder last sent a
// pre-commit for `bhat` in. `bhat` is the latest non-null end-of-round pc
// value; the lock survives pc being reset to b0, which is what makes the
// conflicting-pre-commit case safe.
struct PcLock {
  uint32_t bhat = kNone;
  uint32_t lock_view = kNone;
  bool lock_known = false;
};

enum RuleBits : uint16_t {
  kRuleCmQuorum = 1 << 0,
  kRuleCmCatchup = 1 << 1,
  kRuleFnAdvance = 1 << 2,
  kRulePcCase1 = 1 << 3,
  kRulePcCase2 = 1 << 4,
  kRulePcUnlock = 1 << 5,
  kRulePpPrepare = 1 << 6,
  kRuleNvNewer = 1 << 7,
  kRuleNvConflict = 1 << 8,
  kRuleNvQuorum = 1 << 9,
  kRulePpUnlock = 1 << 10,
};

// Which blocks count as pre-commit targets for the prepare rule's
// conflicting-message check. Live nodes answer with their candidate set;
// chain replay answers with chain membership.
struct CandidateMembership {
  virtual ~CandidateMembership() = default;
  virtual bool contains(uint32_t idx) const = 0;
};

struct FinalityInputs {
  const BlockArena* arena = nullptr;
  // Candidate chain leaves. Must contain canonical_tip. Leaves carry their
  // whole chains; message counting always runs over full root paths.
  std::span<const uint32_t> leaves;
  uint32_t canonical_tip = kNone;
  uint32_t quorum = 0;  // 2f+1
  uint32_t f1 = 0;      // f+1
  const CandidateMembership* membership = nullptr;
};

struct UpdateOutcome {
  EngineState state;
  uint16_t fired = 0;
  uint32_t rtpc = kNone;
  // An update tried to move fn onto a conflicting block. Never happens for
  // honest nodes unless the protocol itself is broken; surfaced instead of
  // silently applied.
  bool fn_conflict = false;
};

// The block that is "ready to pre-commit" over the candidate chains, or
// kNone. When several qualify, the one whose qualifying view is latest wins;
// ties break by higher block round, then smaller hash.
uint32_t find_rtpc(const FinalityInputs& in);

// One round step of the finality vector update. Rule groups run once, in
// order: commit, finalize, pre-commit, pre-commit unlock, prepare, new-view,
// prepare unlock.
UpdateOutcome update_finality(const EngineState& prev, const PcLock& lock,
                              const FinalityInputs& in);

// True iff `block` is the finalized block or one of its ancestors.
bool is_final(const EngineState& st, uint32_t block, const BlockArena& arena);

}  // namespace cesim
