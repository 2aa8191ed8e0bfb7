#include "cesim/finality.hpp"

#include "cesim/ledger.hpp"

namespace cesim {

namespace {

const PairTally* find_tally(const std::vector<PairTally>& v, uint32_t target) {
  for (const auto& t : v)
    if (t.target == target) return &t;
  return nullptr;
}

// Condition (2) of the ready-to-pre-commit test: every certified view later
// than `view_round`, on every candidate chain, must carry a pre-commit for
// `block` no later than its own certification point. A chain prefix that
// certifies the view but lacks the pre-commit is a counterexample.
bool rtpc_cond2(const FinalityInputs& in, uint32_t block, Round view_round) {
  const BlockArena& a = *in.arena;
  for (uint32_t leaf : in.leaves) {
    if (a.max_cert_round(leaf) <= view_round) continue;
    for (const ViewSlot* s = a.slots_head(leaf); s != nullptr; s = s->older.get()) {
      if (s->nv_quorum_height == kNoHeight || s->view_round <= view_round) continue;
      const PairTally* t = find_tally(s->pc, block);
      if (t == nullptr || t->first_height > s->nv_quorum_height) return false;
    }
  }
  return true;
}

// Does a certified view strictly later than `after_round` exist on some
// candidate chain with no pre-commit message for `target` up to its
// certification point? This is the escape hatch that lets a node move off a
// conflicting lock.
bool escape_view_exists(const FinalityInputs& in, uint32_t target, Round after_round) {
  const BlockArena& a = *in.arena;
  for (uint32_t leaf : in.leaves) {
    if (a.max_cert_round(leaf) <= after_round) continue;
    for (const ViewSlot* s = a.slots_head(leaf); s != nullptr; s = s->older.get()) {
      if (s->nv_quorum_height == kNoHeight || s->view_round <= after_round) continue;
      const PairTally* t = find_tally(s->pc, target);
      if (t == nullptr || t->first_height > s->nv_quorum_height) return true;
    }
  }
  return false;
}

}  // namespace

uint32_t find_rtpc(const FinalityInputs& in) {
  const BlockArena& a = *in.arena;
  uint32_t best = kNone;
  Round best_view_round = 0;
  Round best_block_round = 0;

  auto consider = [&](uint32_t block, Round view_round) {
    if (best != kNone) {
      if (view_round < best_view_round) return;
      if (view_round == best_view_round) {
        Round br = a.round(block);
        if (br < best_block_round) return;
        if (br == best_block_round && !(a.hash_of(block) < a.hash_of(best))) return;
      }
    }
    best = block;
    best_view_round = view_round;
    best_block_round = a.round(block);
  };

  for (uint32_t leaf : in.leaves) {
    for (const ViewSlot* s = a.slots_head(leaf); s != nullptr; s = s->older.get()) {
      if (s->nv_quorum_height == kNoHeight) continue;
      for (const auto& e : s->pp) {
        if (e.quorum_height == kNoHeight) continue;
        // Condition (1): some prefix holds the prepare quorum with no
        // pre-commit for a conflicting block inside the same view.
        uint32_t first_conflict = kNoHeight;
        for (const auto& t : s->pc)
          if (a.conflicts(t.target, e.target)) first_conflict = std::min(first_conflict, t.first_height);
        if (e.quorum_height >= first_conflict) continue;
        if (!rtpc_cond2(in, e.target, s->view_round)) continue;
        consider(e.target, s->view_round);
      }
      // Once a qualifying pair was found at the newest certified view of this
      // chain, older slots cannot improve the result here.
      if (best != kNone && best_view_round >= a.max_cert_round(leaf)) break;
    }
  }
  return best;
}

bool is_final(const EngineState& st, uint32_t block, const BlockArena& arena) {
  if (block == kNone || st.fn == kNone) return false;
  return block == st.fn || arena.same_or_ancestor(block, st.fn);
}

UpdateOutcome update_finality(const EngineState& prev, const PcLock& lock,
                              const FinalityInputs& in) {
  const BlockArena& a = *in.arena;
  UpdateOutcome out;
  EngineState& st = out.state;
  st = prev;

  const uint32_t tip = in.canonical_tip;
  const uint32_t nvB = a.nv_of(tip);
  const uint32_t pcB = a.pc_of(tip);
  const uint32_t cmB = a.cm_of(tip);

  auto round_of = [&](uint32_t idx) { return a.round(idx); };

  // --- Commit rules -------------------------------------------------------
  // (1) 2f+1 pre-commit messages for pc(B) in the tip's view on the chain.
  if (nvB != kNone && pcB != kNone) {
    const ViewSlot* s = a.view_slot(tip, nvB);
    const PairTally* t = s != nullptr ? find_tally(s->pc, pcB) : nullptr;
    if (t != nullptr && t->quorum_height != kNoHeight) {
      st.cm = pcB;
      st.pc = kNone;
      out.fired |= kRuleCmQuorum;
    }
  }
  // (2) f+1 commit messages anywhere in the candidate chains, strictly newer.
  if (!(out.fired & kRuleCmQuorum) && cmB != kNone &&
      (st.cm == kNone || round_of(cmB) > round_of(st.cm))) {
    SignerSet u;
    for (uint32_t leaf : in.leaves) {
      const CmSlot* cs = a.cm_slot(leaf, cmB);
      if (cs != nullptr) u.merge(cs->tally.signers);
    }
    if (u.count() >= in.f1) {
      st.cm = cmB;
      out.fired |= kRuleCmCatchup;
    }
  }

  // --- Finalize -----------------------------------------------------------
  if (st.cm != kNone && (st.fn == kNone || round_of(st.cm) > round_of(st.fn))) {
    if (st.fn != kNone && a.conflicts(st.fn, st.cm)) {
      out.fn_conflict = true;  // surfaced to the safety monitor, fn stays put
    } else {
      st.fn = st.cm;
      out.fired |= kRuleFnAdvance;
    }
  }

  // --- Pre-commit ---------------------------------------------------------
  out.rtpc = find_rtpc(in);
  if (out.rtpc != kNone) {
    const uint32_t bhat = lock.bhat;
    if (bhat == kNone || !a.conflicts(bhat, out.rtpc) || !lock.lock_known) {
      st.pc = out.rtpc;
      out.fired |= kRulePcCase1;
    } else if (escape_view_exists(in, bhat, round_of(lock.lock_view))) {
      st.pc = out.rtpc;
      out.fired |= kRulePcCase2;
    }
  }

  // --- Unlock the pre-commit when it is no longer ready-to-pre-commit ------
  if (out.rtpc != kNone && st.pc != out.rtpc) {
    if (st.pc != kNone) out.fired |= kRulePcUnlock;
    st.pc = kNone;
  }

  // --- Prepare ------------------------------------------------------------
  if (nvB != kNone) {
    const ViewSlot* s = a.view_slot(tip, nvB);
    if (s != nullptr && s->nv_quorum_height != kNoHeight) {
      bool conflicting_pc = false;
      for (const auto& t : s->pc) {
        if (!a.conflicts(t.target, nvB)) continue;
        if (in.membership != nullptr && !in.membership->contains(t.target)) continue;
        conflicting_pc = true;
        break;
      }
      if (!conflicting_pc) {
        st.pp = nvB;
        out.fired |= kRulePpPrepare;
      }
    }
  }

  // --- New view -----------------------------------------------------------
  if (nvB != kNone && st.nv != kNone && round_of(nvB) > round_of(st.nv)) {
    st.nv = nvB;
    out.fired |= kRuleNvNewer;
  } else if ((nvB != kNone && st.nv != kNone && a.conflicts(nvB, st.nv)) || st.nv == kNone) {
    st.nv = tip;
    out.fired |= kRuleNvConflict;
  }
  if (nvB != kNone) {
    const ViewSlot* s = a.view_slot(tip, nvB);
    if (s != nullptr && s->nv_quorum_height != kNoHeight) {
      st.nv = tip;
      out.fired |= kRuleNvQuorum;
    }
  }

  // --- Unlock the prepared block when it conflicts the provisioned view ----
  if (st.pp != kNone && st.nv != kNone && a.conflicts(st.pp, st.nv)) {
    st.pp = kNone;
    out.fired |= kRulePpUnlock;
  }

  return out;
}

}  // namespace cesim
