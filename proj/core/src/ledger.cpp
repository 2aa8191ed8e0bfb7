#include "cesim/ledger.hpp"

#include <algorithm>
#include <bit>
#include <cassert>

namespace cesim {

namespace {

std::vector<uint8_t> role_alpha(const Digest& beacon, Round r) {
  Encoder enc;
  enc.put_digest(beacon);
  enc.put_u64(r);
  return enc.take();
}

const PairTally* find_tally(const std::vector<PairTally>& v, uint32_t target) {
  for (const auto& t : v)
    if (t.target == target) return &t;
  return nullptr;
}

PairTally& upsert_tally(std::vector<PairTally>& v, uint32_t target) {
  for (auto& t : v)
    if (t.target == target) return t;
  v.emplace_back();
  v.back().target = target;
  return v.back();
}

// Adds the block's signers to a tally at the given chain height, keeping the
// threshold positions.
void feed_tally(PairTally& t, std::span<const NodeId> signers, uint32_t h, uint32_t f1,
                uint32_t quorum) {
  for (NodeId u : signers) {
    if (t.signers.test(u)) continue;
    t.signers.add(u);
    ++t.count;
  }
  if (t.first_height == kNoHeight) t.first_height = h;
  if (t.f1_height == kNoHeight && t.count >= f1) t.f1_height = h;
  if (t.quorum_height == kNoHeight && t.count >= quorum) t.quorum_height = h;
}

// Membership adapter for chain replay: a block counts as a candidate iff it
// lies on the replayed chain itself.
struct ChainMembership final : CandidateMembership {
  const BlockArena* arena;
  uint32_t tip;
  bool contains(uint32_t idx) const override { return arena->same_or_ancestor(idx, tip); }
};

}  // namespace

uint32_t SignerSet::count() const {
  uint32_t c = 0;
  for (auto w : words_) c += static_cast<uint32_t>(std::popcount(w));
  return c;
}

BlockArena::BlockArena(ArenaParams p, const KeyRegistry* keys) : params_(p), keys_(keys) {
  Block g = make_genesis();
  Meta m;
  m.hash = block_hash(g.summary, g.endorsements);
  m.parent = kNone;
  m.height = 0;
  m.round = 0;
  m.epoch = 0;
  m.leader = kGenesisLeader;
  m.endorsement_hash = hash_domain("beacon-src", g.endorsements.encode());
  m.valid = true;
  m.report.status = ValidityReport::Status::Valid;
  by_hash_.emplace(m.hash, 0);
  meta_.push_back(std::move(m));
  blocks_.push_back(std::move(g));

  // Replay bootstrap: the state a chain follower holds after seeing only the
  // genesis block. Rounds 1.. blocks must carry its pruned part.
  FinalityInputs in;
  in.arena = this;
  uint32_t leaves[1] = {kGenesisIdx};
  in.leaves = std::span<const uint32_t>(leaves, 1);
  in.canonical_tip = kGenesisIdx;
  in.quorum = quorum();
  in.f1 = f1();
  ChainMembership member;
  member.arena = this;
  member.tip = kGenesisIdx;
  in.membership = &member;
  auto out = update_finality(EngineState{}, PcLock{}, in);
  meta_[0].replay = out.state;
  if (out.state.pc != kNone)
    meta_[0].replay_lock = {out.state.pc, out.state.nv, true};
}

std::optional<uint32_t> BlockArena::find(const Digest& h) const {
  auto it = by_hash_.find(h);
  if (it == by_hash_.end()) return std::nullopt;
  return it->second;
}

uint32_t BlockArena::resolve(const Digest& h) const {
  if (h.is_zero()) return kNone;
  auto it = by_hash_.find(h);
  return it == by_hash_.end() ? kNone : it->second;
}

uint32_t BlockArena::ancestor_at_height(uint32_t idx, uint32_t h) const {
  if (idx == kNone || h > meta_[idx].height) return kNone;
  uint32_t cur = idx;
  while (meta_[cur].height > h) {
    uint32_t jump = meta_[cur].height - h;
    int j = std::bit_width(static_cast<uint64_t>(jump)) - 1;
    j = std::min<int>(j, static_cast<int>(meta_[cur].anc.size()) - 1);
    cur = meta_[cur].anc[static_cast<size_t>(j)];
  }
  return cur;
}

bool BlockArena::same_or_ancestor(uint32_t anc, uint32_t desc) const {
  if (anc == kNone || desc == kNone) return false;
  if (meta_[anc].height > meta_[desc].height) return false;
  return ancestor_at_height(desc, meta_[anc].height) == anc;
}

bool BlockArena::conflicts(uint32_t a, uint32_t b) const {
  if (a == kNone || b == kNone) return false;
  return !same_or_ancestor(a, b) && !same_or_ancestor(b, a);
}

uint32_t BlockArena::last_ancestor_before_round(uint32_t idx, int64_t cutoff) const {
  if (idx == kNone) return kNone;
  if (static_cast<int64_t>(meta_[idx].round) < cutoff) return idx;
  // Find the lowest ancestor with round >= cutoff, then step once more down.
  uint32_t cur = idx;
  for (int j = static_cast<int>(meta_[cur].anc.size()) - 1; j >= 0; --j) {
    if (static_cast<size_t>(j) >= meta_[cur].anc.size()) continue;
    uint32_t a = meta_[cur].anc[static_cast<size_t>(j)];
    if (a != kNone && static_cast<int64_t>(meta_[a].round) >= cutoff) cur = a;
  }
  return meta_[cur].parent;
}

BeaconResult BlockArena::beacon_for(uint32_t fn_idx, Epoch epoch) const {
  if (epoch == 0) return {params_.genesis_beacon, false};
  const int64_t cutoff = static_cast<int64_t>(epoch) * params_.epoch_length - 1 -
                         static_cast<int64_t>(params_.tau0) - params_.tau1;
  uint32_t best = last_ancestor_before_round(fn_idx, cutoff);
  if (best == kNone || best == kGenesisIdx) return {params_.genesis_beacon, true};
  return {hash_of_digests("beacon", {&meta_[best].endorsement_hash}), false};
}

const ViewSlot* BlockArena::view_slot(uint32_t tip, uint32_t view) const {
  for (const ViewSlot* s = meta_[tip].slots.get(); s != nullptr; s = s->older.get())
    if (s->view == view) return s;
  return nullptr;
}

const CmSlot* BlockArena::cm_slot(uint32_t tip, uint32_t target) const {
  for (const CmSlot* s = meta_[tip].cm_slots.get(); s != nullptr; s = s->older.get())
    if (s->tally.target == target) return s;
  return nullptr;
}

void BlockArena::build_tallies(Meta& m, const Meta& p) {
  m.slots = p.slots;
  m.cm_slots = p.cm_slots;
  m.max_cert_round = p.max_cert_round;
  const uint32_t h = m.height;
  const uint32_t q = quorum();
  const uint32_t f1v = f1();

  if (m.nv != kNone) {
    // Copy the slot list down to (and including) the slot for this view,
    // sharing everything below it.
    std::vector<const ViewSlot*> path;
    const ViewSlot* cur = m.slots.get();
    while (cur != nullptr && cur->view != m.nv) {
      path.push_back(cur);
      cur = cur->older.get();
    }
    auto node = std::make_shared<ViewSlot>();
    if (cur != nullptr) {
      *node = *cur;
    } else {
      node->view = m.nv;
      node->view_round = meta_[m.nv].round;
      node->nv_first_height = h;
    }
    node->older = cur != nullptr ? cur->older : m.slots;
    for (NodeId u : m.signers) {
      if (node->nv_signers.test(u)) continue;
      node->nv_signers.add(u);
      ++node->nv_count;
    }
    if (node->nv_quorum_height == kNoHeight && node->nv_count >= q) {
      node->nv_quorum_height = h;
      m.max_cert_round = std::max(m.max_cert_round, node->view_round);
    }
    if (m.pp != kNone) feed_tally(upsert_tally(node->pp, m.pp), m.signers, h, f1v, q);
    if (m.pc != kNone) feed_tally(upsert_tally(node->pc, m.pc), m.signers, h, f1v, q);

    std::shared_ptr<const ViewSlot> rebuilt = node;
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
      auto copy = std::make_shared<ViewSlot>(**it);
      copy->older = rebuilt;
      rebuilt = copy;
    }
    m.slots = rebuilt;
  }

  if (m.cm != kNone) {
    std::vector<const CmSlot*> path;
    const CmSlot* cur = m.cm_slots.get();
    while (cur != nullptr && cur->tally.target != m.cm) {
      path.push_back(cur);
      cur = cur->older.get();
    }
    auto node = std::make_shared<CmSlot>();
    if (cur != nullptr) *node = *cur;
    node->tally.target = m.cm;
    node->older = cur != nullptr ? cur->older : m.cm_slots;
    feed_tally(node->tally, m.signers, h, f1v, q);
    std::shared_ptr<const CmSlot> rebuilt = node;
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
      auto copy = std::make_shared<CmSlot>(**it);
      copy->older = rebuilt;
      rebuilt = copy;
    }
    m.cm_slots = rebuilt;
  }
}

void BlockArena::build_replay(Meta& m, const Meta& parent_meta, uint32_t self_idx) {
  FinalityInputs in;
  in.arena = this;
  uint32_t leaves[1] = {self_idx};
  in.leaves = std::span<const uint32_t>(leaves, 1);
  in.canonical_tip = self_idx;
  in.quorum = quorum();
  in.f1 = f1();
  ChainMembership member;
  member.arena = this;
  member.tip = self_idx;
  in.membership = &member;
  auto out = update_finality(parent_meta.replay, parent_meta.replay_lock, in);
  m.replay = out.state;
  m.replay_lock = parent_meta.replay_lock;
  // The chain itself carries a send every step.
  if (out.state.pc != kNone) m.replay_lock = {out.state.pc, out.state.nv, true};
}

ValidityReport BlockArena::validate(const Block& b) const {
  ValidityReport r;
  auto pit = by_hash_.find(b.summary.parent_link);
  if (pit == by_hash_.end()) {
    r.status = ValidityReport::Status::Pending;
    r.reason = "parent unknown";
    return r;
  }
  const Meta& p = meta_[pit->second];
  r.status = ValidityReport::Status::Invalid;

  r.round_epoch_ok = b.summary.round > p.round &&
                     b.summary.epoch == b.summary.round / params_.epoch_length;

  BeaconResult beacon = beacon_for(p.replay.fn, b.summary.epoch);
  auto alpha = role_alpha(beacon.beacon, b.summary.round);
  r.leader_ok =
      b.summary.leader < params_.n && map_to_node(alpha, params_.n) == b.summary.leader;

  // The carried pruned vector must be exactly what the chain itself computes.
  auto expect = [&](uint32_t idx, const Digest& got) {
    return idx == kNone ? got.is_zero() : (!got.is_zero() && got == meta_[idx].hash);
  };
  r.finality_ok = expect(p.replay.nv, b.summary.finality.nv) &&
                  expect(p.replay.pp, b.summary.finality.pp) &&
                  expect(p.replay.pc, b.summary.finality.pc) &&
                  expect(p.replay.cm, b.summary.finality.cm);

  if (keys_ != nullptr && b.summary.leader < params_.n) {
    const Digest& lpk = keys_->public_key(b.summary.leader);
    r.summary_sig_ok = keys_->verify_sig(lpk, b.summary.encode(), b.summary_sig);
    r.collected_sig_ok =
        keys_->verify_sig(lpk, b.endorsements.entries_bytes(), b.endorsements.leader_sig);
  }

  r.merkle_ok = merkle_root(b.txs) == b.summary.tx_root;
  r.txs_ok = true;  // txs are opaque ids with an always-valid predicate

  r.endorsements_ok = b.endorsements.entries.size() == params_.d;
  if (r.endorsements_ok && keys_ != nullptr) {
    const Digest* prev_pk = nullptr;
    for (const auto& e : b.endorsements.entries) {
      if (e.endorser >= params_.n) {
        r.endorsements_ok = false;
        break;
      }
      const Digest& epk = keys_->public_key(e.endorser);
      if (prev_pk != nullptr && !(*prev_pk < epk)) {
        r.endorsements_ok = false;  // ascending public keys, pairwise distinct
        break;
      }
      prev_pk = &epk;
      VrfOutput out;
      out.proof = e.vrf_proof;
      out.beta = hash_of_digests("vrf-beta", {&e.vrf_proof});
      if (!keys_->vrf_verify(epk, alpha, out) || !committee_hit(out.beta, params_.c, params_.n)) {
        r.endorsements_ok = false;
        break;
      }
      if (!keys_->verify_sig(epk, b.summary.encode(), e.summary_sig)) {
        r.endorsements_ok = false;
        break;
      }
    }
  }

  r.ancestors_ok = p.valid;

  bool all = r.leader_ok && r.round_epoch_ok && r.finality_ok && r.summary_sig_ok &&
             r.collected_sig_ok && r.merkle_ok && r.txs_ok && r.endorsements_ok &&
             r.ancestors_ok;
  if (all) {
    r.status = ValidityReport::Status::Valid;
  } else {
    r.reason = !r.leader_ok            ? "leader mismatch"
               : !r.round_epoch_ok     ? "round/epoch inconsistent"
               : !r.finality_ok        ? "finality vector inconsistent with chain"
               : !r.summary_sig_ok     ? "bad summary signature"
               : !r.collected_sig_ok   ? "bad collected-endorsement signature"
               : !r.merkle_ok          ? "tx merkle root mismatch"
               : !r.endorsements_ok    ? "endorsement quorum invalid"
                                       : "ancestor invalid";
  }
  return r;
}

uint32_t BlockArena::insert(const Block& b) {
  Digest h = block_hash(b.summary, b.endorsements);
  if (auto existing = find(h)) return *existing;
  auto pit = by_hash_.find(b.summary.parent_link);
  if (pit == by_hash_.end()) throw std::runtime_error("arena insert: parent not present");
  const uint32_t parent_idx = pit->second;

  Meta m;
  m.hash = h;
  m.parent = parent_idx;
  m.height = meta_[parent_idx].height + 1;
  m.round = b.summary.round;
  m.epoch = b.summary.epoch;
  m.leader = b.summary.leader;
  m.nv = resolve(b.summary.finality.nv);
  m.pp = resolve(b.summary.finality.pp);
  m.pc = resolve(b.summary.finality.pc);
  m.cm = resolve(b.summary.finality.cm);
  m.endorsement_hash = hash_domain("beacon-src", b.endorsements.encode());

  m.signers.push_back(b.summary.leader);
  for (const auto& e : b.endorsements.entries) m.signers.push_back(e.endorser);
  std::sort(m.signers.begin(), m.signers.end());
  m.signers.erase(std::unique(m.signers.begin(), m.signers.end()), m.signers.end());

  m.report = validate(b);
  m.valid = m.report.status == ValidityReport::Status::Valid;

  // Binary lifting table.
  m.anc.push_back(parent_idx);
  for (size_t j = 1;; ++j) {
    uint32_t half = m.anc[j - 1];
    if (half == kNone || meta_[half].anc.size() < j) break;
    uint32_t full = meta_[half].anc[j - 1];
    if (full == kNone) break;
    m.anc.push_back(full);
  }

  build_tallies(m, meta_[parent_idx]);

  const uint32_t idx = static_cast<uint32_t>(meta_.size());
  by_hash_.emplace(h, idx);
  meta_.push_back(std::move(m));
  blocks_.push_back(b);
  // Replay needs arena access to the new block's tallies, so it runs after
  // the meta is in place.
  build_replay(meta_[idx], meta_[parent_idx], idx);
  return idx;
}

uint32_t count_messages(const BlockArena& arena, std::span<const uint32_t> blocks, uint32_t view,
                        uint32_t target, MsgType type) {
  if (target == kNone) return 0;
  SignerSet set;
  for (uint32_t b : blocks) {
    if (view != kNone && arena.nv_of(b) != view) continue;
    uint32_t tp = type == MsgType::Nv   ? arena.nv_of(b)
                  : type == MsgType::Pp ? arena.pp_of(b)
                  : type == MsgType::Pc ? arena.pc_of(b)
                                        : arena.cm_of(b);
    if (tp != target) continue;
    for (NodeId u : arena.signers(b)) set.add(u);
  }
  return set.count();
}

// ---------------------------------------------------------------------------
// BlockStore

BlockStore::BlockStore(NodeId owner, uint32_t orphan_ttl_rounds)
    : owner_(owner), orphan_ttl_(orphan_ttl_rounds) {}

bool BlockStore::note_summary(NodeId leader, Round round, const Digest& summary_hash) {
  auto& seen = summaries_[{leader, round}];
  for (const auto& d : seen)
    if (d == summary_hash) return false;
  seen.push_back(summary_hash);
  return seen.size() == 2;  // fresh equivocation evidence
}

void BlockStore::mark_suspicious(uint32_t idx, Suspicion why) {
  auto [it, fresh] = suspicion_.emplace(idx, why);
  (void)it;
  if (fresh) {
    auto a = arrivals_.find(idx);
    if (a != arrivals_.end()) suspicious_by_arrival_[a->second.round].push_back(idx);
  }
}

std::vector<uint32_t> BlockStore::demote_slot(NodeId leader, Round round) {
  std::vector<uint32_t> demoted;
  auto it = blocks_by_slot_.find({leader, round});
  if (it == blocks_by_slot_.end()) return demoted;
  for (uint32_t idx : it->second) {
    if (suspicion_.count(idx)) continue;
    mark_suspicious(idx, Suspicion::Equivocation);
    demoted.push_back(idx);
  }
  return demoted;
}

const ArrivalInfo* BlockStore::arrival(uint32_t idx) const {
  auto it = arrivals_.find(idx);
  return it == arrivals_.end() ? nullptr : &it->second;
}

std::optional<Suspicion> BlockStore::suspicion(uint32_t idx) const {
  auto it = suspicion_.find(idx);
  if (it == suspicion_.end()) return std::nullopt;
  return it->second;
}

BlockStore::IngestOutcome BlockStore::ingest(uint32_t idx, Round arrival_round,
                                             BlockArena& arena) {
  IngestOutcome out;
  if (received(idx)) return out;
  arrivals_[idx] = {arrival_round, next_seq_++};
  if (!arena.is_valid(idx) && idx != BlockArena::kGenesisIdx) return out;

  out.stored = true;
  valid_.insert(idx);
  uint32_t p = arena.parent(idx);
  if (p != kNone) tips_.erase(p);
  tips_.insert(idx);

  if (idx != BlockArena::kGenesisIdx) {
    const NodeId leader = arena.leader_of(idx);
    const Round blk_round = arena.round(idx);
    auto& slot_blocks = blocks_by_slot_[{leader, blk_round}];
    slot_blocks.push_back(idx);

    // Honesty is judged only for valid blocks: arrival in the block's own
    // round, and no competing block or summary from the same leader/round.
    note_summary(leader, blk_round, arena.full_block(idx).summary.hash());
    bool slot_equivocated =
        summaries_[{leader, blk_round}].size() > 1 || slot_blocks.size() > 1;
    if (arrival_round != blk_round) {
      mark_suspicious(idx, Suspicion::LateArrival);
      out.suspicious = true;
      out.reason = Suspicion::LateArrival;
    } else if (slot_equivocated) {
      mark_suspicious(idx, Suspicion::Equivocation);
      out.suspicious = true;
      out.reason = Suspicion::Equivocation;
    }
    if (slot_equivocated) {
      for (uint32_t sibling : slot_blocks) {
        if (sibling == idx || suspicion_.count(sibling)) continue;
        mark_suspicious(sibling, Suspicion::Equivocation);
        out.demoted.push_back(sibling);
      }
    }
  }
  return out;
}

void BlockStore::defer(const Block& blk, Round first_seen) {
  pending_by_parent_.emplace(blk.summary.parent_link, std::make_pair(blk, first_seen));
}

std::vector<Block> BlockStore::take_ready(const Digest& parent_hash) {
  std::vector<Block> out;
  auto [lo, hi] = pending_by_parent_.equal_range(parent_hash);
  for (auto it = lo; it != hi; ++it) out.push_back(std::move(it->second.first));
  pending_by_parent_.erase(lo, hi);
  return out;
}

void BlockStore::expire_pending(Round now) {
  for (auto it = pending_by_parent_.begin(); it != pending_by_parent_.end();) {
    if (now > it->second.second && now - it->second.second > orphan_ttl_)
      it = pending_by_parent_.erase(it);
    else
      ++it;
  }
}

std::vector<BlockStore::Record> BlockStore::dump() const {
  std::vector<Record> out;
  out.reserve(arrivals_.size());
  for (uint32_t idx : valid_) {
    const auto& a = arrivals_.at(idx);
    out.push_back({idx, a.round, a.seq, !suspicion_.count(idx)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Candidate selection and fork choice

bool is_candidate(const ChainQuery& q, uint32_t idx) {
  const BlockArena& a = *q.arena;
  const BlockStore& s = *q.store;
  if (!s.received(idx) || (!a.is_valid(idx) && idx != BlockArena::kGenesisIdx)) return false;
  // The finalized prefix always qualifies; finality supersedes suspicion.
  if (idx == q.fn_idx || a.same_or_ancestor(idx, q.fn_idx)) return true;
  if (!a.same_or_ancestor(q.fn_idx, idx)) return false;  // conflicts fn
  if (q.mode == Mode::Abnormal || !q.honest_filter) return true;
  const ArrivalInfo* arr = s.arrival(idx);
  if (static_cast<int64_t>(arr->round) <= q.last_abnormal_round) return true;
  return s.is_honest(idx);
}

std::vector<uint32_t> candidate_set(const ChainQuery& q) {
  std::vector<uint32_t> out;
  for (uint32_t idx : q.store->valid_set())
    if (is_candidate(q, idx)) out.push_back(idx);
  return out;
}

std::vector<uint32_t> candidate_leaves(const ChainQuery& q) {
  const BlockArena& a = *q.arena;
  const BlockStore& s = *q.store;

  // Blocks that currently fail the candidate predicate above fn: suspicious
  // blocks received after the window boundary. The boundary only moves
  // forward, so in long runs this stays a short suffix of the suspicion log.
  std::vector<uint32_t> dirty;
  if (q.mode == Mode::Normal && q.honest_filter) {
    s.for_each_suspicious_after(q.last_abnormal_round, [&](uint32_t idx) {
      if (!a.same_or_ancestor(idx, q.fn_idx)) dirty.push_back(idx);
    });
  }

  std::set<uint32_t> leaves;
  for (uint32_t tip : s.tips()) {
    if (a.same_or_ancestor(tip, q.fn_idx)) continue;  // at or below fn
    if (!a.same_or_ancestor(q.fn_idx, tip)) continue; // conflicts fn
    // The lowest dirty block between fn and the tip caps the usable chain.
    uint32_t blocker = kNone;
    uint32_t blocker_h = kNoHeight;
    for (uint32_t d : dirty) {
      if (a.height(d) <= a.height(q.fn_idx) || a.height(d) >= blocker_h) continue;
      if (a.same_or_ancestor(d, tip)) {
        blocker = d;
        blocker_h = a.height(d);
      }
    }
    uint32_t leaf = blocker == kNone ? tip : a.parent(blocker);
    leaves.insert(leaf);
  }
  if (leaves.empty()) leaves.insert(q.fn_idx);
  return {leaves.begin(), leaves.end()};
}

uint32_t canonical_chain(const ChainQuery& q, std::span<const uint32_t> leaves) {
  const BlockArena& a = *q.arena;
  const BlockStore& s = *q.store;
  uint32_t best = kNone;
  for (uint32_t leaf : leaves) {
    if (best == kNone) {
      best = leaf;
      continue;
    }
    // Longest chain, then newest tip, then first received, then smallest hash.
    if (a.height(leaf) != a.height(best)) {
      if (a.height(leaf) > a.height(best)) best = leaf;
      continue;
    }
    if (a.round(leaf) != a.round(best)) {
      if (a.round(leaf) > a.round(best)) best = leaf;
      continue;
    }
    const ArrivalInfo* la = s.arrival(leaf);
    const ArrivalInfo* ba = s.arrival(best);
    uint64_t lseq = la != nullptr ? la->seq : 0;
    uint64_t bseq = ba != nullptr ? ba->seq : 0;
    if (lseq != bseq) {
      if (lseq < bseq) best = leaf;
      continue;
    }
    if (a.hash_of(leaf) < a.hash_of(best)) best = leaf;
  }
  return best;
}

}  // namespace cesim
