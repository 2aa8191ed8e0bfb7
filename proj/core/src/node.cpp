#include "cesim/node.hpp"

#include <algorithm>

namespace cesim {

namespace {

std::vector<uint8_t> role_alpha(const Digest& beacon, Round r) {
  Encoder enc;
  enc.put_digest(beacon);
  enc.put_u64(r);
  return enc.take();
}

Digest idx_digest(const BlockArena& a, uint32_t idx) {
  return idx == kNone ? kNullDigest : a.hash_of(idx);
}

}  // namespace

ConsensusNode::ConsensusNode(NodeId id, const NodeConfig& cfg, BlockArena* arena,
                             const KeyRegistry* keys, NodeHooks* hooks)
    : id_(id),
      cfg_(cfg),
      arena_(arena),
      keys_(keys),
      hooks_(hooks),
      store_(id, cfg.orphan_ttl_rounds) {
  store_.ingest(BlockArena::kGenesisIdx, 0, *arena_);
}

const Digest& ConsensusNode::beacon(Epoch e) {
  if (!beacon_ready_ || beacon_epoch_ != e) {
    BeaconResult br = arena_->beacon_for(fin_.fn, e);
    if (br.genesis_fallback && hooks_ != nullptr) hooks_->on_beacon_fallback(id_, e);
    beacon_ = br.beacon;
    beacon_epoch_ = e;
    beacon_ready_ = true;
    vrf_ready_ = false;
  }
  return beacon_;
}

VrfOutput ConsensusNode::round_vrf(Round r) {
  if (!vrf_ready_ || vrf_round_ != r) {
    const Digest& b = beacon(r / cfg_.epoch_length);
    vrf_ = keys_->vrf_eval(id_, role_alpha(b, r));
    vrf_round_ = r;
    vrf_ready_ = true;
  }
  return vrf_;
}

RoleSet ConsensusNode::determine_role(Round r) {
  RoleSet out;
  const Digest& b = beacon(r / cfg_.epoch_length);
  auto alpha = role_alpha(b, r);
  out.leader = map_to_node(alpha, cfg_.n) == id_;
  out.committee = committee_hit(round_vrf(r).beta, cfg_.c, cfg_.n);
  return out;
}

std::vector<NodeId> ConsensusNode::ping_targets(Round r) {
  std::vector<NodeId> out;
  VrfOutput v = round_vrf(r);
  for (NodeId peer = 0; peer < cfg_.n; ++peer) {
    Encoder enc;
    enc.put_digest(v.proof);
    enc.put_u64(peer);
    if (hash_domain("ping", enc.bytes()).prefix_u64() % cfg_.n <= cfg_.c) out.push_back(peer);
  }
  return out;
}

void ConsensusNode::update_mode_ring(Round r, uint32_t ping_responders) {
  // cnx(r) is normal when more than c(n-f)/n probed nodes answered in time.
  bool normal = static_cast<uint64_t>(ping_responders) * cfg_.n >
                static_cast<uint64_t>(cfg_.c) * (cfg_.n - cfg_.f);
  cnx_.push_back(normal);
  while (cnx_.size() > cfg_.mode_window) cnx_.pop_front();
  bool all_normal = true;
  for (bool b : cnx_) all_normal = all_normal && b;
  Mode next = all_normal ? Mode::Normal : Mode::Abnormal;
  if (next != mode_ && hooks_ != nullptr) hooks_->on_mode_change(id_, r, next);
  mode_ = next;
  if (mode_ == Mode::Abnormal) last_abnormal_ = r;
}

PcLock ConsensusNode::make_lock() const {
  PcLock lock;
  lock.bhat = last_nonnull_pc_;
  if (lock.bhat == kNone) return lock;
  for (auto it = pc_sends_.rbegin(); it != pc_sends_.rend(); ++it) {
    if (it->target == lock.bhat) {
      lock.lock_view = it->view;
      lock.lock_known = it->view != kNone;
      break;
    }
  }
  return lock;
}

void ConsensusNode::record_pc_send(Round r) {
  if (fin_.pc != kNone) pc_sends_.push_back({r, fin_.nv, fin_.pc});
}

bool ConsensusNode::is_block_confirmed(uint32_t idx) const {
  uint32_t h = arena_->height(idx);
  return h < confirmed_at_.size() && confirmed_at_[h] == idx;
}

void ConsensusNode::run_confirmations(Round r) {
  // Probabilistic confirmation only runs in normal mode; finalized blocks are
  // confirmed regardless.
  uint32_t bound = 0;
  bool have_bound = false;
  if (mode_ == Mode::Normal && arena_->height(tip_) >= cfg_.confirm_depth) {
    bound = arena_->height(tip_) - cfg_.confirm_depth;
    have_bound = true;
  }
  uint32_t fn_h = arena_->height(fin_.fn);
  if (!have_bound || fn_h > bound) bound = fn_h;

  if (confirmed_at_.size() <= bound) confirmed_at_.resize(bound + 1, kNone);
  uint32_t start = confirm_watermark_ + 1;
  // After a fork switch, already-confirmed heights on the dropped branch get
  // re-checked; a swap there is exactly what the conflict monitor counts.
  if (recheck_from_ < start) start = std::max<uint32_t>(recheck_from_, 1);
  recheck_from_ = kNoHeight;
  for (uint32_t h = start; h <= bound; ++h) {
    uint32_t blk = arena_->ancestor_at_height(tip_, h);
    if (blk == kNone || confirmed_at_[h] == blk) continue;
    confirmed_at_[h] = blk;
    if (hooks_ != nullptr) hooks_->on_confirm(id_, r, blk, h);
  }
  if (bound > confirm_watermark_) confirm_watermark_ = bound;
}

std::vector<Outgoing> ConsensusNode::begin_round(Round r, uint32_t ping_responders) {
  std::vector<Outgoing> out;
  round_ = r;
  endorsed_this_round_ = false;
  collecting_ = Collecting{};
  store_.expire_pending(r);

  update_mode_ring(r, ping_responders);

  ChainQuery q{&store_, arena_, mode_, fin_.fn, last_abnormal_, cfg_.honest_filter};
  auto leaves = candidate_leaves(q);
  uint32_t prev_tip = tip_;
  tip_ = canonical_chain(q, leaves);

  if (prev_tip != tip_ && !arena_->same_or_ancestor(prev_tip, tip_)) {
    // Fork switch: measure how much of the old chain was dropped.
    uint32_t lca = prev_tip;
    while (lca != kNone && !arena_->same_or_ancestor(lca, tip_)) lca = arena_->parent(lca);
    uint32_t lca_h = lca == kNone ? 0 : arena_->height(lca);
    uint32_t depth = arena_->height(prev_tip) - lca_h;
    recheck_from_ = lca_h + 1;
    if (hooks_ != nullptr) hooks_->on_reorg(id_, r, depth);
  }

  Membership member;
  member.q = q;
  FinalityInputs fi;
  fi.arena = arena_;
  fi.leaves = leaves;
  fi.canonical_tip = tip_;
  fi.quorum = 2 * cfg_.f + 1;
  fi.f1 = cfg_.f + 1;
  fi.membership = &member;
  UpdateOutcome upd = update_finality(fin_, make_lock(), fi);
  if (cfg_.fault_fn_follows_tip) upd.state.fn = tip_;
  if (upd.fn_conflict && hooks_ != nullptr) hooks_->on_fn_conflict(id_, r);
  if (!(upd.state == fin_) && hooks_ != nullptr)
    hooks_->on_finality_transition(id_, r, fin_, upd.state, upd.fired);
  uint32_t old_fn = fin_.fn;
  fin_ = upd.state;
  if (fin_.pc != kNone) last_nonnull_pc_ = fin_.pc;
  if (fin_.fn != old_fn && hooks_ != nullptr) hooks_->on_fn_advance(id_, r, tip_, old_fn, fin_.fn);

  run_confirmations(r);

  role_ = determine_role(r);

  if (role_.leader) {
    std::vector<TxId> txs;
    txs.reserve(cfg_.txs_per_block);
    for (uint32_t i = 0; i < cfg_.txs_per_block; ++i) {
      Encoder enc;
      enc.put_u64(id_);
      enc.put_u64(r);
      enc.put_u64(i);
      txs.push_back(hash_domain("tx", enc.bytes()));
    }
    BlockSummary s;
    s.parent_link = arena_->hash_of(tip_);
    s.epoch = r / cfg_.epoch_length;
    s.round = r;
    s.tx_root = merkle_root(txs);
    s.finality = {idx_digest(*arena_, fin_.nv), idx_digest(*arena_, fin_.pp),
                  idx_digest(*arena_, fin_.pc), idx_digest(*arena_, fin_.cm)};
    s.leader = id_;
    Digest sig = keys_->sign(id_, s.encode());

    collecting_.active = true;
    collecting_.summary = s;
    collecting_.summary_hash = s.hash();
    collecting_.sig = sig;
    collecting_.txs = txs;

    record_pc_send(r);

    Outgoing o;
    o.msg.from = id_;
    o.msg.round = r;
    o.msg.body = SummaryMsg{s, sig, txs};
    out.push_back(std::move(o));
  }
  return out;
}

void ConsensusNode::end_round(Round r) {
  if (collecting_.active && !collecting_.done && hooks_ != nullptr) hooks_->on_skip(id_, r);
}

std::vector<Outgoing> ConsensusNode::on_summary(Round now_round, const Message& m) {
  const auto& sm = std::get<SummaryMsg>(m.body);
  Digest sh = sm.summary.hash();
  // Equivocation evidence is collected from bare summaries too; a second
  // distinct summary for the same (leader, round) demotes stored siblings.
  if (store_.note_summary(sm.summary.leader, sm.summary.round, sh)) {
    for (uint32_t demoted : store_.demote_slot(sm.summary.leader, sm.summary.round))
      if (hooks_ != nullptr)
        hooks_->on_suspicious(id_, now_round, demoted, Suspicion::Equivocation);
  }
  if (!summary_cache_.count(sh)) {
    summary_cache_.emplace(sh, sm);
    if (collected_cache_.count(sh)) try_assemble(now_round, sh);
  }
  return {};
}

std::vector<Outgoing> ConsensusNode::on_endorse_window(Round now_round, const Digest& sh) {
  std::vector<Outgoing> out;
  if (!role_.committee || endorsed_this_round_) return out;
  auto it = summary_cache_.find(sh);
  if (it == summary_cache_.end()) return out;
  const BlockSummary& s = it->second.summary;

  auto reject = [&](const char* why) {
    if (hooks_ != nullptr) hooks_->on_endorse_reject(id_, now_round, why);
    return std::vector<Outgoing>{};
  };

  if (s.round != round_ || now_round != round_) return reject("round mismatch");
  if (s.leader >= cfg_.n) return reject("bad leader id");
  {
    const Digest& b = beacon(round_ / cfg_.epoch_length);
    if (map_to_node(role_alpha(b, round_), cfg_.n) != s.leader) return reject("not the leader");
  }
  if (arena_->find(s.parent_link) != std::optional<uint32_t>(tip_))
    return reject("parent is not my canonical tip");
  PrunedFinalityVector mine{idx_digest(*arena_, fin_.nv), idx_digest(*arena_, fin_.pp),
                            idx_digest(*arena_, fin_.pc), idx_digest(*arena_, fin_.cm)};
  if (!(s.finality == mine)) return reject("finality vector mismatch");
  if (!keys_->verify_sig(keys_->public_key(s.leader), s.encode(), it->second.sig))
    return reject("bad leader signature");

  Endorsement e;
  e.endorser = id_;
  e.vrf_proof = round_vrf(round_).proof;
  e.summary_sig = keys_->sign(id_, s.encode());
  endorsed_this_round_ = true;
  record_pc_send(round_);

  // Endorsements are broadcast; the proof rides along so anyone can verify
  // the committee role.
  Outgoing o;
  o.msg.from = id_;
  o.msg.round = round_;
  o.msg.body = EndorsementMsg{sh, e};
  out.push_back(std::move(o));
  return out;
}

std::vector<Outgoing> ConsensusNode::complete_collection(Round r) {
  collecting_.done = true;
  std::sort(collecting_.entries.begin(), collecting_.entries.end(),
            [&](const Endorsement& a, const Endorsement& b) {
              return keys_->public_key(a.endorser) < keys_->public_key(b.endorser);
            });
  CollectedEndorsement ce;
  ce.entries = collecting_.entries;
  ce.leader_sig = keys_->sign(id_, ce.entries_bytes());

  if (hooks_ != nullptr)
    hooks_->on_block_completed(id_, r, block_hash(collecting_.summary, ce));

  Outgoing o;
  o.msg.from = id_;
  o.msg.round = r;
  o.msg.body = CollectedMsg{collecting_.summary_hash, ce};
  std::vector<Outgoing> out;
  out.push_back(std::move(o));
  return out;
}

std::vector<Outgoing> ConsensusNode::on_endorsement(Round now_round, const Message& m) {
  const auto& em = std::get<EndorsementMsg>(m.body);
  if (!collecting_.active || collecting_.done || now_round != round_ ||
      em.summary_hash != collecting_.summary_hash)
    return {};
  const Endorsement& e = em.endorsement;
  if (e.endorser >= cfg_.n || collecting_.seen.test(e.endorser)) return {};
  // Verify committee membership and the endorsement signature.
  VrfOutput vo;
  vo.proof = e.vrf_proof;
  vo.beta = hash_of_digests("vrf-beta", {&e.vrf_proof});
  const Digest& b = beacon(round_ / cfg_.epoch_length);
  if (!keys_->vrf_verify(keys_->public_key(e.endorser), role_alpha(b, round_), vo)) return {};
  if (!committee_hit(vo.beta, cfg_.c, cfg_.n)) return {};
  if (!keys_->verify_sig(keys_->public_key(e.endorser), collecting_.summary.encode(),
                         e.summary_sig))
    return {};

  collecting_.seen.add(e.endorser);
  collecting_.entries.push_back(e);
  if (collecting_.entries.size() == cfg_.d) return complete_collection(now_round);
  return {};
}

std::vector<Outgoing> ConsensusNode::on_collected(Round now_round, const Message& m) {
  const auto& cm = std::get<CollectedMsg>(m.body);
  if (!collected_cache_.count(cm.summary_hash)) {
    collected_cache_.emplace(cm.summary_hash, cm);
    try_assemble(now_round, cm.summary_hash);
  }
  return {};
}

void ConsensusNode::try_assemble(Round now_round, const Digest& sh) {
  auto sit = summary_cache_.find(sh);
  auto cit = collected_cache_.find(sh);
  if (sit == summary_cache_.end() || cit == collected_cache_.end()) return;
  Block blk;
  blk.summary = sit->second.summary;
  blk.summary_sig = sit->second.sig;
  blk.endorsements = cit->second.collected;
  blk.txs = sit->second.txs;
  ingest_block(blk, now_round);
}

void ConsensusNode::ingest_block(const Block& blk, Round arrival_round) {
  Digest h = block_hash(blk.summary, blk.endorsements);
  if (auto idx = arena_->find(h); idx && store_.received(*idx)) return;

  auto parent_idx = arena_->find(blk.summary.parent_link);
  if (!parent_idx || !store_.received(*parent_idx)) {
    store_.defer(blk, arrival_round);
    return;
  }
  uint32_t idx = arena_->insert(blk);
  auto outcome = store_.ingest(idx, arrival_round, *arena_);
  if (hooks_ != nullptr) {
    if (outcome.suspicious) hooks_->on_suspicious(id_, arrival_round, idx, *outcome.reason);
    for (uint32_t demoted : outcome.demoted)
      hooks_->on_suspicious(id_, arrival_round, demoted, Suspicion::Equivocation);
  }
  // A newly arrived parent may unblock deferred children.
  for (const Block& child : store_.take_ready(h)) ingest_block(child, arrival_round);
}

}  // namespace cesim
