#include "cesim/adversary.hpp"

#include <algorithm>

namespace cesim {

namespace {

std::vector<uint8_t> role_alpha(const Digest& beacon, Round r) {
  Encoder enc;
  enc.put_digest(beacon);
  enc.put_u64(r);
  return enc.take();
}

}  // namespace

AdversaryCoordinator::AdversaryCoordinator(const ScenarioConfig& cfg, const KeyRegistry* keys,
                                           BlockArena* arena)
    : cfg_(&cfg), keys_(keys), arena_(arena) {
  for (NodeId u : cfg.effective_adversaries()) member_[u] = nullptr;
}

void AdversaryCoordinator::register_shadow(NodeId u, ConsensusNode* shadow) {
  member_[u] = shadow;
}

std::vector<NodeId> AdversaryCoordinator::colluding_committee(Round r,
                                                              const Digest& beacon) const {
  auto alpha = role_alpha(beacon, r);
  std::vector<NodeId> hits;
  for (const auto& [v, shadow] : member_) {
    (void)shadow;
    if (committee_hit(keys_->vrf_eval(v, alpha).beta, cfg_->c, cfg_->n)) hits.push_back(v);
  }
  std::sort(hits.begin(), hits.end(), [&](NodeId a, NodeId b) {
    return keys_->public_key(a) < keys_->public_key(b);
  });
  return hits;
}

Endorsement AdversaryCoordinator::make_endorsement(NodeId v, const BlockSummary& s,
                                                   const Digest& beacon, Round r) const {
  Endorsement e;
  e.endorser = v;
  e.vrf_proof = keys_->vrf_eval(v, role_alpha(beacon, r)).proof;
  e.summary_sig = keys_->sign(v, s.encode());
  return e;
}

std::vector<Outgoing> AdversaryCoordinator::colliding_leader(NodeId u, Round r,
                                                             std::vector<Outgoing> honest,
                                                             uint64_t round_start,
                                                             uint64_t ticks_per_round) {
  ConsensusNode* shadow = member_.at(u);
  const SummaryMsg* own = nullptr;
  for (const auto& o : honest)
    if (const auto* sm = std::get_if<SummaryMsg>(&o.msg.body)) own = sm;
  if (own == nullptr) return honest;

  const Digest beacon = shadow->beacon(r / cfg_->epoch_length);
  auto colluders = colluding_committee(r, beacon);
  if (colluders.size() < cfg_->d) return honest;  // attack not feasible this round

  // Two conflicting summaries over the same parent, endorsed by the colluding
  // committee and released at the very end of the round.
  BlockSummary s1 = own->summary;
  std::vector<TxId> txs2;
  for (uint32_t i = 0; i < cfg_->txs_per_block; ++i) {
    Encoder enc;
    enc.put_u64(u);
    enc.put_u64(r);
    enc.put_u64(i);
    txs2.push_back(hash_domain("tx-alt", enc.bytes()));
  }
  BlockSummary s2 = s1;
  s2.tx_root = merkle_root(txs2);

  const uint64_t release = round_start + ticks_per_round - 2;
  std::vector<Outgoing> out;
  for (const auto& [s, txs] :
       {std::pair<const BlockSummary&, const std::vector<TxId>&>{s1, own->txs},
        std::pair<const BlockSummary&, const std::vector<TxId>&>{s2, txs2}}) {
    Digest sig = keys_->sign(u, s.encode());
    CollectedEndorsement ce;
    for (uint32_t i = 0; i < cfg_->d; ++i)
      ce.entries.push_back(make_endorsement(colluders[i], s, beacon, r));
    ce.leader_sig = keys_->sign(u, ce.entries_bytes());

    Outgoing so;
    so.msg = {u, r, SummaryMsg{s, sig, txs}};
    so.at_tick = static_cast<int64_t>(release);
    out.push_back(std::move(so));
    Outgoing co;
    co.msg = {u, r, CollectedMsg{s.hash(), ce}};
    co.at_tick = static_cast<int64_t>(release);
    out.push_back(std::move(co));
  }
  ++actions_;
  return out;
}

std::vector<Outgoing> AdversaryCoordinator::partition_split(NodeId u, Round r,
                                                            const Situation& sit,
                                                            std::vector<Outgoing> honest,
                                                            uint64_t now) {
  bool is_leader = false;
  for (const auto& o : honest)
    if (std::holds_alternative<SummaryMsg>(o.msg.body)) is_leader = true;
  if (!is_leader) return honest;

  // One conflicting summary per partition side, each built from the view of
  // an adversarial node inside that side and sent only to that side.
  uint8_t sides = 0;
  for (uint32_t v = 0; v < cfg_->n; ++v) sides = std::max(sides, sit.side_of(v));
  std::vector<Outgoing> out;
  bool any = false;
  for (uint8_t s = 0; s <= sides; ++s) {
    ConsensusNode* eye = nullptr;
    for (const auto& [v, shadow] : member_)
      if (sit.side_of(v) == s && shadow != nullptr) eye = shadow;
    if (eye == nullptr) continue;

    const Digest beacon = eye->beacon(r / cfg_->epoch_length);
    std::vector<TxId> txs;
    for (uint32_t i = 0; i < cfg_->txs_per_block; ++i) {
      Encoder enc;
      enc.put_u64(u);
      enc.put_u64(r);
      enc.put_u64(i);
      enc.put_u64(s);
      txs.push_back(hash_domain("tx-split", enc.bytes()));
    }
    BlockSummary sum;
    sum.parent_link = arena_->hash_of(eye->canonical_tip());
    sum.epoch = r / cfg_->epoch_length;
    sum.round = r;
    sum.tx_root = merkle_root(txs);
    const EngineState& fe = eye->finality();
    auto dg = [&](uint32_t idx) { return idx == kNone ? kNullDigest : arena_->hash_of(idx); };
    sum.finality = {dg(fe.nv), dg(fe.pp), dg(fe.pc), dg(fe.cm)};
    sum.leader = u;
    Digest sig = keys_->sign(u, sum.encode());

    SplitCollect sc;
    sc.summary = sum;
    sc.sig = sig;
    sc.txs = txs;
    sc.side = s;
    Digest sh = sum.hash();
    // Colluding committee members on this side endorse immediately.
    for (NodeId v : colluding_committee(r, beacon)) {
      if (sit.side_of(v) != s || sc.entries.size() >= cfg_->d) continue;
      sc.entries.push_back(make_endorsement(v, sum, beacon, r));
      sc.seen.add(v);
    }
    splits_.emplace(sh, std::move(sc));

    for (uint32_t v = 0; v < cfg_->n; ++v) {
      if (sit.side_of(v) != s) continue;
      Outgoing o;
      o.msg = {u, r, SummaryMsg{sum, sig, txs}};
      o.broadcast = false;
      o.to = v;
      o.at_tick = static_cast<int64_t>(now + 1);
      out.push_back(std::move(o));
    }
    any = true;
  }
  if (!any) return honest;
  ++actions_;
  return out;
}

std::vector<Outgoing> AdversaryCoordinator::filter(NodeId u, Round r, const Situation& sit,
                                                   std::vector<Outgoing> honest, uint64_t now,
                                                   uint64_t round_start,
                                                   uint64_t ticks_per_round) {
  switch (cfg_->strategy) {
    case AdversaryStrategy::Honest:
      return honest;
    case AdversaryStrategy::FraudulentDelay: {
      // Normal behavior except the collected endorsement: it ships one round
      // late, so the assembled block lands outside its round everywhere.
      for (auto& o : honest) {
        if (std::holds_alternative<CollectedMsg>(o.msg.body)) {
          o.at_tick = static_cast<int64_t>(round_start + ticks_per_round + 1);
          ++actions_;
        }
      }
      return honest;
    }
    case AdversaryStrategy::CollidingLeader:
      return colliding_leader(u, r, std::move(honest), round_start, ticks_per_round);
    case AdversaryStrategy::PartitionCollusion:
      if (!sit.normal() && sit.window->has_partition())
        return partition_split(u, r, sit, std::move(honest), now);
      return honest;
  }
  return honest;
}

std::vector<Outgoing> AdversaryCoordinator::observe_delivery(NodeId u, Round r, const Message& m,
                                                             const Situation& sit, uint64_t now,
                                                             uint64_t round_start,
                                                             uint64_t ticks_per_round) {
  (void)u;
  (void)round_start;
  (void)ticks_per_round;
  std::vector<Outgoing> out;
  if (cfg_->strategy != AdversaryStrategy::PartitionCollusion) return out;
  const auto* em = std::get_if<EndorsementMsg>(&m.body);
  if (em == nullptr) return out;
  auto it = splits_.find(em->summary_hash);
  if (it == splits_.end() || it->second.done) return out;
  SplitCollect& sc = it->second;
  const Endorsement& e = em->endorsement;
  if (e.endorser >= cfg_->n || sc.seen.test(e.endorser)) return out;
  if (!keys_->verify_sig(keys_->public_key(e.endorser), sc.summary.encode(), e.summary_sig))
    return out;
  sc.seen.add(e.endorser);
  sc.entries.push_back(e);
  if (sc.entries.size() < cfg_->d) return out;

  sc.done = true;
  std::sort(sc.entries.begin(), sc.entries.end(), [&](const Endorsement& a, const Endorsement& b) {
    return keys_->public_key(a.endorser) < keys_->public_key(b.endorser);
  });
  sc.entries.resize(cfg_->d);
  CollectedEndorsement ce;
  ce.entries = sc.entries;
  ce.leader_sig = keys_->sign(sc.summary.leader, ce.entries_bytes());
  for (uint32_t v = 0; v < cfg_->n; ++v) {
    if (sit.window != nullptr && sit.side_of(v) != sc.side) continue;
    Outgoing o;
    o.msg = {sc.summary.leader, r, CollectedMsg{em->summary_hash, ce}};
    o.broadcast = false;
    o.to = v;
    o.at_tick = static_cast<int64_t>(now + 1);
    out.push_back(std::move(o));
  }
  ++actions_;
  return out;
}

}  // namespace cesim
