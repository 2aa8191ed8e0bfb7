#include <doctest.h>

#include <algorithm>

#include "support/fixture.hpp"

using namespace cesim;
using cesim::test::Fixture;

namespace {

uint32_t naive_count(const Fixture& fx, const std::vector<uint32_t>& blocks, uint32_t view,
                     uint32_t target, MsgType type) {
  return count_messages(fx.arena, blocks, view, target, type);
}

std::vector<uint32_t> chain_of(const Fixture& fx, uint32_t tip) {
  std::vector<uint32_t> out;
  for (uint32_t b = tip; b != kNone; b = fx.arena.parent(b)) out.push_back(b);
  return out;
}

}  // namespace

TEST_CASE("count_messages: empty collection and single-block signer set") {
  // d = 7 distinct endorsers plus the leader: eight distinct senders.
  Fixture fx(16, 5, 16, 7);
  CHECK(naive_count(fx, {}, kNone, 0, MsgType::Pc) == 0);

  uint32_t b1 = fx.extend(BlockArena::kGenesisIdx, 1);
  uint32_t view = b1;
  NodeId leader = fx.leader_for(b1, 2);
  std::vector<NodeId> endorsers;
  for (NodeId u = 0; u < 16 && endorsers.size() < 7; ++u)
    if (u != leader) endorsers.push_back(u);
  uint32_t b2 = fx.extend_raw(b1, 2, leader, view, kNone, b1, kNone, endorsers);

  CHECK(naive_count(fx, {b2}, view, b1, MsgType::Pc) == 8);
  CHECK(naive_count(fx, {b2}, view, b1, MsgType::Pp) == 0);
}

TEST_CASE("count_messages: shared endorsers count once (union, not sum)") {
  Fixture fx(16, 5, 16, 7);
  uint32_t b1 = fx.extend(BlockArena::kGenesisIdx, 1);

  NodeId l2 = fx.leader_for(b1, 2);
  std::vector<NodeId> e2, e3;
  for (NodeId u = 0; u < 16 && e2.size() < 7; ++u)
    if (u != l2) e2.push_back(u);
  uint32_t b2 = fx.extend_raw(b1, 2, l2, b1, kNone, b1, kNone, e2);
  NodeId l3 = fx.leader_for(b2, 3);
  // Three endorsers shared with b2, four fresh ones.
  e3 = {e2[0], e2[1], e2[2]};
  for (NodeId u = 0; u < 16 && e3.size() < 7; ++u)
    if (u != l3 && std::find(e2.begin(), e2.end(), u) == e2.end()) e3.push_back(u);
  uint32_t b3 = fx.extend_raw(b2, 3, l3, b1, kNone, b1, kNone, e3);

  SignerSet expected;
  for (uint32_t blk : {b2, b3})
    for (NodeId u : fx.arena.signers(blk)) expected.add(u);
  CHECK(naive_count(fx, {b2, b3}, b1, b1, MsgType::Pc) == expected.count());
  CHECK(expected.count() < 16);  // genuinely overlapping
}

TEST_CASE("incremental chain tallies agree with the reference counter") {
  Fixture fx(10, 3, 10, 2, 7);
  uint32_t tip = BlockArena::kGenesisIdx;
  for (Round r = 1; r <= 12; ++r) tip = fx.extend(tip, r);

  auto chain = chain_of(fx, tip);
  for (uint32_t b : chain) {
    uint32_t view = fx.arena.nv_of(b);
    if (view == kNone) continue;
    const ViewSlot* slot = fx.arena.view_slot(tip, view);
    REQUIRE(slot != nullptr);
    CHECK(slot->nv_count == naive_count(fx, chain, view, view, MsgType::Nv));
    for (const auto& t : slot->pp)
      CHECK(t.count == naive_count(fx, chain, view, t.target, MsgType::Pp));
    for (const auto& t : slot->pc)
      CHECK(t.count == naive_count(fx, chain, view, t.target, MsgType::Pc));
    uint32_t cm = fx.arena.cm_of(b);
    if (cm != kNone) {
      const CmSlot* cs = fx.arena.cm_slot(tip, cm);
      REQUIRE(cs != nullptr);
      SignerSet set;
      for (uint32_t x : chain)
        if (fx.arena.cm_of(x) == cm)
          for (NodeId u : fx.arena.signers(x)) set.add(u);
      CHECK(cs->tally.count == set.count());
    }
  }
}

TEST_CASE("count monotonicity: extending the chain never decreases a count") {
  Fixture fx(10, 3, 10, 2, 3);
  uint32_t tip = BlockArena::kGenesisIdx;
  uint32_t prev_nv = kNone;
  uint32_t prev_count = 0;
  for (Round r = 1; r <= 10; ++r) {
    tip = fx.extend(tip, r);
    uint32_t view = fx.arena.nv_of(tip);
    if (view != kNone && view == prev_nv) {
      const ViewSlot* slot = fx.arena.view_slot(tip, view);
      REQUIRE(slot != nullptr);
      CHECK(slot->nv_count >= prev_count);
      prev_count = slot->nv_count;
    } else {
      prev_nv = view;
      prev_count = 0;
    }
  }
}

TEST_CASE("validate_block: honest block passes every check") {
  Fixture fx(8, 2, 8, 3);
  Block b = fx.make_block(BlockArena::kGenesisIdx, 1);
  auto rep = fx.arena.validate(b);
  CHECK(rep.status == ValidityReport::Status::Valid);
  CHECK(rep.leader_ok);
  CHECK(rep.round_epoch_ok);
  CHECK(rep.finality_ok);
  CHECK(rep.summary_sig_ok);
  CHECK(rep.collected_sig_ok);
  CHECK(rep.merkle_ok);
  CHECK(rep.endorsements_ok);
  CHECK(rep.ancestors_ok);
}

TEST_CASE("validate_block: d-1 endorsements fail the quorum check") {
  Fixture fx(8, 2, 8, 3);
  Block b = fx.make_block(BlockArena::kGenesisIdx, 1);
  b.endorsements.entries.pop_back();
  b.endorsements.leader_sig = fx.keys.sign(b.summary.leader, b.endorsements.entries_bytes());
  auto rep = fx.arena.validate(b);
  CHECK(rep.status == ValidityReport::Status::Invalid);
  CHECK(!rep.endorsements_ok);
  CHECK(rep.summary_sig_ok);  // the rest still holds
}

TEST_CASE("validate_block: permuted endorsement order is rejected") {
  Fixture fx(8, 2, 8, 3);
  Block b = fx.make_block(BlockArena::kGenesisIdx, 1);
  REQUIRE(b.endorsements.entries.size() >= 2);
  std::swap(b.endorsements.entries[0], b.endorsements.entries[1]);
  b.endorsements.leader_sig = fx.keys.sign(b.summary.leader, b.endorsements.entries_bytes());
  auto rep = fx.arena.validate(b);
  CHECK(!rep.endorsements_ok);
}

TEST_CASE("validate_block: vector disagreeing with the chain replay fails") {
  Fixture fx(8, 2, 8, 3);
  uint32_t b1 = fx.extend(BlockArena::kGenesisIdx, 1);
  Block bad = fx.make_block(b1, 2);
  bad.summary.finality.nv = fx.arena.hash_of(b1);
  if (bad.summary.finality.nv == fx.idx_digest(fx.arena.replay_after(b1).nv))
    bad.summary.finality.nv = fx.arena.hash_of(BlockArena::kGenesisIdx);
  bad.summary_sig = fx.keys.sign(bad.summary.leader, bad.summary.encode());
  // Re-endorse the altered summary so only the vector check can fail.
  for (auto& e : bad.endorsements.entries)
    e.summary_sig = fx.keys.sign(e.endorser, bad.summary.encode());
  bad.endorsements.leader_sig = fx.keys.sign(bad.summary.leader, bad.endorsements.entries_bytes());
  auto rep = fx.arena.validate(bad);
  CHECK(rep.status == ValidityReport::Status::Invalid);
  CHECK(!rep.finality_ok);
}

TEST_CASE("validate_block: unknown parent is pending, not invalid") {
  Fixture fx(8, 2, 8, 3);
  Block b = fx.make_block(BlockArena::kGenesisIdx, 1);
  b.summary.parent_link = hash_domain("nowhere", std::span<const uint8_t>{});
  auto rep = fx.arena.validate(b);
  CHECK(rep.status == ValidityReport::Status::Pending);
}

TEST_CASE("classification: in-round unique block is honest") {
  Fixture fx(8, 2, 8, 3);
  BlockStore store(0, 1000);
  store.ingest(BlockArena::kGenesisIdx, 0, fx.arena);
  uint32_t b1 = fx.extend(BlockArena::kGenesisIdx, 1);
  auto out = store.ingest(b1, 1, fx.arena);
  CHECK(out.stored);
  CHECK(!out.suspicious);
  CHECK(store.is_honest(b1));
}

TEST_CASE("classification: late arrival is suspicious") {
  Fixture fx(8, 2, 8, 3);
  BlockStore store(0, 1000);
  store.ingest(BlockArena::kGenesisIdx, 0, fx.arena);
  uint32_t b1 = fx.extend(BlockArena::kGenesisIdx, 1);
  auto out = store.ingest(b1, 3, fx.arena);  // round-1 block arriving in round 3
  CHECK(out.suspicious);
  CHECK(out.reason == Suspicion::LateArrival);
  CHECK(!store.is_honest(b1));
}

TEST_CASE("classification: two summaries from one leader mark both blocks suspicious") {
  Fixture fx(8, 2, 8, 3);
  BlockStore store(0, 1000);
  store.ingest(BlockArena::kGenesisIdx, 0, fx.arena);
  Block a = fx.make_block(BlockArena::kGenesisIdx, 1, 1);
  Block b = fx.make_block(BlockArena::kGenesisIdx, 1, 2);
  REQUIRE(a.summary.leader == b.summary.leader);
  uint32_t ia = fx.arena.insert(a);
  uint32_t ib = fx.arena.insert(b);
  auto oa = store.ingest(ia, 1, fx.arena);
  CHECK(!oa.suspicious);  // nothing conflicting yet
  auto ob = store.ingest(ib, 1, fx.arena);
  CHECK(ob.suspicious);
  CHECK(ob.reason == Suspicion::Equivocation);
  CHECK(std::find(ob.demoted.begin(), ob.demoted.end(), ia) != ob.demoted.end());
  CHECK(!store.is_honest(ia));
  CHECK(!store.is_honest(ib));
}

TEST_CASE("classification: a bare equivocating summary demotes the stored block") {
  Fixture fx(8, 2, 8, 3);
  BlockStore store(0, 1000);
  store.ingest(BlockArena::kGenesisIdx, 0, fx.arena);
  Block a = fx.make_block(BlockArena::kGenesisIdx, 1, 1);
  uint32_t ia = fx.arena.insert(a);
  store.ingest(ia, 1, fx.arena);
  CHECK(store.is_honest(ia));
  Block b = fx.make_block(BlockArena::kGenesisIdx, 1, 2);
  bool fresh = store.note_summary(b.summary.leader, 1, b.summary.hash());
  CHECK(fresh);
  auto demoted = store.demote_slot(b.summary.leader, 1);
  CHECK(demoted == std::vector<uint32_t>{ia});
  CHECK(!store.is_honest(ia));
}

TEST_CASE("candidates: always-normal history keeps honest blocks only") {
  Fixture fx(8, 2, 8, 3);
  BlockStore store(0, 1000);
  store.ingest(BlockArena::kGenesisIdx, 0, fx.arena);
  uint32_t b1 = fx.extend(BlockArena::kGenesisIdx, 1);
  uint32_t b2 = fx.extend(b1, 2);
  uint32_t b3 = fx.extend(b2, 3);
  store.ingest(b1, 1, fx.arena);
  store.ingest(b2, 2, fx.arena);
  store.ingest(b3, 5, fx.arena);  // late: suspicious

  ChainQuery q{&store, &fx.arena, Mode::Normal, BlockArena::kGenesisIdx, -1, true};
  auto cand = candidate_set(q);
  CHECK(std::find(cand.begin(), cand.end(), b2) != cand.end());
  CHECK(std::find(cand.begin(), cand.end(), b3) == cand.end());

  auto leaves = candidate_leaves(q);
  REQUIRE(leaves.size() == 1);
  CHECK(leaves[0] == b2);  // b3 is capped off by suspicion

  SUBCASE("abnormal mode considers all valid blocks") {
    q.mode = Mode::Abnormal;
    auto cand2 = candidate_set(q);
    CHECK(std::find(cand2.begin(), cand2.end(), b3) != cand2.end());
    auto leaves2 = candidate_leaves(q);
    REQUIRE(leaves2.size() == 1);
    CHECK(leaves2[0] == b3);
  }

  SUBCASE("disabling the honest filter behaves like abnormal mode") {
    q.honest_filter = false;
    auto leaves2 = candidate_leaves(q);
    CHECK(leaves2[0] == b3);
  }
}

TEST_CASE("candidates: valid-but-late block received in an abnormal stretch is retained") {
  // Hand-evaluated three-round schedule: the block arrives late during an
  // abnormal round; once the mode is normal again, the window term keeps
  // every block that arrived at or before the boundary round.
  Fixture fx(8, 2, 8, 3);
  BlockStore store(0, 1000);
  store.ingest(BlockArena::kGenesisIdx, 0, fx.arena);
  uint32_t b1 = fx.extend(BlockArena::kGenesisIdx, 1);
  uint32_t b2 = fx.extend(b1, 2);
  store.ingest(b1, 1, fx.arena);
  store.ingest(b2, 4, fx.arena);  // late by two rounds, during the abnormal stretch

  ChainQuery q{&store, &fx.arena, Mode::Normal, BlockArena::kGenesisIdx, 4, true};
  CHECK(is_candidate(q, b2));
  auto leaves = candidate_leaves(q);
  CHECK(leaves[0] == b2);

  // Had the stretch ended before the arrival, the block stays filtered.
  q.last_abnormal_round = 3;
  CHECK(!is_candidate(q, b2));
}

TEST_CASE("canonical chain: selection rules") {
  Fixture fx(8, 2, 8, 3);
  BlockStore store(0, 1000);
  store.ingest(BlockArena::kGenesisIdx, 0, fx.arena);

  // Equivocating round-1 leader creates two branches.
  Block a1 = fx.make_block(BlockArena::kGenesisIdx, 1, 1);
  Block b1 = fx.make_block(BlockArena::kGenesisIdx, 1, 2);
  uint32_t ia1 = fx.arena.insert(a1);
  uint32_t ib1 = fx.arena.insert(b1);
  store.ingest(ia1, 1, fx.arena);
  store.ingest(ib1, 1, fx.arena);

  ChainQuery q{&store, &fx.arena, Mode::Abnormal, BlockArena::kGenesisIdx, -1, true};

  SUBCASE("in normal mode both equivocating branches are filtered out") {
    ChainQuery q1{&store, &fx.arena, Mode::Normal, BlockArena::kGenesisIdx, -1, true};
    auto leaves = candidate_leaves(q1);
    CHECK(canonical_chain(q1, leaves) == BlockArena::kGenesisIdx);
  }

  SUBCASE("longer chain wins") {
    uint32_t a2 = fx.extend(ia1, 2);
    store.ingest(a2, 2, fx.arena);
    auto leaves = candidate_leaves(q);
    CHECK(canonical_chain(q, leaves) == a2);
  }

  SUBCASE("length tie goes to the newer tip") {
    uint32_t a2 = fx.extend(ia1, 2);
    uint32_t b3 = fx.extend(ib1, 3);
    store.ingest(a2, 2, fx.arena);
    store.ingest(b3, 3, fx.arena);
    auto leaves = candidate_leaves(q);
    REQUIRE(leaves.size() == 2);
    CHECK(canonical_chain(q, leaves) == b3);
  }

  SUBCASE("full tie goes to the first received") {
    Block a2 = fx.make_block(ia1, 2, 1);
    uint32_t ia2 = fx.arena.insert(a2);
    NodeId l2 = fx.leader_for(ib1, 2);
    auto committee = fx.committee_for(ib1, 2);
    committee.resize(3);
    const EngineState& rep = fx.arena.replay_after(ib1);
    uint32_t ib2 = fx.extend_raw(ib1, 2, l2, rep.nv, rep.pp, rep.pc, rep.cm, committee, 9);
    store.ingest(ib2, 2, fx.arena);  // arrives first
    store.ingest(ia2, 2, fx.arena);
    auto leaves = candidate_leaves(q);
    REQUIRE(leaves.size() == 2);
    CHECK(canonical_chain(q, leaves) == ib2);
  }
}

TEST_CASE("canonical chain always contains fn") {
  Fixture fx(8, 2, 8, 3);
  BlockStore store(0, 1000);
  store.ingest(BlockArena::kGenesisIdx, 0, fx.arena);
  uint32_t b1 = fx.extend(BlockArena::kGenesisIdx, 1);
  uint32_t b2 = fx.extend(b1, 2);
  store.ingest(b1, 1, fx.arena);
  store.ingest(b2, 2, fx.arena);
  // A conflicting branch that is longer but does not contain fn = b1.
  Block alt = fx.make_block(BlockArena::kGenesisIdx, 1, 5);
  uint32_t ialt = fx.arena.insert(alt);
  store.ingest(ialt, 1, fx.arena);
  uint32_t alt2 = fx.extend(ialt, 3);
  uint32_t alt3 = fx.extend(alt2, 4);
  store.ingest(alt2, 3, fx.arena);
  store.ingest(alt3, 4, fx.arena);

  ChainQuery q{&store, &fx.arena, Mode::Abnormal, b1, -1, true};
  auto leaves = candidate_leaves(q);
  uint32_t tip = canonical_chain(q, leaves);
  CHECK(fx.arena.same_or_ancestor(b1, tip));
  CHECK(tip == b2);  // the longer branch conflicts fn and is excluded
}

TEST_CASE("pending blocks: deferred until the parent arrives, dropped after the ttl") {
  Fixture fx(8, 2, 8, 3);
  BlockStore store(0, 5);
  store.ingest(BlockArena::kGenesisIdx, 0, fx.arena);
  uint32_t b1 = fx.extend(BlockArena::kGenesisIdx, 1);
  Block b2 = fx.make_block(b1, 2);

  store.defer(b2, 2);
  CHECK(store.pending_count() == 1);
  auto ready = store.take_ready(fx.arena.hash_of(b1));
  REQUIRE(ready.size() == 1);
  CHECK(block_hash(ready[0].summary, ready[0].endorsements) ==
        block_hash(b2.summary, b2.endorsements));
  CHECK(store.pending_count() == 0);

  store.defer(b2, 2);
  store.expire_pending(20);
  CHECK(store.pending_count() == 0);
}
