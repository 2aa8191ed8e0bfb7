#include <doctest.h>

#include "support/fixture.hpp"

using namespace cesim;
using cesim::test::AllCandidates;
using cesim::test::Fixture;
using cesim::test::inputs_for;

TEST_CASE("bootstrap: the chain replay adopts genesis as the first view") {
  Fixture fx(4, 0, 4, 1);
  const EngineState& s = fx.arena.replay_after(BlockArena::kGenesisIdx);
  CHECK(s.nv == BlockArena::kGenesisIdx);
  CHECK(s.pp == kNone);
  CHECK(s.pc == kNone);
  CHECK(s.cm == kNone);
  CHECK(s.fn == BlockArena::kGenesisIdx);
}

TEST_CASE("update is a fixed point when nothing new arrives") {
  Fixture fx(4, 0, 4, 1);
  AllCandidates all;
  uint32_t leaves[1] = {BlockArena::kGenesisIdx};
  auto in = inputs_for(fx, leaves, BlockArena::kGenesisIdx, &all);
  EngineState s0 = fx.arena.replay_after(BlockArena::kGenesisIdx);
  auto out = update_finality(s0, fx.arena.replay_lock(BlockArena::kGenesisIdx), in);
  CHECK(out.state == s0);
}

TEST_CASE("single-signer quorum: the chained three-phase pipeline") {
  // With f = 0 a single block certifies everything it carries, so from the
  // fourth block on the replay walks the textbook pattern: the tip is the
  // view, its parent prepared, the grandparent pre-committed, and the block
  // three back committed and finalized.
  Fixture fx(4, 0, 4, 1);
  std::vector<uint32_t> chain{BlockArena::kGenesisIdx};
  for (Round r = 1; r <= 10; ++r) chain.push_back(fx.extend(chain.back(), r));

  for (size_t i = 4; i < chain.size(); ++i) {
    const EngineState& s = fx.arena.replay_after(chain[i]);
    CHECK(s.nv == chain[i]);
    CHECK(s.pp == chain[i - 1]);
    CHECK(s.pc == chain[i - 2]);
    CHECK(s.cm == chain[i - 3]);
    CHECK(s.fn == chain[i - 3]);
  }
  // Warm-up: the first commit lands on genesis.
  CHECK(fx.arena.replay_after(chain[3]).cm == BlockArena::kGenesisIdx);
}

TEST_CASE("two-block generations: nv, pp, pc quorums accumulate then commit") {
  // f = 1 wants 2f+1 = 3 distinct signers; each block carries two (leader and
  // one endorser), so quorums complete every other block. The golden points
  // below were hand-stepped through the rule groups.
  Fixture fx(6, 1, 6, 1, 11);
  std::vector<uint32_t> chain{BlockArena::kGenesisIdx};
  // Alternate disjoint signer pairs so two consecutive blocks always carry
  // four distinct signers.
  for (Round r = 1; r <= 12; ++r) {
    uint32_t parent = chain.back();
    NodeId leader = fx.leader_for(parent, r);
    NodeId endorser = (leader + 1 + (r % 2)) % 6;
    const EngineState& rep = fx.arena.replay_after(parent);
    chain.push_back(
        fx.extend_raw(parent, r, leader, rep.nv, rep.pp, rep.pc, rep.cm, {endorser}));
  }

  // Views certify every second block; the pipeline needs three quorums.
  CHECK(fx.arena.replay_after(chain[2]).pp == BlockArena::kGenesisIdx);
  const EngineState& s4 = fx.arena.replay_after(chain[4]);
  CHECK(s4.pc == BlockArena::kGenesisIdx);
  const EngineState& s6 = fx.arena.replay_after(chain[6]);
  CHECK(s6.cm == BlockArena::kGenesisIdx);

  // First real finalization: the block whose pc quorum completed.
  bool finalized_past_genesis = false;
  for (size_t i = 7; i < chain.size(); ++i)
    finalized_past_genesis =
        finalized_past_genesis || fx.arena.replay_after(chain[i]).fn != BlockArena::kGenesisIdx;
  CHECK(finalized_past_genesis);
  const EngineState& last = fx.arena.replay_after(chain.back());
  CHECK(fx.arena.same_or_ancestor(last.fn, chain.back()));
  CHECK(last.fn != BlockArena::kGenesisIdx);
}

TEST_CASE("find_rtpc: prepare quorum in one view with no later views") {
  Fixture fx(4, 0, 4, 1);
  uint32_t b1 = fx.extend(BlockArena::kGenesisIdx, 1);
  uint32_t b2 = fx.extend(b1, 2);
  AllCandidates all;
  uint32_t leaves[1] = {b2};
  auto in = inputs_for(fx, leaves, b2, &all);
  // b2 carries nv=b1, pp=genesis: the view b1 holds a prepare quorum for
  // genesis and nothing is later, so genesis is ready to pre-commit.
  CHECK(fx.arena.nv_of(b2) == b1);
  CHECK(fx.arena.pp_of(b2) == BlockArena::kGenesisIdx);
  CHECK(find_rtpc(in) == BlockArena::kGenesisIdx);
}

TEST_CASE("find_rtpc: a later certified view without the pre-commit disqualifies") {
  Fixture fx(6, 1, 6, 2, 5);
  // Main chain: blocks carry nv=b1, pp=genesis until the quorum lands.
  uint32_t b1 = fx.extend(BlockArena::kGenesisIdx, 1);
  uint32_t b2 = fx.extend(b1, 2);
  uint32_t b3 = fx.extend(b2, 3);
  AllCandidates all;
  {
    uint32_t leaves[1] = {b3};
    auto in = inputs_for(fx, leaves, b3, &all);
    CHECK(find_rtpc(in) == BlockArena::kGenesisIdx);
  }
  // Fork: a later view f1 certified by two raw blocks carrying no pc at all.
  uint32_t f1 = fx.extend_raw(b1, 4, 0, b1, kNone, kNone, kNone, {1, 2});
  uint32_t f2 = fx.extend_raw(f1, 5, 3, f1, kNone, kNone, kNone, {4, 5});
  uint32_t f3 = fx.extend_raw(f2, 6, 1, f1, kNone, kNone, kNone, {0, 2});
  (void)f3;
  {
    uint32_t leaves[2] = {b3, f3};
    auto in = inputs_for(fx, leaves, b3, &all);
    // The fork certifies view f1 (rounds 5-6 signers: 3,4,5,1,0,2 minus
    // overlap is at least 3 = 2f+1) with zero pre-commits for genesis.
    const ViewSlot* s = fx.arena.view_slot(f3, f1);
    REQUIRE(s != nullptr);
    REQUIRE(s->nv_quorum_height != kNoHeight);
    CHECK(find_rtpc(in) == kNone);
  }
}

TEST_CASE("find_rtpc: two chains preparing different blocks; the later view carries "
          "the earlier block's pre-commit") {
  // Chain X certifies view vx preparing X; chain Y certifies the later view
  // vy preparing Y but also carries pre-commits for X. Y fails the
  // no-conflicting-pre-commit test inside vy, X passes the later-view test
  // through those same pre-commits: X wins.
  Fixture fx(8, 1, 8, 2, 13);
  uint32_t x = fx.extend_raw(BlockArena::kGenesisIdx, 1, 0, kNone, kNone, kNone, kNone, {1});
  uint32_t vx = fx.extend_raw(x, 2, 2, kNone, kNone, kNone, kNone, {3});
  uint32_t x3 = fx.extend_raw(vx, 3, 4, vx, x, kNone, kNone, {5});
  uint32_t x4 = fx.extend_raw(x3, 4, 6, vx, x, kNone, kNone, {7, 0});

  uint32_t y = fx.extend_raw(BlockArena::kGenesisIdx, 5, 1, kNone, kNone, kNone, kNone, {2});
  uint32_t vy = fx.extend_raw(y, 6, 3, kNone, kNone, kNone, kNone, {4});
  uint32_t y3 = fx.extend_raw(vy, 7, 5, vy, y, x, kNone, {6});
  uint32_t y4 = fx.extend_raw(y3, 8, 7, vy, y, x, kNone, {0, 1});

  AllCandidates all;
  uint32_t leaves[2] = {x4, y4};
  auto in = inputs_for(fx, leaves, y4, &all);
  // Sanity: both views certified, both prepare quorums complete.
  REQUIRE(fx.arena.view_slot(x4, vx)->nv_quorum_height != kNoHeight);
  REQUIRE(fx.arena.view_slot(y4, vy)->nv_quorum_height != kNoHeight);
  CHECK(find_rtpc(in) == x);
}

TEST_CASE("pre-commit cases: lock compatibility and the escape view") {
  Fixture fx(8, 1, 8, 2, 17);
  // Main chain prepares m1 inside view m2 with a full quorum.
  uint32_t m1 = fx.extend_raw(BlockArena::kGenesisIdx, 1, 0, kNone, kNone, kNone, kNone, {1});
  uint32_t m2 = fx.extend_raw(m1, 2, 2, kNone, kNone, kNone, kNone, {3});
  uint32_t m3 = fx.extend_raw(m2, 3, 4, m2, m1, kNone, kNone, {5});
  uint32_t m4 = fx.extend_raw(m3, 4, 6, m2, m1, kNone, kNone, {7, 0});
  // A conflicting branch block the node is locked on.
  uint32_t fork = fx.extend_raw(BlockArena::kGenesisIdx, 1, 1, kNone, kNone, kNone, kNone, {2});

  AllCandidates all;
  uint32_t leaves[1] = {m4};
  auto in = inputs_for(fx, leaves, m4, &all);
  REQUIRE(find_rtpc(in) == m1);

  EngineState st;
  st.nv = m2;
  st.fn = BlockArena::kGenesisIdx;

  SUBCASE("case 1: no lock at all") {
    auto out = update_finality(st, PcLock{}, in);
    CHECK(out.state.pc == m1);
    CHECK((out.fired & kRulePcCase1) != 0);
  }
  SUBCASE("case 1: lock on a compatible block") {
    PcLock lock{BlockArena::kGenesisIdx, m1, true};
    auto out = update_finality(st, lock, in);
    CHECK(out.state.pc == m1);
  }
  SUBCASE("case 2: conflicting lock with an escape view") {
    // Locked on the fork block, lock view at round 1. View m2 (round 2) is
    // certified with no pre-commit for the fork: the node may switch.
    PcLock lock{fork, fork, true};
    auto out = update_finality(st, lock, in);
    CHECK(out.state.pc == m1);
    CHECK((out.fired & kRulePcCase2) != 0);
  }
  SUBCASE("unlock: conflicting lock with no escape view clears pc") {
    // Lock view round pushed past every certified view: no escape exists,
    // case 2 fails, and the unlock rule clears the stale pre-commit.
    PcLock lock{fork, m4, true};
    EngineState locked = st;
    locked.pc = fork;
    auto out = update_finality(locked, lock, in);
    CHECK(out.state.pc == kNone);
    CHECK((out.fired & kRulePcUnlock) != 0);
  }
}

TEST_CASE("fork recovery: pre-commits for the lighter branch finalize it and discard "
          "the heavy chain") {
  // The canonical chain keeps growing on the heavy branch while its blocks
  // carry pre-commits for a block on the light branch. Once those reach a
  // quorum inside one view, the light block commits; the heavy chain now
  // conflicts the finalized block and fork choice must abandon it.
  Fixture fx(8, 1, 8, 2, 23);
  uint32_t light = fx.extend_raw(BlockArena::kGenesisIdx, 1, 0, kNone, kNone, kNone, kNone, {1});

  uint32_t h1 = fx.extend_raw(BlockArena::kGenesisIdx, 2, 2, kNone, kNone, kNone, kNone, {3});
  uint32_t h2 = fx.extend_raw(h1, 3, 4, h1, kNone, kNone, kNone, {5});
  uint32_t h3 = fx.extend_raw(h2, 4, 6, h1, kNone, light, kNone, {7});
  uint32_t h4 = fx.extend_raw(h3, 5, 1, h1, kNone, light, kNone, {0, 3});

  AllCandidates all;
  uint32_t leaves[2] = {light, h4};
  auto in = inputs_for(fx, leaves, h4, &all);

  EngineState st;
  st.nv = h1;
  st.fn = BlockArena::kGenesisIdx;
  PcLock lock{light, h1, true};
  auto out = update_finality(st, lock, in);
  // 2f+1 pre-commit messages for the light block inside view h1 on the
  // canonical (heavy) chain: commit and finalize it.
  CHECK(out.state.cm == light);
  CHECK(out.state.fn == light);
  CHECK((out.fired & kRuleCmQuorum) != 0);

  // Fork choice with the new fn: the heavy branch conflicts and drops out.
  BlockStore store(0, 1000);
  store.ingest(BlockArena::kGenesisIdx, 0, fx.arena);
  for (uint32_t b : {light, h1, h2, h3, h4}) store.ingest(b, fx.arena.round(b), fx.arena);
  ChainQuery q{&store, &fx.arena, Mode::Abnormal, light, -1, true};
  auto cleaves = candidate_leaves(q);
  CHECK(canonical_chain(q, cleaves) == light);
}

TEST_CASE("commit catch-up: f+1 commit messages adopt a newer committed block") {
  Fixture fx(8, 1, 8, 2, 29);
  uint32_t b1 = fx.extend_raw(BlockArena::kGenesisIdx, 1, 0, kNone, kNone, kNone, kNone, {1});
  // Two blocks carrying cm = b1 from four distinct signers (f+1 = 2 suffices).
  uint32_t b2 = fx.extend_raw(b1, 2, 2, kNone, kNone, kNone, b1, {3});
  uint32_t b3 = fx.extend_raw(b2, 3, 4, kNone, kNone, kNone, b1, {5});
  AllCandidates all;
  uint32_t leaves[1] = {b3};
  auto in = inputs_for(fx, leaves, b3, &all);
  EngineState st;
  st.nv = b1;
  st.fn = BlockArena::kGenesisIdx;
  auto out = update_finality(st, PcLock{}, in);
  CHECK(out.state.cm == b1);
  CHECK((out.fired & kRuleCmCatchup) != 0);
  CHECK(out.state.fn == b1);
}

TEST_CASE("prepare rule refuses a view carrying a conflicting pre-commit") {
  Fixture fx(8, 1, 8, 2, 31);
  uint32_t fork = fx.extend_raw(BlockArena::kGenesisIdx, 1, 0, kNone, kNone, kNone, kNone, {1});
  uint32_t m1 = fx.extend_raw(BlockArena::kGenesisIdx, 2, 2, kNone, kNone, kNone, kNone, {3});
  // View m1 certified, but one of its blocks pre-commits the fork block,
  // which conflicts m1 itself.
  uint32_t m2 = fx.extend_raw(m1, 3, 4, m1, kNone, fork, kNone, {5});
  uint32_t m3 = fx.extend_raw(m2, 4, 6, m1, kNone, kNone, kNone, {7});
  AllCandidates all;
  uint32_t leaves[1] = {m3};
  auto in = inputs_for(fx, leaves, m3, &all);
  EngineState st;
  st.nv = m1;
  st.fn = BlockArena::kGenesisIdx;
  auto out = update_finality(st, PcLock{}, in);
  CHECK(out.state.pp != m1);
  CHECK((out.fired & kRulePpPrepare) == 0);
}

TEST_CASE("new-view rules: adopt newer, adopt tip on conflict, quorum promotes the tip") {
  Fixture fx(8, 1, 8, 2, 37);
  uint32_t a1 = fx.extend_raw(BlockArena::kGenesisIdx, 1, 0, kNone, kNone, kNone, kNone, {1});
  uint32_t a2 = fx.extend_raw(a1, 2, 2, a1, kNone, kNone, kNone, {3});
  uint32_t b1 = fx.extend_raw(BlockArena::kGenesisIdx, 3, 4, kNone, kNone, kNone, kNone, {5});

  AllCandidates all;

  SUBCASE("rule 1: newer view adopted from the tip") {
    uint32_t leaves[1] = {a2};
    auto in = inputs_for(fx, leaves, a2, &all);
    EngineState st;
    st.nv = BlockArena::kGenesisIdx;
    auto out = update_finality(st, PcLock{}, in);
    CHECK((out.fired & kRuleNvNewer) != 0);
  }
  SUBCASE("rule 2: conflicting view adopts the tip itself") {
    uint32_t leaves[1] = {a2};
    auto in = inputs_for(fx, leaves, a2, &all);
    EngineState st;
    st.nv = b1;  // conflicts a1
    auto out = update_finality(st, PcLock{}, in);
    CHECK((out.fired & kRuleNvConflict) != 0);
    CHECK(out.state.nv == a2);
  }
  SUBCASE("rule 3: a certified view promotes the tip and unlocks a conflicting prepare") {
    uint32_t a3 = fx.extend_raw(a2, 4, 6, a1, kNone, kNone, kNone, {7});
    uint32_t leaves[1] = {a3};
    auto in = inputs_for(fx, leaves, a3, &all);
    EngineState st;
    st.nv = a1;
    st.pp = b1;  // conflicts whatever the chain promotes
    auto out = update_finality(st, PcLock{}, in);
    CHECK((out.fired & kRuleNvQuorum) != 0);
    CHECK(out.state.nv == a3);
    CHECK(out.state.pp == kNone);
    CHECK((out.fired & kRulePpUnlock) != 0);
  }
}

TEST_CASE("is_final: genesis always, fn prefix only") {
  Fixture fx(4, 0, 4, 1);
  std::vector<uint32_t> chain{BlockArena::kGenesisIdx};
  for (Round r = 1; r <= 6; ++r) chain.push_back(fx.extend(chain.back(), r));
  const EngineState& s = fx.arena.replay_after(chain[6]);
  REQUIRE(s.fn == chain[3]);
  CHECK(is_final(s, BlockArena::kGenesisIdx, fx.arena));
  CHECK(is_final(s, chain[2], fx.arena));
  CHECK(is_final(s, chain[3], fx.arena));
  CHECK(!is_final(s, chain[4], fx.arena));  // descendant of fn, not yet committed
  CHECK(!is_final(s, kNone, fx.arena));
}

TEST_CASE("fn never regresses and never crosses to a conflicting branch") {
  Fixture fx(8, 1, 8, 2, 41);
  uint32_t main1 = fx.extend_raw(BlockArena::kGenesisIdx, 1, 0, kNone, kNone, kNone, kNone, {1});
  uint32_t fork1 = fx.extend_raw(BlockArena::kGenesisIdx, 2, 2, kNone, kNone, kNone, kNone, {3});
  // Blocks voting to commit the fork block while the node already finalized
  // main1: the engine must flag, not follow.
  uint32_t f2 = fx.extend_raw(fork1, 3, 4, kNone, kNone, kNone, fork1, {5});
  uint32_t f3 = fx.extend_raw(f2, 4, 6, kNone, kNone, kNone, fork1, {7});
  AllCandidates all;
  uint32_t leaves[1] = {f3};
  auto in = inputs_for(fx, leaves, f3, &all);
  EngineState st;
  st.nv = fork1;
  st.fn = main1;
  auto out = update_finality(st, PcLock{}, in);
  CHECK(out.state.fn == main1);
  CHECK(out.fn_conflict);
}
