#pragma once

#include <algorithm>
#include <vector>

#include "cesim/ledger.hpp"

namespace cesim::test {

// Arena + key registry harness for building chains by hand. `make_block`
// produces fully valid blocks the way an honest leader would; `make_raw_block`
// lets a test pick the carried finality vector and signer set freely (such
// blocks may be invalid, which the engine-level tests don't care about).
struct Fixture {
  uint32_t n, f, c, d;
  KeyRegistry keys;
  BlockArena arena;

  Fixture(uint32_t n_, uint32_t f_, uint32_t c_, uint32_t d_, uint64_t seed = 1)
      : n(n_),
        f(f_),
        c(c_),
        d(d_),
        keys(seed, n_),
        arena(ArenaParams{n_, f_, c_, d_, 100, 2, 10,
                          hash_domain("genesis-beacon",
                                      std::span<const uint8_t>{})},
              &keys) {}

  std::vector<uint8_t> alpha_for(uint32_t parent, Round r) {
    Epoch e = r / arena.params().epoch_length;
    Digest beacon = arena.beacon_for(arena.replay_after(parent).fn, e).beacon;
    Encoder enc;
    enc.put_digest(beacon);
    enc.put_u64(r);
    return enc.take();
  }

  NodeId leader_for(uint32_t parent, Round r) {
    return map_to_node(alpha_for(parent, r), n);
  }

  // Committee members for round r on the given chain, ascending by public key.
  std::vector<NodeId> committee_for(uint32_t parent, Round r) {
    auto alpha = alpha_for(parent, r);
    std::vector<NodeId> out;
    for (NodeId u = 0; u < n; ++u)
      if (committee_hit(keys.vrf_eval(u, alpha).beta, c, n)) out.push_back(u);
    std::sort(out.begin(), out.end(),
              [&](NodeId a, NodeId b) { return keys.public_key(a) < keys.public_key(b); });
    return out;
  }

  Digest idx_digest(uint32_t idx) {
    return idx == kNone ? kNullDigest : arena.hash_of(idx);
  }

  std::vector<TxId> make_txs(NodeId leader, Round r, uint64_t salt) {
    std::vector<TxId> txs;
    for (uint32_t i = 0; i < 3; ++i) {
      Encoder enc;
      enc.put_u64(leader);
      enc.put_u64(r);
      enc.put_u64(salt);
      enc.put_u64(i);
      txs.push_back(hash_domain("tx", enc.bytes()));
    }
    return txs;
  }

  // Honest block: correct leader, replay-consistent vector, d verifying
  // committee endorsements in key order.
  Block make_block(uint32_t parent, Round r, uint64_t salt = 0) {
    NodeId leader = leader_for(parent, r);
    const EngineState& rep = arena.replay_after(parent);
    PrunedFinalityVector pv{idx_digest(rep.nv), idx_digest(rep.pp), idx_digest(rep.pc),
                            idx_digest(rep.cm)};
    auto committee = committee_for(parent, r);
    committee.resize(std::min<size_t>(committee.size(), d));
    return make_raw_block(parent, r, leader, pv, committee, salt);
  }

  // Block with caller-chosen vector and endorser set. Endorsements are signed
  // for real; whether they verify as committee members depends on the round.
  Block make_raw_block(uint32_t parent, Round r, NodeId leader,
                       const PrunedFinalityVector& pv, std::vector<NodeId> endorsers,
                       uint64_t salt = 0) {
    Block b;
    b.summary.parent_link = arena.hash_of(parent);
    b.summary.epoch = r / arena.params().epoch_length;
    b.summary.round = r;
    b.txs = make_txs(leader, r, salt);
    b.summary.tx_root = merkle_root(b.txs);
    b.summary.finality = pv;
    b.summary.leader = leader;
    b.summary_sig = keys.sign(leader, b.summary.encode());
    auto alpha = alpha_for(parent, r);
    std::sort(endorsers.begin(), endorsers.end(),
              [&](NodeId a, NodeId bb) { return keys.public_key(a) < keys.public_key(bb); });
    for (NodeId u : endorsers) {
      Endorsement e;
      e.endorser = u;
      e.vrf_proof = keys.vrf_eval(u, alpha).proof;
      e.summary_sig = keys.sign(u, b.summary.encode());
      b.endorsements.entries.push_back(e);
    }
    b.endorsements.leader_sig = keys.sign(leader, b.endorsements.entries_bytes());
    return b;
  }

  uint32_t extend(uint32_t parent, Round r, uint64_t salt = 0) {
    return arena.insert(make_block(parent, r, salt));
  }

  // Raw-vector extension by arena indices (kNone = null pointer).
  uint32_t extend_raw(uint32_t parent, Round r, NodeId leader, uint32_t nv, uint32_t pp,
                      uint32_t pc, uint32_t cm, std::vector<NodeId> endorsers,
                      uint64_t salt = 0) {
    PrunedFinalityVector pv{idx_digest(nv), idx_digest(pp), idx_digest(pc), idx_digest(cm)};
    return arena.insert(make_raw_block(parent, r, leader, pv, std::move(endorsers), salt));
  }
};

// Simple membership wrapper for direct engine calls.
struct AllCandidates final : CandidateMembership {
  bool contains(uint32_t) const override { return true; }
};

inline FinalityInputs inputs_for(const Fixture& fx, std::span<const uint32_t> leaves,
                                 uint32_t tip, const CandidateMembership* member) {
  FinalityInputs in;
  in.arena = &fx.arena;
  in.leaves = leaves;
  in.canonical_tip = tip;
  in.quorum = 2 * fx.f + 1;
  in.f1 = fx.f + 1;
  in.membership = member;
  return in;
}

}  // namespace cesim::test
