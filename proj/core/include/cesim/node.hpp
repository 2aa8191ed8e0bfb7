#pragma once

#include <deque>
#include <unordered_map>
#include <variant>

#include "cesim/ledger.hpp"

namespace cesim {

// Block parts on the wire. A block is never sent whole: transactions travel
// with the signed summary, the collected endorsement follows once the leader
// has its quorum, and receivers assemble the matching parts.
struct SummaryMsg {
  BlockSummary summary;
  Digest sig;
  std::vector<TxId> txs;
};

struct EndorsementMsg {
  Digest summary_hash;
  Endorsement endorsement;
};

struct CollectedMsg {
  Digest summary_hash;
  CollectedEndorsement collected;
};

struct Message {
  NodeId from = 0;
  Round round = 0;
  std::variant<SummaryMsg, EndorsementMsg, CollectedMsg> body;
};

struct Outgoing {
  Message msg;
  bool broadcast = true;
  NodeId to = 0;         // unicast target when !broadcast
  int64_t at_tick = -1;  // -1: send immediately
};

// Simulator-side observer for everything a node decides.
struct NodeHooks {
  virtual ~NodeHooks() = default;
  virtual void on_finality_transition(NodeId, Round, const EngineState& was,
                                      const EngineState& now, uint16_t fired) {}
  virtual void on_fn_advance(NodeId, Round, uint32_t tip, uint32_t old_fn, uint32_t new_fn) {}
  virtual void on_fn_conflict(NodeId, Round) {}
  virtual void on_confirm(NodeId, Round, uint32_t block, uint32_t height) {}
  virtual void on_suspicious(NodeId, Round, uint32_t block, Suspicion) {}
  virtual void on_skip(NodeId, Round) {}
  virtual void on_mode_change(NodeId, Round, Mode) {}
  virtual void on_beacon_fallback(NodeId, Epoch) {}
  virtual void on_reorg(NodeId, Round, uint32_t depth) {}
  virtual void on_block_completed(NodeId, Round, const Digest& h) {}
  virtual void on_endorse_reject(NodeId, Round, const char* why) {}
};

struct NodeConfig {
  uint32_t n = 4, f = 0, c = 4, d = 1;
  uint32_t epoch_length = 100;
  uint32_t confirm_depth = 7;
  uint32_t mode_window = 5;
  uint32_t orphan_ttl_rounds = 1000;
  uint32_t txs_per_block = 4;
  bool honest_filter = true;
  // Test-only fault: pins fn to the canonical tip, deliberately breaking the
  // finality rules so the safety monitor's trip path can be exercised.
  bool fault_fn_follows_tip = false;
};

struct PcSendRecord {
  Round round;
  uint32_t view;
  uint32_t target;
};

// One node's full consensus state and round driver. The round entry point
// covers mode switching, candidate selection, fork choice, the finality
// update, role determination and the leader broadcast; everything else is
// message-driven.
class ConsensusNode {
 public:
  ConsensusNode(NodeId id, const NodeConfig& cfg, BlockArena* arena, const KeyRegistry* keys,
                NodeHooks* hooks);

  NodeId id() const { return id_; }

  // Main round entry. `ping_responders` is the number of probed nodes that
  // answered in time this round.
  std::vector<Outgoing> begin_round(Round r, uint32_t ping_responders);
  void end_round(Round r);

  // Message handlers. `on_summary` records evidence and caches parts; the
  // endorsement decision runs later, inside the round's endorsement window.
  std::vector<Outgoing> on_summary(Round now_round, const Message& m);
  std::vector<Outgoing> on_endorse_window(Round now_round, const Digest& summary_hash);
  std::vector<Outgoing> on_endorsement(Round now_round, const Message& m);
  std::vector<Outgoing> on_collected(Round now_round, const Message& m);

  // Role of this node for a round, from the epoch beacon and its VRF.
  RoleSet determine_role(Round r);
  const Digest& beacon(Epoch e);
  VrfOutput round_vrf(Round r);
  // Nodes this round's connectivity probe targets.
  std::vector<NodeId> ping_targets(Round r);

  Mode mode() const { return mode_; }
  RoleSet role() const { return role_; }
  uint32_t canonical_tip() const { return tip_; }
  const EngineState& finality() const { return fin_; }
  uint32_t fn_block() const { return fin_.fn; }
  int64_t last_abnormal_round() const { return last_abnormal_; }
  const BlockStore& store() const { return store_; }
  BlockStore& store_mut() { return store_; }
  const std::vector<PcSendRecord>& pc_send_history() const { return pc_sends_; }
  const BlockArena& arena() const { return *arena_; }
  bool is_block_confirmed(uint32_t idx) const;
  Round current_round() const { return round_; }

  // Assembled-block ingestion entry (also used by tests to feed blocks
  // directly). Runs validation, classification and the pending queue.
  void ingest_block(const Block& blk, Round arrival_round);

 private:
  struct Collecting {
    bool active = false;
    bool done = false;
    Digest summary_hash;
    BlockSummary summary;
    Digest sig;
    std::vector<TxId> txs;
    std::vector<Endorsement> entries;
    SignerSet seen;
  };

  struct Membership final : CandidateMembership {
    ChainQuery q;
    bool contains(uint32_t idx) const override { return is_candidate(q, idx); }
  };

  void update_mode_ring(Round r, uint32_t ping_responders);
  PcLock make_lock() const;
  void record_pc_send(Round r);
  void run_confirmations(Round r);
  void try_assemble(Round now_round, const Digest& summary_hash);
  std::vector<Outgoing> complete_collection(Round r);

  NodeId id_;
  NodeConfig cfg_;
  BlockArena* arena_;
  const KeyRegistry* keys_;
  NodeHooks* hooks_;

  BlockStore store_;
  EngineState fin_;
  uint32_t last_nonnull_pc_ = kNone;
  std::vector<PcSendRecord> pc_sends_;

  Mode mode_ = Mode::Normal;
  std::deque<bool> cnx_;
  int64_t last_abnormal_ = -1;

  Round round_ = 0;
  uint32_t tip_ = BlockArena::kGenesisIdx;
  RoleSet role_;
  Collecting collecting_;

  Epoch beacon_epoch_ = 0;
  bool beacon_ready_ = false;
  Digest beacon_;
  Round vrf_round_ = 0;
  bool vrf_ready_ = false;
  VrfOutput vrf_;

  Round endorsed_round_ = 0;
  bool endorsed_this_round_ = false;

  std::unordered_map<Digest, SummaryMsg, DigestHash> summary_cache_;
  std::unordered_map<Digest, CollectedMsg, DigestHash> collected_cache_;

  std::vector<uint32_t> confirmed_at_;  // height -> block idx
  uint32_t confirm_watermark_ = 0;
  uint32_t recheck_from_ = kNoHeight;
};

}  // namespace cesim
