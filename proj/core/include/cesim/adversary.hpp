#pragma once

#include <map>
#include <unordered_map>

#include "cesim/config.hpp"
#include "cesim/node.hpp"

namespace cesim {

// Network situation of one round, as ground truth (what the schedule says,
// not what nodes infer).
struct Situation {
  const AbnormalWindow* window = nullptr;
  bool normal() const { return window == nullptr; }
  uint8_t side_of(NodeId u) const {
    return (window != nullptr && u < window->side.size()) ? window->side[u] : 0;
  }
  bool partitioned(NodeId a, NodeId b) const {
    return window != nullptr && window->has_partition() && side_of(a) != side_of(b);
  }
};

// Shared coordinator for all adversarial nodes: the strongest collusion the
// model permits is one controller holding the whole set's keys. Strategies
// only read their own nodes' shadows and the messages those nodes received.
class AdversaryCoordinator {
 public:
  AdversaryCoordinator(const ScenarioConfig& cfg, const KeyRegistry* keys, BlockArena* arena);

  void register_shadow(NodeId u, ConsensusNode* shadow);
  bool is_member(NodeId u) const { return member_.count(u) != 0; }
  size_t member_count() const { return member_.size(); }
  bool responds_to_ping(NodeId, Round) const { return true; }

  // Rewrites / replaces the shadow's honest actions. `honest` are the actions
  // the node would have taken; the result is what actually goes out.
  std::vector<Outgoing> filter(NodeId u, Round r, const Situation& sit,
                               std::vector<Outgoing> honest, uint64_t now,
                               uint64_t round_start, uint64_t ticks_per_round);

  // Observes a delivery to an adversarial node before the shadow sees it;
  // used to collect endorsements addressed to strategy-made summaries.
  std::vector<Outgoing> observe_delivery(NodeId u, Round r, const Message& m,
                                         const Situation& sit, uint64_t now,
                                         uint64_t round_start, uint64_t ticks_per_round);

  uint64_t actions_taken() const { return actions_; }

 private:
  std::vector<Outgoing> colliding_leader(NodeId u, Round r, std::vector<Outgoing> honest,
                                         uint64_t round_start, uint64_t ticks_per_round);
  std::vector<Outgoing> partition_split(NodeId u, Round r, const Situation& sit,
                                        std::vector<Outgoing> honest, uint64_t now);

  // Committee members among the adversary set for round r, judged with the
  // given beacon; sorted by public key.
  std::vector<NodeId> colluding_committee(Round r, const Digest& beacon) const;
  Endorsement make_endorsement(NodeId v, const BlockSummary& s, const Digest& beacon,
                               Round r) const;

  const ScenarioConfig* cfg_;
  const KeyRegistry* keys_;
  BlockArena* arena_;
  std::map<NodeId, ConsensusNode*> member_;
  uint64_t actions_ = 0;

  // partition-collusion collection state, keyed by summary hash
  struct SplitCollect {
    BlockSummary summary;
    Digest sig;
    std::vector<TxId> txs;
    uint8_t side = 0;
    std::vector<Endorsement> entries;
    SignerSet seen;
    bool done = false;
  };
  std::unordered_map<Digest, SplitCollect, DigestHash> splits_;
};

}  // namespace cesim
