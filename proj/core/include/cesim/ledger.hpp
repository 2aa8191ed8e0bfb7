#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "cesim/finality.hpp"
#include "cesim/types.hpp"

namespace cesim {

inline constexpr uint32_t kNoHeight = 0xffffffffu;

// Set of node ids, fixed capacity. Insertions stop mattering past the largest
// quorum we ever test against, so exact membership is kept the whole way.
class SignerSet {
 public:
  static constexpr uint32_t kMaxNodes = 512;

  void add(NodeId u) { words_[u >> 6] |= (1ull << (u & 63)); }
  bool test(NodeId u) const { return (words_[u >> 6] >> (u & 63)) & 1; }
  uint32_t count() const;
  void merge(const SignerSet& o) {
    for (size_t i = 0; i < words_.size(); ++i) words_[i] |= o.words_[i];
  }

 private:
  std::array<uint64_t, kMaxNodes / 64> words_{};
};

// Running tally of one (message type, view, target) stream along a chain.
// Heights are chain heights: "quorum_height = h" means the chain prefix up to
// height h already contains 2f+1 distinct signers for this pair.
struct PairTally {
  uint32_t target = kNone;
  SignerSet signers;
  uint16_t count = 0;
  uint32_t first_height = kNoHeight;
  uint32_t f1_height = kNoHeight;
  uint32_t quorum_height = kNoHeight;
};

// Per-chain aggregation of all messages carried in one view. Slots form an
// immutable list shared structurally between a block and its parent, newest
// first.
struct ViewSlot {
  uint32_t view = kNone;
  Round view_round = 0;
  SignerSet nv_signers;
  uint16_t nv_count = 0;
  uint32_t nv_first_height = kNoHeight;
  uint32_t nv_quorum_height = kNoHeight;  // view certification position
  std::vector<PairTally> pp;
  std::vector<PairTally> pc;
  std::shared_ptr<const ViewSlot> older;
};

// View-agnostic commit-message tallies, same sharing scheme.
struct CmSlot {
  PairTally tally;
  std::shared_ptr<const CmSlot> older;
};

struct ValidityReport {
  enum class Status : uint8_t { Valid, Invalid, Pending };
  Status status = Status::Pending;
  bool leader_ok = false;
  bool round_epoch_ok = false;
  bool finality_ok = false;
  bool summary_sig_ok = false;
  bool collected_sig_ok = false;
  bool merkle_ok = false;
  bool txs_ok = false;
  bool endorsements_ok = false;
  bool ancestors_ok = false;
  std::string reason;
};

struct ArenaParams {
  uint32_t n = 0;
  uint32_t f = 0;
  uint32_t c = 0;
  uint32_t d = 0;
  uint32_t epoch_length = 100;
  uint32_t tau0 = 2;
  uint32_t tau1 = 10;
  Digest genesis_beacon;
};

// Global, append-only store of every block seen anywhere in a scenario.
// Blocks are immutable and chain-indexed; everything derivable from the chain
// alone (validity, the replayed finality vector, message tallies) is computed
// once here and shared by all simulated nodes.
class BlockArena {
 public:
  static constexpr uint32_t kGenesisIdx = 0;

  BlockArena(ArenaParams p, const KeyRegistry* keys);

  uint32_t size() const { return static_cast<uint32_t>(meta_.size()); }
  const ArenaParams& params() const { return params_; }
  const KeyRegistry* keys() const { return keys_; }

  std::optional<uint32_t> find(const Digest& h) const;
  // Parent must already be present; idempotent per block hash.
  uint32_t insert(const Block& b);

  // Meta accessors.
  const Digest& hash_of(uint32_t idx) const { return meta_[idx].hash; }
  uint32_t parent(uint32_t idx) const { return meta_[idx].parent; }
  uint32_t height(uint32_t idx) const { return meta_[idx].height; }
  Round round(uint32_t idx) const { return meta_[idx].round; }
  NodeId leader_of(uint32_t idx) const { return meta_[idx].leader; }
  uint32_t nv_of(uint32_t idx) const { return meta_[idx].nv; }
  uint32_t pp_of(uint32_t idx) const { return meta_[idx].pp; }
  uint32_t pc_of(uint32_t idx) const { return meta_[idx].pc; }
  uint32_t cm_of(uint32_t idx) const { return meta_[idx].cm; }
  std::span<const NodeId> signers(uint32_t idx) const { return meta_[idx].signers; }
  bool is_valid(uint32_t idx) const { return meta_[idx].valid; }
  const ValidityReport& report(uint32_t idx) const { return meta_[idx].report; }
  const Block& full_block(uint32_t idx) const { return blocks_[idx]; }
  const Digest& endorsement_hash(uint32_t idx) const { return meta_[idx].endorsement_hash; }

  // Chain-replay finality state: what a node following exactly this chain
  // holds after ingesting the block. A valid child must carry its pruned part.
  const EngineState& replay_after(uint32_t idx) const { return meta_[idx].replay; }
  const PcLock& replay_lock(uint32_t idx) const { return meta_[idx].replay_lock; }

  // Ancestry (binary lifting).
  uint32_t ancestor_at_height(uint32_t idx, uint32_t h) const;
  bool same_or_ancestor(uint32_t anc, uint32_t desc) const;
  // Neither block lies on the other's chain. kNone (b0) never conflicts.
  bool conflicts(uint32_t a, uint32_t b) const;
  // The deepest ancestor of `idx` with round strictly below `cutoff`, kNone if none.
  uint32_t last_ancestor_before_round(uint32_t idx, int64_t cutoff) const;

  // Beacon for an epoch as derivable from the finalized prefix ending at fn_idx.
  BeaconResult beacon_for(uint32_t fn_idx, Epoch epoch) const;

  // Chain tallies of the chain ending at `tip`.
  const ViewSlot* view_slot(uint32_t tip, uint32_t view) const;
  const ViewSlot* slots_head(uint32_t tip) const { return meta_[tip].slots.get(); }
  const CmSlot* cm_slot(uint32_t tip, uint32_t target) const;
  Round max_cert_round(uint32_t tip) const { return meta_[tip].max_cert_round; }

  uint32_t quorum() const { return 2 * params_.f + 1; }
  uint32_t f1() const { return params_.f + 1; }

  // Validates a block against its chain without inserting it. Pending when
  // the parent is unknown.
  ValidityReport validate(const Block& b) const;

 private:
  struct Meta {
    Digest hash;
    uint32_t parent = kNone;
    uint32_t height = 0;
    Round round = 0;
    Epoch epoch = 0;
    NodeId leader = 0;
    uint32_t nv = kNone, pp = kNone, pc = kNone, cm = kNone;
    std::vector<NodeId> signers;
    Digest endorsement_hash;
    std::shared_ptr<const ViewSlot> slots;
    std::shared_ptr<const CmSlot> cm_slots;
    Round max_cert_round = 0;
    EngineState replay;
    PcLock replay_lock;
    bool valid = false;
    ValidityReport report;
    std::vector<uint32_t> anc;  // 2^j-th ancestors
  };

  uint32_t resolve(const Digest& h) const;  // kNone when absent or b0
  void build_tallies(Meta& m, const Meta& parent_meta);
  void build_replay(Meta& m, const Meta& parent_meta, uint32_t self_idx);

  ArenaParams params_;
  const KeyRegistry* keys_;
  std::vector<Meta> meta_;
  std::vector<Block> blocks_;
  std::unordered_map<Digest, uint32_t, DigestHash> by_hash_;
};

enum class MsgType : uint8_t { Nv, Pp, Pc, Cm };

// Straightforward message counter over an explicit block collection: the
// number of distinct leaders and committee members signing blocks B in the
// collection with tp(B) = target and (when view != kNone) nv(B) = view. This
// is the reference implementation the incremental tallies are tested against.
uint32_t count_messages(const BlockArena& arena, std::span<const uint32_t> blocks, uint32_t view,
                        uint32_t target, MsgType type);

enum class Suspicion : uint8_t { LateArrival, Equivocation };

struct ArrivalInfo {
  Round round = 0;
  uint64_t seq = 0;
};

// Per-node block bookkeeping: arrivals, validity, honesty classification and
// the pending queue for blocks whose parents have not arrived yet.
class BlockStore {
 public:
  BlockStore(NodeId owner, uint32_t orphan_ttl_rounds);

  NodeId owner() const { return owner_; }

  // Bare summary sighting; returns true when this created fresh equivocation
  // evidence for (leader, round).
  bool note_summary(NodeId leader, Round round, const Digest& summary_hash);

  struct IngestOutcome {
    bool stored = false;               // accepted into the valid set
    bool suspicious = false;
    std::optional<Suspicion> reason;
    std::vector<uint32_t> demoted;     // previously honest blocks retroactively demoted
  };
  IngestOutcome ingest(uint32_t idx, Round arrival_round, BlockArena& arena);

  // Retroactive demotion when equivocation evidence shows up after the fact
  // (a conflicting bare summary, typically). Past decisions stay as they were;
  // only future candidate selection sees the change.
  std::vector<uint32_t> demote_slot(NodeId leader, Round round);

  // Pending management. Blocks are retried when their parent arrives and
  // dropped after the orphan TTL.
  void defer(const Block& blk, Round first_seen);
  std::vector<Block> take_ready(const Digest& parent_hash);
  void expire_pending(Round now);
  size_t pending_count() const { return pending_by_parent_.size(); }

  bool received(uint32_t idx) const { return arrivals_.count(idx) != 0; }
  const ArrivalInfo* arrival(uint32_t idx) const;
  bool is_honest(uint32_t idx) const { return received(idx) && !suspicion_.count(idx); }
  std::optional<Suspicion> suspicion(uint32_t idx) const;
  const std::set<uint32_t>& valid_set() const { return valid_; }
  const std::set<uint32_t>& tips() const { return tips_; }

  // Visits suspicious blocks whose arrival round is strictly later than r.
  template <class F>
  void for_each_suspicious_after(int64_t r, F f) const {
    auto it = r < 0 ? suspicious_by_arrival_.begin()
                    : suspicious_by_arrival_.upper_bound(static_cast<Round>(r));
    for (; it != suspicious_by_arrival_.end(); ++it)
      for (uint32_t idx : it->second) f(idx);
  }

  // Structured dump for trace post-processing.
  struct Record {
    uint32_t idx;
    Round arrival_round;
    uint64_t arrival_seq;
    bool honest;
  };
  std::vector<Record> dump() const;

 private:
  void mark_suspicious(uint32_t idx, Suspicion why);

  NodeId owner_;
  uint32_t orphan_ttl_;
  uint64_t next_seq_ = 0;
  std::unordered_map<uint32_t, ArrivalInfo> arrivals_;
  std::set<uint32_t> valid_;
  std::map<uint32_t, Suspicion> suspicion_;
  std::map<Round, std::vector<uint32_t>> suspicious_by_arrival_;
  std::set<uint32_t> tips_;
  // (leader, round) -> distinct summary hashes seen, plus blocks stored under it
  std::map<std::pair<NodeId, Round>, std::vector<Digest>> summaries_;
  std::map<std::pair<NodeId, Round>, std::vector<uint32_t>> blocks_by_slot_;
  std::multimap<Digest, std::pair<Block, Round>> pending_by_parent_;
};

// Inputs for candidate selection and fork choice.
struct ChainQuery {
  const BlockStore* store = nullptr;
  const BlockArena* arena = nullptr;
  Mode mode = Mode::Normal;
  uint32_t fn_idx = BlockArena::kGenesisIdx;
  int64_t last_abnormal_round = -1;  // r' in the window rule; -1 = never
  bool honest_filter = true;         // ablation switch for the honest-block rule
};

// Candidate predicate. The finalized prefix is always eligible; in normal
// mode a block qualifies when it arrived no later than the last abnormal
// round, or is classified honest.
bool is_candidate(const ChainQuery& q, uint32_t idx);

// Materialized candidate set (ordered by index). Intended for tests and
// small scenarios; the round loop works with leaves instead.
std::vector<uint32_t> candidate_set(const ChainQuery& q);

// Tips of maximal chains whose every block from fn upward is a candidate.
// Always non-empty (fn itself is the degenerate leaf).
std::vector<uint32_t> candidate_leaves(const ChainQuery& q);

// Fork choice over candidate chains through fn: longest chain, then newest
// tip, then earliest arrival, then smallest hash. Returns the tip index.
uint32_t canonical_chain(const ChainQuery& q, std::span<const uint32_t> leaves);

}  // namespace cesim
