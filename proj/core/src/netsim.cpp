#include "cesim/netsim.hpp"

#include <algorithm>
#include <ostream>
#include <queue>
#include <sstream>
#include <unordered_set>

namespace cesim {

namespace {

uint64_t draw_delay(const DetRng& rng, const DelaySpec& spec, uint64_t msg_id, NodeId to) {
  if (spec.kind == DelaySpec::Kind::Uniform)
    return rng.uniform(1, spec.max, "delay", msg_id, to);
  // Geometric with p = 1/2, capped; still content-independent.
  uint64_t d = 1;
  while (d < spec.max && (rng.draw("delay-geo", msg_id, to, d) & 1) != 0) ++d;
  return d;
}

}  // namespace

std::vector<DeliveryPlan> plan_deliveries(const ScenarioConfig& cfg, const DetRng& rng,
                                          uint64_t msg_id, NodeId from,
                                          std::span<const NodeId> targets, uint64_t send_tick,
                                          const Situation& sit,
                                          const std::vector<bool>& is_adversary) {
  const uint64_t T = cfg.ticks_per_round();
  const uint64_t round_end = (send_tick / T + 1) * T - 1;
  std::vector<DeliveryPlan> out;
  out.reserve(targets.size());
  for (NodeId v : targets) {
    DeliveryPlan p{v, 0, false};
    if (sit.normal()) {
      // Bounded by delta and kept inside the sending round: in the normal
      // situation a block broadcast in its round is received in its round.
      uint64_t d = rng.uniform(1, cfg.delta, "delay", msg_id, v);
      p.tick = std::min(send_tick + d, round_end);
    } else if (sit.partitioned(from, v) && !is_adversary[from] && !is_adversary[v]) {
      // Honest traffic does not cross a partition; adversaries arrange their
      // own connectivity.
      p.withheld = true;
    } else {
      p.tick = send_tick + draw_delay(rng, sit.window->delay, msg_id, v);
    }
    out.push_back(p);
  }
  return out;
}

std::string Metrics::to_json() const {
  std::ostringstream os;
  os << "{\"rounds\":" << rounds << ",\"blocks\":" << blocks
     << ",\"skipped_rounds\":" << skipped_rounds
     << ",\"suspicious_blocks\":" << suspicious_blocks << ",\"fork_rounds\":" << fork_rounds
     << ",\"max_fork_depth\":" << max_fork_depth << ",\"confirmations\":" << confirmations
     << ",\"conflicting_confirmations\":" << conflicting_confirmations
     << ",\"conflicting_finalizations\":" << conflicting_finalizations
     << ",\"fn_advances\":" << fn_advances << ",\"fn_gap_max\":" << fn_gap_max
     << ",\"finalization_lag_mean\":" << finalization_lag_mean
     << ",\"finalization_lag_max\":" << finalization_lag_max
     << ",\"confirmation_latency_mean\":" << confirmation_latency_mean
     << ",\"confirmation_latency_max\":" << confirmation_latency_max
     << ",\"mean_committee\":" << mean_committee
     << ",\"mode_false_negatives\":" << mode_false_negatives
     << ",\"mode_switches\":" << mode_switches << ",\"beacon_fallbacks\":" << beacon_fallbacks
     << ",\"replay_check_failures\":" << replay_check_failures
     << ",\"endorse_rejects\":" << endorse_rejects
     << ",\"adversary_actions\":" << adversary_actions << ",\"leader_skips\":" << leader_skips
     << "}";
  return os.str();
}

namespace {

class Simulator final : public NodeHooks {
 public:
  Simulator(const ScenarioConfig& cfg, std::ostream& trace_out)
      : cfg_(cfg),
        rng_(cfg.seed),
        keys_(cfg.seed, cfg.n),
        arena_({cfg.n, cfg.f, cfg.c, cfg.d, cfg.epoch_length, cfg.tau0, cfg.tau1,
                cfg.genesis_beacon()},
               &keys_),
        trace_(trace_out, cfg.trace_full),
        coordinator_(cfg, &keys_, &arena_) {
    is_adv_.assign(cfg.n, false);
    for (NodeId u : cfg.effective_adversaries()) is_adv_[u] = true;

    NodeConfig nc;
    nc.n = cfg.n;
    nc.f = cfg.f;
    nc.c = cfg.c;
    nc.d = cfg.d;
    nc.epoch_length = cfg.epoch_length;
    nc.confirm_depth = cfg.confirm_depth;
    nc.mode_window = cfg.mode_window;
    nc.orphan_ttl_rounds = cfg.orphan_ttl_epochs * cfg.epoch_length;
    nc.txs_per_block = cfg.txs_per_block;
    nc.honest_filter = cfg.honest_filter;
    nc.fault_fn_follows_tip = cfg.fault == FaultInjection::FnFollowsTip;
    nodes_.reserve(cfg.n);
    for (NodeId u = 0; u < cfg.n; ++u)
      nodes_.push_back(std::make_unique<ConsensusNode>(u, nc, &arena_, &keys_, this));
    for (NodeId u = 0; u < cfg.n; ++u)
      if (is_adv_[u]) coordinator_.register_shadow(u, nodes_[u].get());

    last_fn_advance_.assign(cfg.n, 0);
    finalized_by_height_[0] = BlockArena::kGenesisIdx;
  }

  RunResult run();

 private:
  struct MsgRec {
    Message msg;
    std::vector<bool> delivered;
    std::vector<bool> scheduled;
    bool spread = false;
    bool honest_holds = false;  // some honest node (or an honest sender) has it
  };

  struct Ev {
    uint64_t tick;
    uint8_t phase;  // 0 round end, 1 round begin, 2 delivery/window
    uint64_t seq;
    enum class Kind : uint8_t { RoundBegin, RoundEnd, Delivery, EndorseWindow } kind;
    Round round = 0;
    uint32_t msg_id = 0;
    NodeId to = 0;
    Digest summary_hash;
    bool operator>(const Ev& o) const {
      if (tick != o.tick) return tick > o.tick;
      if (phase != o.phase) return phase > o.phase;
      return seq > o.seq;
    }
  };

  uint64_t T() const { return cfg_.ticks_per_round(); }
  Situation situation_at(Round r) const { return Situation{cfg_.window_at(r)}; }
  Round round_of_tick(uint64_t t) const { return static_cast<Round>(t / T()); }

  void push(Ev e) {
    e.seq = next_seq_++;
    queue_.push(e);
  }

  void send(NodeId from, const Outgoing& o, uint64_t now);
  void schedule_delivery(uint32_t mid, NodeId to, uint64_t tick);
  void deliver(uint32_t mid, NodeId to, uint64_t now);
  void dispatch_outgoing(NodeId from, std::vector<Outgoing> outs, uint64_t now, Round r);
  void handle_round_begin(Round r, uint64_t now);
  void handle_round_end(Round r, uint64_t now);
  void flush_partials(uint64_t now);
  uint32_t ping_responders(NodeId u, Round r, const Situation& sit);
  bool sitn_normal(Round r) const { return cfg_.window_at(r) == nullptr; }

  // NodeHooks
  void on_finality_transition(NodeId u, Round r, const EngineState& was, const EngineState& now,
                              uint16_t fired) override;
  void on_fn_advance(NodeId u, Round r, uint32_t tip, uint32_t old_fn, uint32_t new_fn) override;
  void on_fn_conflict(NodeId u, Round r) override;
  void on_confirm(NodeId u, Round r, uint32_t block, uint32_t height) override;
  void on_suspicious(NodeId u, Round r, uint32_t block, Suspicion s) override;
  void on_skip(NodeId u, Round r) override;
  void on_mode_change(NodeId u, Round r, Mode m) override;
  void on_beacon_fallback(NodeId u, Epoch e) override;
  void on_reorg(NodeId u, Round r, uint32_t depth) override;
  void on_block_completed(NodeId u, Round r, const Digest& h) override;
  void on_endorse_reject(NodeId u, Round r, const char* why) override;

  void violation(Round r, const std::string& kind, const std::string& detail);

  const ScenarioConfig& cfg_;
  DetRng rng_;
  KeyRegistry keys_;
  BlockArena arena_;
  TraceWriter trace_;
  AdversaryCoordinator coordinator_;
  std::vector<std::unique_ptr<ConsensusNode>> nodes_;
  std::vector<bool> is_adv_;

  std::priority_queue<Ev, std::vector<Ev>, std::greater<>> queue_;
  uint64_t next_seq_ = 0;
  std::vector<MsgRec> msgs_;
  std::vector<uint32_t> partials_;  // message ids underdelivered to honest nodes
  uint64_t now_ = 0;
  Round cur_round_ = 0;
  bool prev_round_normal_ = true;

  // Monitor state (honest nodes only).
  std::unordered_map<uint32_t, uint32_t> finalized_by_height_;
  std::unordered_map<uint32_t, uint32_t> confirmed_by_height_;
  std::unordered_set<uint32_t> suspicious_seen_;
  std::vector<Round> last_fn_advance_;

  Metrics m_;
  bool violation_ = false;
  std::string violation_kind_;

  // accumulators
  uint64_t committee_hits_ = 0;
  uint64_t lag_sum_ = 0, lag_n_ = 0;
  uint64_t conf_lat_sum_ = 0, conf_lat_n_ = 0;
};

void Simulator::violation(Round r, const std::string& kind, const std::string& detail) {
  if (!violation_) violation_kind_ = kind;
  violation_ = true;
  trace_.event(now_, r, "violation",
               {TraceWriter::str("kind", kind), TraceWriter::str("detail", detail)});
}

void Simulator::on_finality_transition(NodeId u, Round r, const EngineState& was,
                                       const EngineState& now, uint16_t fired) {
  auto hex = [&](uint32_t i) { return i == kNone ? std::string("-") : arena_.hash_of(i).hex().substr(0, 12); };
  trace_.event(now_, r, "finality",
               {TraceWriter::num("n", static_cast<uint64_t>(u)),
                TraceWriter::str("nv", hex(now.nv)), TraceWriter::str("pp", hex(now.pp)),
                TraceWriter::str("pc", hex(now.pc)), TraceWriter::str("cm", hex(now.cm)),
                TraceWriter::str("fn", hex(now.fn)),
                TraceWriter::num("rules", static_cast<uint64_t>(fired)),
                TraceWriter::str("was_fn", hex(was.fn))});
}

void Simulator::on_fn_advance(NodeId u, Round r, uint32_t tip, uint32_t old_fn, uint32_t new_fn) {
  if (is_adv_[u]) return;
  ++m_.fn_advances;
  // Liveness gap accounting (after warm-up).
  Round last = last_fn_advance_[u];
  if (r > kFnGapWarmup) {
    Round base = std::max<Round>(last, kFnGapWarmup);
    if (r - base > m_.fn_gap_max) m_.fn_gap_max = r - base;
  }
  last_fn_advance_[u] = r;
  lag_sum_ += r - arena_.round(new_fn);
  ++lag_n_;
  if (r - arena_.round(new_fn) > m_.finalization_lag_max)
    m_.finalization_lag_max = r - arena_.round(new_fn);

  // Theorem-1 monitor: no two honest nodes may finalize conflicting blocks.
  uint32_t h_old = old_fn == kNone ? 0 : arena_.height(old_fn);
  for (uint32_t h = h_old + 1; h <= arena_.height(new_fn); ++h) {
    uint32_t blk = arena_.ancestor_at_height(new_fn, h);
    auto [it, fresh] = finalized_by_height_.emplace(h, blk);
    if (!fresh && it->second != blk) {
      ++m_.conflicting_finalizations;
      violation(r, "conflicting-finalization",
                "height " + std::to_string(h) + " node " + std::to_string(u));
    }
  }

  // Chain-compliant finality: replaying the vector update over the canonical
  // chain alone must also finalize the block.
  if (!is_final(arena_.replay_after(tip), new_fn, arena_)) {
    ++m_.replay_check_failures;
    violation(r, "chain-replay-finality",
              "node " + std::to_string(u) + " finalized beyond chain replay");
  }
}

void Simulator::on_fn_conflict(NodeId u, Round r) {
  if (is_adv_[u]) return;
  violation(r, "fn-conflict", "engine refused conflicting fn move, node " + std::to_string(u));
}

void Simulator::on_confirm(NodeId u, Round r, uint32_t block, uint32_t height) {
  if (is_adv_[u]) return;
  ++m_.confirmations;
  conf_lat_sum_ += r - arena_.round(block);
  ++conf_lat_n_;
  if (r - arena_.round(block) > m_.confirmation_latency_max)
    m_.confirmation_latency_max = r - arena_.round(block);
  auto [it, fresh] = confirmed_by_height_.emplace(height, block);
  if (!fresh && it->second != block) {
    ++m_.conflicting_confirmations;
    violation(r, "conflicting-confirmation",
              "height " + std::to_string(height) + " node " + std::to_string(u));
  }
}

void Simulator::on_suspicious(NodeId u, Round r, uint32_t block, Suspicion s) {
  if (!is_adv_[u] && suspicious_seen_.insert(block).second) ++m_.suspicious_blocks;
  trace_.event(now_, r, "suspicious",
               {TraceWriter::num("n", static_cast<uint64_t>(u)),
                TraceWriter::str("h", arena_.hash_of(block).hex().substr(0, 12)),
                TraceWriter::str("why", s == Suspicion::LateArrival ? "late" : "equivocation")});
}

void Simulator::on_skip(NodeId u, Round r) {
  ++m_.leader_skips;
  trace_.event(now_, r, "skip", {TraceWriter::num("n", static_cast<uint64_t>(u))});
}

void Simulator::on_mode_change(NodeId u, Round r, Mode m) {
  ++m_.mode_switches;
  trace_.event(now_, r, "mode",
               {TraceWriter::num("n", static_cast<uint64_t>(u)),
                TraceWriter::str("mode", m == Mode::Normal ? "normal" : "abnormal")});
}

void Simulator::on_beacon_fallback(NodeId u, Epoch e) {
  ++m_.beacon_fallbacks;
  trace_.event(now_, cur_round_, "beacon_fallback",
               {TraceWriter::num("n", static_cast<uint64_t>(u)),
                TraceWriter::num("epoch", static_cast<uint64_t>(e))});
}

void Simulator::on_reorg(NodeId u, Round r, uint32_t depth) {
  if (!is_adv_[u] && depth > m_.max_fork_depth) m_.max_fork_depth = depth;
  trace_.event(now_, r, "reorg",
               {TraceWriter::num("n", static_cast<uint64_t>(u)),
                TraceWriter::num("depth", static_cast<uint64_t>(depth))});
}

void Simulator::on_block_completed(NodeId u, Round r, const Digest& h) {
  trace_.event(now_, r, "block",
               {TraceWriter::num("leader", static_cast<uint64_t>(u)),
                TraceWriter::str("h", h.hex().substr(0, 12))});
}

void Simulator::on_endorse_reject(NodeId u, Round r, const char* why) {
  ++m_.endorse_rejects;
  trace_.event(now_, r, "endorse_reject",
               {TraceWriter::num("n", static_cast<uint64_t>(u)), TraceWriter::str("why", why)});
}

void Simulator::send(NodeId from, const Outgoing& o, uint64_t now) {
  uint64_t stick = o.at_tick >= 0 ? std::max<uint64_t>(now, static_cast<uint64_t>(o.at_tick)) : now;
  uint32_t mid = static_cast<uint32_t>(msgs_.size());
  MsgRec rec;
  rec.msg = o.msg;
  rec.delivered.assign(cfg_.n, false);
  rec.scheduled.assign(cfg_.n, false);
  // An honest sender retransmits after recovery, so what it sent counts as
  // held by an honest node even if nothing was deliverable yet.
  rec.honest_holds = !is_adv_[from];
  msgs_.push_back(std::move(rec));

  std::vector<NodeId> targets;
  if (o.broadcast) {
    targets.reserve(cfg_.n);
    for (NodeId v = 0; v < cfg_.n; ++v) targets.push_back(v);
  } else {
    targets.push_back(o.to);
  }
  Situation sit = situation_at(round_of_tick(stick));
  auto plan = plan_deliveries(cfg_, rng_, mid, from, targets, stick, sit, is_adv_);
  for (const auto& p : plan) {
    if (p.withheld) continue;
    msgs_[mid].scheduled[p.to] = true;
    // Self-delivery is immediate.
    schedule_delivery(mid, p.to, p.to == from ? stick : p.tick);
  }
  // Messages some honest node may still be missing are re-spread when the
  // network recovers.
  bool covered = true;
  for (NodeId v = 0; v < cfg_.n && covered; ++v)
    if (!is_adv_[v] && !msgs_[mid].scheduled[v]) covered = false;
  if (!covered) partials_.push_back(mid);
}

void Simulator::schedule_delivery(uint32_t mid, NodeId to, uint64_t tick) {
  Ev e;
  e.tick = tick;
  e.phase = 2;
  e.kind = Ev::Kind::Delivery;
  e.msg_id = mid;
  e.to = to;
  push(e);
}

void Simulator::flush_partials(uint64_t now) {
  // Back to normal: everything any honest node holds reaches all honest nodes.
  std::vector<uint32_t> keep;
  const uint64_t round_end = (now / T() + 1) * T() - 1;
  for (uint32_t mid : partials_) {
    MsgRec& rec = msgs_[mid];
    if (!rec.honest_holds) {
      keep.push_back(mid);  // adversary-private traffic stays private
      continue;
    }
    for (NodeId v = 0; v < cfg_.n; ++v) {
      if (rec.scheduled[v]) continue;
      rec.scheduled[v] = true;
      uint64_t d = rng_.uniform(1, cfg_.delta, "flush", mid, v);
      schedule_delivery(mid, v, std::min(now + d, round_end));
    }
  }
  partials_ = std::move(keep);
}

void Simulator::dispatch_outgoing(NodeId from, std::vector<Outgoing> outs, uint64_t now,
                                  Round r) {
  if (is_adv_[from]) {
    Situation sit = situation_at(r);
    outs = coordinator_.filter(from, r, sit, std::move(outs), now, static_cast<uint64_t>(r) * T(),
                               T());
  }
  for (const auto& o : outs) send(from, o, now);
}

uint32_t Simulator::ping_responders(NodeId u, Round r, const Situation& sit) {
  uint32_t count = 0;
  for (NodeId v : nodes_[u]->ping_targets(r)) {
    if (!sit.normal() && sit.partitioned(u, v)) continue;
    if (is_adv_[v] && !coordinator_.responds_to_ping(v, r)) continue;
    ++count;
  }
  return count;
}

void Simulator::handle_round_begin(Round r, uint64_t now) {
  cur_round_ = r;
  Situation sit = situation_at(r);
  if (sit.normal() && !prev_round_normal_) flush_partials(now);
  prev_round_normal_ = sit.normal();

  for (NodeId u = 0; u < cfg_.n; ++u) {
    uint32_t responders = ping_responders(u, r, sit);
    auto outs = nodes_[u]->begin_round(r, responders);
    if (nodes_[u]->role().committee) ++committee_hits_;
    dispatch_outgoing(u, std::move(outs), now, r);
  }
}

void Simulator::handle_round_end(Round r, uint64_t now) {
  (void)now;
  for (NodeId u = 0; u < cfg_.n; ++u) nodes_[u]->end_round(r);

  // Fork monitor: conflicting canonical tips across honest nodes.
  std::vector<uint32_t> tips;
  for (NodeId u = 0; u < cfg_.n; ++u)
    if (!is_adv_[u]) tips.push_back(nodes_[u]->canonical_tip());
  std::sort(tips.begin(), tips.end());
  tips.erase(std::unique(tips.begin(), tips.end()), tips.end());
  bool forked = false;
  for (size_t i = 0; i < tips.size() && !forked; ++i)
    for (size_t j = i + 1; j < tips.size() && !forked; ++j)
      if (arena_.conflicts(tips[i], tips[j])) {
        forked = true;
        uint32_t a = tips[i], b = tips[j];
        uint32_t lca = a;
        while (lca != kNone && !arena_.same_or_ancestor(lca, b)) lca = arena_.parent(lca);
        uint32_t lh = lca == kNone ? 0 : arena_.height(lca);
        uint32_t depth = std::min(arena_.height(a), arena_.height(b)) - lh;
        if (depth > m_.max_fork_depth) m_.max_fork_depth = depth;
      }
  if (forked) ++m_.fork_rounds;

  if (!sitn_normal(r)) {
    for (NodeId u = 0; u < cfg_.n; ++u)
      if (!is_adv_[u] && nodes_[u]->mode() == Mode::Normal) ++m_.mode_false_negatives;
  }

  // Every honest canonical chain must contain that node's finalized block.
  for (NodeId u = 0; u < cfg_.n; ++u) {
    if (is_adv_[u]) continue;
    if (!arena_.same_or_ancestor(nodes_[u]->fn_block(), nodes_[u]->canonical_tip()))
      violation(r, "canonical-without-fn", "node " + std::to_string(u));
  }
}

RunResult Simulator::run() {
  std::vector<std::string> pks;
  pks.reserve(cfg_.n);
  for (NodeId u = 0; u < cfg_.n; ++u) pks.push_back(keys_.public_key(u).hex());
  trace_.header(cfg_.canonical_json(), cfg_.config_hash().hex(), cfg_.seed, pks);

  for (Round r = 1; r <= cfg_.rounds; ++r) {
    Ev b;
    b.tick = static_cast<uint64_t>(r) * T();
    b.phase = 1;
    b.kind = Ev::Kind::RoundBegin;
    b.round = r;
    push(b);
    Ev e;
    e.tick = static_cast<uint64_t>(r + 1) * T();
    e.phase = 0;
    e.kind = Ev::Kind::RoundEnd;
    e.round = r;
    push(e);
  }

  while (!queue_.empty()) {
    Ev e = queue_.top();
    queue_.pop();
    now_ = e.tick;
    switch (e.kind) {
      case Ev::Kind::RoundBegin:
        handle_round_begin(e.round, e.tick);
        break;
      case Ev::Kind::RoundEnd:
        handle_round_end(e.round, e.tick);
        break;
      case Ev::Kind::Delivery:
        deliver(e.msg_id, e.to, e.tick);
        break;
      case Ev::Kind::EndorseWindow: {
        Round r = round_of_tick(e.tick);
        auto outs = nodes_[e.to]->on_endorse_window(r, e.summary_hash);
        dispatch_outgoing(e.to, std::move(outs), e.tick, r);
        break;
      }
    }
  }

  m_.rounds = cfg_.rounds;
  m_.blocks = arena_.size() - 1;
  std::unordered_set<Round> rounds_with_block;
  for (uint32_t i = 1; i < arena_.size(); ++i) rounds_with_block.insert(arena_.round(i));
  m_.skipped_rounds = cfg_.rounds - std::min<uint64_t>(cfg_.rounds, rounds_with_block.size());
  m_.mean_committee = cfg_.rounds == 0 ? 0 : static_cast<double>(committee_hits_) / cfg_.rounds;
  m_.finalization_lag_mean = lag_n_ == 0 ? 0 : static_cast<double>(lag_sum_) / lag_n_;
  m_.confirmation_latency_mean =
      conf_lat_n_ == 0 ? 0 : static_cast<double>(conf_lat_sum_) / conf_lat_n_;
  m_.adversary_actions = coordinator_.actions_taken();
  // Tail liveness gap.
  for (NodeId u = 0; u < cfg_.n; ++u) {
    if (is_adv_[u] || cfg_.rounds <= kFnGapWarmup) continue;
    Round base = std::max<Round>(last_fn_advance_[u], kFnGapWarmup);
    if (cfg_.rounds - base > m_.fn_gap_max) m_.fn_gap_max = cfg_.rounds - base;
  }

  trace_.summary(m_.to_json());

  RunResult out;
  out.metrics = m_;
  out.violation = violation_;
  out.violation_kind = violation_kind_;
  out.trace_digest = trace_.digest();
  return out;
}

void Simulator::deliver(uint32_t mid, NodeId to, uint64_t now) {
  MsgRec& rec = msgs_[mid];
  if (rec.delivered[to]) return;
  rec.delivered[to] = true;
  if (!is_adv_[to]) rec.honest_holds = true;

  Round r = round_of_tick(now);
  Situation sit = situation_at(r);

  // Gossip closure: once any honest node holds a message in the normal
  // situation, every honest node holds it within delta.
  if (sit.normal() && !rec.spread && !is_adv_[to]) {
    rec.spread = true;
    const uint64_t round_end = (now / T() + 1) * T() - 1;
    for (NodeId w = 0; w < cfg_.n; ++w) {
      if (rec.delivered[w] || rec.scheduled[w]) continue;
      rec.scheduled[w] = true;
      uint64_t d = rng_.uniform(1, cfg_.delta, "gossip", mid, w);
      schedule_delivery(mid, w, std::min(now + d, round_end));
    }
  }

  if (is_adv_[to]) {
    auto extra = coordinator_.observe_delivery(to, r, rec.msg, sit, now,
                                               static_cast<uint64_t>(r) * T(), T());
    for (const auto& o : extra) send(to, o, now);
  }

  ConsensusNode& node = *nodes_[to];
  std::vector<Outgoing> outs;
  if (std::holds_alternative<SummaryMsg>(rec.msg.body)) {
    outs = node.on_summary(r, rec.msg);
    // Endorsement decisions run inside the round's endorsement window.
    const auto& sm = std::get<SummaryMsg>(rec.msg.body);
    if (sm.summary.round == r) {
      uint64_t rstart = static_cast<uint64_t>(r) * T();
      uint64_t wstart = rstart + static_cast<uint64_t>(cfg_.endorse_window_start) * cfg_.delta;
      uint64_t wend = rstart + 2ull * cfg_.delta;
      if (now <= wend) {
        Ev e;
        e.tick = std::max(now, wstart);
        e.phase = 2;
        e.kind = Ev::Kind::EndorseWindow;
        e.to = to;
        e.summary_hash = sm.summary.hash();
        push(e);
      }
    }
  } else if (std::holds_alternative<EndorsementMsg>(rec.msg.body)) {
    outs = node.on_endorsement(r, rec.msg);
  } else {
    outs = node.on_collected(r, rec.msg);
  }
  dispatch_outgoing(to, std::move(outs), now, r);
}

}  // namespace

RunResult run_scenario(const ScenarioConfig& cfg, std::ostream& trace_out) {
  auto errs = validate_config(cfg);
  if (!errs.empty()) throw ConfigException(std::move(errs));
  Simulator sim(cfg, trace_out);
  return sim.run();
}

}  // namespace cesim
