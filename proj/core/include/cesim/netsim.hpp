#pragma once

#include <iosfwd>

#include "cesim/adversary.hpp"
#include "cesim/config.hpp"
#include "cesim/node.hpp"
#include "cesim/trace.hpp"

namespace cesim {

struct Metrics {
  uint64_t rounds = 0;
  uint64_t blocks = 0;
  uint64_t skipped_rounds = 0;
  uint64_t suspicious_blocks = 0;  // distinct blocks any honest node flagged
  uint64_t fork_rounds = 0;        // rounds with conflicting honest tips
  uint32_t max_fork_depth = 0;     // deepest reorg or tip divergence seen
  uint64_t confirmations = 0;
  uint64_t conflicting_confirmations = 0;
  uint64_t conflicting_finalizations = 0;
  uint64_t fn_advances = 0;
  uint32_t fn_gap_max = 0;  // longest stretch without fn progress, after warm-up
  double finalization_lag_mean = 0;
  uint32_t finalization_lag_max = 0;
  double confirmation_latency_mean = 0;  // rounds from proposal to confirmation
  uint32_t confirmation_latency_max = 0;
  double mean_committee = 0;
  uint64_t mode_false_negatives = 0;  // abnormal situation, node believed normal
  uint64_t mode_switches = 0;
  uint64_t beacon_fallbacks = 0;
  uint64_t replay_check_failures = 0;  // chain-replay failed to cover a finalization
  uint64_t endorse_rejects = 0;
  uint64_t adversary_actions = 0;
  uint64_t leader_skips = 0;

  std::string to_json() const;
};

struct RunResult {
  Metrics metrics;
  bool violation = false;
  std::string violation_kind;
  uint64_t trace_digest = 0;
};

// Warm-up before the liveness gap metric starts counting.
inline constexpr Round kFnGapWarmup = 20;

// Executes the scenario and streams the trace. Deterministic: identical
// (config, seed, build) inputs produce byte-identical traces.
RunResult run_scenario(const ScenarioConfig& cfg, std::ostream& trace_out);

// Delivery planning for one message, exposed for tests: where and when each
// target receives it under the given situation. Withheld entries mark
// cross-partition targets that will only see the message after recovery.
struct DeliveryPlan {
  NodeId to;
  uint64_t tick;
  bool withheld;
};
std::vector<DeliveryPlan> plan_deliveries(const ScenarioConfig& cfg, const DetRng& rng,
                                          uint64_t msg_id, NodeId from,
                                          std::span<const NodeId> targets, uint64_t send_tick,
                                          const Situation& sit,
                                          const std::vector<bool>& is_adversary);

}  // namespace cesim
