#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "cesim/crypto.hpp"

namespace cesim {

struct DelaySpec {
  enum class Kind : uint8_t { Uniform, Geometric } kind = Kind::Uniform;
  uint32_t max = 8;  // in ticks
};

// One abnormal stretch: rounds [from, to] inclusive, an optional partition
// (side index per node) and the delay law applied inside it.
struct AbnormalWindow {
  Round from = 0;
  Round to = 0;
  std::vector<uint8_t> side;  // per node; empty = no partition
  DelaySpec delay;
  bool has_partition() const { return !side.empty(); }
};

enum class AdversaryStrategy : uint8_t {
  Honest,
  CollidingLeader,
  FraudulentDelay,
  PartitionCollusion,
};

enum class FaultInjection : uint8_t { None, FnFollowsTip };

struct ScenarioConfig {
  uint32_t n = 4;
  uint32_t f = 0;
  uint32_t c = 4;
  uint32_t d = 1;
  uint32_t delta = 2;             // message delay bound, in ticks
  uint32_t delta_multiplier = 3;  // round length = delta_multiplier * delta
  Round rounds = 20;
  uint32_t epoch_length = 100;
  uint32_t tau0 = 2;
  uint32_t tau1 = 10;
  uint32_t confirm_depth = 7;
  uint32_t mode_window = 5;
  uint32_t orphan_ttl_epochs = 10;
  uint32_t endorse_window_start = 1;  // in deltas from round start
  uint32_t txs_per_block = 4;
  bool honest_filter = true;
  uint32_t recovery_length = 20;
  uint64_t seed = 1;
  bool trace_full = true;
  double block_interval_seconds = 10.0;  // reporting only
  std::vector<AbnormalWindow> abnormal;
  AdversaryStrategy strategy = AdversaryStrategy::Honest;
  std::vector<NodeId> adversary_nodes;  // empty: highest f ids when adversarial
  FaultInjection fault = FaultInjection::None;

  uint64_t ticks_per_round() const {
    return static_cast<uint64_t>(delta) * delta_multiplier;
  }
  std::vector<NodeId> effective_adversaries() const;
  const AbnormalWindow* window_at(Round r) const;
  std::string canonical_json() const;
  Digest config_hash() const;
  Digest genesis_beacon() const;
};

struct ConfigError {
  std::string path;
  std::string message;
};

class ConfigException : public std::runtime_error {
 public:
  explicit ConfigException(std::vector<ConfigError> errs);
  const std::vector<ConfigError>& errors() const { return errors_; }

 private:
  std::vector<ConfigError> errors_;
};

// Parses and validates a scenario config from JSON text. Unknown keys and
// constraint violations raise ConfigException with field-path diagnostics.
ScenarioConfig parse_config(const std::string& text);
ScenarioConfig parse_config_file(const std::string& path);

// Validation only; returns every violated constraint.
std::vector<ConfigError> validate_config(const ScenarioConfig& cfg);

}  // namespace cesim
