#include "cesim/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace cesim {

using nlohmann::json;

namespace {

std::string strategy_name(AdversaryStrategy s) {
  switch (s) {
    case AdversaryStrategy::Honest: return "honest";
    case AdversaryStrategy::CollidingLeader: return "colliding-leader";
    case AdversaryStrategy::FraudulentDelay: return "fraudulent-delay";
    case AdversaryStrategy::PartitionCollusion: return "partition-collusion";
  }
  return "honest";
}

std::string fault_name(FaultInjection f) {
  return f == FaultInjection::FnFollowsTip ? "fn-follows-tip" : "none";
}

std::string delay_kind_name(DelaySpec::Kind k) {
  return k == DelaySpec::Kind::Geometric ? "geometric" : "uniform";
}

}  // namespace

ConfigException::ConfigException(std::vector<ConfigError> errs)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "config error";
        for (const auto& e : errs) os << "\n  " << e.path << ": " << e.message;
        return os.str();
      }()),
      errors_(std::move(errs)) {}

std::vector<NodeId> ScenarioConfig::effective_adversaries() const {
  if (strategy == AdversaryStrategy::Honest) return adversary_nodes;
  if (!adversary_nodes.empty()) return adversary_nodes;
  std::vector<NodeId> out;
  for (uint32_t i = n - std::min(f, n); i < n; ++i) out.push_back(i);
  return out;
}

const AbnormalWindow* ScenarioConfig::window_at(Round r) const {
  for (const auto& w : abnormal)
    if (r >= w.from && r <= w.to) return &w;
  return nullptr;
}

std::string ScenarioConfig::canonical_json() const {
  json j;
  j["n"] = n;
  j["f"] = f;
  j["c"] = c;
  j["d"] = d;
  j["delta"] = delta;
  j["delta_multiplier"] = delta_multiplier;
  j["rounds"] = rounds;
  j["epoch_length"] = epoch_length;
  j["tau0"] = tau0;
  j["tau1"] = tau1;
  j["confirm_depth"] = confirm_depth;
  j["mode_window"] = mode_window;
  j["orphan_ttl_epochs"] = orphan_ttl_epochs;
  j["endorse_window_start"] = endorse_window_start;
  j["txs_per_block"] = txs_per_block;
  j["honest_filter"] = honest_filter;
  j["recovery_length"] = recovery_length;
  j["seed"] = seed;
  j["trace_level"] = trace_full ? "full" : "metrics";
  j["block_interval_seconds"] = block_interval_seconds;
  j["fault_injection"] = fault_name(fault);
  json adv;
  adv["strategy"] = strategy_name(strategy);
  adv["nodes"] = adversary_nodes;
  j["adversary"] = adv;
  json windows = json::array();
  for (const auto& w : abnormal) {
    json jw;
    jw["from"] = w.from;
    jw["to"] = w.to;
    jw["delay_kind"] = delay_kind_name(w.delay.kind);
    jw["delay_max"] = w.delay.max;
    if (w.has_partition()) {
      // Emit as side lists, the same shape the input uses.
      uint8_t sides = *std::max_element(w.side.begin(), w.side.end());
      json parts = json::array();
      for (uint8_t s = 0; s <= sides; ++s) {
        json ids = json::array();
        for (uint32_t u = 0; u < w.side.size(); ++u)
          if (w.side[u] == s) ids.push_back(u);
        parts.push_back(ids);
      }
      jw["partition"] = parts;
    }
    windows.push_back(jw);
  }
  j["abnormal"] = windows;
  return j.dump();
}

Digest ScenarioConfig::config_hash() const {
  auto s = canonical_json();
  return hash_domain("config", std::span(reinterpret_cast<const uint8_t*>(s.data()), s.size()));
}

Digest ScenarioConfig::genesis_beacon() const {
  Encoder enc;
  enc.put_u64(seed);
  return hash_domain("genesis-beacon", enc.bytes());
}

std::vector<ConfigError> validate_config(const ScenarioConfig& cfg) {
  std::vector<ConfigError> errs;
  auto err = [&](std::string path, std::string msg) {
    errs.push_back({std::move(path), std::move(msg)});
  };
  if (cfg.n == 0 || cfg.n > 512) err("n", "population must be in [1, 512]");
  if (3 * cfg.f + 1 > cfg.n) err("f", "3f+1 <= n violated");
  if (cfg.c > cfg.n) err("c", "committee target exceeds population");
  if (cfg.d == 0) err("d", "endorsement quorum must be positive");
  if (cfg.d > cfg.c) err("d", "endorsement quorum exceeds committee target");
  if (cfg.delta == 0) err("delta", "delay bound must be at least one tick");
  if (cfg.delta_multiplier < 3) err("delta_multiplier", "round must span at least 3 deltas");
  if (cfg.rounds == 0) err("rounds", "must run at least one round");
  if (cfg.epoch_length == 0) err("epoch_length", "must be positive");
  if (cfg.mode_window == 0) err("mode_window", "must be positive");
  if (cfg.confirm_depth == 0) err("confirm_depth", "must be positive");
  if (cfg.endorse_window_start == 0 || cfg.endorse_window_start >= cfg.delta_multiplier)
    err("endorse_window_start", "window must start inside the round");

  Round prev_end = 0;
  bool first = true;
  for (size_t i = 0; i < cfg.abnormal.size(); ++i) {
    const auto& w = cfg.abnormal[i];
    std::string p = "abnormal[" + std::to_string(i) + "]";
    if (w.from > w.to) err(p, "window is empty (from > to)");
    if (w.to >= cfg.rounds) err(p, "window extends past the last round");
    if (!first && w.from <= prev_end + cfg.recovery_length)
      err(p, "windows must be separated by at least recovery_length normal rounds");
    if (first && w.from == 0) err(p, "round 0 is reserved for genesis");
    prev_end = w.to;
    first = false;
    if (!w.side.empty() && w.side.size() != cfg.n)
      err(p + ".partition", "partition must cover every node exactly once");
    if (w.delay.max == 0) err(p + ".delay_max", "must be positive");
  }
  if (!cfg.abnormal.empty() && prev_end + cfg.recovery_length >= cfg.rounds)
    err("abnormal", "an abnormal stretch must be followed by a normal stretch of at least "
                    "recovery_length rounds");

  auto adv = cfg.effective_adversaries();
  if (adv.size() > cfg.f) err("adversary.nodes", "more adversaries than the f bound");
  for (NodeId u : adv)
    if (u >= cfg.n) err("adversary.nodes", "node id out of range");

  return errs;
}

namespace {

ScenarioConfig from_json(const json& j) {
  ScenarioConfig cfg;
  std::vector<ConfigError> errs;
  auto err = [&](std::string path, std::string msg) {
    errs.push_back({std::move(path), std::move(msg)});
  };

  static const char* known[] = {"n", "f", "c", "d", "delta", "delta_multiplier", "rounds",
                                "epoch_length", "tau0", "tau1", "confirm_depth", "mode_window",
                                "orphan_ttl_epochs", "endorse_window_start", "txs_per_block",
                                "honest_filter", "recovery_length", "seed", "trace_level",
                                "block_interval_seconds", "abnormal", "adversary",
                                "fault_injection"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) err(it.key(), "unknown key");
  }

  auto get_u = [&](const char* key, uint64_t& out, uint64_t def) {
    out = def;
    if (!j.contains(key)) return;
    if (!j[key].is_number_unsigned()) {
      err(key, "expected a non-negative integer");
      return;
    }
    out = j[key].get<uint64_t>();
  };
  uint64_t v;
  get_u("n", v, cfg.n); cfg.n = static_cast<uint32_t>(v);
  get_u("f", v, cfg.f); cfg.f = static_cast<uint32_t>(v);
  get_u("c", v, cfg.c); cfg.c = static_cast<uint32_t>(v);
  get_u("d", v, cfg.d); cfg.d = static_cast<uint32_t>(v);
  get_u("delta", v, cfg.delta); cfg.delta = static_cast<uint32_t>(v);
  get_u("delta_multiplier", v, cfg.delta_multiplier); cfg.delta_multiplier = static_cast<uint32_t>(v);
  get_u("rounds", v, cfg.rounds); cfg.rounds = static_cast<Round>(v);
  get_u("epoch_length", v, cfg.epoch_length); cfg.epoch_length = static_cast<uint32_t>(v);
  get_u("tau0", v, cfg.tau0); cfg.tau0 = static_cast<uint32_t>(v);
  get_u("tau1", v, cfg.tau1); cfg.tau1 = static_cast<uint32_t>(v);
  get_u("confirm_depth", v, cfg.confirm_depth); cfg.confirm_depth = static_cast<uint32_t>(v);
  get_u("mode_window", v, cfg.mode_window); cfg.mode_window = static_cast<uint32_t>(v);
  get_u("orphan_ttl_epochs", v, cfg.orphan_ttl_epochs); cfg.orphan_ttl_epochs = static_cast<uint32_t>(v);
  get_u("endorse_window_start", v, cfg.endorse_window_start); cfg.endorse_window_start = static_cast<uint32_t>(v);
  get_u("txs_per_block", v, cfg.txs_per_block); cfg.txs_per_block = static_cast<uint32_t>(v);
  get_u("recovery_length", v, cfg.recovery_length); cfg.recovery_length = static_cast<uint32_t>(v);
  get_u("seed", v, cfg.seed); cfg.seed = v;

  if (j.contains("honest_filter")) {
    if (!j["honest_filter"].is_boolean()) err("honest_filter", "expected a boolean");
    else cfg.honest_filter = j["honest_filter"].get<bool>();
  }
  if (j.contains("block_interval_seconds")) {
    if (!j["block_interval_seconds"].is_number()) err("block_interval_seconds", "expected a number");
    else cfg.block_interval_seconds = j["block_interval_seconds"].get<double>();
  }
  if (j.contains("trace_level")) {
    auto s = j["trace_level"].is_string() ? j["trace_level"].get<std::string>() : "";
    if (s == "full") cfg.trace_full = true;
    else if (s == "metrics") cfg.trace_full = false;
    else err("trace_level", "expected \"full\" or \"metrics\"");
  }
  if (j.contains("fault_injection")) {
    auto s = j["fault_injection"].is_string() ? j["fault_injection"].get<std::string>() : "";
    if (s == "none") cfg.fault = FaultInjection::None;
    else if (s == "fn-follows-tip") cfg.fault = FaultInjection::FnFollowsTip;
    else err("fault_injection", "unknown fault");
  }
  if (j.contains("adversary")) {
    const auto& a = j["adversary"];
    if (!a.is_object()) {
      err("adversary", "expected an object");
    } else {
      for (auto it = a.begin(); it != a.end(); ++it)
        if (it.key() != "strategy" && it.key() != "nodes") err("adversary." + it.key(), "unknown key");
      std::string s = a.contains("strategy") && a["strategy"].is_string()
                          ? a["strategy"].get<std::string>()
                          : "honest";
      if (s == "honest") cfg.strategy = AdversaryStrategy::Honest;
      else if (s == "colliding-leader") cfg.strategy = AdversaryStrategy::CollidingLeader;
      else if (s == "fraudulent-delay") cfg.strategy = AdversaryStrategy::FraudulentDelay;
      else if (s == "partition-collusion") cfg.strategy = AdversaryStrategy::PartitionCollusion;
      else err("adversary.strategy", "unknown strategy");
      if (a.contains("nodes")) {
        if (!a["nodes"].is_array()) err("adversary.nodes", "expected an array of node ids");
        else for (const auto& x : a["nodes"]) {
          if (!x.is_number_unsigned()) { err("adversary.nodes", "expected node ids"); break; }
          cfg.adversary_nodes.push_back(x.get<NodeId>());
        }
      }
    }
  }
  if (j.contains("abnormal")) {
    if (!j["abnormal"].is_array()) {
      err("abnormal", "expected an array of windows");
    } else {
      size_t i = 0;
      for (const auto& wj : j["abnormal"]) {
        std::string p = "abnormal[" + std::to_string(i++) + "]";
        AbnormalWindow w;
        for (auto it = wj.begin(); it != wj.end(); ++it) {
          const auto& k = it.key();
          if (k != "from" && k != "to" && k != "partition" && k != "delay_kind" && k != "delay_max")
            err(p + "." + k, "unknown key");
        }
        if (wj.contains("from") && wj["from"].is_number_unsigned()) w.from = wj["from"].get<Round>();
        else err(p + ".from", "required round number");
        if (wj.contains("to") && wj["to"].is_number_unsigned()) w.to = wj["to"].get<Round>();
        else err(p + ".to", "required round number");
        if (wj.contains("delay_max") && wj["delay_max"].is_number_unsigned())
          w.delay.max = wj["delay_max"].get<uint32_t>();
        if (wj.contains("delay_kind")) {
          auto s = wj["delay_kind"].is_string() ? wj["delay_kind"].get<std::string>() : "";
          if (s == "uniform") w.delay.kind = DelaySpec::Kind::Uniform;
          else if (s == "geometric") w.delay.kind = DelaySpec::Kind::Geometric;
          else err(p + ".delay_kind", "expected \"uniform\" or \"geometric\"");
        }
        if (wj.contains("partition")) {
          if (!wj["partition"].is_array()) {
            err(p + ".partition", "expected an array of node-id lists");
          } else {
            w.side.assign(cfg.n, 0xff);
            uint8_t side = 0;
            for (const auto& group : wj["partition"]) {
              for (const auto& x : group) {
                NodeId u = x.get<NodeId>();
                if (u >= cfg.n || w.side[u] != 0xff) {
                  err(p + ".partition", "node ids must be in range and listed once");
                } else {
                  w.side[u] = side;
                }
              }
              ++side;
            }
            for (uint32_t u = 0; u < cfg.n; ++u)
              if (w.side[u] == 0xff) err(p + ".partition", "partition must cover every node");
          }
        }
        cfg.abnormal.push_back(std::move(w));
      }
    }
  }

  auto more = validate_config(cfg);
  errs.insert(errs.end(), more.begin(), more.end());
  if (!errs.empty()) throw ConfigException(std::move(errs));
  return cfg;
}

}  // namespace

ScenarioConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigException(std::vector<ConfigError>{{"$", std::string("invalid JSON: ") + e.what()}});
  }
  if (!j.is_object()) throw ConfigException(std::vector<ConfigError>{{"$", "top level must be an object"}});
  return from_json(j);
}

ScenarioConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigException(std::vector<ConfigError>{{"$", "cannot open " + path}});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace cesim
