#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "cesim/bytes.hpp"

namespace cesim {

inline constexpr const char* kTraceVersion = "cesim-trace-1";

// Line-delimited trace: a header record, event records (suppressed at the
// metrics level but always folded into the running digest), and a summary
// record carrying the metrics and the event digest. Identical (config, seed,
// build) runs produce byte-identical traces.
class TraceWriter {
 public:
  TraceWriter(std::ostream& out, bool full_events) : out_(&out), full_(full_events) {}

  struct Field {
    std::string key;
    std::string value;  // pre-rendered JSON value
  };
  static Field num(std::string key, uint64_t v) { return {std::move(key), std::to_string(v)}; }
  static Field num(std::string key, int64_t v) { return {std::move(key), std::to_string(v)}; }
  static Field str(std::string key, std::string_view v) {
    return {std::move(key), "\"" + std::string(v) + "\""};
  }
  static Field raw(std::string key, std::string v) { return {std::move(key), std::move(v)}; }

  void header(const std::string& config_json, const std::string& config_hash_hex, uint64_t seed,
              const std::vector<std::string>& registry_pks);
  void event(uint64_t tick, uint64_t round, std::string_view kind,
             std::initializer_list<Field> fields);
  void summary(const std::string& metrics_json);

  uint64_t digest() const { return fnv_.state; }
  uint64_t event_count() const { return events_; }

 private:
  void write_line(const std::string& line, bool always);

  std::ostream* out_;
  bool full_;
  Fnv64 fnv_;
  uint64_t events_ = 0;
};

}  // namespace cesim
