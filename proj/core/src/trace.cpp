#include "cesim/trace.hpp"

namespace cesim {

void TraceWriter::write_line(const std::string& line, bool always) {
  fnv_.feed(line);
  fnv_.feed("\n");
  if (always || full_) {
    *out_ << line << '\n';
  }
}

void TraceWriter::header(const std::string& config_json, const std::string& config_hash_hex,
                         uint64_t seed, const std::vector<std::string>& registry_pks) {
  std::string line = "{\"k\":\"header\",\"version\":\"";
  line += kTraceVersion;
  line += "\",\"config\":";
  line += config_json;
  line += ",\"config_hash\":\"";
  line += config_hash_hex;
  line += "\",\"seed\":";
  line += std::to_string(seed);
  line += ",\"keys\":[";
  for (size_t i = 0; i < registry_pks.size(); ++i) {
    if (i != 0) line += ',';
    line += '"';
    line += registry_pks[i];
    line += '"';
  }
  line += "]}";
  write_line(line, true);
}

void TraceWriter::event(uint64_t tick, uint64_t round, std::string_view kind,
                        std::initializer_list<Field> fields) {
  ++events_;
  std::string line = "{\"k\":\"";
  line += kind;
  line += "\",\"t\":";
  line += std::to_string(tick);
  line += ",\"r\":";
  line += std::to_string(round);
  for (const auto& f : fields) {
    line += ",\"";
    line += f.key;
    line += "\":";
    line += f.value;
  }
  line += '}';
  write_line(line, false);
}

void TraceWriter::summary(const std::string& metrics_json) {
  std::string line = "{\"k\":\"summary\",\"events\":";
  line += std::to_string(events_);
  line += ",\"event_digest\":\"";
  char buf[17];
  snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv_.state));
  line += buf;
  line += "\",\"metrics\":";
  line += metrics_json;
  line += '}';
  // The summary is outside its own digest; it must be last.
  if (out_ != nullptr) *out_ << line << '\n';
}

}  // namespace cesim
