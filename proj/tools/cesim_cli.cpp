#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include "cesim/analysis.hpp"
#include "cesim/netsim.hpp"

namespace fs = std::filesystem;
using namespace cesim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitViolation = 2;

fs::path out_dir() {
  const char* env = std::getenv("CESIM_OUT_DIR");
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::current_path();
}

fs::path resolve_out(const std::string& given, const std::string& fallback_name) {
  if (!given.empty()) {
    fs::path p(given);
    return p.is_absolute() ? p : out_dir() / p;
  }
  return out_dir() / fallback_name;
}

bool set_field(ScenarioConfig& cfg, const std::string& key, uint64_t v) {
  if (key == "n") cfg.n = static_cast<uint32_t>(v);
  else if (key == "f") cfg.f = static_cast<uint32_t>(v);
  else if (key == "c") cfg.c = static_cast<uint32_t>(v);
  else if (key == "d") cfg.d = static_cast<uint32_t>(v);
  else if (key == "delta") cfg.delta = static_cast<uint32_t>(v);
  else if (key == "rounds") cfg.rounds = static_cast<Round>(v);
  else if (key == "seed") cfg.seed = v;
  else if (key == "confirm_depth") cfg.confirm_depth = static_cast<uint32_t>(v);
  else if (key == "mode_window") cfg.mode_window = static_cast<uint32_t>(v);
  else if (key == "epoch_length") cfg.epoch_length = static_cast<uint32_t>(v);
  else if (key == "txs_per_block") cfg.txs_per_block = static_cast<uint32_t>(v);
  else return false;
  return true;
}

int run_one(ScenarioConfig cfg, const std::string& trace_path, const std::string& metrics_path,
            bool quiet) {
  std::ofstream trace(trace_path, std::ios::binary | std::ios::trunc);
  if (!trace) {
    std::cerr << "cannot open trace output " << trace_path << "\n";
    return kExitUsage;
  }
  RunResult res = run_scenario(cfg, trace);
  trace.close();
  if (!metrics_path.empty()) {
    std::ofstream mf(metrics_path, std::ios::binary | std::ios::trunc);
    mf << res.metrics.to_json() << "\n";
  }
  if (!quiet) {
    std::cout << "rounds=" << res.metrics.rounds << " blocks=" << res.metrics.blocks
              << " skipped=" << res.metrics.skipped_rounds
              << " forks=" << res.metrics.fork_rounds
              << " max_fork_depth=" << res.metrics.max_fork_depth
              << " confirmations=" << res.metrics.confirmations
              << " fn_advances=" << res.metrics.fn_advances << "\n";
    std::cout << "trace: " << trace_path << "\n";
  }
  if (res.violation) {
    std::cerr << "safety monitor tripped: " << res.violation_kind << "\n";
    return kExitViolation;
  }
  return kExitOk;
}

int cmd_run(const std::string& config_path, uint64_t seed_override, bool have_seed,
            const std::string& trace_arg, const std::string& metrics_arg,
            const std::string& level, const std::vector<std::string>& ablate) {
  ScenarioConfig cfg = parse_config_file(config_path);
  if (have_seed) cfg.seed = seed_override;
  if (level == "metrics") cfg.trace_full = false;
  else if (level == "full") cfg.trace_full = true;
  for (const auto& a : ablate) {
    if (a == "honest-filter") cfg.honest_filter = false;
    else throw ConfigException(std::vector<ConfigError>{{"--ablate", "unknown ablation: " + a}});
  }
  std::string stem = fs::path(config_path).stem().string();
  auto trace_path =
      resolve_out(trace_arg, stem + "-" + std::to_string(cfg.seed) + ".trace");
  std::string metrics_path =
      metrics_arg.empty() ? std::string() : resolve_out(metrics_arg, "").string();
  return run_one(cfg, trace_path.string(), metrics_path, false);
}

int cmd_replay(const std::string& trace_path) {
  std::ifstream in(trace_path, std::ios::binary);
  if (!in) {
    std::cerr << "cannot open trace " << trace_path << "\n";
    return kExitUsage;
  }
  std::string header_line;
  if (!std::getline(in, header_line)) {
    std::cerr << "empty trace\n";
    return kExitUsage;
  }
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header_line);
  } catch (const std::exception& e) {
    std::cerr << "bad trace header: " << e.what() << "\n";
    return kExitUsage;
  }
  if (!h.contains("config")) {
    std::cerr << "trace header carries no config echo\n";
    return kExitUsage;
  }
  ScenarioConfig cfg = parse_config(h["config"].dump());
  if (h.contains("seed")) cfg.seed = h["seed"].get<uint64_t>();

  std::ostringstream replayed;
  run_scenario(cfg, replayed);

  std::istringstream rep(replayed.str());
  std::ifstream orig(trace_path, std::ios::binary);
  std::string a, b;
  uint64_t line = 0;
  while (true) {
    bool ga = static_cast<bool>(std::getline(orig, a));
    bool gb = static_cast<bool>(std::getline(rep, b));
    ++line;
    if (!ga && !gb) break;
    if (ga != gb || a != b) {
      std::cout << "traces differ at line " << line << "\n";
      return kExitUsage;
    }
  }
  std::cout << "traces identical\n";
  return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& vary, unsigned parallel,
              const std::string& out_arg) {
  auto eq = vary.find('=');
  if (eq == std::string::npos)
    throw ConfigException(std::vector<ConfigError>{{"--vary", "expected key=v1,v2,..."}});
  std::string key = vary.substr(0, eq);
  std::vector<uint64_t> values;
  std::stringstream vs(vary.substr(eq + 1));
  std::string tok;
  while (std::getline(vs, tok, ',')) values.push_back(std::stoull(tok));
  if (values.empty()) throw ConfigException(std::vector<ConfigError>{{"--vary", "no values given"}});

  ScenarioConfig base = parse_config_file(config_path);
  struct Row {
    uint64_t value;
    RunResult res;
  };
  std::vector<std::future<Row>> futs;
  std::vector<Row> rows(values.size());
  unsigned workers = std::max(1u, parallel);
  for (size_t i = 0; i < values.size(); i += workers) {
    futs.clear();
    for (size_t j = i; j < std::min(values.size(), i + workers); ++j) {
      futs.push_back(std::async(std::launch::async, [&, j]() {
        ScenarioConfig cfg = base;
        if (!set_field(cfg, key, values[j]))
          throw ConfigException(std::vector<ConfigError>{{"--vary", "unknown or unsupported key: " + key}});
        std::ostringstream sink;
        cfg.trace_full = false;
        return Row{values[j], run_scenario(cfg, sink)};
      }));
    }
    for (size_t j = i; j < std::min(values.size(), i + workers); ++j)
      rows[j] = futs[j - i].get();
  }

  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!out_arg.empty()) {
    file.open(resolve_out(out_arg, ""), std::ios::trunc);
    os = &file;
  }
  *os << "key,value,seed,rounds,blocks,skipped,forks,max_fork_depth,confirmations,"
         "conflicting_confirmations,conflicting_finalizations,fn_advances,fn_gap_max,"
         "mean_committee,violation\n";
  bool any_violation = false;
  for (const auto& r : rows) {
    const Metrics& m = r.res.metrics;
    any_violation = any_violation || r.res.violation;
    *os << key << ',' << r.value << ',' << base.seed << ',' << m.rounds << ',' << m.blocks << ','
        << m.skipped_rounds << ',' << m.fork_rounds << ',' << m.max_fork_depth << ','
        << m.confirmations << ',' << m.conflicting_confirmations << ','
        << m.conflicting_finalizations << ',' << m.fn_advances << ',' << m.fn_gap_max << ','
        << m.mean_committee << ',' << (r.res.violation ? 1 : 0) << "\n";
  }
  return any_violation ? kExitViolation : kExitOk;
}

int cmd_analyze_table1() {
  auto rows = table1_rows();
  std::cout << "c,d,k,f,bias_paper,bias,s1_paper,s1,s1_ratio,s2_paper,s2,s2_ratio\n";
  for (const auto& r : rows) {
    std::cout << r.params.c << ',' << r.params.d << ',' << r.params.k << ',' << r.params.f << ','
              << r.bias_paper << ',' << r.bias_computed << ',' << r.s1_paper << ','
              << r.s1_computed << ',' << r.s1_computed / r.s1_paper << ',' << r.s2_paper << ','
              << r.s2_computed << ',' << r.s2_computed / r.s2_paper << "\n";
  }
  std::cout << "# s2 is reported, not gated: the f' in its committee-bias bracket is a free\n"
               "# parameter here (defaulting to f), so the reported values may not coincide.\n";
  return kExitOk;
}

std::vector<uint32_t> parse_list(const std::string& s) {
  std::vector<uint32_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(static_cast<uint32_t>(std::stoul(tok)));
  return out;
}

int cmd_analyze_sweep(uint32_t n, const std::string& fs, const std::string& cs,
                      const std::string& ds, const std::string& ks) {
  std::cout << "n,f,c,d,k,bias,s1,s2\n";
  for (uint32_t f : parse_list(fs))
    for (uint32_t c : parse_list(cs))
      for (uint32_t d : parse_list(ds))
        for (uint32_t k : parse_list(ks)) {
          if (d > c || 3 * f + 1 > n) continue;
          SecurityParams p{n, f, c, d, k, 0};
          std::cout << n << ',' << f << ',' << c << ',' << d << ',' << k << ','
                    << biasness(c, d) << ',' << s1(p) << ',' << s2(p) << "\n";
        }
  return kExitOk;
}

int cmd_analyze_trace(const std::string& path, double block_interval, uint32_t confirm_depth) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "cannot open trace " << path << "\n";
    return kExitUsage;
  }
  TraceMetrics m = trace_metrics(in);
  std::cout << "rounds=" << m.rounds << " blocks=" << m.blocks << " skipped_rate=" << m.skipped_rate
            << "\nforks=" << m.fork_rounds << " max_fork_depth=" << m.max_fork_depth
            << "\nconfirmations=" << m.confirmations
            << " conflicting=" << m.conflicting_confirmations
            << "\nconfirmation_latency_mean=" << m.confirmation_latency_mean
            << " finalization_lag_mean=" << m.finalization_lag_mean
            << "\nmean_committee=" << m.mean_committee
            << "\nconfirmation_time_seconds=" << m.confirmation_seconds(block_interval, confirm_depth)
            << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"committee-endorsed chain consensus simulator"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "execute a scenario");
  std::string run_config, run_trace, run_metrics, run_level;
  uint64_t run_seed = 0;
  std::vector<std::string> run_ablate;
  run->add_option("config", run_config, "scenario config (JSON)")->required();
  auto* seed_opt = run->add_option("--seed", run_seed, "override the scenario seed");
  run->add_option("--trace", run_trace, "trace output path");
  run->add_option("--metrics", run_metrics, "metrics output path");
  run->add_option("--trace-level", run_level, "full|metrics");
  run->add_option("--ablate", run_ablate, "disable a protection (honest-filter)");

  // replay
  auto* replay = app.add_subcommand("replay", "re-execute a trace and diff");
  std::string replay_path;
  replay->add_option("trace", replay_path, "trace file")->required();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "run a scenario over parameter values");
  std::string sweep_config, sweep_vary, sweep_out;
  unsigned sweep_parallel = 1;
  sweep->add_option("config", sweep_config, "scenario config (JSON)")->required();
  sweep->add_option("--vary", sweep_vary, "key=v1,v2,...")->required();
  sweep->add_option("--parallel", sweep_parallel, "worker count");
  sweep->add_option("--out", sweep_out, "CSV output path (default stdout)");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "closed-form security analysis");
  auto* table1 = analyze->add_subcommand("table1", "reproduce the reference parameter table");
  auto* asweep = analyze->add_subcommand("sweep", "s1/s2 over a parameter grid");
  uint32_t an_n = 101;
  std::string an_f = "20,25,33", an_c = "6,8,10", an_d = "4,5,7", an_k = "4,5,7";
  asweep->add_option("--n", an_n, "population");
  asweep->add_option("--f", an_f, "adversary counts");
  asweep->add_option("--c", an_c, "committee sizes");
  asweep->add_option("--d", an_d, "endorsement quorums");
  asweep->add_option("--k", an_k, "confirmation depths");
  auto* atrace = analyze->add_subcommand("trace", "metrics from a trace file");
  std::string atrace_path;
  double atrace_interval = 10.0;
  uint32_t atrace_depth = 7;
  atrace->add_option("trace", atrace_path, "trace file")->required();
  atrace->add_option("--block-interval", atrace_interval, "seconds per round");
  atrace->add_option("--confirm-depth", atrace_depth, "confirmation depth");
  analyze->require_subcommand(1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return cmd_run(run_config, run_seed, seed_opt->count() > 0, run_trace, run_metrics,
                     run_level, run_ablate);
    if (replay->parsed()) return cmd_replay(replay_path);
    if (sweep->parsed()) return cmd_sweep(sweep_config, sweep_vary, sweep_parallel, sweep_out);
    if (analyze->parsed()) {
      if (table1->parsed()) return cmd_analyze_table1();
      if (asweep->parsed()) return cmd_analyze_sweep(an_n, an_f, an_c, an_d, an_k);
      if (atrace->parsed()) return cmd_analyze_trace(atrace_path, atrace_interval, atrace_depth);
    }
  } catch (const ConfigException& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
