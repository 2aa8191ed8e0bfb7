#include "cesim/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "cesim/crypto.hpp"

namespace cesim {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

double log_choose(uint32_t n, uint32_t k) {
  if (k > n) return kNegInf;
  return std::lgamma(static_cast<double>(n) + 1) - std::lgamma(static_cast<double>(k) + 1) -
         std::lgamma(static_cast<double>(n - k) + 1);
}

double biasness(uint32_t c, uint32_t d) { return std::exp(log_choose(c, d)); }

double log_binom_pmf(uint32_t x, uint32_t n, double p) {
  if (p < 0 || p > 1) throw std::domain_error("binom_pmf: p outside [0,1]");
  if (x > n) throw std::domain_error("binom_pmf: x > n");
  if (p == 0) return x == 0 ? 0.0 : kNegInf;
  if (p == 1) return x == n ? 0.0 : kNegInf;
  return log_choose(n, x) + x * std::log(p) + (n - x) * std::log1p(-p);
}

double binom_pmf(uint32_t x, uint32_t n, double p) { return std::exp(log_binom_pmf(x, n, p)); }

double log_binom_sf(uint32_t x, uint32_t n, double p) {
  if (p < 0 || p > 1) throw std::domain_error("binom_sf: p outside [0,1]");
  if (x == 0) return 0.0;  // total mass
  if (x > n) return kNegInf;
  // log-sum-exp over the tail, anchored at the largest term.
  double mx = kNegInf;
  for (uint32_t i = x; i <= n; ++i) mx = std::max(mx, log_binom_pmf(i, n, p));
  if (mx == kNegInf) return kNegInf;
  double acc = 0;
  for (uint32_t i = x; i <= n; ++i) acc += std::exp(log_binom_pmf(i, n, p) - mx);
  return mx + std::log(acc);
}

double binom_sf(uint32_t x, uint32_t n, double p) { return std::exp(log_binom_sf(x, n, p)); }

double s1(const SecurityParams& prm) {
  if (prm.f == 0) return 0;
  const double p = static_cast<double>(prm.c) / prm.n;
  double log_round = log_binom_sf(prm.d, prm.f, p) +
                     std::log(static_cast<double>(prm.f)) - std::log(static_cast<double>(prm.n));
  if (log_round == kNegInf) return 0;
  return std::exp(prm.k * log_round + log_choose(prm.c, prm.d));
}

double s2(const SecurityParams& prm) {
  const double n = prm.n;
  const double p = static_cast<double>(prm.c) / prm.n;
  const uint32_t detect_x =
      static_cast<uint32_t>(std::ceil(static_cast<double>(prm.c) * (n - prm.f) / n));
  double log_detect = 2.0 * prm.k * log_binom_sf(detect_x, prm.c, (n + prm.f) / (2 * n));

  double bracket = 0;
  for (uint32_t dp = 1; dp <= prm.d; ++dp) {
    double term = binom_pmf(dp, prm.fp(), p);
    double split = binom_sf(prm.d - dp, (prm.n - dp) / 2, p);
    bracket += term * split * split * (static_cast<double>(prm.f) / n);
  }
  if (bracket <= 0 || log_detect == kNegInf) return 0;
  return std::exp(log_detect + log_choose(prm.c, prm.d) + prm.k * std::log(bracket));
}

McResult monte_carlo_fork_prob(const SecurityParams& prm, uint64_t trials, uint64_t seed) {
  McResult out;
  out.trials = trials;
  if (prm.f == 0) return out;  // no adversaries, no forks
  DetRng rng(seed);
  const double inv = 1.0 / static_cast<double>(UINT64_MAX);
  const double p_committee = static_cast<double>(prm.c) / prm.n;
  const double p_leader = static_cast<double>(prm.f) / prm.n;
  uint64_t hits = 0;
  for (uint64_t t = 0; t < trials; ++t) {
    bool window = true;
    for (uint32_t j = 0; j < prm.k && window; ++j) {
      if (rng.draw("mc-leader", t, j) * inv >= p_leader) {
        window = false;
        break;
      }
      uint32_t adv_committee = 0;
      for (uint32_t a = 0; a < prm.f; ++a)
        if (rng.draw("mc-member", t, j, a) * inv < p_committee) ++adv_committee;
      if (adv_committee < prm.d) window = false;
    }
    if (window) ++hits;
  }
  out.hits = hits;
  const double nn = static_cast<double>(trials);
  const double phat = static_cast<double>(hits) / nn;
  const double z = 1.959963984540054;  // 95%
  const double z2 = z * z;
  const double denom = 1 + z2 / nn;
  const double center = (phat + z2 / (2 * nn)) / denom;
  const double half = z * std::sqrt(phat * (1 - phat) / nn + z2 / (4 * nn * nn)) / denom;
  const double bias = biasness(prm.c, prm.d);
  out.estimate = phat * bias;
  out.ci_lo = std::max(0.0, center - half) * bias;
  out.ci_hi = (center + half) * bias;
  return out;
}

std::vector<Table1Row> table1_rows() {
  std::vector<Table1Row> rows = {
      {{101, 33, 10, 7, 7, 0}, 120, 7.57e-12, 1.57e-7, 0, 0, 0},
      {{101, 25, 8, 5, 5, 0}, 56, 8.14e-9, 4.12e-12, 0, 0, 0},
      {{101, 20, 6, 4, 4, 0}, 15, 1.43e-8, 4.85e-9, 0, 0, 0},
  };
  for (auto& r : rows) {
    r.bias_computed = biasness(r.params.c, r.params.d);
    r.s1_computed = s1(r.params);
    r.s2_computed = s2(r.params);
  }
  return rows;
}

TraceMetrics trace_metrics(std::istream& in) {
  using nlohmann::json;
  TraceMetrics out;
  std::string line;
  uint64_t lineno = 0;
  bool saw_summary = false;
  uint64_t conf_lat_sum = 0;
  std::map<std::string, uint64_t> confirmed_heights;  // height -> hash fingerprint count
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("trace line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.contains("k") || !j["k"].is_string())
      throw std::runtime_error("trace line " + std::to_string(lineno) + ": missing record kind");
    const std::string k = j["k"].get<std::string>();
    if (k == "summary") {
      saw_summary = true;
      const auto& m = j["metrics"];
      out.rounds = m.value("rounds", 0ull);
      out.blocks = m.value("blocks", 0ull);
      out.skipped_rounds = m.value("skipped_rounds", 0ull);
      out.suspicious_blocks = m.value("suspicious_blocks", 0ull);
      out.fork_rounds = m.value("fork_rounds", 0ull);
      out.max_fork_depth = m.value("max_fork_depth", 0u);
      out.confirmations = m.value("confirmations", 0ull);
      out.conflicting_confirmations = m.value("conflicting_confirmations", 0ull);
      out.conflicting_finalizations = m.value("conflicting_finalizations", 0ull);
      out.confirmation_latency_mean = m.value("confirmation_latency_mean", 0.0);
      out.confirmation_latency_max = m.value("confirmation_latency_max", 0u);
      out.finalization_lag_mean = m.value("finalization_lag_mean", 0.0);
      out.mean_committee = m.value("mean_committee", 0.0);
      out.mode_false_negatives = m.value("mode_false_negatives", 0ull);
    }
    (void)conf_lat_sum;
  }
  if (!saw_summary) throw std::runtime_error("trace line " + std::to_string(lineno) +
                                             ": no summary record found");
  out.skipped_rate = out.rounds == 0 ? 0 : static_cast<double>(out.skipped_rounds) / out.rounds;
  return out;
}

}  // namespace cesim
