#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace cesim {

struct SecurityParams {
  uint32_t n = 101;
  uint32_t f = 33;
  uint32_t c = 10;
  uint32_t d = 7;
  uint32_t k = 7;        // confirmation depth
  uint32_t f_prime = 0;  // the abnormal-case committee bias parameter; 0 = use f
  uint32_t fp() const { return f_prime == 0 ? f : f_prime; }
};

// Binomial pmf/tail evaluated in log space to keep tiny tails exact.
double log_binom_pmf(uint32_t x, uint32_t n, double p);
double binom_pmf(uint32_t x, uint32_t n, double p);
// P[X >= x] for X ~ Binomial(n, p); the sum truncates at n, where the
// support ends.
double log_binom_sf(uint32_t x, uint32_t n, double p);
double binom_sf(uint32_t x, uint32_t n, double p);

double log_choose(uint32_t n, uint32_t k);
// The grinding factor an adversarial beacon holder gains: C(c, d).
double biasness(uint32_t c, uint32_t d);

// Probability of a k-deep fork in the normal situation:
//   s1 = (BC(d, f, c/n) * f/n)^k * C(c, d)
double s1(const SecurityParams& p);

// Probability of a k-deep false confirmation across a partition:
//   s2 = BC(ceil(c(n-f)/n), c, (n+f)/2n)^(2k) * C(c, d)
//        * [ sum_{d'=1..d} BP(d', f', c/n) * BC(d-d', floor((n-d')/2), c/n)^2 * f/n ]^k
double s2(const SecurityParams& p);

struct McResult {
  double estimate = 0;  // includes the biasness factor
  double ci_lo = 0;     // 95% Wilson interval, also scaled
  double ci_hi = 0;
  uint64_t trials = 0;
  uint64_t hits = 0;
};

// Monte-Carlo oracle for s1: samples "adversarial leader and at least d
// adversarial committee members, k rounds in a row" and scales by the
// biasness factor.
McResult monte_carlo_fork_prob(const SecurityParams& p, uint64_t trials, uint64_t seed);

struct Table1Row {
  SecurityParams params;
  double bias_paper;
  double s1_paper;
  double s2_paper;
  double bias_computed;
  double s1_computed;
  double s2_computed;
};
// The three reference parameter rows at n = 101, with reported values
// alongside what the formulas give.
std::vector<Table1Row> table1_rows();

struct TraceMetrics {
  uint64_t rounds = 0;
  uint64_t blocks = 0;
  uint64_t skipped_rounds = 0;
  uint64_t suspicious_blocks = 0;
  uint64_t fork_rounds = 0;
  uint32_t max_fork_depth = 0;
  uint64_t confirmations = 0;
  uint64_t conflicting_confirmations = 0;
  uint64_t conflicting_finalizations = 0;
  double confirmation_latency_mean = 0;
  uint32_t confirmation_latency_max = 0;
  double finalization_lag_mean = 0;
  double mean_committee = 0;
  uint64_t mode_false_negatives = 0;
  double skipped_rate = 0;
  // Wall-clock view of the confirmation rule given a block interval.
  double confirmation_seconds(double block_interval_seconds, uint32_t confirm_depth) const {
    return block_interval_seconds * confirm_depth;
  }
};

// Reads a trace stream (JSON lines) back into metrics. Malformed input
// reports the offending line number.
TraceMetrics trace_metrics(std::istream& in);

}  // namespace cesim
