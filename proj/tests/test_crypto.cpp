#include <doctest.h>

#include <cmath>
#include <set>

#include "cesim/crypto.hpp"

using namespace cesim;

namespace {
std::vector<uint8_t> bytes_of(uint64_t x) {
  Encoder enc;
  enc.put_u64(x);
  return enc.take();
}
}  // namespace

TEST_CASE("domain hash: deterministic, tag-separated, no near collisions") {
  auto payload = bytes_of(42);
  CHECK(hash_domain("leader", payload) == hash_domain("leader", payload));
  CHECK(hash_domain("leader", payload) != hash_domain("beacon", payload));

  // 1000 pairs differing in one bit must not collide.
  std::set<Digest> seen;
  for (uint64_t i = 0; i < 1000; ++i) {
    auto a = hash_domain("avalanche", bytes_of(i));
    auto b = hash_domain("avalanche", bytes_of(i ^ 1ull));
    CHECK(a != b);
    seen.insert(a);
  }
  CHECK(seen.size() == 1000);
}

TEST_CASE("vrf: determinism, completeness, proof binding") {
  KeyRegistry keys(99, 8);
  auto alpha = bytes_of(7);

  VrfOutput o1 = keys.vrf_eval(3, alpha);
  VrfOutput o2 = keys.vrf_eval(3, alpha);
  CHECK(o1.beta == o2.beta);
  CHECK(o1.proof == o2.proof);
  CHECK(o1.beta == hash_of_digests("vrf-beta", {&o1.proof}));

  CHECK(keys.vrf_verify(keys.public_key(3), alpha, o1));
  // Wrong key, right proof.
  CHECK(!keys.vrf_verify(keys.public_key(4), alpha, o1));
  // Unknown key.
  Digest bogus = hash_domain("nobody", alpha);
  CHECK(!keys.vrf_verify(bogus, alpha, o1));
  CHECK_THROWS(keys.vrf_eval(8, alpha));

  // Every single-byte mutation of the proof is rejected.
  for (size_t i = 0; i < 32; ++i) {
    VrfOutput mut = o1;
    mut.proof.bytes[i] ^= 0x5a;
    mut.beta = hash_of_digests("vrf-beta", {&mut.proof});
    CHECK(!keys.vrf_verify(keys.public_key(3), alpha, mut));
  }
}

TEST_CASE("signatures verify and bind to the signer") {
  KeyRegistry keys(5, 4);
  auto msg = bytes_of(1234);
  Digest sig = keys.sign(2, msg);
  CHECK(keys.verify_sig(keys.public_key(2), msg, sig));
  CHECK(!keys.verify_sig(keys.public_key(1), msg, sig));
  auto other = bytes_of(1235);
  CHECK(!keys.verify_sig(keys.public_key(2), other, sig));
}

TEST_CASE("map_to_node: trivial population, determinism, uniformity") {
  auto x = bytes_of(1);
  CHECK(map_to_node(x, 1) == 0);
  CHECK(map_to_node(x, 101) == map_to_node(x, 101));
  CHECK_THROWS(map_to_node(x, 0));

  // Chi-square uniformity over 1e5 draws, 101 bins; reject only beyond 5
  // sigma of the chi-square mean (df = 100, sigma = sqrt(200)).
  const uint32_t n = 101;
  std::vector<uint32_t> counts(n, 0);
  const uint64_t draws = 100000;
  for (uint64_t i = 0; i < draws; ++i) ++counts[map_to_node(bytes_of(i), n)];
  double expected = static_cast<double>(draws) / n;
  double chi2 = 0;
  for (uint32_t b : counts) chi2 += (b - expected) * (b - expected) / expected;
  CHECK(chi2 < 100 + 5 * std::sqrt(200.0));
}

TEST_CASE("committee threshold targets the expected size") {
  // Mean committee size c over many simulated rounds, within +-1 for c=10,
  // n=101 (the full end-to-end version lives in the acceptance suite).
  KeyRegistry keys(2024, 101);
  const uint32_t n = 101, c = 10;
  uint64_t members = 0;
  const uint64_t rounds = 10000;
  for (uint64_t r = 0; r < rounds; ++r) {
    auto alpha = bytes_of(r);
    for (NodeId u = 0; u < n; ++u)
      if (committee_hit(keys.vrf_eval(u, alpha).beta, c, n)) ++members;
  }
  double mean = static_cast<double>(members) / rounds;
  CHECK(mean > 9.0);
  CHECK(mean < 11.0);
}

TEST_CASE("committee membership is all-in when c = n") {
  KeyRegistry keys(7, 4);
  auto alpha = bytes_of(3);
  for (NodeId u = 0; u < 4; ++u)
    CHECK(committee_hit(keys.vrf_eval(u, alpha).beta, 4, 4));
}

TEST_CASE("beacon: epoch zero, cutoff selection, fallback") {
  Digest genesis = hash_domain("g", bytes_of(0));
  std::vector<BeaconEntry> chain;
  for (Round r : {80, 90, 95, 99})
    chain.push_back({r, hash_domain("e", bytes_of(r))});

  CHECK(compute_beacon(chain, 0, 2, 2, 100, genesis).beacon == genesis);

  // Epoch 1, epoch_length 100, tau0+tau1 = 3: cutoff is round 96; the
  // round-95 entry wins.
  auto res = compute_beacon(chain, 1, 1, 2, 100, genesis);
  CHECK(!res.genesis_fallback);
  Digest expect = hash_of_digests("beacon", {&chain[2].endorsement_hash});
  CHECK(res.beacon == expect);

  // Same finalized prefix, same beacon.
  auto res2 = compute_beacon(chain, 1, 1, 2, 100, genesis);
  CHECK(res2.beacon == res.beacon);

  // Nothing finalized before the cutoff: genesis fallback, flagged.
  std::vector<BeaconEntry> late{{99, hash_domain("e", bytes_of(99))}};
  auto fb = compute_beacon(late, 1, 2, 10, 100, genesis);
  CHECK(fb.genesis_fallback);
  CHECK(fb.beacon == genesis);
}

TEST_CASE("deterministic rng: keyed draws repeat and separate") {
  DetRng a(42), b(42), c(43);
  CHECK(a.draw("s", 1, 2, 3) == b.draw("s", 1, 2, 3));
  CHECK(a.draw("s", 1, 2, 3) != c.draw("s", 1, 2, 3));
  CHECK(a.draw("s", 1, 2, 3) != a.draw("t", 1, 2, 3));
  for (int i = 0; i < 100; ++i) {
    uint64_t v = a.uniform(1, 8, "u", static_cast<uint64_t>(i));
    CHECK(v >= 1);
    CHECK(v <= 8);
  }
}
