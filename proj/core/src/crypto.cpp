#include "cesim/crypto.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstring>

namespace cesim {

namespace {

Digest sha256(std::span<const uint8_t> data) {
  Digest out;
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.bytes.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != 32)
    throw std::runtime_error("sha256 failure");
  return out;
}

}  // namespace

Digest hash_domain(std::string_view tag, std::span<const uint8_t> payload) {
  return hash_domain(tag, {payload});
}

Digest hash_domain(std::string_view tag, std::initializer_list<std::span<const uint8_t>> parts) {
  Encoder enc;
  enc.put_str(tag);
  for (auto& p : parts) enc.put_bytes(p);
  return sha256(enc.bytes());
}

Digest hash_of_digests(std::string_view tag, std::initializer_list<const Digest*> parts) {
  Encoder enc;
  enc.put_str(tag);
  for (auto* d : parts) enc.put_digest(*d);
  return sha256(enc.bytes());
}

NodeId map_to_node(std::span<const uint8_t> x, uint32_t n) {
  if (n == 0) throw std::runtime_error("map_to_node: empty population");
  if (n == 1) return 0;
  const uint64_t span = UINT64_MAX - (UINT64_MAX % n + 1) % n;  // last accepted value
  for (uint64_t ctr = 0;; ++ctr) {
    Encoder enc;
    enc.put_str("node-map");
    enc.put_bytes(x);
    enc.put_u64(ctr);
    uint64_t h = sha256(enc.bytes()).prefix_u64();
    if (h <= span) return static_cast<NodeId>(h % n);
  }
}

uint64_t committee_threshold(uint32_t c, uint32_t n) {
  if (n == 0) throw std::runtime_error("committee_threshold: empty population");
  if (c >= n) return UINT64_MAX;
  unsigned __int128 t = (static_cast<unsigned __int128>(c) << 64) / n;
  return static_cast<uint64_t>(t);
}

bool committee_hit(const Digest& beta, uint32_t c, uint32_t n) {
  Digest h = hash_of_digests("committee", {&beta});
  return h.prefix_u64() <= committee_threshold(c, n);
}

KeyRegistry::KeyRegistry(uint64_t scenario_seed, uint32_t n) {
  sks_.reserve(n);
  pks_.reserve(n);
  Encoder seed_enc;
  seed_enc.put_u64(scenario_seed);
  for (uint32_t u = 0; u < n; ++u) {
    Encoder enc;
    enc.put_u64(scenario_seed);
    enc.put_u64(u);
    Digest sk = hash_domain("node-sk", enc.bytes());
    Digest pk = hash_of_digests("node-pk", {&sk});
    by_pk_.emplace(pk, u);
    sks_.push_back(sk);
    pks_.push_back(pk);
  }
}

const Digest& KeyRegistry::public_key(NodeId u) const {
  if (u >= pks_.size()) throw std::runtime_error("public_key: unknown node");
  return pks_[u];
}

std::optional<NodeId> KeyRegistry::node_of(const Digest& pk) const {
  auto it = by_pk_.find(pk);
  if (it == by_pk_.end()) return std::nullopt;
  return it->second;
}

const Digest& KeyRegistry::secret(NodeId u) const {
  if (u >= sks_.size()) throw std::runtime_error("vrf_eval: unknown key");
  return sks_[u];
}

VrfOutput KeyRegistry::vrf_eval(NodeId u, std::span<const uint8_t> alpha) const {
  const Digest& sk = secret(u);
  Encoder enc;
  enc.put_digest(sk);
  enc.put_bytes(alpha);
  VrfOutput out;
  out.proof = hash_domain("vrf-proof", enc.bytes());
  out.beta = hash_of_digests("vrf-beta", {&out.proof});
  return out;
}

bool KeyRegistry::vrf_verify(const Digest& pk, std::span<const uint8_t> alpha,
                             const VrfOutput& out) const {
  auto u = node_of(pk);
  if (!u) return false;
  Encoder enc;
  enc.put_digest(sks_[*u]);
  enc.put_bytes(alpha);
  if (out.proof != hash_domain("vrf-proof", enc.bytes())) return false;
  return out.beta == hash_of_digests("vrf-beta", {&out.proof});
}

Digest KeyRegistry::sign(NodeId u, std::span<const uint8_t> msg) const {
  const Digest& sk = secret(u);
  Encoder enc;
  enc.put_digest(sk);
  enc.put_bytes(msg);
  return hash_domain("sig", enc.bytes());
}

bool KeyRegistry::verify_sig(const Digest& pk, std::span<const uint8_t> msg,
                             const Digest& sig) const {
  auto u = node_of(pk);
  if (!u) return false;
  Encoder enc;
  enc.put_digest(sks_[*u]);
  enc.put_bytes(msg);
  return sig == hash_domain("sig", enc.bytes());
}

BeaconResult compute_beacon(std::span<const BeaconEntry> finalized, Epoch epoch, uint32_t tau0,
                            uint32_t tau1, uint32_t epoch_length, const Digest& genesis_beacon) {
  if (epoch == 0) return {genesis_beacon, false};
  // Last round of epoch e-1, minus the propagation and finality margins.
  const int64_t cutoff =
      static_cast<int64_t>(epoch) * epoch_length - 1 - static_cast<int64_t>(tau0) - tau1;
  const BeaconEntry* best = nullptr;
  for (const auto& e : finalized) {
    if (static_cast<int64_t>(e.round) >= cutoff) break;
    best = &e;
  }
  if (best == nullptr) return {genesis_beacon, true};
  return {hash_of_digests("beacon", {&best->endorsement_hash}), false};
}

uint64_t DetRng::draw(std::string_view stream, uint64_t a, uint64_t b, uint64_t c) const {
  // SplitMix64-style finalizer over the keyed counters; cheap and stable.
  auto mix = [](uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  uint64_t tag = 1469598103934665603ull;
  for (char ch : stream) tag = (tag ^ static_cast<uint8_t>(ch)) * 1099511628211ull;
  uint64_t s = mix(seed_ ^ mix(tag));
  s = mix(s ^ mix(a));
  s = mix(s ^ mix(b + 0x632be59bd9b4e019ull));
  s = mix(s ^ mix(c + 0x9e6c63d0876a9a47ull));
  return s;
}

uint64_t DetRng::uniform(uint64_t lo, uint64_t hi, std::string_view stream, uint64_t a, uint64_t b,
                         uint64_t c) const {
  if (hi <= lo) return lo;
  uint64_t range = hi - lo + 1;
  return lo + draw(stream, a, b, c) % range;
}

}  // namespace cesim
