#pragma once

#include <optional>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cesim/bytes.hpp"

namespace cesim {

using NodeId = uint32_t;
using Round = uint32_t;
using Epoch = uint32_t;

// Leader id stamped on the synthesized genesis block; never a real node.
inline constexpr NodeId kGenesisLeader = 0xffffffffu;

// Random-oracle hash with mandatory domain separation. Every use site passes
// its own tag so leader selection, beacons, block hashes etc. cannot collide
// across protocols.
Digest hash_domain(std::string_view tag, std::span<const uint8_t> payload);
Digest hash_domain(std::string_view tag, std::initializer_list<std::span<const uint8_t>> parts);
Digest hash_of_digests(std::string_view tag, std::initializer_list<const Digest*> parts);

// Maps arbitrary bytes to a node id in [0, n) with uniform probability
// (rejection sampling kills the modulo bias). Throws when n == 0.
NodeId map_to_node(std::span<const uint8_t> x, uint32_t n);

struct VrfOutput {
  Digest beta;   // beta = H(proof)
  Digest proof;  // pi
};

// Committee membership threshold: a node joins the round committee when the
// hash of its VRF beta, read as a uniform fraction of digest space, lands at
// or below c/n. Expected committee size is c.
uint64_t committee_threshold(uint32_t c, uint32_t n);
bool committee_hit(const Digest& beta, uint32_t c, uint32_t n);

// Simulated key material. Keys are derived from the scenario seed; a registry
// of public keys stands in for public-key math during verification, which is
// exactly the power a desk-scale oracle model needs. Secret seeds never leave
// this class and never appear in traces.
class KeyRegistry {
 public:
  KeyRegistry(uint64_t scenario_seed, uint32_t n);

  uint32_t size() const { return static_cast<uint32_t>(pks_.size()); }
  const Digest& public_key(NodeId u) const;
  std::optional<NodeId> node_of(const Digest& pk) const;

  // VRF evaluation with the caller holding the secret (by node id). Throws on
  // unknown node ids.
  VrfOutput vrf_eval(NodeId u, std::span<const uint8_t> alpha) const;
  // Verification needs only public data. Returns false for malformed proofs,
  // wrong keys and unknown keys alike.
  bool vrf_verify(const Digest& pk, std::span<const uint8_t> alpha, const VrfOutput& out) const;

  Digest sign(NodeId u, std::span<const uint8_t> msg) const;
  bool verify_sig(const Digest& pk, std::span<const uint8_t> msg, const Digest& sig) const;

 private:
  const Digest& secret(NodeId u) const;
  std::vector<Digest> sks_;
  std::vector<Digest> pks_;
  std::unordered_map<Digest, NodeId, DigestHash> by_pk_;
};

// One finalized block's contribution to beacon derivation.
struct BeaconEntry {
  Round round;
  Digest endorsement_hash;  // hash of the block's collected endorsement
};

struct BeaconResult {
  Digest beacon;
  bool genesis_fallback;  // true when no finalized block precedes the cutoff
};

// Epoch beacon: hash of the collected endorsement of the latest finalized
// block with round < (last round of epoch e-1) - tau0 - tau1. Epoch 0, and any
// epoch whose cutoff precedes all finalized blocks, uses the genesis beacon.
// `finalized` must be sorted by ascending round.
BeaconResult compute_beacon(std::span<const BeaconEntry> finalized, Epoch epoch, uint32_t tau0,
                            uint32_t tau1, uint32_t epoch_length, const Digest& genesis_beacon);

// Deterministic counter-style RNG: every draw is keyed by the scenario seed,
// a stream tag and caller-chosen counters, so event insertion order cannot
// perturb unrelated draws.
class DetRng {
 public:
  explicit DetRng(uint64_t seed) : seed_(seed) {}
  uint64_t draw(std::string_view stream, uint64_t a, uint64_t b = 0, uint64_t c = 0) const;
  // Uniform in [lo, hi] inclusive.
  uint64_t uniform(uint64_t lo, uint64_t hi, std::string_view stream, uint64_t a, uint64_t b = 0,
                   uint64_t c = 0) const;

 private:
  uint64_t seed_;
};

}  // namespace cesim
