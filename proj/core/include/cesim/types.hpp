#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cesim/bytes.hpp"
#include "cesim/crypto.hpp"

namespace cesim {

using TxId = Digest;

enum class Role : uint8_t { Observer = 0, Leader = 1, Committee = 2 };

// A node can hold Leader and Committee simultaneously in one round.
struct RoleSet {
  bool leader = false;
  bool committee = false;
  bool observer_only() const { return !leader && !committee; }
};

enum class Mode : uint8_t { Normal, Abnormal };

// The four hash pointers carried inside every block: provisioned view,
// prepared, pre-committed and committed block. kNullDigest stands for "no
// block" (b0).
struct PrunedFinalityVector {
  Digest nv;
  Digest pp;
  Digest pc;
  Digest cm;

  bool operator==(const PrunedFinalityVector&) const = default;

  void encode(Encoder& enc) const {
    enc.put_digest(nv);
    enc.put_digest(pp);
    enc.put_digest(pc);
    enc.put_digest(cm);
  }
  static PrunedFinalityVector decode(Decoder& dec) {
    PrunedFinalityVector v;
    v.nv = dec.get_digest();
    v.pp = dec.get_digest();
    v.pc = dec.get_digest();
    v.cm = dec.get_digest();
    return v;
  }
};

// Full per-node vector; fn (the finalized block) never rides inside blocks.
struct FinalityVector {
  PrunedFinalityVector head;
  Digest fn;
  bool operator==(const FinalityVector&) const = default;
};

struct BlockSummary {
  Digest parent_link;  // H(parent summary | parent collected endorsement)
  Epoch epoch = 0;
  Round round = 0;
  Digest tx_root;
  PrunedFinalityVector finality;
  NodeId leader = 0;

  bool operator==(const BlockSummary&) const = default;

  std::vector<uint8_t> encode() const {
    Encoder enc;
    enc.put_digest(parent_link);
    enc.put_u64(epoch);
    enc.put_u64(round);
    enc.put_digest(tx_root);
    finality.encode(enc);
    enc.put_u64(leader);
    return enc.take();
  }
  static BlockSummary decode(std::span<const uint8_t> data) {
    Decoder dec(data);
    BlockSummary s;
    s.parent_link = dec.get_digest();
    s.epoch = static_cast<Epoch>(dec.get_u64());
    s.round = static_cast<Round>(dec.get_u64());
    s.tx_root = dec.get_digest();
    s.finality = PrunedFinalityVector::decode(dec);
    s.leader = static_cast<NodeId>(dec.get_u64());
    return s;
  }

  Digest hash() const { return hash_domain("summary", encode()); }
};

struct Endorsement {
  NodeId endorser = 0;
  Digest vrf_proof;    // pi, proves committee membership for (beacon | round)
  Digest summary_sig;  // endorser's signature over the summary bytes

  bool operator==(const Endorsement&) const = default;

  void encode(Encoder& enc) const {
    enc.put_u64(endorser);
    enc.put_digest(vrf_proof);
    enc.put_digest(summary_sig);
  }
  static Endorsement decode(Decoder& dec) {
    Endorsement e;
    e.endorser = static_cast<NodeId>(dec.get_u64());
    e.vrf_proof = dec.get_digest();
    e.summary_sig = dec.get_digest();
    return e;
  }
};

struct CollectedEndorsement {
  std::vector<Endorsement> entries;  // exactly d, ascending by public key
  Digest leader_sig;

  bool operator==(const CollectedEndorsement&) const = default;

  std::vector<uint8_t> encode() const {
    Encoder enc;
    enc.put_u64(entries.size());
    for (const auto& e : entries) e.encode(enc);
    enc.put_digest(leader_sig);
    return enc.take();
  }
  // Bytes the leader signs: the concatenated entries without the signature.
  std::vector<uint8_t> entries_bytes() const {
    Encoder enc;
    enc.put_u64(entries.size());
    for (const auto& e : entries) e.encode(enc);
    return enc.take();
  }
  static CollectedEndorsement decode(std::span<const uint8_t> data) {
    Decoder dec(data);
    CollectedEndorsement ce;
    auto n = dec.get_u64();
    ce.entries.reserve(n);
    for (uint64_t i = 0; i < n; ++i) ce.entries.push_back(Endorsement::decode(dec));
    ce.leader_sig = dec.get_digest();
    return ce;
  }
};

// A block travels as three separately broadcast parts (transactions + signed
// summary, then the collected endorsement); receivers assemble the matching
// parts into this struct.
struct Block {
  BlockSummary summary;
  Digest summary_sig;
  CollectedEndorsement endorsements;
  std::vector<TxId> txs;

  bool operator==(const Block&) const = default;

  std::vector<uint8_t> encode() const {
    Encoder enc;
    enc.put_bytes(summary.encode());
    enc.put_digest(summary_sig);
    enc.put_bytes(endorsements.encode());
    enc.put_u64(txs.size());
    for (const auto& t : txs) enc.put_digest(t);
    return enc.take();
  }
  static Block decode(std::span<const uint8_t> data) {
    Decoder dec(data);
    Block b;
    b.summary = BlockSummary::decode(dec.get_bytes());
    b.summary_sig = dec.get_digest();
    b.endorsements = CollectedEndorsement::decode(dec.get_bytes());
    auto n = dec.get_u64();
    b.txs.reserve(n);
    for (uint64_t i = 0; i < n; ++i) b.txs.push_back(dec.get_digest());
    return b;
  }
};

// H(summary | collected endorsement): the canonical block identity, also used
// as the parent link of the next block.
Digest block_hash(const BlockSummary& summary, const CollectedEndorsement& endorsements);

// Order-sensitive Merkle root over the tx list. Odd layers duplicate their
// last leaf; the empty list maps to a designated constant.
Digest merkle_root(std::span<const TxId> txs);

// Synthesizes the unique genesis block: round 0, reserved leader, empty
// endorsements, all-null finality pointers. Exempt from validity rules.
Block make_genesis();

}  // namespace cesim
