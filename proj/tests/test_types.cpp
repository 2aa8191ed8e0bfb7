#include <doctest.h>

#include "cesim/types.hpp"

using namespace cesim;

namespace {

// Reference Merkle construction, kept independent of the library path: hash
// the leaves, duplicate the last node on odd layers, fold pairwise.
Digest merkle_reference(const std::vector<TxId>& txs) {
  if (txs.empty()) return hash_domain("tx-empty", std::span<const uint8_t>{});
  std::vector<Digest> layer;
  for (const auto& t : txs) layer.push_back(hash_of_digests("tx-leaf", {&t}));
  while (layer.size() > 1) {
    std::vector<Digest> next;
    for (size_t i = 0; i < layer.size(); i += 2) {
      const Digest& l = layer[i];
      const Digest& r = i + 1 < layer.size() ? layer[i + 1] : layer[i];
      next.push_back(hash_of_digests("tx-node", {&l, &r}));
    }
    layer = next;
  }
  return layer[0];
}

TxId tx(uint64_t i) {
  Encoder enc;
  enc.put_u64(i);
  return hash_domain("test-tx", enc.bytes());
}

Block sample_block(uint64_t salt) {
  Block b;
  Encoder e;
  e.put_u64(salt);
  b.summary.parent_link = hash_domain("test-parent", e.bytes());
  b.summary.epoch = 1;
  b.summary.round = 107;
  b.summary.leader = 3;
  b.txs = {tx(salt), tx(salt + 1), tx(salt + 2)};
  b.summary.tx_root = merkle_root(b.txs);
  b.summary.finality = {hash_domain("a", e.bytes()), kNullDigest, kNullDigest,
                        hash_domain("b", e.bytes())};
  b.summary_sig = hash_domain("sig", e.bytes());
  for (uint32_t i = 0; i < 3; ++i) {
    Endorsement end;
    end.endorser = i;
    end.vrf_proof = hash_domain("p", e.bytes());
    end.summary_sig = hash_domain("s", e.bytes());
    b.endorsements.entries.push_back(end);
  }
  b.endorsements.leader_sig = hash_domain("ls", e.bytes());
  return b;
}

}  // namespace

TEST_CASE("merkle root: empty and single-leaf cases") {
  CHECK(merkle_root({}) == hash_domain("tx-empty", std::span<const uint8_t>{}));
  std::vector<TxId> one{tx(1)};
  TxId t1 = one[0];
  CHECK(merkle_root(one) == hash_of_digests("tx-leaf", {&t1}));
}

TEST_CASE("merkle root is order sensitive and matches the reference fold") {
  std::vector<TxId> ab{tx(1), tx(2)};
  std::vector<TxId> ba{tx(2), tx(1)};
  CHECK(merkle_root(ab) == merkle_reference(ab));
  CHECK(merkle_root(ba) == merkle_reference(ba));
  CHECK(merkle_root(ab) != merkle_root(ba));
}

TEST_CASE("merkle root matches the reference for every size up to 33") {
  std::vector<TxId> txs;
  for (uint64_t i = 0; i < 33; ++i) {
    txs.push_back(tx(i));
    CHECK(merkle_root(txs) == merkle_reference(txs));
  }
}

TEST_CASE("serialization round trip for every block part") {
  Block b = sample_block(7);
  CHECK(BlockSummary::decode(b.summary.encode()) == b.summary);
  CHECK(CollectedEndorsement::decode(b.endorsements.encode()) == b.endorsements);
  CHECK(Block::decode(b.encode()) == b);
}

TEST_CASE("block hash is stable across re-encoding") {
  Block b = sample_block(9);
  Digest h1 = block_hash(b.summary, b.endorsements);
  Block b2 = Block::decode(b.encode());
  CHECK(block_hash(b2.summary, b2.endorsements) == h1);
}

TEST_CASE("digests: hex round trip and null marker") {
  Block b = sample_block(11);
  Digest h = block_hash(b.summary, b.endorsements);
  CHECK(Digest::from_hex(h.hex()) == h);
  CHECK(kNullDigest.is_zero());
  CHECK(!h.is_zero());
}

TEST_CASE("genesis block is fixed and carries null pointers") {
  Block g1 = make_genesis();
  Block g2 = make_genesis();
  CHECK(block_hash(g1.summary, g1.endorsements) == block_hash(g2.summary, g2.endorsements));
  CHECK(g1.summary.leader == kGenesisLeader);
  CHECK(g1.summary.finality.nv.is_zero());
  CHECK(g1.summary.round == 0);
  CHECK(g1.txs.empty());
}
