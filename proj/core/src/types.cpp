#include "cesim/types.hpp"

namespace cesim {

Digest block_hash(const BlockSummary& summary, const CollectedEndorsement& endorsements) {
  Encoder enc;
  enc.put_bytes(summary.encode());
  enc.put_bytes(endorsements.encode());
  return hash_domain("block", enc.bytes());
}

Digest merkle_root(std::span<const TxId> txs) {
  if (txs.empty()) return hash_domain("tx-empty", std::span<const uint8_t>{});
  std::vector<Digest> layer;
  layer.reserve(txs.size());
  for (const auto& t : txs) layer.push_back(hash_of_digests("tx-leaf", {&t}));
  while (layer.size() > 1) {
    if (layer.size() % 2 == 1) layer.push_back(layer.back());
    std::vector<Digest> next;
    next.reserve(layer.size() / 2);
    for (size_t i = 0; i < layer.size(); i += 2)
      next.push_back(hash_of_digests("tx-node", {&layer[i], &layer[i + 1]}));
    layer = std::move(next);
  }
  return layer[0];
}

Block make_genesis() {
  Block g;
  g.summary.parent_link = kNullDigest;
  g.summary.epoch = 0;
  g.summary.round = 0;
  g.summary.tx_root = merkle_root({});
  g.summary.finality = {kNullDigest, kNullDigest, kNullDigest, kNullDigest};
  g.summary.leader = kGenesisLeader;
  g.summary_sig = kNullDigest;
  g.endorsements.leader_sig = kNullDigest;
  return g;
}

}  // namespace cesim
