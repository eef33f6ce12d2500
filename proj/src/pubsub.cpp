#include "dusc/pubsub.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace dusc::pubsub {

namespace {

// Double hashing over two 64-bit lanes of the key digest.
struct HashPair {
  std::uint64_t h1;
  std::uint64_t h2;
};

HashPair hash_key(ByteView key) {
  crypto::Digest d = crypto::digest(key);
  std::uint64_t h1, h2;
  std::memcpy(&h1, d.bytes.data(), 8);
  std::memcpy(&h2, d.bytes.data() + 8, 8);
  h2 |= 1;  // keep the stride odd so probes do not degenerate
  return {h1, h2};
}

bool matches(const Subscription& sub, const ledger::Transaction& tx) {
  if (sub.include_broadcast && tx.recipient == ledger::broadcast_marker()) return true;
  for (const crypto::PublicKey& id : sub.identities) {
    if (tx.sender == id || tx.recipient == id) return true;
  }
  return false;
}

}  // namespace

BloomFilter BloomFilter::with_capacity(std::size_t capacity, double target_fp_rate) {
  if (capacity == 0) throw std::invalid_argument("bloom: capacity must be positive");
  if (!(target_fp_rate > 0.0 && target_fp_rate < 1.0)) {
    throw std::invalid_argument("bloom: fp rate must be in (0, 1)");
  }
  constexpr double ln2 = 0.6931471805599453;
  BloomFilter f;
  const double n = static_cast<double>(capacity);
  f.m_ = static_cast<std::size_t>(std::ceil(-n * std::log(target_fp_rate) / (ln2 * ln2)));
  f.m_ = std::max<std::size_t>(f.m_, 64);
  f.k_ = static_cast<std::size_t>(
      std::ceil(static_cast<double>(f.m_) / n * ln2));
  f.k_ = std::max<std::size_t>(f.k_, 1);
  f.words_.assign((f.m_ + 63) / 64, 0);
  return f;
}

void BloomFilter::insert(ByteView key) {
  const HashPair h = hash_key(key);
  for (std::size_t i = 0; i < k_; ++i) {
    const std::uint64_t bit = (h.h1 + i * h.h2) % m_;
    words_[bit >> 6] |= std::uint64_t{1} << (bit & 63);
  }
  ++inserted_;
}

bool BloomFilter::contains(ByteView key) const {
  const HashPair h = hash_key(key);
  for (std::size_t i = 0; i < k_; ++i) {
    const std::uint64_t bit = (h.h1 + i * h.h2) % m_;
    if (!(words_[bit >> 6] & (std::uint64_t{1} << (bit & 63)))) return false;
  }
  return true;
}

BloomFilter build_filter(const std::vector<crypto::PublicKey>& identities,
                         bool include_broadcast, double target_fp_rate) {
  if (identities.empty()) {
    throw std::invalid_argument("build_filter: empty identity set");
  }
  BloomFilter f =
      BloomFilter::with_capacity(identities.size() + (include_broadcast ? 1 : 0),
                                 target_fp_rate);
  for (const crypto::PublicKey& id : identities) f.insert(id.view());
  if (include_broadcast) f.insert(ledger::broadcast_marker().view());
  return f;
}

std::vector<CachedTx> filter_block(const ledger::Block& block, const BloomFilter& filter) {
  std::vector<CachedTx> out;
  for (const ledger::Transaction& tx : block.transactions) {
    if (filter.contains(tx.sender.view()) || filter.contains(tx.recipient.view())) {
      out.push_back(CachedTx{block.index, tx});
    }
  }
  return out;
}

Publisher::Publisher(ChainProvider chain) : chain_(std::move(chain)) {}

SubscriberHandle Publisher::join(Subscription sub) {
  const ledger::Chain& chain = chain_();
  if (sub.start_block > chain.size()) {
    throw std::invalid_argument("join: start_block beyond tip+1");
  }
  SubState st;
  st.filter = build_filter(sub.identities, sub.include_broadcast, sub.target_fp_rate);
  st.acked_block = static_cast<std::int64_t>(sub.start_block) - 1;
  st.next_block_to_cache = static_cast<std::int64_t>(sub.start_block);
  st.sub = std::move(sub);
  // Historical replay for a late joiner; this is join cost, not part of
  // the per-cycle single read.
  while (st.next_block_to_cache < static_cast<std::int64_t>(cursor_)) {
    ++blocks_read_;
    scan_block_for(st, chain[static_cast<std::size_t>(st.next_block_to_cache)]);
  }
  subs_.push_back(std::move(st));
  return subs_.size() - 1;
}

void Publisher::scan_block_for(SubState& st, const ledger::Block& block) {
  if (static_cast<std::int64_t>(block.index) < st.next_block_to_cache) return;
  for (CachedTx& m : filter_block(block, st.filter)) st.cache.push_back(std::move(m));
  st.next_block_to_cache = static_cast<std::int64_t>(block.index) + 1;
  if (st.cache.size() > cache_high_water_) ++high_water_warnings_;
}

void Publisher::publish_tick() {
  const ledger::Chain& chain = chain_();
  // A reorganization that rewrites already-delivered blocks would orphan
  // acknowledged transactions; that is a documented fatal condition.
  if (cursor_ > 0) {
    if (chain.size() < cursor_ || chain[cursor_ - 1].block_hash != last_read_hash_) {
      throw std::logic_error("publisher: chain reorganized below the read cursor");
    }
  }
  while (cursor_ < chain.size()) {
    const ledger::Block& block = chain[cursor_];
    ++blocks_read_;  // one read serves every subscriber
    for (SubState& st : subs_) scan_block_for(st, block);
    last_read_hash_ = block.block_hash;
    ++cursor_;
  }
}

DeliveryBatch Publisher::poll(SubscriberHandle h) {
  SubState& st = subs_.at(h);
  DeliveryBatch batch;
  batch.batch_id = st.next_batch_id++;
  batch.transactions.assign(st.cache.begin(), st.cache.end());
  batch.through_block = st.next_block_to_cache - 1;
  st.issued[batch.batch_id] = batch.through_block;
  return batch;
}

void Publisher::ack(SubscriberHandle h, std::uint64_t batch_id) {
  SubState& st = subs_.at(h);
  auto it = st.issued.find(batch_id);
  if (it == st.issued.end()) throw std::invalid_argument("ack: unknown batch id");
  const std::int64_t through = it->second;
  st.issued.erase(it);
  while (!st.cache.empty() &&
         static_cast<std::int64_t>(st.cache.front().block_index) <= through) {
    st.cache.pop_front();
  }
  st.acked_block = std::max(st.acked_block, through);
}

void Publisher::recover(SubscriberHandle h) {
  SubState& st = subs_.at(h);
  st.cache.clear();
  st.issued.clear();
  st.next_block_to_cache = st.acked_block + 1;
  const ledger::Chain& chain = chain_();
  // Per-subscriber re-read from the last acknowledged position.
  while (st.next_block_to_cache < static_cast<std::int64_t>(cursor_)) {
    ++blocks_read_;
    scan_block_for(st, chain[static_cast<std::size_t>(st.next_block_to_cache)]);
  }
}

void Publisher::recover_all() {
  if (subs_.empty()) return;
  std::int64_t oldest = std::numeric_limits<std::int64_t>::max();
  for (SubState& st : subs_) {
    st.cache.clear();
    st.issued.clear();
    st.next_block_to_cache = st.acked_block + 1;
    oldest = std::min(oldest, st.next_block_to_cache);
  }
  const ledger::Chain& chain = chain_();
  // Single sweep from the oldest position toward the cursor; per-sub start
  // offsets are honored by scan_block_for.
  for (std::int64_t b = std::max<std::int64_t>(oldest, 0);
       b < static_cast<std::int64_t>(cursor_); ++b) {
    ++blocks_read_;
    for (SubState& st : subs_) scan_block_for(st, chain[static_cast<std::size_t>(b)]);
  }
}

std::int64_t Publisher::acked_block(SubscriberHandle h) const {
  return subs_.at(h).acked_block;
}

std::size_t Publisher::cache_size(SubscriberHandle h) const {
  return subs_.at(h).cache.size();
}

std::vector<CachedTx> exact_match(const Subscription& sub, const DeliveryBatch& batch) {
  std::vector<CachedTx> out;
  for (const CachedTx& c : batch.transactions) {
    if (matches(sub, c.tx)) out.push_back(c);
  }
  return out;
}

std::vector<CachedTx> chain_scan(const ledger::Chain& chain, const Subscription& sub) {
  std::vector<CachedTx> out;
  for (const ledger::Block& block : chain) {
    if (block.index < sub.start_block) continue;
    for (const ledger::Transaction& tx : block.transactions) {
      if (matches(sub, tx)) out.push_back(CachedTx{block.index, tx});
    }
  }
  return out;
}

}  // namespace dusc::pubsub
