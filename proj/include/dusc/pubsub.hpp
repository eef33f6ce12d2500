#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <vector>

#include "dusc/crypto.hpp"
#include "dusc/ledger.hpp"

// Messaging layer: publishers read the chain once per cycle, Bloom-filter
// transactions per subscription, cache matches and deliver them with
// acknowledgment-based at-least-once semantics.
namespace dusc::pubsub {

class BloomFilter {
 public:
  BloomFilter() = default;  // empty filter; use with_capacity to size one
  // m and k from the standard sizing formulas for capacity n at rate p:
  // m = ceil(-n ln p / (ln 2)^2), k = ceil((m/n) ln 2).
  static BloomFilter with_capacity(std::size_t capacity, double target_fp_rate);

  void insert(ByteView key);
  bool contains(ByteView key) const;

  std::size_t bit_count() const { return m_; }
  std::size_t hash_count() const { return k_; }
  std::size_t inserted_count() const { return inserted_; }

 private:
  std::vector<std::uint64_t> words_;
  std::size_t m_ = 0;
  std::size_t k_ = 0;
  std::size_t inserted_ = 0;
};

struct Subscription {
  crypto::PublicKey subscriber_id;
  std::vector<crypto::PublicKey> identities;  // match sender OR recipient
  bool include_broadcast = false;
  std::uint64_t start_block = 0;
  double target_fp_rate = 0.001;
};

// identities must be non-empty: a filter matching nothing is a
// configuration bug, so it throws.
BloomFilter build_filter(const std::vector<crypto::PublicKey>& identities,
                         bool include_broadcast, double target_fp_rate);

struct CachedTx {
  std::uint64_t block_index = 0;
  ledger::Transaction tx;
};

struct DeliveryBatch {
  std::uint64_t batch_id = 0;
  std::vector<CachedTx> transactions;
  std::int64_t through_block = -1;  // acknowledging advances acked_block here
};

// Bloom-filtered superset of the block's matching transactions; never a subset.
std::vector<CachedTx> filter_block(const ledger::Block& block, const BloomFilter& filter);

using SubscriberHandle = std::size_t;

class Publisher {
 public:
  using ChainProvider = std::function<const ledger::Chain&()>;
  explicit Publisher(ChainProvider chain);

  // start_block beyond tip+1 throws std::invalid_argument.
  SubscriberHandle join(Subscription sub);

  // One reader regardless of subscriber count: new blocks are read once
  // and fanned out to every cache.
  void publish_tick();

  // Returns the whole current cache; the cache is not cleared until ack.
  DeliveryBatch poll(SubscriberHandle h);
  // Unknown batch ids throw std::invalid_argument.
  void ack(SubscriberHandle h, std::uint64_t batch_id);

  // Crash recovery: rebuilds the cache from the last acknowledged block.
  void recover(SubscriberHandle h);
  // Alternative recovery strategy: one reader sweeps once from the oldest
  // acknowledged position and refills every cache on the way.
  void recover_all();

  // Caches are unbounded; crossing this mark only counts a warning.
  void set_cache_high_water(std::size_t mark) { cache_high_water_ = mark; }
  std::uint64_t high_water_warnings() const { return high_water_warnings_; }

  std::uint64_t blocks_read() const { return blocks_read_; }
  std::int64_t acked_block(SubscriberHandle h) const;
  std::size_t cache_size(SubscriberHandle h) const;
  std::size_t subscriber_count() const { return subs_.size(); }

 private:
  struct SubState {
    Subscription sub;
    BloomFilter filter;
    std::deque<CachedTx> cache;
    std::int64_t acked_block = -1;
    std::int64_t next_block_to_cache = 0;
    std::uint64_t next_batch_id = 1;
    std::map<std::uint64_t, std::int64_t> issued;  // batch_id -> through_block
  };

  void scan_block_for(SubState& st, const ledger::Block& block);

  ChainProvider chain_;
  std::vector<SubState> subs_;
  std::uint64_t cursor_ = 0;  // next block index the single reader will read
  std::uint64_t blocks_read_ = 0;
  std::size_t cache_high_water_ = 100000;
  std::uint64_t high_water_warnings_ = 0;
  crypto::Digest last_read_hash_;  // reorg below the cursor is fatal
};

// Subscriber-side exact filtering: discards Bloom false positives,
// leaving exactly the true match set.
std::vector<CachedTx> exact_match(const Subscription& sub, const DeliveryBatch& batch);

// Brute-force oracle: the true match set for a subscription over a chain.
std::vector<CachedTx> chain_scan(const ledger::Chain& chain, const Subscription& sub);

}  // namespace dusc::pubsub
