#include <doctest.h>

#include <cmath>
#include <set>
#include <unordered_set>

#include "dusc/pubsub.hpp"

using namespace dusc;
using namespace dusc::pubsub;

namespace {

crypto::PublicKey fresh_key() {
  crypto::PublicKey k;
  crypto::random_bytes(k.bytes.data(), k.bytes.size());
  return k;
}

crypto::KeyPair agent_key(std::uint64_t i) {
  return crypto::generate_identity(crypto::seed_from_u64(0xB100D + i));
}

ledger::Transaction tx_between(std::uint64_t i, const crypto::PublicKey& to) {
  return ledger::make_transaction(agent_key(i % 5), to, to_bytes("m" + std::to_string(i)), i);
}

// Chain whose block b holds txs addressed alternately to `hit` and noise.
ledger::Chain build_chain(std::size_t blocks, const crypto::PublicKey& hit) {
  ledger::Chain chain{ledger::genesis()};
  std::uint64_t t = 0;
  for (std::size_t b = 0; b < blocks; ++b) {
    std::vector<ledger::Transaction> txs;
    for (int i = 0; i < 4; ++i) {
      const bool match = (static_cast<int>(b) + i) % 2 == 0;
      txs.push_back(tx_between(t++, match ? hit : agent_key(77).pub));
    }
    chain.push_back(ledger::mine(std::move(txs), chain.back(), 0));
  }
  return chain;
}

std::multiset<std::string> id_multiset(const std::vector<CachedTx>& txs) {
  std::multiset<std::string> out;
  for (const CachedTx& c : txs) out.insert(c.tx.tx_id.hex());
  return out;
}

Subscription sub_for(const crypto::PublicKey& id, std::uint64_t start = 0) {
  Subscription s;
  s.subscriber_id = id;
  s.identities = {id};
  s.start_block = start;
  return s;
}

}  // namespace

TEST_CASE("bloom sizing follows the standard formulas") {
  const std::size_t n = 10000;
  const double p = 0.001;
  BloomFilter f = BloomFilter::with_capacity(n, p);
  // Independent recomputation of m and k.
  const double ln2 = std::log(2.0);
  const auto m = static_cast<std::size_t>(std::ceil(-double(n) * std::log(p) / (ln2 * ln2)));
  const auto k = static_cast<std::size_t>(std::ceil(double(m) / double(n) * ln2));
  CHECK(f.bit_count() == m);
  CHECK(f.hash_count() == k);
  CHECK(f.hash_count() == 10);

  CHECK_THROWS_AS(BloomFilter::with_capacity(0, p), std::invalid_argument);
  CHECK_THROWS_AS(BloomFilter::with_capacity(10, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(BloomFilter::with_capacity(10, 1.0), std::invalid_argument);
}

TEST_CASE("no false negatives, measured fp within twice the target") {
  crypto::set_deterministic_seed(301);
  const std::size_t n = 10000;
  std::vector<crypto::PublicKey> members;
  for (std::size_t i = 0; i < n; ++i) members.push_back(fresh_key());
  BloomFilter f = build_filter(members, false, 0.001);

  for (const auto& k : members) REQUIRE(f.contains(k.view()));

  // Exact-set oracle: fresh probes are non-members unless the oracle says so.
  std::unordered_set<crypto::PublicKey, crypto::PkHash> oracle(members.begin(), members.end());
  std::size_t fp = 0;
  const std::size_t probes = 100000;
  for (std::size_t i = 0; i < probes; ++i) {
    crypto::PublicKey probe = fresh_key();
    if (oracle.contains(probe)) continue;
    if (f.contains(probe.view())) ++fp;
  }
  const double rate = static_cast<double>(fp) / static_cast<double>(probes);
  CHECK(rate <= 0.002);
}

TEST_CASE("build_filter covers the identity set and optional broadcast marker") {
  crypto::set_deterministic_seed(302);
  std::vector<crypto::PublicKey> a;
  for (int i = 0; i < 16; ++i) a.push_back(fresh_key());
  BloomFilter fa = build_filter(a, false, 0.01);
  for (const auto& k : a) REQUIRE(fa.contains(k.view()));
  CHECK_FALSE(fa.contains(ledger::broadcast_marker().view()));

  BloomFilter fb = build_filter(a, true, 0.01);
  CHECK(fb.contains(ledger::broadcast_marker().view()));
  CHECK(fb.inserted_count() == a.size() + 1);

  CHECK_THROWS_AS(build_filter({}, false, 0.01), std::invalid_argument);
}

TEST_CASE("filter_block is a superset of the exact match set, never a subset") {
  crypto::set_deterministic_seed(303);
  crypto::KeyPair sub = agent_key(1);
  ledger::Chain chain = build_chain(8, sub.pub);
  Subscription s = sub_for(sub.pub);
  BloomFilter f = build_filter(s.identities, false, 0.001);

  for (const ledger::Block& b : chain) {
    auto filtered = filter_block(b, f);
    std::set<std::string> bloom_ids;
    for (const CachedTx& c : filtered) bloom_ids.insert(c.tx.tx_id.hex());
    for (const ledger::Transaction& tx : b.transactions) {
      const bool exact = tx.sender == sub.pub || tx.recipient == sub.pub;
      if (exact) REQUIRE(bloom_ids.contains(tx.tx_id.hex()));  // no misses, ever
    }
  }
}

TEST_CASE("broadcast transactions reach subscriptions that opted in") {
  crypto::set_deterministic_seed(304);
  ledger::Chain chain{ledger::genesis()};
  auto bcast = ledger::make_transaction(agent_key(0), ledger::broadcast_marker(),
                                        to_bytes("hello all"), 1);
  chain.push_back(ledger::mine({bcast}, chain.back(), 0));

  crypto::KeyPair sub = agent_key(9);
  Subscription with = sub_for(sub.pub);
  with.include_broadcast = true;
  Subscription without = sub_for(sub.pub);

  BloomFilter fw = build_filter(with.identities, true, 0.001);
  auto hits = filter_block(chain.back(), fw);
  REQUIRE(hits.size() == 1);
  CHECK(exact_match(with, DeliveryBatch{1, hits, 1}).size() == 1);
  CHECK(exact_match(without, DeliveryBatch{1, hits, 1}).empty());
}

TEST_CASE("join validates start_block and begins cache at start_block - 1") {
  crypto::set_deterministic_seed(305);
  crypto::KeyPair sub = agent_key(1);
  ledger::Chain chain = build_chain(4, sub.pub);
  Publisher pub([&]() -> const ledger::Chain& { return chain; });

  auto h = pub.join(sub_for(sub.pub, 2));
  CHECK(pub.acked_block(h) == 1);

  CHECK_THROWS_AS(pub.join(sub_for(sub.pub, chain.size() + 1)), std::invalid_argument);
  CHECK_NOTHROW(pub.join(sub_for(sub.pub, chain.size())));  // tip+1 is allowed
}

TEST_CASE("single reader: block reads per cycle do not scale with subscribers") {
  crypto::set_deterministic_seed(306);
  crypto::KeyPair sub = agent_key(1);
  ledger::Chain chain = build_chain(3, sub.pub);
  Publisher pub([&]() -> const ledger::Chain& { return chain; });

  for (std::uint64_t i = 0; i < 10; ++i) pub.join(sub_for(agent_key(i).pub));
  const std::uint64_t before = pub.blocks_read();
  pub.publish_tick();
  CHECK(pub.blocks_read() - before == chain.size());  // once per block, not per sub

  chain.push_back(ledger::mine({tx_between(50, sub.pub)}, chain.back(), 0));
  const std::uint64_t before2 = pub.blocks_read();
  pub.publish_tick();
  CHECK(pub.blocks_read() - before2 == 1);
}

TEST_CASE("poll does not clear; ack clears through the batch") {
  crypto::set_deterministic_seed(307);
  crypto::KeyPair sub = agent_key(1);
  ledger::Chain chain = build_chain(5, sub.pub);
  Publisher pub([&]() -> const ledger::Chain& { return chain; });
  auto h = pub.join(sub_for(sub.pub));
  pub.publish_tick();

  DeliveryBatch b1 = pub.poll(h);
  REQUIRE_FALSE(b1.transactions.empty());
  DeliveryBatch b2 = pub.poll(h);
  CHECK(id_multiset(b1.transactions) == id_multiset(b2.transactions));  // at-least-once

  pub.ack(h, b2.batch_id);
  CHECK(pub.cache_size(h) == 0);
  CHECK(pub.acked_block(h) == static_cast<std::int64_t>(chain.size()) - 1);
  CHECK(pub.poll(h).transactions.empty());

  CHECK_THROWS_AS(pub.ack(h, 9999), std::invalid_argument);
}

TEST_CASE("ordering: block order, then intra-block order") {
  crypto::set_deterministic_seed(308);
  crypto::KeyPair sub = agent_key(1);
  ledger::Chain chain = build_chain(6, sub.pub);
  Publisher pub([&]() -> const ledger::Chain& { return chain; });
  Subscription s = sub_for(sub.pub);
  auto h = pub.join(s);
  pub.publish_tick();

  DeliveryBatch batch = pub.poll(h);
  auto exact = exact_match(s, batch);
  std::uint64_t last_block = 0;
  std::uint64_t last_time = 0;
  for (const CachedTx& c : exact) {
    REQUIRE(c.block_index >= last_block);
    if (c.block_index == last_block) REQUIRE(c.tx.logical_time >= last_time);
    last_block = c.block_index;
    last_time = c.tx.logical_time;
  }
}

TEST_CASE("exact_match equals the brute-force chain scan") {
  crypto::set_deterministic_seed(309);
  crypto::KeyPair sub = agent_key(1);
  ledger::Chain chain = build_chain(7, sub.pub);
  Publisher pub([&]() -> const ledger::Chain& { return chain; });
  Subscription s = sub_for(sub.pub, 2);  // also exercise the start offset
  auto h = pub.join(s);
  pub.publish_tick();

  auto exact = exact_match(s, pub.poll(h));
  auto oracle = chain_scan(chain, s);
  REQUIRE(id_multiset(exact) == id_multiset(oracle));

  CHECK(exact_match(s, DeliveryBatch{}).empty());
}

TEST_CASE("late joiner replays history from its start block") {
  crypto::set_deterministic_seed(310);
  crypto::KeyPair sub = agent_key(1);
  ledger::Chain chain = build_chain(6, sub.pub);
  Publisher pub([&]() -> const ledger::Chain& { return chain; });

  // First subscriber pushes the cursor to the tip.
  pub.join(sub_for(agent_key(3).pub));
  pub.publish_tick();

  Subscription late = sub_for(sub.pub);
  auto h = pub.join(late);
  auto got = exact_match(late, pub.poll(h));
  CHECK(id_multiset(got) == id_multiset(chain_scan(chain, late)));
}

TEST_CASE("recovery re-reads from the last acknowledged block") {
  crypto::set_deterministic_seed(311);
  crypto::KeyPair sub = agent_key(1);
  ledger::Chain chain = build_chain(4, sub.pub);
  Publisher pub([&]() -> const ledger::Chain& { return chain; });
  Subscription s = sub_for(sub.pub);
  auto h = pub.join(s);
  pub.publish_tick();

  DeliveryBatch b1 = pub.poll(h);
  pub.ack(h, b1.batch_id);

  chain.push_back(ledger::mine({tx_between(61, sub.pub)}, chain.back(), 0));
  chain.push_back(ledger::mine({tx_between(62, sub.pub)}, chain.back(), 0));
  pub.publish_tick();

  // Crash before ack: the delivered-but-unacked batch is lost client-side.
  DeliveryBatch lost = pub.poll(h);
  REQUIRE(lost.transactions.size() == 2);
  pub.recover(h);

  auto after = exact_match(s, pub.poll(h));
  REQUIRE(after.size() == 2);  // both matching txs reappear, in block order
  CHECK(after[0].block_index < after[1].block_index);
}

TEST_CASE("at-least-once under a crash after every poll point") {
  crypto::set_deterministic_seed(312);
  crypto::KeyPair sub = agent_key(1);
  const ledger::Chain full = build_chain(10, sub.pub);
  const auto oracle = id_multiset(chain_scan(full, sub_for(sub.pub)));

  for (std::size_t crash_at = 0; crash_at < 10; ++crash_at) {
    // The provider exposes a growing prefix, one block per round.
    ledger::Chain fed{full.front()};
    Publisher pub([&]() -> const ledger::Chain& { return fed; });
    Subscription s = sub_for(sub.pub);
    auto h = pub.join(s);

    std::set<std::string> delivered;
    for (std::size_t round = 1; round < full.size(); ++round) {
      fed.push_back(full[round]);
      pub.publish_tick();
      DeliveryBatch batch = pub.poll(h);
      if (round - 1 == crash_at) {
        pub.recover(h);  // crash after poll, before ack; batch lost client-side
        continue;
      }
      for (const CachedTx& c : exact_match(s, batch)) delivered.insert(c.tx.tx_id.hex());
      pub.ack(h, batch.batch_id);
    }
    // Drain whatever recovery restored.
    DeliveryBatch last = pub.poll(h);
    for (const CachedTx& c : exact_match(s, last)) delivered.insert(c.tx.tx_id.hex());
    pub.ack(h, last.batch_id);

    // Everything matching still arrives in some acked batch.
    for (const auto& id : oracle) REQUIRE(delivered.contains(id));
  }
}

TEST_CASE("oldest-position sweep recovery matches per-subscriber recovery") {
  crypto::set_deterministic_seed(314);
  crypto::KeyPair a = agent_key(1);
  crypto::KeyPair b = agent_key(2);
  ledger::Chain chain = build_chain(6, a.pub);
  chain.push_back(ledger::mine({tx_between(90, b.pub)}, chain.back(), 0));

  auto run = [&](bool sweep) {
    Publisher pub([&]() -> const ledger::Chain& { return chain; });
    auto ha = pub.join(sub_for(a.pub));
    auto hb = pub.join(sub_for(b.pub));
    pub.publish_tick();
    // a acks partway, b acks nothing; then both crash.
    DeliveryBatch batch_a = pub.poll(ha);
    pub.ack(ha, batch_a.batch_id);
    if (sweep) {
      pub.recover_all();
    } else {
      pub.recover(ha);
      pub.recover(hb);
    }
    return std::make_pair(id_multiset(pub.poll(ha).transactions),
                          id_multiset(pub.poll(hb).transactions));
  };
  CHECK(run(true) == run(false));
}

TEST_CASE("cache growth past the high-water mark is counted, not dropped") {
  crypto::set_deterministic_seed(315);
  crypto::KeyPair sub = agent_key(1);
  ledger::Chain chain = build_chain(5, sub.pub);
  Publisher pub([&]() -> const ledger::Chain& { return chain; });
  pub.set_cache_high_water(3);
  auto h = pub.join(sub_for(sub.pub));
  pub.publish_tick();
  CHECK(pub.high_water_warnings() > 0);
  // Nothing evicted: delivery still matches the oracle.
  CHECK(id_multiset(exact_match(sub_for(sub.pub), pub.poll(h))) ==
        id_multiset(chain_scan(chain, sub_for(sub.pub))));
}

TEST_CASE("reorganization below the read cursor is a fatal assertion") {
  crypto::set_deterministic_seed(313);
  crypto::KeyPair sub = agent_key(1);
  ledger::Chain chain = build_chain(4, sub.pub);
  Publisher pub([&]() -> const ledger::Chain& { return chain; });
  pub.join(sub_for(sub.pub));
  pub.publish_tick();

  // Rewrite history under the publisher's feet.
  chain = build_chain(2, agent_key(8).pub);
  CHECK_THROWS_AS(pub.publish_tick(), std::logic_error);
}
