#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dusc/bytes.hpp"
#include "dusc/crypto.hpp"

// Append-only proof-of-work transaction store plus a deterministic
// multi-node broadcast simulator. Payloads are opaque here; the ledger
// never inspects protocol semantics.
namespace dusc::ledger {

// Distinguished recipient for broadcast transactions.
const crypto::PublicKey& broadcast_marker();

struct Transaction {
  crypto::PublicKey sender;
  crypto::PublicKey recipient;
  Bytes payload;
  std::uint64_t logical_time = 0;
  crypto::Signature signature;  // by sender over body
  crypto::Digest tx_id;         // digest of body

  Bytes body() const;
  Bytes encode() const;
  static std::optional<Transaction> decode(ByteView data);
  bool operator==(const Transaction&) const = default;
};

Transaction make_transaction(const crypto::KeyPair& sender,
                             const crypto::PublicKey& recipient, Bytes payload,
                             std::uint64_t logical_time);
bool verify_transaction(const Transaction& tx);

struct Block {
  std::uint64_t index = 0;
  crypto::Digest prev_hash;
  std::vector<Transaction> transactions;
  std::uint64_t nonce = 0;
  crypto::Digest block_hash;

  crypto::Digest compute_hash() const;  // over (index, prev_hash, tx digests, nonce)
  Bytes encode() const;
  static std::optional<Block> decode(ByteView data);
  bool operator==(const Block&) const = default;
};

using Chain = std::vector<Block>;

// Hardcoded first block: index 0, all-zero prev_hash, no transactions.
Block genesis();

bool difficulty_ok(const crypto::Digest& h, unsigned difficulty_bits);

// Nonce search from zero, so mining is deterministic for a fixed input.
Block mine(std::vector<Transaction> pending, const Block& prev, unsigned difficulty_bits);

struct CheckResult {
  bool ok = true;
  std::string failed_check;        // first failed check
  std::size_t block_index = 0;     // where validation stopped
};

CheckResult validate_block(const Block& block, const Block& prev, unsigned difficulty_bits);
CheckResult validate_chain(const Chain& chain, unsigned difficulty_bits);

// Longest valid chain wins; equal lengths keep local (first seen).
bool should_adopt(const Chain& local, const Chain& candidate, unsigned difficulty_bits);

// Openly readable: no credential parameter by construction.
std::vector<Block> retrieve(const Chain& chain, std::size_t from_index);

// Length-prefixed binary chain log (see docs/wire-format.md).
bool save_chain(const Chain& chain, const std::filesystem::path& path);
std::optional<Chain> load_chain(const std::filesystem::path& path);

// --- network simulation ------------------------------------------------

struct NetworkConfig {
  std::size_t nodes = 1;
  unsigned difficulty_bits = 0;
  std::size_t max_txs_per_block = 64;
  std::uint64_t seed = 0;
  std::uint64_t delay_min = 0;
  std::uint64_t delay_max = 0;
  double drop_rate = 0.0;
};

class Node {
 public:
  Node(unsigned difficulty_bits, std::size_t max_txs_per_block);

  // Ingress: invalid signatures are rejected, duplicates ignored.
  bool accept_transaction(const Transaction& tx);
  // Candidate chain from a peer; adopts per the fork rule.
  bool accept_chain(const Chain& candidate);
  // Mines one block from the oldest pending transactions; nullopt when
  // nothing is pending and empty mining is off.
  std::optional<Block> mine_one(bool allow_empty = false);

  const Chain& chain() const { return chain_; }
  std::size_t pending_count() const { return pending_.size(); }

 private:
  void refresh_pending();

  unsigned difficulty_bits_;
  std::size_t max_txs_per_block_;
  Chain chain_;
  std::vector<Transaction> known_;  // arrival order
  std::unordered_set<crypto::Digest, crypto::DigestHash> known_ids_;
  std::unordered_set<crypto::Digest, crypto::DigestHash> chained_ids_;
  std::deque<Transaction> pending_;
};

// Deterministic delivery: every broadcast is queued per destination with
// a seeded delay; drain() delivers in (time, sequence) order.
class NetworkSim {
 public:
  explicit NetworkSim(NetworkConfig cfg);

  // Validates at ingress, then broadcasts to every node (including origin).
  bool submit(std::size_t origin, const Transaction& tx);
  void broadcast_chain(std::size_t origin);

  bool drain();                  // deliver everything queued; true if any delivery
  std::size_t mine_round(const std::vector<std::size_t>& miners);
  // Drives mining + delivery to quiescence: no queued messages, no pending
  // transactions, all chains identical.
  bool settle(const std::vector<std::size_t>& miners);

  std::size_t node_count() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_[i]; }
  Node& node(std::size_t i) { return nodes_[i]; }
  const Chain& chain(std::size_t i = 0) const { return nodes_[i].chain(); }
  std::uint64_t deliveries() const { return deliveries_; }

 private:
  struct Event {
    std::uint64_t at;
    std::uint64_t seq;
    std::size_t dest;
    bool is_chain;
    Transaction tx;
    Chain chain;
  };
  struct EventOrder {
    bool operator()(const Event& a, const Event& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };

  std::uint64_t next_delay();
  bool dropped();
  void queue_tx(std::size_t dest, const Transaction& tx);

  NetworkConfig cfg_;
  std::vector<Node> nodes_;
  std::priority_queue<Event, std::vector<Event>, EventOrder> queue_;
  std::uint64_t now_ = 0;
  std::uint64_t seq_ = 0;
  std::uint64_t deliveries_ = 0;
  std::uint64_t rng_state_;
};

}  // namespace dusc::ledger
