#include "dusc/ledger.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace dusc::ledger {

namespace {

constexpr std::string_view kTxDomain = "dusc.tx.v1";
constexpr std::string_view kBlockDomain = "dusc.block.v1";
constexpr char kChainMagic[8] = {'D', 'U', 'S', 'C', 'C', 'H', 'N', '1'};

bool get_pk(Decoder& dec, crypto::PublicKey& pk) {
  Bytes b;
  if (!dec.get_bytes(b) || b.size() != crypto::kPublicKeyBytes) return false;
  std::memcpy(pk.bytes.data(), b.data(), b.size());
  return true;
}

bool get_sig(Decoder& dec, crypto::Signature& sig) {
  Bytes b;
  if (!dec.get_bytes(b) || b.size() != crypto::kSignatureBytes) return false;
  std::memcpy(sig.bytes.data(), b.data(), b.size());
  return true;
}

bool get_digest(Decoder& dec, crypto::Digest& d) {
  Bytes b;
  if (!dec.get_bytes(b) || b.size() != crypto::kDigestBytes) return false;
  std::memcpy(d.bytes.data(), b.data(), b.size());
  return true;
}

// xorshift64* is enough for delivery jitter; crypto randomness is not
// needed here and a self-contained generator keeps replay byte-stable.
std::uint64_t xorshift64(std::uint64_t& s) {
  s ^= s >> 12;
  s ^= s << 25;
  s ^= s >> 27;
  return s * 0x2545F4914F6CDD1DULL;
}

}  // namespace

const crypto::PublicKey& broadcast_marker() {
  static const crypto::PublicKey marker = [] {
    crypto::PublicKey k;
    k.bytes.fill(0xFF);
    return k;
  }();
  return marker;
}

Bytes Transaction::body() const {
  Encoder enc;
  enc.put_str(kTxDomain);
  enc.put_bytes(sender.view());
  enc.put_bytes(recipient.view());
  enc.put_bytes(as_view(payload));
  enc.put_u64(logical_time);
  return enc.take();
}

Bytes Transaction::encode() const {
  Encoder enc;
  enc.put_bytes(sender.view());
  enc.put_bytes(recipient.view());
  enc.put_bytes(as_view(payload));
  enc.put_u64(logical_time);
  enc.put_bytes(signature.view());
  enc.put_bytes(tx_id.view());
  return enc.take();
}

std::optional<Transaction> Transaction::decode(ByteView data) {
  Decoder dec(data);
  Transaction tx;
  if (!get_pk(dec, tx.sender) || !get_pk(dec, tx.recipient) ||
      !dec.get_bytes(tx.payload) || !dec.get_u64(tx.logical_time) ||
      !get_sig(dec, tx.signature) || !get_digest(dec, tx.tx_id) || !dec.done()) {
    return std::nullopt;
  }
  return tx;
}

Transaction make_transaction(const crypto::KeyPair& sender,
                             const crypto::PublicKey& recipient, Bytes payload,
                             std::uint64_t logical_time) {
  Transaction tx;
  tx.sender = sender.pub;
  tx.recipient = recipient;
  tx.payload = std::move(payload);
  tx.logical_time = logical_time;
  const Bytes body = tx.body();
  tx.signature = crypto::sign(as_view(body), sender).signature;
  tx.tx_id = crypto::digest(as_view(body));
  return tx;
}

bool verify_transaction(const Transaction& tx) {
  const Bytes body = tx.body();
  if (tx.tx_id != crypto::digest(as_view(body))) return false;
  return crypto::verify(as_view(body), tx.signature, tx.sender);
}

crypto::Digest Block::compute_hash() const {
  Encoder enc;
  enc.put_str(kBlockDomain);
  enc.put_u64(index);
  enc.put_bytes(prev_hash.view());
  enc.put_u64(transactions.size());
  for (const Transaction& tx : transactions) enc.put_bytes(tx.tx_id.view());
  enc.put_u64(nonce);
  return crypto::digest(as_view(enc.bytes()));
}

Bytes Block::encode() const {
  Encoder enc;
  enc.put_u64(index);
  enc.put_bytes(prev_hash.view());
  enc.put_u64(transactions.size());
  for (const Transaction& tx : transactions) enc.put_bytes(as_view(tx.encode()));
  enc.put_u64(nonce);
  enc.put_bytes(block_hash.view());
  return enc.take();
}

std::optional<Block> Block::decode(ByteView data) {
  Decoder dec(data);
  Block b;
  std::uint64_t n = 0;
  if (!dec.get_u64(b.index) || !get_digest(dec, b.prev_hash) || !dec.get_u64(n) ||
      n > data.size()) {
    return std::nullopt;
  }
  for (std::uint64_t i = 0; i < n; ++i) {
    Bytes tx_bytes;
    if (!dec.get_bytes(tx_bytes)) return std::nullopt;
    auto tx = Transaction::decode(as_view(tx_bytes));
    if (!tx) return std::nullopt;
    b.transactions.push_back(std::move(*tx));
  }
  if (!dec.get_u64(b.nonce) || !get_digest(dec, b.block_hash) || !dec.done()) {
    return std::nullopt;
  }
  return b;
}

Block genesis() {
  Block g;
  g.index = 0;
  g.prev_hash = crypto::Digest::zero();
  g.nonce = 0;
  g.block_hash = g.compute_hash();
  return g;
}

bool difficulty_ok(const crypto::Digest& h, unsigned difficulty_bits) {
  unsigned remaining = difficulty_bits;
  for (std::uint8_t byte : h.bytes) {
    if (remaining == 0) return true;
    if (remaining >= 8) {
      if (byte != 0) return false;
      remaining -= 8;
    } else {
      return (byte >> (8 - remaining)) == 0;
    }
  }
  return remaining == 0;
}

Block mine(std::vector<Transaction> pending, const Block& prev, unsigned difficulty_bits) {
  Block b;
  b.index = prev.index + 1;
  b.prev_hash = prev.block_hash;
  b.transactions = std::move(pending);
  for (b.nonce = 0;; ++b.nonce) {
    b.block_hash = b.compute_hash();
    if (difficulty_ok(b.block_hash, difficulty_bits)) return b;
  }
}

CheckResult validate_block(const Block& block, const Block& prev, unsigned difficulty_bits) {
  CheckResult r;
  r.block_index = block.index;
  auto fail = [&](std::string_view check) {
    r.ok = false;
    r.failed_check = std::string(check);
    return r;
  };
  if (block.index != prev.index + 1) return fail("index-linkage");
  if (block.prev_hash != prev.block_hash) return fail("prev-hash-linkage");
  if (block.block_hash != block.compute_hash()) return fail("block-hash");
  if (!difficulty_ok(block.block_hash, difficulty_bits)) return fail("difficulty");
  for (const Transaction& tx : block.transactions) {
    if (!verify_transaction(tx)) return fail("tx-signature");
  }
  return r;
}

CheckResult validate_chain(const Chain& chain, unsigned difficulty_bits) {
  CheckResult r;
  auto fail = [&](std::string_view check, std::size_t at) {
    r.ok = false;
    r.failed_check = std::string(check);
    r.block_index = at;
    return r;
  };
  if (chain.empty()) return fail("empty-chain", 0);
  if (chain.front() != genesis()) return fail("genesis", 0);
  std::unordered_set<crypto::Digest, crypto::DigestHash> seen;
  for (std::size_t i = 1; i < chain.size(); ++i) {
    CheckResult b = validate_block(chain[i], chain[i - 1], difficulty_bits);
    if (!b.ok) {
      r.ok = false;
      r.failed_check = b.failed_check;
      r.block_index = i;
      return r;
    }
    for (const Transaction& tx : chain[i].transactions) {
      if (!seen.insert(tx.tx_id).second) return fail("duplicate-tx", i);
    }
  }
  return r;
}

bool should_adopt(const Chain& local, const Chain& candidate, unsigned difficulty_bits) {
  if (candidate.size() <= local.size()) return false;
  return validate_chain(candidate, difficulty_bits).ok;
}

std::vector<Block> retrieve(const Chain& chain, std::size_t from_index) {
  if (from_index >= chain.size()) return {};
  return std::vector<Block>(chain.begin() + static_cast<std::ptrdiff_t>(from_index),
                            chain.end());
}

bool save_chain(const Chain& chain, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return false;
  out.write(kChainMagic, sizeof kChainMagic);
  Encoder header;
  header.put_u64(chain.size());
  out.write(reinterpret_cast<const char*>(header.bytes().data()),
            static_cast<std::streamsize>(header.bytes().size()));
  for (const Block& b : chain) {
    Encoder enc;
    enc.put_bytes(as_view(b.encode()));
    out.write(reinterpret_cast<const char*>(enc.bytes().data()),
              static_cast<std::streamsize>(enc.bytes().size()));
  }
  return static_cast<bool>(out);
}

std::optional<Chain> load_chain(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < sizeof kChainMagic ||
      std::memcmp(data.data(), kChainMagic, sizeof kChainMagic) != 0) {
    return std::nullopt;
  }
  Decoder dec(ByteView(data.data() + sizeof kChainMagic, data.size() - sizeof kChainMagic));
  std::uint64_t count = 0;
  if (!dec.get_u64(count) || count > data.size()) return std::nullopt;
  Chain chain;
  for (std::uint64_t i = 0; i < count; ++i) {
    Bytes block_bytes;
    if (!dec.get_bytes(block_bytes)) return std::nullopt;
    auto block = Block::decode(as_view(block_bytes));
    if (!block) return std::nullopt;
    chain.push_back(std::move(*block));
  }
  if (!dec.done()) return std::nullopt;
  return chain;
}

// --- Node -----------------------------------------------------------------

Node::Node(unsigned difficulty_bits, std::size_t max_txs_per_block)
    : difficulty_bits_(difficulty_bits), max_txs_per_block_(max_txs_per_block) {
  chain_.push_back(genesis());
}

bool Node::accept_transaction(const Transaction& tx) {
  if (!verify_transaction(tx)) return false;
  if (known_ids_.contains(tx.tx_id)) return false;
  known_ids_.insert(tx.tx_id);
  known_.push_back(tx);
  if (!chained_ids_.contains(tx.tx_id)) pending_.push_back(tx);
  return true;
}

bool Node::accept_chain(const Chain& candidate) {
  if (!should_adopt(chain_, candidate, difficulty_bits_)) return false;
  chain_ = candidate;
  chained_ids_.clear();
  for (const Block& b : chain_) {
    for (const Transaction& tx : b.transactions) chained_ids_.insert(tx.tx_id);
  }
  refresh_pending();
  return true;
}

void Node::refresh_pending() {
  pending_.clear();
  for (const Transaction& tx : known_) {
    if (!chained_ids_.contains(tx.tx_id)) pending_.push_back(tx);
  }
}

std::optional<Block> Node::mine_one(bool allow_empty) {
  if (pending_.empty() && !allow_empty) return std::nullopt;
  std::vector<Transaction> batch;
  while (!pending_.empty() && batch.size() < max_txs_per_block_) {
    batch.push_back(pending_.front());
    pending_.pop_front();
  }
  Block b = mine(std::move(batch), chain_.back(), difficulty_bits_);
  for (const Transaction& tx : b.transactions) chained_ids_.insert(tx.tx_id);
  chain_.push_back(b);
  return b;
}

// --- NetworkSim --------------------------------------------------------------

NetworkSim::NetworkSim(NetworkConfig cfg) : cfg_(cfg), rng_state_(cfg.seed * 2 + 1) {
  for (std::size_t i = 0; i < cfg_.nodes; ++i) {
    nodes_.emplace_back(cfg_.difficulty_bits, cfg_.max_txs_per_block);
  }
}

std::uint64_t NetworkSim::next_delay() {
  if (cfg_.delay_max <= cfg_.delay_min) return cfg_.delay_min;
  const std::uint64_t span = cfg_.delay_max - cfg_.delay_min + 1;
  return cfg_.delay_min + xorshift64(rng_state_) % span;
}

bool NetworkSim::dropped() {
  if (cfg_.drop_rate <= 0.0) return false;
  const double roll =
      static_cast<double>(xorshift64(rng_state_) >> 11) / 9007199254740992.0;
  return roll < cfg_.drop_rate;
}

void NetworkSim::queue_tx(std::size_t dest, const Transaction& tx) {
  if (dropped()) return;
  Event ev;
  ev.at = now_ + next_delay();
  ev.seq = seq_++;
  ev.dest = dest;
  ev.is_chain = false;
  ev.tx = tx;
  queue_.push(std::move(ev));
}

bool NetworkSim::submit(std::size_t origin, const Transaction& tx) {
  (void)origin;  // ingress check happens once; all nodes receive the broadcast
  if (!verify_transaction(tx)) return false;
  for (std::size_t dest = 0; dest < nodes_.size(); ++dest) queue_tx(dest, tx);
  return true;
}

void NetworkSim::broadcast_chain(std::size_t origin) {
  for (std::size_t dest = 0; dest < nodes_.size(); ++dest) {
    if (dest == origin) continue;
    if (dropped()) continue;
    Event ev;
    ev.at = now_ + next_delay();
    ev.seq = seq_++;
    ev.dest = dest;
    ev.is_chain = true;
    ev.chain = nodes_[origin].chain();
    queue_.push(std::move(ev));
  }
}

bool NetworkSim::drain() {
  bool any = false;
  while (!queue_.empty()) {
    Event ev = queue_.top();
    queue_.pop();
    now_ = std::max(now_, ev.at);
    ++deliveries_;
    any = true;
    if (ev.is_chain) {
      nodes_[ev.dest].accept_chain(ev.chain);
    } else {
      nodes_[ev.dest].accept_transaction(ev.tx);
    }
  }
  return any;
}

std::size_t NetworkSim::mine_round(const std::vector<std::size_t>& miners) {
  std::size_t mined = 0;
  for (std::size_t m : miners) {
    if (nodes_[m].pending_count() == 0) continue;
    if (nodes_[m].mine_one()) {
      ++mined;
      broadcast_chain(m);
    }
  }
  return mined;
}

bool NetworkSim::settle(const std::vector<std::size_t>& miners) {
  if (miners.empty()) return drain(), true;
  for (int guard = 0; guard < 100000; ++guard) {
    drain();
    bool any_pending = false;
    for (const Node& n : nodes_) any_pending |= n.pending_count() > 0;
    bool chains_agree = true;
    for (std::size_t i = 1; i < nodes_.size(); ++i) {
      if (nodes_[i].chain() != nodes_[0].chain()) chains_agree = false;
    }
    if (!any_pending && chains_agree && queue_.empty()) return true;
    if (any_pending) {
      mine_round(miners);
    } else if (!chains_agree) {
      // Equal-length fork with nothing left to mine: the first miner
      // extends its chain with an empty block so the longest-chain rule
      // can break the tie.
      nodes_[miners.front()].mine_one(/*allow_empty=*/true);
      broadcast_chain(miners.front());
    }
  }
  return false;
}

}  // namespace dusc::ledger
