#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "dusc/crypto.hpp"
#include "dusc/ledger.hpp"
#include "dusc/protocol.hpp"
#include "dusc/pubsub.hpp"

// Deterministic state machines for the four roles. Agents never share
// mutable state; all inter-agent effects travel through the ledger (the
// bus) except the simulated in-memory data transfer on a granted access.
namespace dusc::roles {

using protocol::AuditRecord;

// Scheduler-provided effect sink: transaction submission, the logical
// clock, and direct data delivery back to a requester.
struct ServedItem {
  std::string data_id;
  std::string query;
  Bytes bytes;
  protocol::Reason reason = protocol::Reason::ok;  // per-item serve outcome
};

struct ServeReply {
  crypto::PublicKey source;
  crypto::PublicKey requester;
  protocol::Reason whole_reason = protocol::Reason::ok;
  std::vector<ServedItem> items;
};

struct AgentBus {
  std::function<void(const crypto::KeyPair&, const crypto::PublicKey&, Bytes)> submit;
  std::function<std::uint64_t()> now;
  std::function<void(const ServeReply&)> deliver;
};

// Which public keys a recipient could recover from one message; the
// scenario suite checks identity separation against these.
struct KeyVisibility {
  protocol::MessageKind kind = protocol::MessageKind::unknown;
  std::string viewer;
  std::string viewer_role;
  std::vector<crypto::PublicKey> visible;
};

class EndorserAgent {
 public:
  EndorserAgent(std::string name, crypto::KeyPair key, std::string feedback);

  // Endorses each RT at most once.
  protocol::Outcome<std::vector<protocol::Endorsement>> endorse(
      const protocol::Rt& rt, std::vector<protocol::Endorsement> chain);

  const std::string& name() const { return name_; }
  const crypto::PublicKey& id() const { return key_.pub; }

 private:
  std::string name_;
  crypto::KeyPair key_;
  std::string feedback_;
  std::unordered_set<std::string> endorsed_;
};

struct GrantPolicy {
  enum class Mode { deny_all, grant_matching, require_endorsement };
  Mode mode = Mode::grant_matching;
  std::set<crypto::PublicKey> required_endorsers;  // any-of, trusted chain links
};

class OwnerAgent {
 public:
  OwnerAgent(std::string name, protocol::OwnerKeys keys, protocol::AttrMap profile,
             GrantPolicy policy, std::set<crypto::PublicKey> trusted_endorsers);

  pubsub::Subscription subscription() const;
  void attach(pubsub::Publisher* pub, pubsub::SubscriberHandle handle);
  void set_visibility_sink(std::vector<KeyVisibility>* sink) { visibility_ = sink; }

  // Registration token for a source (assumption: registration is out of band).
  crypto::SignedEnvelope register_with(const crypto::PublicKey& source);

  // Drains the exact-matched batch: M1 -> portfolio, M2 -> policy -> M3,
  // M5 -> audit log. Malformed messages are skipped, never fatal.
  void process_inbox(AgentBus& bus);

  std::vector<AuditRecord> audit(const std::optional<std::string>& data_id = {}) const;

  const std::string& name() const { return name_; }
  const protocol::OwnerKeys& keys() const { return keys_; }
  const std::vector<protocol::Dot>& portfolio() const { return portfolio_; }
  const std::vector<AuditRecord>& audit_log() const { return audit_log_; }
  std::size_t m3_sent() const { return m3_sent_; }
  const std::unordered_set<crypto::Digest, crypto::DigestHash>& seen_transactions() const {
    return seen_txs_;
  }

 private:
  void handle_m1(ByteView payload);
  void handle_m2(ByteView payload, AgentBus& bus);
  void handle_m5(ByteView payload);
  void record_visibility(protocol::MessageKind kind,
                         std::vector<crypto::PublicKey> visible);

  std::string name_;
  protocol::OwnerKeys keys_;
  protocol::AttrMap profile_;
  GrantPolicy policy_;
  std::set<crypto::PublicKey> trusted_endorsers_;
  std::vector<protocol::Dot> portfolio_;
  std::vector<AuditRecord> audit_log_;
  std::map<std::string, crypto::SignedEnvelope> registrations_;  // source hex -> token
  std::unordered_set<std::string> answered_requests_;
  std::unordered_set<crypto::Digest, crypto::DigestHash> seen_txs_;
  std::size_t m3_sent_ = 0;
  pubsub::Publisher* pub_ = nullptr;
  pubsub::SubscriberHandle handle_ = 0;
  std::vector<KeyVisibility>* visibility_ = nullptr;
};

class SourceAgent {
 public:
  SourceAgent(std::string name, crypto::KeyPair key);

  pubsub::Subscription subscription() const;
  void attach(pubsub::Publisher* pub, pubsub::SubscriberHandle handle);
  void set_visibility_sink(std::vector<KeyVisibility>* sink) { visibility_ = sink; }
  void set_authorize_workers(unsigned workers) { workers_ = workers; }

  bool register_owner(const crypto::PublicKey& owner, const crypto::SignedEnvelope& token);
  // Mints the DOT and submits M1; fails on unregistered owner or reused id.
  bool store(const std::string& data_id, const crypto::PublicKey& owner,
             protocol::AttrMap metadata, Bytes bytes, protocol::DataAccessPath dap,
             AgentBus& bus);
  // Revocation model: the object disappears, access fails at serving time.
  bool remove(const std::string& data_id);
  void blacklist(const std::string& request_id) { blacklist_.insert(request_id); }

  void process_inbox(AgentBus& bus);
  ServeReply serve(const protocol::M4& m4, AgentBus& bus);

  struct ServeLogEntry {
    std::string data_id;
    crypto::PublicKey grantee;
    std::string query;
    std::uint64_t logical_time = 0;
    crypto::PublicKey owner;
  };

  const std::string& name() const { return name_; }
  const crypto::PublicKey& id() const { return key_.pub; }
  const crypto::KeyPair& key() const { return key_; }
  const std::vector<ServeLogEntry>& served_log() const { return served_log_; }
  const std::unordered_set<crypto::Digest, crypto::DigestHash>& seen_transactions() const {
    return seen_txs_;
  }

 private:
  void record_visibility(protocol::MessageKind kind,
                         std::vector<crypto::PublicKey> visible);

  struct ObjectRec {
    crypto::PublicKey owner;
    protocol::AttrMap metadata;
    Bytes bytes;
    protocol::DataAccessPath dap;
  };

  std::string name_;
  crypto::KeyPair key_;
  std::map<std::string, ObjectRec> objects_;
  std::map<std::string, crypto::SignedEnvelope> registered_;  // owner hex -> token
  std::unordered_set<std::string> blacklist_;
  std::vector<ServeLogEntry> served_log_;
  std::unordered_set<crypto::Digest, crypto::DigestHash> seen_txs_;
  unsigned workers_ = 1;
  pubsub::Publisher* pub_ = nullptr;
  pubsub::SubscriberHandle handle_ = 0;
  std::vector<KeyVisibility>* visibility_ = nullptr;
};

class RequesterAgent {
 public:
  RequesterAgent(std::string name, crypto::KeyPair key);

  pubsub::Subscription subscription() const;
  void attach(pubsub::Publisher* pub, pubsub::SubscriberHandle handle);
  void set_visibility_sink(std::vector<KeyVisibility>* sink) { visibility_ = sink; }

  // Creates the RT, gathers the endorsement chain, submits M2 broadcast.
  std::string broadcast_request(AgentBus& bus, std::string query, std::string conditions,
                                std::uint64_t duration_secs, protocol::AttrMap metadata,
                                const std::vector<EndorserAgent*>& endorsers);

  // Presents collected DATs to one source as an M4 transaction.
  bool access(AgentBus& bus, const std::string& request_id,
              const crypto::PublicKey& source);

  // Adversarial replay helper: copies another requester's collected grants.
  void adopt_grants(const RequesterAgent& victim, const std::string& request_id);

  void on_serve_reply(const ServeReply& reply);
  void process_inbox(AgentBus& bus);

  const std::string& name() const { return name_; }
  const crypto::PublicKey& id() const { return key_.pub; }
  const std::map<std::string, protocol::Rt>& open_requests() const { return open_requests_; }
  std::size_t grant_count(const std::string& request_id) const;
  const std::map<std::string, Bytes>& retrieved() const { return retrieved_; }
  // Last rejection reason per request id, as reason-code names.
  const std::map<std::string, std::string>& rejections() const { return rejections_; }
  const std::unordered_set<crypto::Digest, crypto::DigestHash>& seen_transactions() const {
    return seen_txs_;
  }

 private:
  void handle_m3(ByteView payload);
  void record_visibility(protocol::MessageKind kind,
                         std::vector<crypto::PublicKey> visible);

  std::string name_;
  crypto::KeyPair key_;
  std::map<std::string, protocol::Rt> open_requests_;
  std::map<std::string, std::vector<protocol::AccessTuple>> collected_;
  std::map<std::string, Bytes> retrieved_;
  std::map<std::string, std::string> rejections_;
  std::map<std::string, std::string> pending_access_;  // source hex -> request id
  std::unordered_set<crypto::Digest, crypto::DigestHash> seen_txs_;
  pubsub::Publisher* pub_ = nullptr;
  pubsub::SubscriberHandle handle_ = 0;
  std::vector<KeyVisibility>* visibility_ = nullptr;
};

}  // namespace dusc::roles
