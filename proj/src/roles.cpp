#include "dusc/roles.hpp"

#include <algorithm>

namespace dusc::roles {

namespace {

template <typename Agent>
std::vector<pubsub::CachedTx> drain_inbox(Agent& agent, pubsub::Publisher* pub,
                                          pubsub::SubscriberHandle handle,
                                          const pubsub::Subscription& sub) {
  (void)agent;
  if (!pub) return {};
  pubsub::DeliveryBatch batch = pub->poll(handle);
  auto exact = pubsub::exact_match(sub, batch);
  pub->ack(handle, batch.batch_id);
  return exact;
}

}  // namespace

// --- EndorserAgent ---------------------------------------------------------

EndorserAgent::EndorserAgent(std::string name, crypto::KeyPair key, std::string feedback)
    : name_(std::move(name)), key_(key), feedback_(std::move(feedback)) {}

protocol::Outcome<std::vector<protocol::Endorsement>> EndorserAgent::endorse(
    const protocol::Rt& rt, std::vector<protocol::Endorsement> chain) {
  using R = protocol::Outcome<std::vector<protocol::Endorsement>>;
  if (endorsed_.contains(rt.request_id)) {
    return R::failure(protocol::Reason::endorsement_sig);
  }
  auto out = protocol::endorse(rt, std::move(chain), key_, feedback_);
  if (out.ok()) endorsed_.insert(rt.request_id);
  return out;
}

// --- OwnerAgent --------------------------------------------------------------

OwnerAgent::OwnerAgent(std::string name, protocol::OwnerKeys keys, protocol::AttrMap profile,
                       GrantPolicy policy, std::set<crypto::PublicKey> trusted_endorsers)
    : name_(std::move(name)),
      keys_(keys),
      profile_(std::move(profile)),
      policy_(std::move(policy)),
      trusted_endorsers_(std::move(trusted_endorsers)) {}

pubsub::Subscription OwnerAgent::subscription() const {
  pubsub::Subscription sub;
  sub.subscriber_id = keys_.main.pub;
  sub.identities = {keys_.main.pub, keys_.exchange.pub, keys_.callback.pub};
  sub.include_broadcast = true;  // data requests arrive as broadcasts
  return sub;
}

void OwnerAgent::attach(pubsub::Publisher* pub, pubsub::SubscriberHandle handle) {
  pub_ = pub;
  handle_ = handle;
}

crypto::SignedEnvelope OwnerAgent::register_with(const crypto::PublicKey& source) {
  crypto::SignedEnvelope token = protocol::make_registration_token(keys_.main, source);
  registrations_[to_hex(source.view())] = token;
  return token;
}

void OwnerAgent::record_visibility(protocol::MessageKind kind,
                                   std::vector<crypto::PublicKey> visible) {
  if (visibility_) visibility_->push_back({kind, name_, "owner", std::move(visible)});
}

void OwnerAgent::process_inbox(AgentBus& bus) {
  for (const pubsub::CachedTx& c : drain_inbox(*this, pub_, handle_, subscription())) {
    if (!seen_txs_.insert(c.tx.tx_id).second) continue;  // at-least-once redelivery
    switch (protocol::classify_payload(as_view(c.tx.payload))) {
      case protocol::MessageKind::m1:
        if (c.tx.recipient == keys_.main.pub) handle_m1(as_view(c.tx.payload));
        break;
      case protocol::MessageKind::m2:
        handle_m2(as_view(c.tx.payload), bus);
        break;
      case protocol::MessageKind::m5:
        if (c.tx.recipient == keys_.callback.pub) handle_m5(as_view(c.tx.payload));
        break;
      default:
        break;  // not addressed to this role; skip
    }
  }
}

void OwnerAgent::handle_m1(ByteView payload) {
  auto m1 = protocol::M1::decode(payload);
  if (!m1) return;
  auto dot = protocol::verify_m1(*m1, keys_.main);
  if (!dot.ok()) return;
  record_visibility(protocol::MessageKind::m1, {dot->owner, dot->source});
  portfolio_.push_back(std::move(*dot));
}

void OwnerAgent::handle_m2(ByteView payload, AgentBus& bus) {
  auto m2 = protocol::M2::decode(payload);
  if (!m2) return;
  auto vreq = protocol::verify_m2(*m2, trusted_endorsers_);
  if (!vreq.ok()) return;
  {
    std::vector<crypto::PublicKey> visible{vreq->requester};
    for (const auto& e : m2->chain) visible.push_back(e.endorser);
    record_visibility(protocol::MessageKind::m2, std::move(visible));
  }
  if (answered_requests_.contains(vreq->rt.request_id)) return;

  protocol::MatchResult match = protocol::match_request(portfolio_, profile_, *vreq);
  if (match.matches.empty()) return;

  bool willing = false;
  switch (policy_.mode) {
    case GrantPolicy::Mode::deny_all:
      willing = false;
      break;
    case GrantPolicy::Mode::grant_matching:
      willing = true;
      break;
    case GrantPolicy::Mode::require_endorsement:
      for (const auto& e : vreq->trusted) {
        if (policy_.required_endorsers.contains(e.endorser)) willing = true;
      }
      break;
  }
  if (!willing) return;

  std::vector<std::pair<protocol::Dot, std::string>> grants;
  grants.reserve(match.matches.size());
  for (const protocol::Dot& dot : match.matches) {
    grants.emplace_back(dot, vreq->rt.query);
  }
  auto m3 = protocol::make_m3(keys_, grants, *vreq, bus.now());
  if (!m3.ok()) return;
  answered_requests_.insert(vreq->rt.request_id);
  ++m3_sent_;
  // Sent via the exchange identity so the requester never links it to K_O.
  bus.submit(keys_.exchange, vreq->requester, m3->encode());
}

void OwnerAgent::handle_m5(ByteView payload) {
  auto m5 = protocol::M5::decode(payload);
  if (!m5) return;
  auto rec = protocol::verify_m5(*m5, keys_.callback);
  if (!rec.ok()) return;
  record_visibility(protocol::MessageKind::m5, {rec->source, rec->grantee});
  audit_log_.push_back(std::move(*rec));
}

std::vector<AuditRecord> OwnerAgent::audit(const std::optional<std::string>& data_id) const {
  std::vector<AuditRecord> out;
  for (const AuditRecord& rec : audit_log_) {
    if (!data_id || rec.data_id == *data_id) out.push_back(rec);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.logical_time < b.logical_time;
  });
  return out;
}

// --- SourceAgent ---------------------------------------------------------------

SourceAgent::SourceAgent(std::string name, crypto::KeyPair key)
    : name_(std::move(name)), key_(key) {}

pubsub::Subscription SourceAgent::subscription() const {
  pubsub::Subscription sub;
  sub.subscriber_id = key_.pub;
  sub.identities = {key_.pub};
  sub.include_broadcast = false;
  return sub;
}

void SourceAgent::attach(pubsub::Publisher* pub, pubsub::SubscriberHandle handle) {
  pub_ = pub;
  handle_ = handle;
}

void SourceAgent::record_visibility(protocol::MessageKind kind,
                                    std::vector<crypto::PublicKey> visible) {
  if (visibility_) visibility_->push_back({kind, name_, "source", std::move(visible)});
}

bool SourceAgent::register_owner(const crypto::PublicKey& owner,
                                 const crypto::SignedEnvelope& token) {
  if (token.signer != owner || !crypto::verify(token)) return false;
  registered_[to_hex(owner.view())] = token;
  return true;
}

bool SourceAgent::store(const std::string& data_id, const crypto::PublicKey& owner,
                        protocol::AttrMap metadata, Bytes bytes,
                        protocol::DataAccessPath dap, AgentBus& bus) {
  auto reg = registered_.find(to_hex(owner.view()));
  if (reg == registered_.end()) return false;
  if (objects_.contains(data_id)) return false;  // data ids are unique per source

  protocol::Dot dot = protocol::make_dot(key_, owner, data_id, metadata, dap);
  objects_[data_id] = ObjectRec{owner, std::move(metadata), std::move(bytes), dap};
  protocol::M1 m1 = protocol::make_m1(key_, owner, reg->second, dot);
  bus.submit(key_, owner, m1.encode());
  return true;
}

bool SourceAgent::remove(const std::string& data_id) {
  return objects_.erase(data_id) > 0;
}

void SourceAgent::process_inbox(AgentBus& bus) {
  for (const pubsub::CachedTx& c : drain_inbox(*this, pub_, handle_, subscription())) {
    if (!seen_txs_.insert(c.tx.tx_id).second) continue;
    if (protocol::classify_payload(as_view(c.tx.payload)) != protocol::MessageKind::m4) {
      continue;
    }
    auto m4 = protocol::M4::decode(as_view(c.tx.payload));
    if (!m4) continue;
    ServeReply reply = serve(*m4, bus);
    if (bus.deliver) bus.deliver(reply);
  }
}

ServeReply SourceAgent::serve(const protocol::M4& m4, AgentBus& bus) {
  const std::uint64_t now = bus.now();
  protocol::AccessDecision decision =
      protocol::authorize(m4, key_, blacklist_, now, workers_);

  ServeReply reply;
  reply.source = key_.pub;
  reply.requester = decision.presenter;
  reply.whole_reason = decision.whole_reason;
  if (!decision.whole_ok()) return reply;

  {
    std::vector<crypto::PublicKey> visible{decision.presenter};
    for (const auto& g : decision.granted) {
      visible.push_back(g.dot.owner);
      visible.push_back(g.grant.callback);
      visible.push_back(g.grant.grantee);
    }
    record_visibility(protocol::MessageKind::m4, std::move(visible));
  }

  for (const auto& [index, reason] : decision.rejected) {
    (void)index;
    reply.items.push_back(ServedItem{"", "", {}, reason});
  }
  for (const protocol::GrantedAccess& g : decision.granted) {
    ServedItem item;
    item.data_id = g.grant.data_id;
    item.query = g.grant.query;
    auto obj = objects_.find(g.grant.data_id);
    if (obj == objects_.end()) {
      // Revoked: the capability verified but the object is gone.
      item.reason = protocol::Reason::malformed;
      reply.items.push_back(std::move(item));
      continue;
    }
    item.bytes = obj->second.bytes;
    reply.items.push_back(std::move(item));

    served_log_.push_back(
        ServeLogEntry{g.grant.data_id, g.grant.grantee, g.grant.query, now, g.dot.owner});
    protocol::M5 m5 = protocol::make_m5(key_, g, now);
    bus.submit(key_, g.grant.callback, m5.encode());
  }
  return reply;
}

// --- RequesterAgent ---------------------------------------------------------------

RequesterAgent::RequesterAgent(std::string name, crypto::KeyPair key)
    : name_(std::move(name)), key_(key) {}

pubsub::Subscription RequesterAgent::subscription() const {
  pubsub::Subscription sub;
  sub.subscriber_id = key_.pub;
  sub.identities = {key_.pub};
  sub.include_broadcast = false;
  return sub;
}

void RequesterAgent::attach(pubsub::Publisher* pub, pubsub::SubscriberHandle handle) {
  pub_ = pub;
  handle_ = handle;
}

void RequesterAgent::record_visibility(protocol::MessageKind kind,
                                       std::vector<crypto::PublicKey> visible) {
  if (visibility_) visibility_->push_back({kind, name_, "requester", std::move(visible)});
}

std::string RequesterAgent::broadcast_request(
    AgentBus& bus, std::string query, std::string conditions, std::uint64_t duration_secs,
    protocol::AttrMap metadata, const std::vector<EndorserAgent*>& endorsers) {
  protocol::Rt rt = protocol::make_rt(key_, std::move(query), std::move(conditions),
                                      duration_secs, std::move(metadata));
  std::vector<protocol::Endorsement> chain;
  for (EndorserAgent* e : endorsers) {
    auto extended = e->endorse(rt, std::move(chain));
    if (!extended.ok()) return {};
    chain = std::move(*extended);
  }
  auto m2 = protocol::make_m2(rt, std::move(chain), key_);
  if (!m2.ok()) return {};
  open_requests_[rt.request_id] = rt;
  bus.submit(key_, ledger::broadcast_marker(), m2->encode());
  return rt.request_id;
}

void RequesterAgent::process_inbox(AgentBus& bus) {
  (void)bus;
  for (const pubsub::CachedTx& c : drain_inbox(*this, pub_, handle_, subscription())) {
    if (!seen_txs_.insert(c.tx.tx_id).second) continue;
    if (protocol::classify_payload(as_view(c.tx.payload)) == protocol::MessageKind::m3) {
      handle_m3(as_view(c.tx.payload));
    }
  }
}

void RequesterAgent::handle_m3(ByteView payload) {
  auto m3 = protocol::M3::decode(payload);
  if (!m3) return;
  if (!open_requests_.contains(m3->request_id)) return;
  auto tuples = protocol::verify_m3(*m3, key_);
  if (!tuples.ok()) return;  // only verified grants are stored
  {
    std::vector<crypto::PublicKey> visible{m3->exchange_key};
    for (const auto& t : *tuples) visible.push_back(t.source);
    record_visibility(protocol::MessageKind::m3, std::move(visible));
  }
  auto& store = collected_[m3->request_id];
  store.insert(store.end(), tuples->begin(), tuples->end());
}

bool RequesterAgent::access(AgentBus& bus, const std::string& request_id,
                            const crypto::PublicKey& source) {
  auto it = collected_.find(request_id);
  if (it == collected_.end()) return false;
  std::vector<Bytes> dats;
  for (const protocol::AccessTuple& t : it->second) {
    if (t.source == source) dats.push_back(t.dat);
  }
  if (dats.empty()) return false;
  auto m4 = protocol::make_m4(dats, key_, source);
  if (!m4.ok()) return false;
  pending_access_[to_hex(source.view())] = request_id;
  bus.submit(key_, source, m4->encode());
  return true;
}

void RequesterAgent::adopt_grants(const RequesterAgent& victim,
                                  const std::string& request_id) {
  auto it = victim.collected_.find(request_id);
  if (it == victim.collected_.end()) return;
  auto& store = collected_[request_id];
  store.insert(store.end(), it->second.begin(), it->second.end());
}

void RequesterAgent::on_serve_reply(const ServeReply& reply) {
  auto pending = pending_access_.find(to_hex(reply.source.view()));
  const std::string request_id =
      pending == pending_access_.end() ? std::string() : pending->second;

  if (reply.whole_reason != protocol::Reason::ok) {
    if (!request_id.empty()) {
      rejections_[request_id] = std::string(protocol::reason_name(reply.whole_reason));
    }
    return;
  }
  for (const ServedItem& item : reply.items) {
    if (item.reason == protocol::Reason::ok) {
      retrieved_[item.data_id] = item.bytes;
    } else if (!request_id.empty()) {
      rejections_[request_id] = std::string(protocol::reason_name(item.reason));
    }
  }
}

std::size_t RequesterAgent::grant_count(const std::string& request_id) const {
  auto it = collected_.find(request_id);
  return it == collected_.end() ? 0 : it->second.size();
}

}  // namespace dusc::roles
