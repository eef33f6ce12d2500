#include "dusc/protocol.hpp"

#include <algorithm>
#include <cstring>
#include <thread>

namespace dusc::protocol {

namespace {

constexpr std::string_view kTokenDomain = "dusc.token.v1";
constexpr std::string_view kDotDomain = "dusc.dot.v1";
constexpr std::string_view kRtDomain = "dusc.rt.v1";
constexpr std::string_view kEndorseDomain = "dusc.endorse.v1";
constexpr std::string_view kGrantDomain = "dusc.grant.v1";
constexpr std::string_view kM2Domain = "dusc.m2.v1";
constexpr std::string_view kM1Plain = "dusc.m1.pt.v1";
constexpr std::string_view kM3ItemPlain = "dusc.m3item.pt.v1";
constexpr std::string_view kM3TrailerDomain = "dusc.m3trailer.v1";
constexpr std::string_view kM4DigestDomain = "dusc.m4digest.v1";
constexpr std::string_view kM4BindingPlain = "dusc.m4binding.pt.v1";
constexpr std::string_view kDatPlain = "dusc.dat.pt.v1";
constexpr std::string_view kM5Plain = "dusc.m5.pt.v1";

void put_pk(Encoder& enc, const crypto::PublicKey& pk) { enc.put_bytes(pk.view()); }
void put_sig(Encoder& enc, const crypto::Signature& sig) { enc.put_bytes(sig.view()); }
void put_digest(Encoder& enc, const crypto::Digest& d) { enc.put_bytes(d.view()); }

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

Bytes with_header(MessageKind kind, const Encoder& enc) {
  Bytes out;
  out.reserve(enc.bytes().size() + 2);
  out.push_back(static_cast<std::uint8_t>(kind));
  out.push_back(kFormatVersion);
  out.insert(out.end(), enc.bytes().begin(), enc.bytes().end());
  return out;
}

// Strips the 2-byte (tag, version) header, or returns an empty view.
std::optional<ByteView> strip_header(MessageKind kind, ByteView data) {
  if (data.size() < 2) return std::nullopt;
  if (data[0] != static_cast<std::uint8_t>(kind) || data[1] != kFormatVersion) {
    return std::nullopt;
  }
  return data.subspan(2);
}

crypto::Digest dat_list_digest(const std::vector<Bytes>& dats) {
  Encoder enc;
  enc.put_u64(dats.size());
  for (const Bytes& d : dats) enc.put_bytes(as_view(d));
  return crypto::digest(as_view(enc.bytes()));
}

crypto::Digest item_list_checksum(const std::vector<M3Item>& items) {
  Encoder enc;
  enc.put_u64(items.size());
  for (const M3Item& it : items) enc.put_bytes(as_view(it.sealed.encode()));
  return crypto::digest(as_view(enc.bytes()));
}

Bytes m4_digest_body(const crypto::Digest& list_digest) {
  Encoder enc;
  enc.put_str(kM4DigestDomain);
  put_digest(enc, list_digest);
  return enc.take();
}

std::string fresh_request_id(const crypto::PublicKey& requester) {
  std::uint8_t nonce[8];
  crypto::random_bytes(nonce, sizeof nonce);
  return "rt-" + requester.short_hex() + "-" + to_hex(ByteView(nonce, sizeof nonce));
}

}  // namespace

std::string_view reason_name(Reason r) {
  switch (r) {
    case Reason::ok: return "ok";
    case Reason::malformed: return "malformed";
    case Reason::seal: return "seal";
    case Reason::token_sig: return "token-sig";
    case Reason::dot_sig: return "dot-sig";
    case Reason::owner_mismatch: return "owner-mismatch";
    case Reason::rt_sig: return "rt-sig";
    case Reason::outer_sig: return "outer-sig";
    case Reason::requester_mismatch: return "requester-mismatch";
    case Reason::endorsement_sig: return "endorsement-sig";
    case Reason::checksum: return "checksum";
    case Reason::trailer_sig: return "trailer-sig";
    case Reason::grant_sig: return "grant-sig";
    case Reason::grantee_mismatch: return "grantee-mismatch";
    case Reason::blacklisted: return "blacklisted";
    case Reason::expired: return "expired";
    case Reason::digest: return "digest";
    case Reason::empty: return "empty";
  }
  return "unknown";
}

std::string_view dap_kind_name(DapKind k) {
  switch (k) {
    case DapKind::url: return "url";
    case DapKind::record_locator: return "record-locator";
    case DapKind::contact: return "contact";
    case DapKind::instructions: return "instructions";
    case DapKind::physical_location: return "physical-location";
  }
  return "url";
}

std::optional<DapKind> dap_kind_from_name(std::string_view name) {
  for (auto k : {DapKind::url, DapKind::record_locator, DapKind::contact,
                 DapKind::instructions, DapKind::physical_location}) {
    if (dap_kind_name(k) == name) return k;
  }
  return std::nullopt;
}

// --- DOT ----------------------------------------------------------------

Bytes Dot::signed_body() const {
  Encoder enc;
  enc.put_str(kDotDomain);
  enc.put_str(data_id);
  put_pk(enc, owner);
  enc.put_map(metadata);
  enc.put_u64(static_cast<std::uint64_t>(dap.kind));
  enc.put_str(dap.value);
  return enc.take();
}

Bytes Dot::encode() const {
  Encoder enc;
  enc.put_str(data_id);
  put_pk(enc, owner);
  enc.put_map(metadata);
  enc.put_u64(static_cast<std::uint64_t>(dap.kind));
  enc.put_str(dap.value);
  put_pk(enc, source);
  put_sig(enc, source_signature);
  return enc.take();
}

std::optional<Dot> Dot::decode(ByteView data) {
  Decoder dec(data);
  Dot dot;
  std::uint64_t kind = 0;
  if (!dec.get_str(dot.data_id) || !get_pk(dec, dot.owner) ||
      !dec.get_map(dot.metadata) || !dec.get_u64(kind) || !dec.get_str(dot.dap.value) ||
      !get_pk(dec, dot.source) || !get_sig(dec, dot.source_signature) || !dec.done()) {
    return std::nullopt;
  }
  if (kind > static_cast<std::uint64_t>(DapKind::physical_location)) return std::nullopt;
  dot.dap.kind = static_cast<DapKind>(kind);
  return dot;
}

Dot make_dot(const crypto::KeyPair& source, const crypto::PublicKey& owner,
             std::string data_id, AttrMap metadata, DataAccessPath dap) {
  Dot dot;
  dot.data_id = std::move(data_id);
  dot.owner = owner;
  dot.metadata = std::move(metadata);
  dot.dap = std::move(dap);
  dot.source = source.pub;
  dot.source_signature = crypto::sign(as_view(dot.signed_body()), source).signature;
  return dot;
}

bool verify_dot(const Dot& dot) {
  return crypto::verify(as_view(dot.signed_body()), dot.source_signature, dot.source);
}

// --- RT -------------------------------------------------------------------

Bytes Rt::signed_body() const {
  Encoder enc;
  enc.put_str(kRtDomain);
  enc.put_str(request_id);
  enc.put_str(query);
  enc.put_str(conditions);
  enc.put_u64(duration_secs);
  enc.put_map(metadata);
  put_pk(enc, requester);
  return enc.take();
}

Bytes Rt::encode() const {
  Encoder enc;
  enc.put_str(request_id);
  enc.put_str(query);
  enc.put_str(conditions);
  enc.put_u64(duration_secs);
  enc.put_map(metadata);
  put_pk(enc, requester);
  put_sig(enc, requester_signature);
  return enc.take();
}

std::optional<Rt> Rt::decode(ByteView data) {
  Decoder dec(data);
  Rt rt;
  if (!dec.get_str(rt.request_id) || !dec.get_str(rt.query) ||
      !dec.get_str(rt.conditions) || !dec.get_u64(rt.duration_secs) ||
      !dec.get_map(rt.metadata) || !get_pk(dec, rt.requester) ||
      !get_sig(dec, rt.requester_signature) || !dec.done()) {
    return std::nullopt;
  }
  return rt;
}

Rt make_rt(const crypto::KeyPair& requester, std::string query, std::string conditions,
           std::uint64_t duration_secs, AttrMap metadata) {
  if (duration_secs == 0) throw std::invalid_argument("make_rt: duration must be positive");
  Rt rt;
  rt.request_id = fresh_request_id(requester.pub);
  rt.query = std::move(query);
  rt.conditions = std::move(conditions);
  rt.duration_secs = duration_secs;
  rt.metadata = std::move(metadata);
  rt.requester = requester.pub;
  rt.requester_signature = crypto::sign(as_view(rt.signed_body()), requester).signature;
  return rt;
}

bool verify_rt(const Rt& rt) {
  return crypto::verify(as_view(rt.signed_body()), rt.requester_signature, rt.requester);
}

// --- endorsements -----------------------------------------------------------

Bytes Endorsement::signed_body(const crypto::Digest& prior) const {
  Encoder enc;
  enc.put_str(kEndorseDomain);
  put_digest(enc, rt_digest);
  enc.put_str(feedback);
  put_digest(enc, prior);
  return enc.take();
}

Bytes Endorsement::encode() const {
  Encoder enc;
  put_digest(enc, rt_digest);
  enc.put_str(feedback);
  put_pk(enc, endorser);
  put_sig(enc, signature);
  return enc.take();
}

std::optional<Endorsement> Endorsement::decode(ByteView data) {
  Decoder dec(data);
  Endorsement e;
  if (!get_digest(dec, e.rt_digest) || !dec.get_str(e.feedback) ||
      !get_pk(dec, e.endorser) || !get_sig(dec, e.signature) || !dec.done()) {
    return std::nullopt;
  }
  return e;
}

bool verify_endorsement_chain(const Rt& rt, const std::vector<Endorsement>& chain) {
  const crypto::Digest rt_digest = crypto::digest(as_view(rt.encode()));
  crypto::Digest prior = crypto::Digest::zero();
  for (const Endorsement& e : chain) {
    if (e.rt_digest != rt_digest) return false;
    if (!crypto::verify(as_view(e.signed_body(prior)), e.signature, e.endorser)) {
      return false;
    }
    prior = e.chain_digest();
  }
  return true;
}

Outcome<std::vector<Endorsement>> endorse(const Rt& rt, std::vector<Endorsement> chain,
                                          const crypto::KeyPair& endorser,
                                          std::string feedback) {
  if (!verify_endorsement_chain(rt, chain)) {
    return Outcome<std::vector<Endorsement>>::failure(Reason::endorsement_sig);
  }
  Endorsement e;
  e.rt_digest = crypto::digest(as_view(rt.encode()));
  e.feedback = std::move(feedback);
  e.endorser = endorser.pub;
  const crypto::Digest prior =
      chain.empty() ? crypto::Digest::zero() : chain.back().chain_digest();
  e.signature = crypto::sign(as_view(e.signed_body(prior)), endorser).signature;
  chain.push_back(std::move(e));
  return Outcome<std::vector<Endorsement>>::success(std::move(chain));
}

// --- grant / DAT -------------------------------------------------------------

Bytes Grant::signed_body() const {
  Encoder enc;
  enc.put_str(kGrantDomain);
  enc.put_str(data_id);
  enc.put_str(request_id);
  enc.put_str(query);
  put_pk(enc, owner);
  put_pk(enc, callback);
  put_pk(enc, grantee);
  enc.put_u64(duration_secs);
  enc.put_u64(issued_at);
  return enc.take();
}

Bytes Grant::encode() const {
  Encoder enc;
  enc.put_str(data_id);
  enc.put_str(request_id);
  enc.put_str(query);
  put_pk(enc, owner);
  put_pk(enc, callback);
  put_pk(enc, grantee);
  enc.put_u64(duration_secs);
  enc.put_u64(issued_at);
  put_sig(enc, owner_signature);
  return enc.take();
}

std::optional<Grant> Grant::decode(ByteView data) {
  Decoder dec(data);
  Grant g;
  if (!dec.get_str(g.data_id) || !dec.get_str(g.request_id) || !dec.get_str(g.query) ||
      !get_pk(dec, g.owner) || !get_pk(dec, g.callback) || !get_pk(dec, g.grantee) ||
      !dec.get_u64(g.duration_secs) || !dec.get_u64(g.issued_at) ||
      !get_sig(dec, g.owner_signature) || !dec.done()) {
    return std::nullopt;
  }
  return g;
}

Bytes DatInterior::encode() const {
  Encoder enc;
  enc.put_str(kDatPlain);
  put_pk(enc, owner);
  enc.put_bytes(as_view(dot.encode()));
  enc.put_bytes(as_view(grant.encode()));
  return enc.take();
}

std::optional<DatInterior> DatInterior::decode(ByteView data) {
  Decoder dec(data);
  DatInterior in;
  std::string domain;
  Bytes dot_bytes, grant_bytes;
  if (!dec.get_str(domain) || domain != kDatPlain || !get_pk(dec, in.owner) ||
      !dec.get_bytes(dot_bytes) || !dec.get_bytes(grant_bytes) || !dec.done()) {
    return std::nullopt;
  }
  auto dot = Dot::decode(as_view(dot_bytes));
  auto grant = Grant::decode(as_view(grant_bytes));
  if (!dot || !grant) return std::nullopt;
  in.dot = std::move(*dot);
  in.grant = std::move(*grant);
  return in;
}

Bytes make_dat(const Dot& dot, const Grant& grant, const crypto::PublicKey& source) {
  DatInterior interior{dot.owner, dot, grant};
  return crypto::seal(as_view(interior.encode()), source).encode();
}

// --- message encodings --------------------------------------------------------

MessageKind classify_payload(ByteView payload) {
  if (payload.size() < 2 || payload[1] != kFormatVersion) return MessageKind::unknown;
  if (payload[0] >= 1 && payload[0] <= 5) return static_cast<MessageKind>(payload[0]);
  return MessageKind::unknown;
}

Bytes M1::encode() const {
  Encoder enc;
  enc.put_bytes(as_view(sealed.encode()));
  return with_header(MessageKind::m1, enc);
}

std::optional<M1> M1::decode(ByteView data) {
  auto body = strip_header(MessageKind::m1, data);
  if (!body) return std::nullopt;
  Decoder dec(*body);
  Bytes sealed_bytes;
  if (!dec.get_bytes(sealed_bytes) || !dec.done()) return std::nullopt;
  auto sealed = crypto::SealedEnvelope::decode(as_view(sealed_bytes));
  if (!sealed) return std::nullopt;
  return M1{std::move(*sealed)};
}

Bytes M2::signed_body() const {
  Encoder enc;
  enc.put_str(kM2Domain);
  enc.put_bytes(as_view(rt.encode()));
  enc.put_u64(chain.size());
  for (const Endorsement& e : chain) enc.put_bytes(as_view(e.encode()));
  enc.put_u64(endorser_keys.size());
  for (const auto& k : endorser_keys) put_pk(enc, k);
  put_pk(enc, requester);
  return enc.take();
}

Bytes M2::encode() const {
  Encoder enc;
  enc.put_bytes(as_view(rt.encode()));
  enc.put_u64(chain.size());
  for (const Endorsement& e : chain) enc.put_bytes(as_view(e.encode()));
  enc.put_u64(endorser_keys.size());
  for (const auto& k : endorser_keys) put_pk(enc, k);
  put_pk(enc, requester);
  put_sig(enc, outer_signature);
  return with_header(MessageKind::m2, enc);
}

std::optional<M2> M2::decode(ByteView data) {
  auto body = strip_header(MessageKind::m2, data);
  if (!body) return std::nullopt;
  Decoder dec(*body);
  M2 m2;
  Bytes rt_bytes;
  std::uint64_t n = 0;
  if (!dec.get_bytes(rt_bytes)) return std::nullopt;
  auto rt = Rt::decode(as_view(rt_bytes));
  if (!rt) return std::nullopt;
  m2.rt = std::move(*rt);
  if (!dec.get_u64(n) || n > body->size()) return std::nullopt;
  for (std::uint64_t i = 0; i < n; ++i) {
    Bytes e_bytes;
    if (!dec.get_bytes(e_bytes)) return std::nullopt;
    auto e = Endorsement::decode(as_view(e_bytes));
    if (!e) return std::nullopt;
    m2.chain.push_back(std::move(*e));
  }
  if (!dec.get_u64(n) || n > body->size()) return std::nullopt;
  for (std::uint64_t i = 0; i < n; ++i) {
    crypto::PublicKey k;
    if (!get_pk(dec, k)) return std::nullopt;
    m2.endorser_keys.push_back(k);
  }
  if (!get_pk(dec, m2.requester) || !get_sig(dec, m2.outer_signature) || !dec.done()) {
    return std::nullopt;
  }
  return m2;
}

Bytes M3::trailer_body() const {
  Encoder enc;
  enc.put_str(kM3TrailerDomain);
  enc.put_str(request_id);
  put_pk(enc, exchange_key);
  put_digest(enc, checksum);
  return enc.take();
}

Bytes M3::encode() const {
  Encoder enc;
  enc.put_u64(items.size());
  for (const M3Item& it : items) enc.put_bytes(as_view(it.sealed.encode()));
  enc.put_str(request_id);
  put_pk(enc, exchange_key);
  put_digest(enc, checksum);
  put_sig(enc, trailer_signature);
  return with_header(MessageKind::m3, enc);
}

std::optional<M3> M3::decode(ByteView data) {
  auto body = strip_header(MessageKind::m3, data);
  if (!body) return std::nullopt;
  Decoder dec(*body);
  M3 m3;
  std::uint64_t n = 0;
  if (!dec.get_u64(n) || n > body->size()) return std::nullopt;
  for (std::uint64_t i = 0; i < n; ++i) {
    Bytes item_bytes;
    if (!dec.get_bytes(item_bytes)) return std::nullopt;
    auto sealed = crypto::SealedEnvelope::decode(as_view(item_bytes));
    if (!sealed) return std::nullopt;
    m3.items.push_back(M3Item{std::move(*sealed)});
  }
  if (!dec.get_str(m3.request_id) || !get_pk(dec, m3.exchange_key) ||
      !get_digest(dec, m3.checksum) || !get_sig(dec, m3.trailer_signature) ||
      !dec.done()) {
    return std::nullopt;
  }
  return m3;
}

Bytes M4::encode() const {
  Encoder enc;
  enc.put_u64(dats.size());
  for (const Bytes& d : dats) enc.put_bytes(as_view(d));
  enc.put_bytes(as_view(binding.encode()));
  return with_header(MessageKind::m4, enc);
}

std::optional<M4> M4::decode(ByteView data) {
  auto body = strip_header(MessageKind::m4, data);
  if (!body) return std::nullopt;
  Decoder dec(*body);
  M4 m4;
  std::uint64_t n = 0;
  if (!dec.get_u64(n) || n > body->size()) return std::nullopt;
  for (std::uint64_t i = 0; i < n; ++i) {
    Bytes d;
    if (!dec.get_bytes(d)) return std::nullopt;
    m4.dats.push_back(std::move(d));
  }
  Bytes binding_bytes;
  if (!dec.get_bytes(binding_bytes) || !dec.done()) return std::nullopt;
  auto binding = crypto::SealedEnvelope::decode(as_view(binding_bytes));
  if (!binding) return std::nullopt;
  m4.binding = std::move(*binding);
  return m4;
}

Bytes M5::encode() const {
  Encoder enc;
  enc.put_bytes(as_view(sealed.encode()));
  return with_header(MessageKind::m5, enc);
}

std::optional<M5> M5::decode(ByteView data) {
  auto body = strip_header(MessageKind::m5, data);
  if (!body) return std::nullopt;
  Decoder dec(*body);
  Bytes sealed_bytes;
  if (!dec.get_bytes(sealed_bytes) || !dec.done()) return std::nullopt;
  auto sealed = crypto::SealedEnvelope::decode(as_view(sealed_bytes));
  if (!sealed) return std::nullopt;
  return M5{std::move(*sealed)};
}

// --- M1 ------------------------------------------------------------------

crypto::SignedEnvelope make_registration_token(const crypto::KeyPair& owner,
                                               const crypto::PublicKey& source) {
  Encoder enc;
  enc.put_str(kTokenDomain);
  put_pk(enc, source);
  return crypto::sign(as_view(enc.bytes()), owner);
}

M1 make_m1(const crypto::KeyPair& source, const crypto::PublicKey& owner,
           const crypto::SignedEnvelope& registration_token, const Dot& dot) {
  (void)source;  // the seal carries no signature; the DOT inside is already signed
  Encoder enc;
  enc.put_str(kM1Plain);
  enc.put_bytes(as_view(dot.encode()));
  enc.put_bytes(as_view(registration_token.encode()));
  return M1{crypto::seal(as_view(enc.bytes()), owner)};
}

Outcome<Dot> verify_m1(const M1& m1, const crypto::KeyPair& owner) {
  auto plain = crypto::open(m1.sealed, owner);
  if (!plain) return Outcome<Dot>::failure(Reason::seal);

  Decoder dec(as_view(*plain));
  std::string domain;
  Bytes dot_bytes, token_bytes;
  if (!dec.get_str(domain) || domain != kM1Plain || !dec.get_bytes(dot_bytes) ||
      !dec.get_bytes(token_bytes) || !dec.done()) {
    return Outcome<Dot>::failure(Reason::malformed);
  }
  auto dot = Dot::decode(as_view(dot_bytes));
  auto token = crypto::SignedEnvelope::decode(as_view(token_bytes));
  if (!dot || !token) return Outcome<Dot>::failure(Reason::malformed);

  // The registration token is K_S signed by the owner at registration time;
  // it authenticates the source to the owner.
  if (token->signer != owner.pub || !crypto::verify(*token)) {
    return Outcome<Dot>::failure(Reason::token_sig);
  }
  Decoder token_dec(as_view(token->payload));
  std::string token_domain;
  crypto::PublicKey token_source;
  if (!token_dec.get_str(token_domain) || token_domain != kTokenDomain ||
      !get_pk(token_dec, token_source) || !token_dec.done() ||
      token_source != dot->source) {
    return Outcome<Dot>::failure(Reason::token_sig);
  }

  if (!verify_dot(*dot)) return Outcome<Dot>::failure(Reason::dot_sig);
  if (dot->owner != owner.pub) return Outcome<Dot>::failure(Reason::owner_mismatch);
  return Outcome<Dot>::success(std::move(*dot));
}

// --- M2 ------------------------------------------------------------------

Outcome<M2> make_m2(const Rt& rt, std::vector<Endorsement> chain,
                    const crypto::KeyPair& requester) {
  if (rt.requester != requester.pub) {
    return Outcome<M2>::failure(Reason::requester_mismatch);
  }
  M2 m2;
  m2.rt = rt;
  m2.chain = std::move(chain);
  for (const Endorsement& e : m2.chain) m2.endorser_keys.push_back(e.endorser);
  m2.requester = requester.pub;
  m2.outer_signature = crypto::sign(as_view(m2.signed_body()), requester).signature;
  return Outcome<M2>::success(std::move(m2));
}

Outcome<VerifiedRequest> verify_m2(const M2& m2,
                                   const std::set<crypto::PublicKey>& trusted_endorser_roots) {
  using R = Outcome<VerifiedRequest>;
  if (!crypto::verify(as_view(m2.signed_body()), m2.outer_signature, m2.requester)) {
    return R::failure(Reason::outer_sig);
  }
  if (!verify_rt(m2.rt)) return R::failure(Reason::rt_sig);
  if (m2.rt.requester != m2.requester) return R::failure(Reason::requester_mismatch);
  if (m2.endorser_keys.size() != m2.chain.size()) return R::failure(Reason::malformed);
  for (std::size_t i = 0; i < m2.chain.size(); ++i) {
    if (m2.endorser_keys[i] != m2.chain[i].endorser) return R::failure(Reason::malformed);
  }
  if (!verify_endorsement_chain(m2.rt, m2.chain)) {
    return R::failure(Reason::endorsement_sig);
  }
  VerifiedRequest v;
  v.rt = m2.rt;
  v.requester = m2.requester;
  // Untrusted endorsements are advisory, never grounds for rejection.
  for (const Endorsement& e : m2.chain) {
    (trusted_endorser_roots.contains(e.endorser) ? v.trusted : v.untrusted).push_back(e);
  }
  return R::success(std::move(v));
}

MatchResult match_request(const std::vector<Dot>& portfolio, const AttrMap& profile,
                          const VerifiedRequest& vreq) {
  MatchResult result;
  auto conditions = query::parse(vreq.rt.conditions);
  if (!conditions) {
    result.query_warning = true;
    return result;
  }
  if (!query::eval(*conditions, profile)) return result;
  auto predicate = query::parse(vreq.rt.query);
  if (!predicate) {
    result.query_warning = true;
    return result;
  }
  for (const Dot& dot : portfolio) {
    if (query::eval(*predicate, dot.metadata)) result.matches.push_back(dot);
  }
  return result;
}

// --- M3 ------------------------------------------------------------------

Outcome<M3> make_m3(const OwnerKeys& keys,
                    const std::vector<std::pair<Dot, std::string>>& grants,
                    const VerifiedRequest& vreq, std::uint64_t issued_at) {
  M3 m3;
  for (const auto& [dot, effective_query] : grants) {
    if (dot.owner != keys.main.pub) return Outcome<M3>::failure(Reason::owner_mismatch);

    Grant grant;
    grant.data_id = dot.data_id;
    grant.request_id = vreq.rt.request_id;
    grant.query = effective_query;
    grant.owner = keys.main.pub;
    grant.callback = keys.callback.pub;
    grant.grantee = vreq.requester;
    grant.duration_secs = vreq.rt.duration_secs;
    grant.issued_at = issued_at;
    grant.owner_signature =
        crypto::sign(as_view(grant.signed_body()), keys.main).signature;

    Bytes dat = make_dat(dot, grant, dot.source);

    Encoder item;
    item.put_str(kM3ItemPlain);
    item.put_str(dot.data_id);
    item.put_u64(static_cast<std::uint64_t>(dot.dap.kind));
    item.put_str(dot.dap.value);
    item.put_bytes(as_view(dat));
    put_pk(item, dot.source);
    m3.items.push_back(M3Item{crypto::seal(as_view(item.bytes()), vreq.requester)});
  }
  m3.request_id = vreq.rt.request_id;
  m3.exchange_key = keys.exchange.pub;
  m3.checksum = item_list_checksum(m3.items);
  m3.trailer_signature =
      crypto::sign(as_view(m3.trailer_body()), keys.exchange).signature;
  return Outcome<M3>::success(std::move(m3));
}

Outcome<std::vector<AccessTuple>> verify_m3(const M3& m3, const crypto::KeyPair& requester) {
  using R = Outcome<std::vector<AccessTuple>>;
  if (!crypto::verify(as_view(m3.trailer_body()), m3.trailer_signature, m3.exchange_key)) {
    return R::failure(Reason::trailer_sig);
  }
  // Partial grants are not accepted: any checksum mismatch rejects everything.
  if (item_list_checksum(m3.items) != m3.checksum) return R::failure(Reason::checksum);

  std::vector<AccessTuple> tuples;
  for (const M3Item& it : m3.items) {
    auto plain = crypto::open(it.sealed, requester);
    if (!plain) return R::failure(Reason::seal);
    Decoder dec(as_view(*plain));
    AccessTuple t;
    std::string domain;
    std::uint64_t kind = 0;
    if (!dec.get_str(domain) || domain != kM3ItemPlain || !dec.get_str(t.data_id) ||
        !dec.get_u64(kind) || !dec.get_str(t.dap.value) || !dec.get_bytes(t.dat) ||
        !get_pk(dec, t.source) || !dec.done() ||
        kind > static_cast<std::uint64_t>(DapKind::physical_location)) {
      return R::failure(Reason::malformed);
    }
    t.dap.kind = static_cast<DapKind>(kind);
    tuples.push_back(std::move(t));
  }
  return R::success(std::move(tuples));
}

// --- M4 / authorize ---------------------------------------------------------

Outcome<M4> make_m4(const std::vector<Bytes>& dats, const crypto::KeyPair& requester,
                    const crypto::PublicKey& source) {
  if (dats.empty()) return Outcome<M4>::failure(Reason::empty);
  M4 m4;
  m4.dats = dats;
  crypto::SignedEnvelope env =
      crypto::sign(as_view(m4_digest_body(dat_list_digest(dats))), requester);
  Encoder plain;
  plain.put_str(kM4BindingPlain);
  plain.put_bytes(as_view(env.encode()));
  m4.binding = crypto::seal(as_view(plain.bytes()), source);
  return Outcome<M4>::success(std::move(m4));
}

namespace {

struct DatCheck {
  Reason reason = Reason::ok;
  GrantedAccess access;
};

DatCheck check_dat(const Bytes& dat_bytes, const crypto::KeyPair& source,
                   const crypto::PublicKey& presenter,
                   const std::unordered_set<std::string>& blacklist, std::uint64_t now) {
  DatCheck out;
  auto sealed = crypto::SealedEnvelope::decode(as_view(dat_bytes));
  if (!sealed) {
    out.reason = Reason::malformed;
    return out;
  }
  auto plain = crypto::open(*sealed, source);
  if (!plain) {
    out.reason = Reason::seal;
    return out;
  }
  auto interior = DatInterior::decode(as_view(*plain));
  if (!interior) {
    out.reason = Reason::malformed;
    return out;
  }
  const Dot& dot = interior->dot;
  const Grant& grant = interior->grant;
  if (interior->owner != dot.owner || grant.data_id != dot.data_id ||
      grant.owner != dot.owner) {
    out.reason = Reason::malformed;
    return out;
  }
  // (2) S says (O controls d): the DOT must be this source's own signature.
  if (dot.source != source.pub || !verify_dot(dot)) {
    out.reason = Reason::dot_sig;
    return out;
  }
  // (3) O says [R and Query and d].
  if (!crypto::verify(as_view(grant.signed_body()), grant.owner_signature, dot.owner)) {
    out.reason = Reason::grant_sig;
    return out;
  }
  // (4) Capabilities are not transferable.
  if (grant.grantee != presenter) {
    out.reason = Reason::grantee_mismatch;
    return out;
  }
  // (5) Request blacklist.
  if (blacklist.contains(grant.request_id)) {
    out.reason = Reason::blacklisted;
    return out;
  }
  if (now > grant.issued_at + grant.duration_secs) {
    out.reason = Reason::expired;
    return out;
  }
  out.access = GrantedAccess{dot, grant};
  return out;
}

}  // namespace

AccessDecision authorize(const M4& m4, const crypto::KeyPair& source,
                         const std::unordered_set<std::string>& blacklist,
                         std::uint64_t now, unsigned workers) {
  AccessDecision decision;
  if (m4.dats.empty()) {
    decision.whole_reason = Reason::empty;
    return decision;
  }

  auto binding_plain = crypto::open(m4.binding, source);
  if (!binding_plain) {
    decision.whole_reason = Reason::seal;
    return decision;
  }
  Decoder dec(as_view(*binding_plain));
  std::string domain;
  Bytes env_bytes;
  if (!dec.get_str(domain) || domain != kM4BindingPlain || !dec.get_bytes(env_bytes) ||
      !dec.done()) {
    decision.whole_reason = Reason::malformed;
    return decision;
  }
  auto env = crypto::SignedEnvelope::decode(as_view(env_bytes));
  if (!env) {
    decision.whole_reason = Reason::malformed;
    return decision;
  }
  // The signed digest binds the presented DAT list to the presenter;
  // any mismatch invalidates the whole message.
  if (!crypto::verify(*env) ||
      env->payload != m4_digest_body(dat_list_digest(m4.dats))) {
    decision.whole_reason = Reason::digest;
    return decision;
  }
  decision.presenter = env->signer;

  std::vector<DatCheck> checks(m4.dats.size());
  const unsigned n_workers =
      std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(m4.dats.size())));
  if (n_workers == 1) {
    for (std::size_t i = 0; i < m4.dats.size(); ++i) {
      checks[i] = check_dat(m4.dats[i], source, decision.presenter, blacklist, now);
    }
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    const std::size_t per = (m4.dats.size() + n_workers - 1) / n_workers;
    for (unsigned w = 0; w < n_workers; ++w) {
      const std::size_t lo = w * per;
      const std::size_t hi = std::min(m4.dats.size(), lo + per);
      if (lo >= hi) break;
      pool.emplace_back([&, lo, hi] {
        for (std::size_t i = lo; i < hi; ++i) {
          checks[i] = check_dat(m4.dats[i], source, decision.presenter, blacklist, now);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  // Merge in presentation order so parallel and sequential decisions match.
  for (std::size_t i = 0; i < checks.size(); ++i) {
    if (checks[i].reason == Reason::ok) {
      decision.granted.push_back(std::move(checks[i].access));
    } else {
      decision.rejected.emplace_back(i, checks[i].reason);
    }
  }
  return decision;
}

// --- M5 ------------------------------------------------------------------

M5 make_m5(const crypto::KeyPair& source, const GrantedAccess& access,
           std::uint64_t served_at) {
  Encoder enc;
  enc.put_str(kM5Plain);
  put_pk(enc, source.pub);
  enc.put_bytes(as_view(access.dot.encode()));
  enc.put_bytes(as_view(access.grant.encode()));
  enc.put_u64(served_at);
  return M5{crypto::seal(as_view(enc.bytes()), access.grant.callback)};
}

Outcome<AuditRecord> verify_m5(const M5& m5, const crypto::KeyPair& callback) {
  using R = Outcome<AuditRecord>;
  auto plain = crypto::open(m5.sealed, callback);
  if (!plain) return R::failure(Reason::seal);

  Decoder dec(as_view(*plain));
  std::string domain;
  crypto::PublicKey source_pk;
  Bytes dot_bytes, grant_bytes;
  std::uint64_t served_at = 0;
  if (!dec.get_str(domain) || domain != kM5Plain || !get_pk(dec, source_pk) ||
      !dec.get_bytes(dot_bytes) || !dec.get_bytes(grant_bytes) ||
      !dec.get_u64(served_at) || !dec.done()) {
    return R::failure(Reason::malformed);
  }
  auto dot = Dot::decode(as_view(dot_bytes));
  auto grant = Grant::decode(as_view(grant_bytes));
  if (!dot || !grant) return R::failure(Reason::malformed);
  if (dot->source != source_pk || !verify_dot(*dot)) return R::failure(Reason::dot_sig);
  if (!crypto::verify(as_view(grant->signed_body()), grant->owner_signature, dot->owner)) {
    return R::failure(Reason::grant_sig);
  }
  if (grant->callback != callback.pub) return R::failure(Reason::owner_mismatch);

  AuditRecord rec;
  rec.data_id = grant->data_id;
  rec.source = source_pk;
  rec.grantee = grant->grantee;
  rec.query = grant->query;
  rec.logical_time = served_at;
  return R::success(std::move(rec));
}

}  // namespace dusc::protocol
