#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dusc/bytes.hpp"
#include "dusc/crypto.hpp"
#include "dusc/query.hpp"

// The data-management protocol: tickets (DOT, RT, DAT), endorsement
// chains, the five message classes M1..M5, and the source-side authorize
// decision. Every value here is immutable once constructed; create and
// verify operations are pure given keys.
namespace dusc::protocol {

using AttrMap = std::map<std::string, std::string>;

enum class Reason : std::uint8_t {
  ok = 0,
  malformed,          // decode failure, field inconsistency
  seal,               // sealed envelope failed to open / tampered
  token_sig,          // registration token not signed by owner
  dot_sig,            // DOT signature invalid under the data source key
  owner_mismatch,     // ticket owner field differs from recipient key
  rt_sig,             // request ticket signature invalid
  outer_sig,          // M2 bundle signature invalid
  requester_mismatch, // outer signer differs from the key named in RT
  endorsement_sig,    // endorsement chain broken
  checksum,           // M3 item-list checksum mismatch
  trailer_sig,        // M3 trailer signature invalid
  grant_sig,          // grant record not signed by the object owner
  grantee_mismatch,   // presenter is not the granted requester
  blacklisted,        // request id on the source blacklist
  expired,            // grant duration elapsed
  digest,             // M4 DAT-list digest binding invalid
  empty,              // empty capability list
};

std::string_view reason_name(Reason r);

template <typename T>
class Outcome {
 public:
  static Outcome success(T value) {
    Outcome o;
    o.value_ = std::move(value);
    return o;
  }
  static Outcome failure(Reason r) {
    Outcome o;
    o.reason_ = r;
    return o;
  }
  bool ok() const { return reason_ == Reason::ok; }
  Reason reason() const { return reason_; }
  const T& operator*() const { return *value_; }
  const T* operator->() const { return &*value_; }
  T& operator*() { return *value_; }

 private:
  Outcome() = default;
  Reason reason_ = Reason::ok;
  std::optional<T> value_;
};

// The three identities an owner keeps apart: main (K_O, known to the
// source), exchange (K_O2, shown to the requester), callback (K_O3,
// receives access announcements).
struct OwnerKeys {
  crypto::KeyPair main;
  crypto::KeyPair exchange;
  crypto::KeyPair callback;
};

enum class DapKind : std::uint8_t {
  url = 0,
  record_locator,
  contact,
  instructions,
  physical_location,
};

std::string_view dap_kind_name(DapKind k);
std::optional<DapKind> dap_kind_from_name(std::string_view name);

struct DataAccessPath {
  DapKind kind = DapKind::url;
  std::string value;
  bool operator==(const DataAccessPath&) const = default;
};

// Right to issue capabilities over one data object, signed by the source.
struct Dot {
  std::string data_id;
  crypto::PublicKey owner;
  AttrMap metadata;
  DataAccessPath dap;
  crypto::PublicKey source;
  crypto::Signature source_signature;

  Bytes signed_body() const;
  Bytes encode() const;
  static std::optional<Dot> decode(ByteView data);
  bool operator==(const Dot&) const = default;
};

// Broadcast data request, signed by the requester.
struct Rt {
  std::string request_id;
  std::string query;
  std::string conditions;
  std::uint64_t duration_secs = 0;
  AttrMap metadata;
  crypto::PublicKey requester;
  crypto::Signature requester_signature;

  Bytes signed_body() const;
  Bytes encode() const;
  static std::optional<Rt> decode(ByteView data);
  bool operator==(const Rt&) const = default;
};

// One link of the chained endorsements over an RT: each signature covers
// the RT digest, the feedback and the digest of the prior link.
struct Endorsement {
  crypto::Digest rt_digest;
  std::string feedback;
  crypto::PublicKey endorser;
  crypto::Signature signature;

  Bytes signed_body(const crypto::Digest& prior) const;
  Bytes encode() const;
  static std::optional<Endorsement> decode(ByteView data);
  crypto::Digest chain_digest() const { return crypto::digest(as_view(encode())); }
  bool operator==(const Endorsement&) const = default;
};

// Owner-signed grant record inside a DAT. Carries the RT duration and a
// logical issue time so the source can refuse stale capabilities.
struct Grant {
  std::string data_id;
  std::string request_id;
  std::string query;
  crypto::PublicKey owner;
  crypto::PublicKey callback;
  crypto::PublicKey grantee;
  std::uint64_t duration_secs = 0;
  std::uint64_t issued_at = 0;
  crypto::Signature owner_signature;

  Bytes signed_body() const;
  Bytes encode() const;
  static std::optional<Grant> decode(ByteView data);
  bool operator==(const Grant&) const = default;
};

// The capability as transmitted: interior (K_O, DOT, grant) sealed to the
// data source, opaque to everyone else.
struct DatInterior {
  crypto::PublicKey owner;
  Dot dot;
  Grant grant;
  Bytes encode() const;
  static std::optional<DatInterior> decode(ByteView data);
};

Bytes make_dat(const Dot& dot, const Grant& grant, const crypto::PublicKey& source);

// --- message classes -------------------------------------------------

inline constexpr std::uint8_t kFormatVersion = 1;

enum class MessageKind : std::uint8_t {
  unknown = 0,
  m1 = 1,
  m2 = 2,
  m3 = 3,
  m4 = 4,
  m5 = 5,
};

MessageKind classify_payload(ByteView payload);

struct M1 {
  crypto::SealedEnvelope sealed;  // to K_O: (DOT, registration token)
  Bytes encode() const;
  static std::optional<M1> decode(ByteView data);
};

struct M2 {
  Rt rt;
  std::vector<Endorsement> chain;
  std::vector<crypto::PublicKey> endorser_keys;
  crypto::PublicKey requester;
  crypto::Signature outer_signature;

  Bytes signed_body() const;
  Bytes encode() const;
  static std::optional<M2> decode(ByteView data);
};

struct M3Item {
  crypto::SealedEnvelope sealed;  // to K_R: (data_id, DAP, DAT, K_S)
};

struct M3 {
  std::vector<M3Item> items;
  std::string request_id;
  crypto::PublicKey exchange_key;  // K_O2
  crypto::Digest checksum;         // digest over the canonical item list
  crypto::Signature trailer_signature;

  Bytes trailer_body() const;
  Bytes encode() const;
  static std::optional<M3> decode(ByteView data);
};

struct M4 {
  std::vector<Bytes> dats;         // sealed DATs, opaque to the presenter
  crypto::SealedEnvelope binding;  // to K_S: signed digest of the DAT list + K_R
  Bytes encode() const;
  static std::optional<M4> decode(ByteView data);
};

struct M5 {
  crypto::SealedEnvelope sealed;  // to K_O3: (K_S, DOT, grant, served_at)
  Bytes encode() const;
  static std::optional<M5> decode(ByteView data);
};

// --- operations -------------------------------------------------------

Dot make_dot(const crypto::KeyPair& source, const crypto::PublicKey& owner,
             std::string data_id, AttrMap metadata, DataAccessPath dap);
bool verify_dot(const Dot& dot);

crypto::SignedEnvelope make_registration_token(const crypto::KeyPair& owner,
                                               const crypto::PublicKey& source);

M1 make_m1(const crypto::KeyPair& source, const crypto::PublicKey& owner,
           const crypto::SignedEnvelope& registration_token, const Dot& dot);
Outcome<Dot> verify_m1(const M1& m1, const crypto::KeyPair& owner);

// Fresh request ids come from the crypto randomness source, so seeded
// runs produce reproducible ids.
Rt make_rt(const crypto::KeyPair& requester, std::string query, std::string conditions,
           std::uint64_t duration_secs, AttrMap metadata);
bool verify_rt(const Rt& rt);

Outcome<std::vector<Endorsement>> endorse(const Rt& rt, std::vector<Endorsement> chain,
                                          const crypto::KeyPair& endorser,
                                          std::string feedback);
bool verify_endorsement_chain(const Rt& rt, const std::vector<Endorsement>& chain);

Outcome<M2> make_m2(const Rt& rt, std::vector<Endorsement> chain,
                    const crypto::KeyPair& requester);

struct VerifiedRequest {
  Rt rt;
  crypto::PublicKey requester;
  std::vector<Endorsement> trusted;
  std::vector<Endorsement> untrusted;
};

Outcome<VerifiedRequest> verify_m2(const M2& m2,
                                   const std::set<crypto::PublicKey>& trusted_endorser_roots);

struct MatchResult {
  std::vector<Dot> matches;     // portfolio insertion order
  bool query_warning = false;   // query did not parse in the harness dialect
};

MatchResult match_request(const std::vector<Dot>& portfolio, const AttrMap& profile,
                          const VerifiedRequest& vreq);

Outcome<M3> make_m3(const OwnerKeys& keys,
                    const std::vector<std::pair<Dot, std::string>>& grants,
                    const VerifiedRequest& vreq, std::uint64_t issued_at);

struct AccessTuple {
  std::string data_id;
  DataAccessPath dap;
  Bytes dat;  // still sealed to the source
  crypto::PublicKey source;
};

Outcome<std::vector<AccessTuple>> verify_m3(const M3& m3, const crypto::KeyPair& requester);

Outcome<M4> make_m4(const std::vector<Bytes>& dats, const crypto::KeyPair& requester,
                    const crypto::PublicKey& source);

struct GrantedAccess {
  Dot dot;
  Grant grant;
};

// The source-side decision. Stateless by construction: only the presented
// message, the source key, the blacklist and the clock participate.
struct AccessDecision {
  Reason whole_reason = Reason::ok;  // digest/seal/empty failures reject all
  crypto::PublicKey presenter;       // K_R recovered from the binding
  std::vector<GrantedAccess> granted;
  std::vector<std::pair<std::size_t, Reason>> rejected;  // (dat index, reason)
  bool whole_ok() const { return whole_reason == Reason::ok; }
};

AccessDecision authorize(const M4& m4, const crypto::KeyPair& source,
                         const std::unordered_set<std::string>& blacklist,
                         std::uint64_t now, unsigned workers = 1);

M5 make_m5(const crypto::KeyPair& source, const GrantedAccess& access,
           std::uint64_t served_at);

struct AuditRecord {
  std::string data_id;
  crypto::PublicKey source;
  crypto::PublicKey grantee;
  std::string query;
  std::uint64_t logical_time = 0;
};

Outcome<AuditRecord> verify_m5(const M5& m5, const crypto::KeyPair& callback);

}  // namespace dusc::protocol
