#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>

#include "dusc/bytes.hpp"

// Identity, signing, sealing and hashing. The concrete scheme (Ed25519
// signatures, X25519 sealed boxes, SHA-256 digests) sits behind this
// surface; everything above it only relies on the contracts here.
namespace dusc::crypto {

inline constexpr std::size_t kPublicKeyBytes = 32;
inline constexpr std::size_t kSecretKeyBytes = 64;
inline constexpr std::size_t kSignatureBytes = 64;
inline constexpr std::size_t kDigestBytes = 32;
inline constexpr std::size_t kSeedBytes = 32;
inline constexpr std::size_t kFingerprintBytes = 8;

struct PublicKey {
  std::array<std::uint8_t, kPublicKeyBytes> bytes{};
  auto operator<=>(const PublicKey&) const = default;
  ByteView view() const { return ByteView(bytes.data(), bytes.size()); }
  std::string hex() const { return to_hex(view()); }
  std::string short_hex() const { return dusc::short_hex(view()); }
};

struct SecretKey {
  std::array<std::uint8_t, kSecretKeyBytes> bytes{};
};

struct Signature {
  std::array<std::uint8_t, kSignatureBytes> bytes{};
  auto operator<=>(const Signature&) const = default;
  ByteView view() const { return ByteView(bytes.data(), bytes.size()); }
};

struct Digest {
  std::array<std::uint8_t, kDigestBytes> bytes{};
  auto operator<=>(const Digest&) const = default;
  ByteView view() const { return ByteView(bytes.data(), bytes.size()); }
  std::string hex() const { return to_hex(view()); }
  static Digest zero() { return Digest{}; }
};

using Seed = std::array<std::uint8_t, kSeedBytes>;
using Fingerprint = std::array<std::uint8_t, kFingerprintBytes>;

struct KeyPair {
  PublicKey pub;
  SecretKey priv;
};

struct SignedEnvelope {
  Bytes payload;
  Signature signature;
  PublicKey signer;
  Bytes encode() const;
  static std::optional<SignedEnvelope> decode(ByteView data);
};

struct SealedEnvelope {
  Bytes ciphertext;
  std::optional<Fingerprint> recipient_hint;
  Bytes encode() const;
  static std::optional<SealedEnvelope> decode(ByteView data);
};

// Process-wide randomness source. In deterministic mode all key
// generation and seal ephemerals are drawn from a seeded DRBG, so whole
// runs (and the envelopes inside them) are byte-reproducible.
void set_deterministic_seed(std::uint64_t seed);
void use_system_randomness();
void random_bytes(std::uint8_t* out, std::size_t len);

Seed seed_from_u64(std::uint64_t v);

KeyPair generate_identity();
KeyPair generate_identity(const Seed& seed);

// payload must be non-empty; the signature covers the exact bytes given.
SignedEnvelope sign(ByteView payload, const KeyPair& key);
// Total: malformed inputs reject, never throw.
bool verify(ByteView payload, const Signature& sig, const PublicKey& signer);
bool verify(const SignedEnvelope& env);

SealedEnvelope seal(ByteView payload, const PublicKey& recipient);
// Wrong key or corrupted ciphertext -> nullopt, never garbage.
std::optional<Bytes> open(const SealedEnvelope& env, const KeyPair& key);

Digest digest(ByteView data);
Fingerprint fingerprint(const PublicKey& key);

struct PkHash {
  std::size_t operator()(const PublicKey& k) const;
};
struct DigestHash {
  std::size_t operator()(const Digest& d) const;
};

}  // namespace dusc::crypto
