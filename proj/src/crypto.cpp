#include "dusc/crypto.hpp"

#include <sodium.h>

#include <cstring>
#include <mutex>
#include <stdexcept>

namespace dusc::crypto {

namespace {

void ensure_init() {
  static const int rc = sodium_init();
  if (rc < 0) throw std::runtime_error("libsodium initialization failed");
}

struct RandomState {
  std::mutex mu;
  bool deterministic = false;
  std::array<std::uint8_t, 32> master{};
  std::uint64_t counter = 0;
};

RandomState& rng_state() {
  static RandomState state;
  return state;
}

}  // namespace

void set_deterministic_seed(std::uint64_t seed) {
  ensure_init();
  auto& st = rng_state();
  std::lock_guard lock(st.mu);
  Encoder enc;
  enc.put_str("dusc.drbg.v1");
  enc.put_u64(seed);
  crypto_hash_sha256(st.master.data(), enc.bytes().data(), enc.bytes().size());
  st.counter = 0;
  st.deterministic = true;
}

void use_system_randomness() {
  auto& st = rng_state();
  std::lock_guard lock(st.mu);
  st.deterministic = false;
}

void random_bytes(std::uint8_t* out, std::size_t len) {
  ensure_init();
  auto& st = rng_state();
  std::lock_guard lock(st.mu);
  if (!st.deterministic) {
    randombytes_buf(out, len);
    return;
  }
  std::uint8_t draw_seed[randombytes_SEEDBYTES];
  Encoder enc;
  enc.put_bytes(ByteView(st.master.data(), st.master.size()));
  enc.put_u64(st.counter++);
  crypto_hash_sha256(draw_seed, enc.bytes().data(), enc.bytes().size());
  randombytes_buf_deterministic(out, len, draw_seed);
}

Seed seed_from_u64(std::uint64_t v) {
  Seed s{};
  for (int i = 0; i < 8; ++i) {
    s[7 - i] = static_cast<std::uint8_t>(v >> (8 * i));
  }
  return s;
}

KeyPair generate_identity() {
  Seed s;
  random_bytes(s.data(), s.size());
  return generate_identity(s);
}

KeyPair generate_identity(const Seed& seed) {
  ensure_init();
  KeyPair kp;
  crypto_sign_seed_keypair(kp.pub.bytes.data(), kp.priv.bytes.data(), seed.data());
  return kp;
}

SignedEnvelope sign(ByteView payload, const KeyPair& key) {
  ensure_init();
  if (payload.empty()) throw std::invalid_argument("sign: empty payload");
  SignedEnvelope env;
  env.payload.assign(payload.begin(), payload.end());
  env.signer = key.pub;
  crypto_sign_detached(env.signature.bytes.data(), nullptr, payload.data(),
                       payload.size(), key.priv.bytes.data());
  return env;
}

bool verify(ByteView payload, const Signature& sig, const PublicKey& signer) {
  ensure_init();
  return crypto_sign_verify_detached(sig.bytes.data(), payload.data(),
                                     payload.size(), signer.bytes.data()) == 0;
}

bool verify(const SignedEnvelope& env) {
  return verify(as_view(env.payload), env.signature, env.signer);
}

SealedEnvelope seal(ByteView payload, const PublicKey& recipient) {
  ensure_init();
  if (payload.empty()) throw std::invalid_argument("seal: empty payload");

  std::uint8_t recipient_x[crypto_box_PUBLICKEYBYTES];
  if (crypto_sign_ed25519_pk_to_curve25519(recipient_x, recipient.bytes.data()) != 0) {
    throw std::invalid_argument("seal: recipient key is not convertible");
  }

  // Same layout as crypto_box_seal (epk || box), but the ephemeral key is
  // drawn through random_bytes so sealed envelopes are reproducible in
  // deterministic mode. crypto_box_seal_open accepts the result.
  std::uint8_t eseed[crypto_box_SEEDBYTES];
  random_bytes(eseed, sizeof eseed);
  std::uint8_t epk[crypto_box_PUBLICKEYBYTES];
  std::uint8_t esk[crypto_box_SECRETKEYBYTES];
  crypto_box_seed_keypair(epk, esk, eseed);

  std::uint8_t nonce[crypto_box_NONCEBYTES];
  {
    crypto_generichash_state h;
    crypto_generichash_init(&h, nullptr, 0, sizeof nonce);
    crypto_generichash_update(&h, epk, sizeof epk);
    crypto_generichash_update(&h, recipient_x, sizeof recipient_x);
    crypto_generichash_final(&h, nonce, sizeof nonce);
  }

  SealedEnvelope env;
  env.ciphertext.resize(crypto_box_PUBLICKEYBYTES + payload.size() + crypto_box_MACBYTES);
  std::memcpy(env.ciphertext.data(), epk, sizeof epk);
  if (crypto_box_easy(env.ciphertext.data() + sizeof epk, payload.data(),
                      payload.size(), nonce, recipient_x, esk) != 0) {
    throw std::runtime_error("seal: encryption failed");
  }
  sodium_memzero(esk, sizeof esk);
  env.recipient_hint = fingerprint(recipient);
  return env;
}

std::optional<Bytes> open(const SealedEnvelope& env, const KeyPair& key) {
  ensure_init();
  const std::size_t overhead = crypto_box_PUBLICKEYBYTES + crypto_box_MACBYTES;
  if (env.ciphertext.size() < overhead) return std::nullopt;
  // The hint is plaintext routing metadata; a mismatch means the envelope
  // is not addressed to this key (or was tampered), so it cannot open.
  if (env.recipient_hint && *env.recipient_hint != fingerprint(key.pub)) {
    return std::nullopt;
  }

  std::uint8_t pk_x[crypto_box_PUBLICKEYBYTES];
  std::uint8_t sk_x[crypto_box_SECRETKEYBYTES];
  if (crypto_sign_ed25519_pk_to_curve25519(pk_x, key.pub.bytes.data()) != 0) {
    return std::nullopt;
  }
  if (crypto_sign_ed25519_sk_to_curve25519(sk_x, key.priv.bytes.data()) != 0) {
    return std::nullopt;
  }

  Bytes out(env.ciphertext.size() - overhead);
  int rc = crypto_box_seal_open(out.empty() ? nullptr : out.data(),
                                env.ciphertext.data(), env.ciphertext.size(),
                                pk_x, sk_x);
  sodium_memzero(sk_x, sizeof sk_x);
  if (rc != 0) return std::nullopt;
  return out;
}

Digest digest(ByteView data) {
  ensure_init();
  Digest d;
  crypto_hash_sha256(d.bytes.data(), data.data(), data.size());
  return d;
}

Fingerprint fingerprint(const PublicKey& key) {
  Digest d = digest(key.view());
  Fingerprint fp;
  std::memcpy(fp.data(), d.bytes.data(), fp.size());
  return fp;
}

Bytes SignedEnvelope::encode() const {
  Encoder enc;
  enc.put_bytes(as_view(payload));
  enc.put_bytes(signature.view());
  enc.put_bytes(signer.view());
  return enc.take();
}

std::optional<SignedEnvelope> SignedEnvelope::decode(ByteView data) {
  Decoder dec(data);
  SignedEnvelope env;
  Bytes sig, signer;
  if (!dec.get_bytes(env.payload) || !dec.get_bytes(sig) || !dec.get_bytes(signer) ||
      !dec.done()) {
    return std::nullopt;
  }
  if (sig.size() != kSignatureBytes || signer.size() != kPublicKeyBytes) {
    return std::nullopt;
  }
  std::memcpy(env.signature.bytes.data(), sig.data(), sig.size());
  std::memcpy(env.signer.bytes.data(), signer.data(), signer.size());
  return env;
}

Bytes SealedEnvelope::encode() const {
  Encoder enc;
  enc.put_bytes(as_view(ciphertext));
  if (recipient_hint) {
    enc.put_bytes(ByteView(recipient_hint->data(), recipient_hint->size()));
  } else {
    enc.put_bytes(ByteView{});
  }
  return enc.take();
}

std::optional<SealedEnvelope> SealedEnvelope::decode(ByteView data) {
  Decoder dec(data);
  SealedEnvelope env;
  Bytes hint;
  if (!dec.get_bytes(env.ciphertext) || !dec.get_bytes(hint) || !dec.done()) {
    return std::nullopt;
  }
  if (hint.empty()) {
    env.recipient_hint = std::nullopt;
  } else if (hint.size() == kFingerprintBytes) {
    Fingerprint fp;
    std::memcpy(fp.data(), hint.data(), fp.size());
    env.recipient_hint = fp;
  } else {
    return std::nullopt;
  }
  return env;
}

std::size_t PkHash::operator()(const PublicKey& k) const {
  std::size_t h;
  std::memcpy(&h, k.bytes.data(), sizeof h);
  return h;
}

std::size_t DigestHash::operator()(const Digest& d) const {
  std::size_t h;
  std::memcpy(&h, d.bytes.data(), sizeof h);
  return h;
}

}  // namespace dusc::crypto
