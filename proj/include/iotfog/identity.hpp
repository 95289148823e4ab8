#ifndef IOTFOG_IDENTITY_HPP
#define IOTFOG_IDENTITY_HPP

#include <sodium.h>

#include <array>
#include <compare>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "iotfog/bytes.hpp"

namespace iotfog {

namespace detail {

inline void ensure_sodium() {
  static const bool ready = [] {
    if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
    return true;
  }();
  (void)ready;
}

}  // namespace detail

/// Fixed-length byte string. The tag keeps digests, keys and signatures from
/// being mixed up even though they share a representation.
template <std::size_t N, class Tag>
struct FixedBytes {
  static constexpr std::size_t size_bytes = N;
  std::array<std::uint8_t, N> bytes{};

  auto operator<=>(const FixedBytes&) const = default;

  ByteView view() const { return {bytes.data(), bytes.size()}; }
  const std::uint8_t* data() const { return bytes.data(); }
  std::uint8_t* data() { return bytes.data(); }
  static constexpr std::size_t size() { return N; }

  bool is_zero() const {
    for (auto b : bytes)
      if (b != 0) return false;
    return true;
  }

  std::string hex() const { return to_hex(view()); }
  std::string short_hex() const { return to_hex(view().first(4)); }

  static FixedBytes from_view(ByteView v) {
    if (v.size() != N) throw DecodeError("fixed-width field has wrong length");
    FixedBytes out;
    std::copy(v.begin(), v.end(), out.bytes.begin());
    return out;
  }
  static FixedBytes from_hex(std::string_view h) { return from_view(iotfog::from_hex(h)); }
};

struct DigestTag {};
struct PublicKeyTag {};
struct SecretKeyTag {};
struct SignatureTag {};

/// SHA-256 output.
using Digest = FixedBytes<32, DigestTag>;
/// Ed25519 verification key; doubles as the node identity.
using PublicKey = FixedBytes<32, PublicKeyTag>;
/// Ed25519 seed (the 32-byte signing secret).
using SecretKey = FixedBytes<32, SecretKeyTag>;
using Signature = FixedBytes<64, SignatureTag>;

inline Digest hash(ByteView data) {
  detail::ensure_sodium();
  Digest out;
  crypto_hash_sha256(out.data(), data.data(), data.size());
  return out;
}

/// Ed25519 keypair. The expanded signing key is cached; the public half is
/// always the one derived from the secret.
class NodeKeyPair {
 public:
  explicit NodeKeyPair(const SecretKey& secret) : secret_(secret) {
    detail::ensure_sodium();
    crypto_sign_seed_keypair(public_.data(), expanded_.data(), secret_.data());
  }

  /// Rebuilds a keypair from both halves; throws if they do not belong together.
  NodeKeyPair(const SecretKey& secret, const PublicKey& expected_public) : NodeKeyPair(secret) {
    if (public_ != expected_public) throw std::invalid_argument("public key does not match secret key");
  }

  const SecretKey& secret() const { return secret_; }
  const PublicKey& public_key() const { return public_; }

  Signature sign(ByteView message) const {
    Signature sig;
    crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), expanded_.data());
    return sig;
  }

  friend bool operator==(const NodeKeyPair& a, const NodeKeyPair& b) { return a.secret_ == b.secret_; }

 private:
  SecretKey secret_;
  PublicKey public_;
  std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> expanded_{};
};

/// Deterministic keypair: the 64-bit seed is encoded little-endian and
/// expanded with SHA-256 into the Ed25519 secret.
inline NodeKeyPair generate_keypair(std::uint64_t seed) {
  auto material = hash(ByteWriter(8).u64(seed).bytes());
  SecretKey secret;
  secret.bytes = material.bytes;
  return NodeKeyPair(secret);
}

inline Signature sign(const NodeKeyPair& key, ByteView message) { return key.sign(message); }

namespace detail {

struct DigestHasher {
  std::size_t operator()(const Digest& d) const {
    std::size_t h;
    std::memcpy(&h, d.data(), sizeof h);
    return h;
  }
};

/// Verification is pure, and the same signature is checked many times as a
/// message fans out and blocks re-carry transactions, so results are
/// remembered per thread under SHA-256(key || signature || message).
class VerifyMemo {
 public:
  static constexpr std::size_t kCapacity = 1 << 16;

  template <typename F>
  bool lookup(ByteView public_key, ByteView message, ByteView signature, F&& compute) {
    crypto_hash_sha256_state st;
    crypto_hash_sha256_init(&st);
    crypto_hash_sha256_update(&st, public_key.data(), public_key.size());
    crypto_hash_sha256_update(&st, signature.data(), signature.size());
    crypto_hash_sha256_update(&st, message.data(), message.size());
    Digest key;
    crypto_hash_sha256_final(&st, key.bytes.data());
    if (auto it = results_.find(key); it != results_.end()) return it->second;
    if (results_.size() >= kCapacity) results_.clear();
    bool ok = compute();
    results_.emplace(key, ok);
    return ok;
  }

 private:
  std::unordered_map<Digest, bool, DigestHasher> results_;
};

inline VerifyMemo& verify_memo() {
  thread_local VerifyMemo memo;
  return memo;
}

}  // namespace detail

/// Wrong-length keys or signatures verify as false.
inline bool verify(ByteView public_key, ByteView message, ByteView signature) {
  detail::ensure_sodium();
  if (public_key.size() != crypto_sign_PUBLICKEYBYTES || signature.size() != crypto_sign_BYTES) return false;
  return detail::verify_memo().lookup(public_key, message, signature, [&] {
    return crypto_sign_verify_detached(signature.data(), message.data(), message.size(), public_key.data()) == 0;
  });
}

inline bool verify(const PublicKey& key, ByteView message, const Signature& sig) {
  return verify(key.view(), message, sig.view());
}

}  // namespace iotfog

#endif  // IOTFOG_IDENTITY_HPP
