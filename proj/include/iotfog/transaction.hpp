#ifndef IOTFOG_TRANSACTION_HPP
#define IOTFOG_TRANSACTION_HPP

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>

#include "iotfog/bytes.hpp"
#include "iotfog/identity.hpp"

namespace iotfog {

inline constexpr std::uint8_t kEncodingVersion = 0x01;

/// Signed unit of IoT communication. The signature covers encode_transaction().
struct Transaction {
  PublicKey author;
  std::uint64_t nonce = 0;
  std::uint64_t timestamp_ms = 0;
  Bytes payload;
  Signature signature;

  friend bool operator==(const Transaction&, const Transaction&) = default;
};

/// Width of the signing encoding for an empty payload: 1 + 32 + 8 + 8 + 4.
inline constexpr std::size_t kTransactionHeaderBytes = 53;

/// Signing encoding: version ‖ author ‖ nonce ‖ timestamp ‖ payload length ‖ payload.
/// Integers are little-endian. The signature is not part of this encoding.
inline Bytes encode_transaction(const Transaction& tx) {
  if (tx.payload.size() > std::numeric_limits<std::uint32_t>::max())
    throw std::length_error("transaction payload exceeds 2^32-1 bytes");
  ByteWriter w(kTransactionHeaderBytes + tx.payload.size());
  w.u8(kEncodingVersion)
      .raw(tx.author.view())
      .u64(tx.nonce)
      .u64(tx.timestamp_ms)
      .u32(static_cast<std::uint32_t>(tx.payload.size()))
      .raw(tx.payload);
  return std::move(w).take();
}

/// Wire form: signing encoding followed by the 64-byte signature.
inline void write_transaction(ByteWriter& w, const Transaction& tx) {
  w.raw(encode_transaction(tx)).raw(tx.signature.view());
}

inline Bytes encode_transaction_wire(const Transaction& tx) {
  ByteWriter w;
  write_transaction(w, tx);
  return std::move(w).take();
}

inline Transaction read_transaction(ByteReader& r) {
  Transaction tx;
  if (r.u8() != kEncodingVersion) throw DecodeError("unsupported transaction version");
  tx.author = PublicKey{r.fixed<32>()};
  tx.nonce = r.u64();
  tx.timestamp_ms = r.u64();
  auto len = r.u32();
  auto body = r.take(len);
  tx.payload.assign(body.begin(), body.end());
  tx.signature = Signature{r.fixed<64>()};
  return tx;
}

inline std::optional<Transaction> decode_transaction_wire(ByteView data) {
  try {
    ByteReader r(data);
    auto tx = read_transaction(r);
    r.expect_done();
    return tx;
  } catch (const DecodeError&) {
    return std::nullopt;
  }
}

/// Transaction identity: SHA-256 over the wire form, signature included.
inline Digest transaction_hash(const Transaction& tx) { return hash(encode_transaction_wire(tx)); }

inline bool signature_valid(const Transaction& tx) {
  return verify(tx.author, encode_transaction(tx), tx.signature);
}

inline Transaction new_transaction(const NodeKeyPair& key, std::uint64_t nonce, std::uint64_t timestamp_ms,
                                   Bytes payload) {
  Transaction tx;
  tx.author = key.public_key();
  tx.nonce = nonce;
  tx.timestamp_ms = timestamp_ms;
  tx.payload = std::move(payload);
  tx.signature = key.sign(encode_transaction(tx));
  return tx;
}

}  // namespace iotfog

#endif  // IOTFOG_TRANSACTION_HPP
