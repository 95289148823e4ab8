#ifndef IOTFOG_LEDGER_HPP
#define IOTFOG_LEDGER_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "iotfog/bytes.hpp"
#include "iotfog/identity.hpp"
#include "iotfog/transaction.hpp"

namespace iotfog {

struct BlockHeader {
  std::uint8_t version = kEncodingVersion;
  std::uint64_t height = 0;
  Digest prev_hash;
  Digest tx_root;  // SHA-256 of the concatenated transaction hashes, in block order
  PublicKey proposer;
  std::uint64_t timestamp_ms = 0;
  std::uint32_t tx_count = 0;

  friend bool operator==(const BlockHeader&, const BlockHeader&) = default;
};

inline constexpr std::size_t kBlockHeaderBytes = 1 + 8 + 32 + 32 + 32 + 8 + 4;

inline void write_header(ByteWriter& w, const BlockHeader& h) {
  w.u8(h.version)
      .u64(h.height)
      .raw(h.prev_hash.view())
      .raw(h.tx_root.view())
      .raw(h.proposer.view())
      .u64(h.timestamp_ms)
      .u32(h.tx_count);
}

inline Bytes encode_header(const BlockHeader& h) {
  ByteWriter w(kBlockHeaderBytes);
  write_header(w, h);
  return std::move(w).take();
}

inline BlockHeader read_header(ByteReader& r) {
  BlockHeader h;
  h.version = r.u8();
  h.height = r.u64();
  h.prev_hash = Digest{r.fixed<32>()};
  h.tx_root = Digest{r.fixed<32>()};
  h.proposer = PublicKey{r.fixed<32>()};
  h.timestamp_ms = r.u64();
  h.tx_count = r.u32();
  return h;
}

inline Digest header_hash(const BlockHeader& h) { return hash(encode_header(h)); }

struct Block {
  BlockHeader header;
  std::vector<Transaction> transactions;
  Signature proposer_signature;  // over encode_header(header)

  Digest hash() const { return header_hash(header); }

  friend bool operator==(const Block&, const Block&) = default;
};

/// Block encoding: header ‖ per transaction (u32 length ‖ wire bytes) ‖ proposer signature.
inline void write_block(ByteWriter& w, const Block& b) {
  write_header(w, b.header);
  for (const auto& tx : b.transactions) {
    auto wire = encode_transaction_wire(tx);
    w.u32(static_cast<std::uint32_t>(wire.size())).raw(wire);
  }
  w.raw(b.proposer_signature.view());
}

inline Bytes encode_block(const Block& b) {
  ByteWriter w;
  write_block(w, b);
  return std::move(w).take();
}

inline Block read_block(ByteReader& r) {
  Block b;
  b.header = read_header(r);
  if (b.header.tx_count > r.remaining()) throw DecodeError("transaction count exceeds input");
  b.transactions.reserve(b.header.tx_count);
  for (std::uint32_t i = 0; i < b.header.tx_count; ++i) {
    auto len = r.u32();
    ByteReader inner(r.take(len));
    b.transactions.push_back(read_transaction(inner));
    inner.expect_done();
  }
  b.proposer_signature = Signature{r.fixed<64>()};
  return b;
}

inline std::optional<Block> decode_block(ByteView data) {
  try {
    ByteReader r(data);
    auto b = read_block(r);
    r.expect_done();
    return b;
  } catch (const DecodeError&) {
    return std::nullopt;
  }
}

inline Digest compute_tx_root(std::span<const Transaction> txs) {
  ByteWriter w(txs.size() * Digest::size());
  for (const auto& tx : txs) w.raw(transaction_hash(tx).view());
  return hash(w.bytes());
}

/// Fixed anchor shared by every chain: height 0, zero prev hash, no
/// transactions, timestamp 0, zero proposer and signature.
inline const Block& genesis_block() {
  static const Block g = [] {
    Block b;
    b.header.tx_root = compute_tx_root({});
    return b;
  }();
  return g;
}

enum class TxVerdict { Valid, BadSignature, DuplicateNonce };
enum class BlockVerdict { Valid, BadLink, BadRoot, BadProposerSig, BadTx };

inline const char* to_string(TxVerdict v) {
  switch (v) {
    case TxVerdict::Valid: return "Valid";
    case TxVerdict::BadSignature: return "BadSignature";
    case TxVerdict::DuplicateNonce: return "DuplicateNonce";
  }
  return "?";
}

inline const char* to_string(BlockVerdict v) {
  switch (v) {
    case BlockVerdict::Valid: return "Valid";
    case BlockVerdict::BadLink: return "BadLink";
    case BlockVerdict::BadRoot: return "BadRoot";
    case BlockVerdict::BadProposerSig: return "BadProposerSig";
    case BlockVerdict::BadTx: return "BadTx";
  }
  return "?";
}

class LedgerError : public std::runtime_error {
 public:
  explicit LedgerError(const std::string& what, BlockVerdict verdict = BlockVerdict::Valid)
      : std::runtime_error(what), verdict_(verdict) {}
  BlockVerdict verdict() const { return verdict_; }

 private:
  BlockVerdict verdict_;
};

struct TxLocation {
  std::uint64_t height = 0;
  std::uint32_t position = 0;
  friend bool operator==(const TxLocation&, const TxLocation&) = default;
};

/// Append-only validated chain. Blocks are shared immutably between copies,
/// so copying a ChainState is cheap and never aliases mutable data.
class ChainState {
 public:
  ChainState() { push(std::make_shared<const Block>(genesis_block())); }

  std::uint64_t height() const { return blocks_.back()->header.height; }
  std::size_t size() const { return blocks_.size(); }
  const Block& tip() const { return *blocks_.back(); }
  const Digest& tip_hash() const { return tip_hash_; }
  const Block& at(std::uint64_t height) const { return *blocks_.at(height); }

  std::vector<Block> blocks() const {
    std::vector<Block> out;
    out.reserve(blocks_.size());
    for (const auto& b : blocks_) out.push_back(*b);
    return out;
  }

  bool contains_nonce(const PublicKey& author, std::uint64_t nonce) const {
    return index_.count({author, nonce}) != 0;
  }
  std::optional<TxLocation> locate(const PublicKey& author, std::uint64_t nonce) const {
    auto it = index_.find({author, nonce});
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains_block(const Digest& block_hash) const { return by_hash_.count(block_hash) != 0; }
  std::size_t transaction_count() const { return index_.size(); }

  friend bool operator==(const ChainState& a, const ChainState& b) {
    if (a.blocks_.size() != b.blocks_.size()) return false;
    for (std::size_t i = 0; i < a.blocks_.size(); ++i)
      if (a.blocks_[i] != b.blocks_[i] && *a.blocks_[i] != *b.blocks_[i]) return false;
    return true;
  }

 private:
  friend BlockVerdict try_append(ChainState& chain, const Block& block);

  void push(std::shared_ptr<const Block> block) {
    const auto h = block->header.height;
    for (std::uint32_t i = 0; i < block->transactions.size(); ++i) {
      const auto& tx = block->transactions[i];
      index_.emplace(std::make_pair(tx.author, tx.nonce), TxLocation{h, i});
    }
    tip_hash_ = block->hash();
    by_hash_.emplace(tip_hash_, h);
    blocks_.push_back(std::move(block));
  }

  std::vector<std::shared_ptr<const Block>> blocks_;
  std::map<std::pair<PublicKey, std::uint64_t>, TxLocation> index_;
  std::map<Digest, std::uint64_t> by_hash_;
  Digest tip_hash_;
};

inline TxVerdict validate_transaction(const Transaction& tx, const ChainState& chain) {
  if (!signature_valid(tx)) return TxVerdict::BadSignature;
  if (chain.contains_nonce(tx.author, tx.nonce)) return TxVerdict::DuplicateNonce;
  return TxVerdict::Valid;
}

inline BlockVerdict validate_block(const Block& block, const ChainState& chain) {
  const auto& h = block.header;
  if (h.version != kEncodingVersion || h.height != chain.height() + 1 || h.prev_hash != chain.tip_hash())
    return BlockVerdict::BadLink;
  if (h.tx_count != block.transactions.size() || h.tx_root != compute_tx_root(block.transactions))
    return BlockVerdict::BadRoot;
  if (!verify(h.proposer, encode_header(h), block.proposer_signature)) return BlockVerdict::BadProposerSig;
  if (block.transactions.empty()) return BlockVerdict::BadTx;
  std::set<std::pair<PublicKey, std::uint64_t>> seen;
  for (const auto& tx : block.transactions) {
    if (validate_transaction(tx, chain) != TxVerdict::Valid) return BlockVerdict::BadTx;
    if (!seen.emplace(tx.author, tx.nonce).second) return BlockVerdict::BadTx;
  }
  return BlockVerdict::Valid;
}

/// Validates and appends in place. On any verdict other than Valid the chain
/// is left untouched.
inline BlockVerdict try_append(ChainState& chain, const Block& block) {
  auto verdict = validate_block(block, chain);
  if (verdict == BlockVerdict::Valid) chain.push(std::make_shared<const Block>(block));
  return verdict;
}

/// Pure form: returns the successor state, throws LedgerError on an invalid block.
inline ChainState append_block(ChainState chain, const Block& block) {
  auto verdict = try_append(chain, block);
  if (verdict != BlockVerdict::Valid)
    throw LedgerError(std::string("block rejected: ") + to_string(verdict), verdict);
  return chain;
}

inline Block build_block(const ChainState& chain, std::span<const Transaction> txs, const NodeKeyPair& proposer,
                         std::uint64_t timestamp_ms) {
  if (txs.empty()) throw LedgerError("cannot build an empty block", BlockVerdict::BadTx);
  std::set<std::pair<PublicKey, std::uint64_t>> seen;
  for (const auto& tx : txs) {
    auto v = validate_transaction(tx, chain);
    if (v != TxVerdict::Valid)
      throw LedgerError(std::string("invalid transaction in batch: ") + to_string(v), BlockVerdict::BadTx);
    if (!seen.emplace(tx.author, tx.nonce).second)
      throw LedgerError("duplicate (author, nonce) in batch", BlockVerdict::BadTx);
  }
  Block b;
  b.header.height = chain.height() + 1;
  b.header.prev_hash = chain.tip_hash();
  b.header.tx_root = compute_tx_root(txs);
  b.header.proposer = proposer.public_key();
  b.header.timestamp_ms = timestamp_ms;
  b.header.tx_count = static_cast<std::uint32_t>(txs.size());
  b.transactions.assign(txs.begin(), txs.end());
  b.proposer_signature = proposer.sign(encode_header(b.header));
  return b;
}

// Queries ------------------------------------------------------------------

struct ByAuthor {
  PublicKey author;
};

/// Inclusive height range.
struct ByHeightRange {
  std::uint64_t first = 0;
  std::uint64_t last = 0;
};

struct TxRecord {
  std::uint64_t height = 0;
  std::uint32_t position = 0;
  Transaction tx;
};

inline std::vector<TxRecord> query_ledger(const ChainState& chain, const ByAuthor& filter) {
  std::vector<TxRecord> out;
  for (std::uint64_t h = 0; h <= chain.height(); ++h) {
    const auto& b = chain.at(h);
    for (std::uint32_t i = 0; i < b.transactions.size(); ++i)
      if (b.transactions[i].author == filter.author) out.push_back({h, i, b.transactions[i]});
  }
  return out;
}

inline std::vector<Block> query_ledger(const ChainState& chain, const ByHeightRange& filter) {
  std::vector<Block> out;
  for (auto h = filter.first; h <= filter.last && h <= chain.height(); ++h) out.push_back(chain.at(h));
  return out;
}

// Full-scan audit ----------------------------------------------------------

struct AuditResult {
  bool ok = true;
  std::uint64_t failed_height = 0;
  std::string reason;

  explicit operator bool() const { return ok; }
};

/// Re-checks a whole block sequence from scratch, independently of the
/// incremental append path: genesis identity, header links, roots,
/// signatures and global (author, nonce) uniqueness.
inline AuditResult audit_blocks(std::span<const Block> blocks) {
  auto fail = [](std::uint64_t h, std::string why) { return AuditResult{false, h, std::move(why)}; };
  if (blocks.empty()) return fail(0, "empty chain");
  if (encode_block(blocks[0]) != encode_block(genesis_block())) return fail(0, "genesis mismatch");

  std::set<std::pair<PublicKey, std::uint64_t>> nonces;
  Bytes prev_header = encode_header(blocks[0].header);
  for (std::size_t i = 1; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const auto& h = b.header;
    Bytes header_bytes = encode_header(h);
    if (h.version != kEncodingVersion) return fail(i, "bad version");
    if (h.height != i) return fail(i, "non-consecutive height");
    if (h.prev_hash != hash(prev_header)) return fail(i, "broken hash link");
    if (h.tx_count != b.transactions.size() || b.transactions.empty()) return fail(i, "bad transaction count");

    ByteWriter concat;
    for (const auto& tx : b.transactions) {
      Bytes wire = encode_transaction(tx);
      if (!verify(tx.author.view(), wire, tx.signature.view())) return fail(i, "bad transaction signature");
      concat.raw(hash(ByteWriter().raw(wire).raw(tx.signature.view()).bytes()).view());
      if (!nonces.emplace(tx.author, tx.nonce).second) return fail(i, "duplicate (author, nonce)");
    }
    if (hash(concat.bytes()) != h.tx_root) return fail(i, "tx_root mismatch");
    if (!verify(h.proposer.view(), header_bytes, b.proposer_signature.view())) return fail(i, "bad proposer signature");
    prev_header = std::move(header_bytes);
  }
  return {};
}

inline AuditResult audit_chain(const ChainState& chain) {
  auto blocks = chain.blocks();
  return audit_blocks(blocks);
}

// Dump / reload ------------------------------------------------------------

/// Chain dump: for each block, u32 little-endian length followed by the block encoding.
inline Bytes dump_chain(const ChainState& chain) {
  ByteWriter w;
  for (std::uint64_t h = 0; h <= chain.height(); ++h) {
    auto enc = encode_block(chain.at(h));
    w.u32(static_cast<std::uint32_t>(enc.size())).raw(enc);
  }
  return std::move(w).take();
}

/// Splits a dump into blocks without validating them.
inline std::vector<Block> decode_dump(ByteView data) {
  std::vector<Block> out;
  ByteReader r(data);
  while (!r.done()) {
    auto len = r.u32();
    auto block = decode_block(r.take(len));
    if (!block) throw DecodeError("malformed block at index " + std::to_string(out.size()));
    out.push_back(std::move(*block));
  }
  return out;
}

inline ChainState load_chain(ByteView data) {
  std::vector<Block> blocks;
  try {
    blocks = decode_dump(data);
  } catch (const DecodeError& e) {
    throw LedgerError(std::string("chain dump is malformed: ") + e.what());
  }
  if (blocks.empty() || blocks[0] != genesis_block()) throw LedgerError("chain dump does not start at genesis");
  ChainState chain;
  for (std::size_t i = 1; i < blocks.size(); ++i) {
    auto v = try_append(chain, blocks[i]);
    if (v != BlockVerdict::Valid)
      throw LedgerError("chain dump block " + std::to_string(i) + " rejected: " + to_string(v), v);
  }
  return chain;
}

inline void save_chain_file(const ChainState& chain, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  auto bytes = dump_chain(chain);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline ChainState load_chain_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_chain(bytes);
}

}  // namespace iotfog

#endif  // IOTFOG_LEDGER_HPP
