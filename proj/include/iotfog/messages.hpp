#ifndef IOTFOG_MESSAGES_HPP
#define IOTFOG_MESSAGES_HPP

#include <cstdint>
#include <optional>
#include <type_traits>
#include <stdexcept>
#include <variant>
#include <vector>

#include "iotfog/bytes.hpp"
#include "iotfog/identity.hpp"
#include "iotfog/ledger.hpp"
#include "iotfog/transaction.hpp"

namespace iotfog {

// Wire tags. Every consensus message is tag ‖ fields in declaration order,
// integers little-endian, signature last. A signature covers exactly the
// encoded bytes that precede it, excluding the tag.
enum class MessageTag : std::uint8_t {
  Proposal = 0x10,
  Vote = 0x11,
  CommitCertificate = 0x12,
  ViewChange = 0x13,
  TxGossip = 0x14,
};

struct Proposal {
  Block block;
  std::uint64_t height = 0;
  std::uint32_t view = 0;
  Signature leader_signature;

  friend bool operator==(const Proposal&, const Proposal&) = default;
};

struct Vote {
  PublicKey voter;
  Digest block_hash;
  std::uint64_t height = 0;
  std::uint32_t view = 0;
  Signature signature;

  friend bool operator==(const Vote&, const Vote&) = default;
};

/// A block this peer has voted for at the current height, reported in view
/// changes so the next leader can re-propose it.
struct LockedBlock {
  std::uint32_t view = 0;
  Block block;

  friend bool operator==(const LockedBlock&, const LockedBlock&) = default;
};

struct ViewChange {
  PublicKey sender;
  std::uint64_t height = 0;
  std::uint32_t new_view = 0;
  std::optional<LockedBlock> lock;
  Signature signature;

  friend bool operator==(const ViewChange&, const ViewChange&) = default;
};

/// Quorum proof for one block. The block travels with the certificate so
/// observers and lagging peers can re-validate and append it.
struct CommitCertificate {
  Digest block_hash;
  std::uint64_t height = 0;
  std::uint32_t view = 0;
  std::vector<Vote> votes;
  Block block;

  friend bool operator==(const CommitCertificate&, const CommitCertificate&) = default;
};

struct TxGossip {
  Transaction tx;

  friend bool operator==(const TxGossip&, const TxGossip&) = default;
};

using ConsensusMessage = std::variant<Proposal, Vote, CommitCertificate, ViewChange>;
using WireMessage = std::variant<Proposal, Vote, CommitCertificate, ViewChange, TxGossip>;

// Field writers (no tag) ---------------------------------------------------

namespace wire {

inline void write_proposal_body(ByteWriter& w, const Proposal& p) {
  write_block(w, p.block);
  w.u64(p.height).u32(p.view);
}

inline void write_vote_body(ByteWriter& w, const Vote& v) {
  w.raw(v.voter.view()).raw(v.block_hash.view()).u64(v.height).u32(v.view);
}

inline void write_view_change_body(ByteWriter& w, const ViewChange& vc) {
  w.raw(vc.sender.view()).u64(vc.height).u32(vc.new_view);
  if (vc.lock) {
    w.u8(1).u32(vc.lock->view);
    write_block(w, vc.lock->block);
  } else {
    w.u8(0);
  }
}

inline Vote read_vote(ByteReader& r) {
  Vote v;
  v.voter = PublicKey{r.fixed<32>()};
  v.block_hash = Digest{r.fixed<32>()};
  v.height = r.u64();
  v.view = r.u32();
  v.signature = Signature{r.fixed<64>()};
  return v;
}

}  // namespace wire

inline Bytes proposal_signing_bytes(const Proposal& p) {
  ByteWriter w;
  wire::write_proposal_body(w, p);
  return std::move(w).take();
}

inline Bytes vote_signing_bytes(const Vote& v) {
  ByteWriter w(32 + 32 + 8 + 4);
  wire::write_vote_body(w, v);
  return std::move(w).take();
}

inline Bytes view_change_signing_bytes(const ViewChange& vc) {
  ByteWriter w;
  wire::write_view_change_body(w, vc);
  return std::move(w).take();
}

inline Proposal make_proposal(Block block, std::uint64_t height, std::uint32_t view, const NodeKeyPair& leader) {
  Proposal p{std::move(block), height, view, {}};
  p.leader_signature = leader.sign(proposal_signing_bytes(p));
  return p;
}

inline Vote make_vote(const NodeKeyPair& voter, const Digest& block_hash, std::uint64_t height, std::uint32_t view) {
  Vote v{voter.public_key(), block_hash, height, view, {}};
  v.signature = voter.sign(vote_signing_bytes(v));
  return v;
}

inline ViewChange make_view_change(const NodeKeyPair& sender, std::uint64_t height, std::uint32_t new_view,
                                   std::optional<LockedBlock> lock) {
  ViewChange vc{sender.public_key(), height, new_view, std::move(lock), {}};
  vc.signature = sender.sign(view_change_signing_bytes(vc));
  return vc;
}

inline bool vote_signature_valid(const Vote& v) { return verify(v.voter, vote_signing_bytes(v), v.signature); }

inline bool view_change_signature_valid(const ViewChange& vc) {
  return verify(vc.sender, view_change_signing_bytes(vc), vc.signature);
}

// Full messages ------------------------------------------------------------

inline MessageTag tag_of(const WireMessage& m) {
  return std::visit(
      [](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Proposal>) return MessageTag::Proposal;
        else if constexpr (std::is_same_v<T, Vote>) return MessageTag::Vote;
        else if constexpr (std::is_same_v<T, CommitCertificate>) return MessageTag::CommitCertificate;
        else if constexpr (std::is_same_v<T, ViewChange>) return MessageTag::ViewChange;
        else return MessageTag::TxGossip;
      },
      m);
}

inline Bytes encode_message(const WireMessage& m) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(tag_of(m)));
  std::visit(
      [&w](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Proposal>) {
          wire::write_proposal_body(w, x);
          w.raw(x.leader_signature.view());
        } else if constexpr (std::is_same_v<T, Vote>) {
          wire::write_vote_body(w, x);
          w.raw(x.signature.view());
        } else if constexpr (std::is_same_v<T, CommitCertificate>) {
          w.raw(x.block_hash.view()).u64(x.height).u32(x.view).u32(static_cast<std::uint32_t>(x.votes.size()));
          for (const auto& v : x.votes) {
            wire::write_vote_body(w, v);
            w.raw(v.signature.view());
          }
          write_block(w, x.block);
        } else if constexpr (std::is_same_v<T, ViewChange>) {
          wire::write_view_change_body(w, x);
          w.raw(x.signature.view());
        } else {
          write_transaction(w, x.tx);
        }
      },
      m);
  return std::move(w).take();
}

inline Bytes encode_message(const ConsensusMessage& m) {
  return encode_message(std::visit([](const auto& x) { return WireMessage{x}; }, m));
}

inline bool is_consensus_tag(std::uint8_t tag) { return tag >= 0x10 && tag <= 0x14; }

/// Strict decoder: unknown tags, truncation and trailing bytes all yield nullopt.
inline std::optional<WireMessage> decode_message(ByteView data) {
  try {
    ByteReader r(data);
    auto tag = static_cast<MessageTag>(r.u8());
    WireMessage out;
    switch (tag) {
      case MessageTag::Proposal: {
        Proposal p;
        p.block = read_block(r);
        p.height = r.u64();
        p.view = r.u32();
        p.leader_signature = Signature{r.fixed<64>()};
        out = std::move(p);
        break;
      }
      case MessageTag::Vote:
        out = wire::read_vote(r);
        break;
      case MessageTag::CommitCertificate: {
        CommitCertificate c;
        c.block_hash = Digest{r.fixed<32>()};
        c.height = r.u64();
        c.view = r.u32();
        auto n = r.u32();
        if (n > r.remaining() / 140) throw DecodeError("vote count exceeds input");
        for (std::uint32_t i = 0; i < n; ++i) c.votes.push_back(wire::read_vote(r));
        c.block = read_block(r);
        out = std::move(c);
        break;
      }
      case MessageTag::ViewChange: {
        ViewChange vc;
        vc.sender = PublicKey{r.fixed<32>()};
        vc.height = r.u64();
        vc.new_view = r.u32();
        auto has_lock = r.u8();
        if (has_lock > 1) throw DecodeError("bad lock flag");
        if (has_lock) {
          LockedBlock lock;
          lock.view = r.u32();
          lock.block = read_block(r);
          vc.lock = std::move(lock);
        }
        vc.signature = Signature{r.fixed<64>()};
        out = std::move(vc);
        break;
      }
      case MessageTag::TxGossip:
        out = TxGossip{read_transaction(r)};
        break;
      default:
        return std::nullopt;
    }
    r.expect_done();
    return out;
  } catch (const DecodeError&) {
    return std::nullopt;
  }
}

}  // namespace iotfog

#endif  // IOTFOG_MESSAGES_HPP
