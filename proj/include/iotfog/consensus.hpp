#ifndef IOTFOG_CONSENSUS_HPP
#define IOTFOG_CONSENSUS_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "iotfog/clock.hpp"
#include "iotfog/identity.hpp"
#include "iotfog/ledger.hpp"
#include "iotfog/messages.hpp"

namespace iotfog {

/// f = floor((n - 1) / 3): faults tolerated by n consensus peers.
constexpr std::size_t fault_tolerance(std::size_t n) { return n == 0 ? 0 : (n - 1) / 3; }
/// 2f + 1 distinct signers commit a block.
constexpr std::size_t quorum(std::size_t n) { return 2 * fault_tolerance(n) + 1; }

/// Round-robin leader for (height, view) over the peer list sorted by key bytes.
inline const PublicKey& rotate_leader(std::span<const PublicKey> peers, std::uint64_t height, std::uint32_t view) {
  if (peers.empty()) throw std::invalid_argument("rotate_leader: empty peer list");
  return peers[(height + view) % peers.size()];
}

enum class PeerRole { Leader, Validator, Observer };

inline const char* to_string(PeerRole r) {
  switch (r) {
    case PeerRole::Leader: return "Leader";
    case PeerRole::Validator: return "Validator";
    case PeerRole::Observer: return "Observer";
  }
  return "?";
}

inline PeerRole role_of(std::span<const PublicKey> peers, const PublicKey& who, std::uint64_t height,
                        std::uint32_t view) {
  if (!std::binary_search(peers.begin(), peers.end(), who)) return PeerRole::Observer;
  return rotate_leader(peers, height, view) == who ? PeerRole::Leader : PeerRole::Validator;
}

struct ConsensusConfig {
  std::vector<PublicKey> peers;  // consensus peers, any order; normalised to sorted and unique
  SimTime view_timeout = 50 * kMicrosPerMilli;

  ConsensusConfig() = default;
  ConsensusConfig(std::vector<PublicKey> p, SimTime timeout) : peers(std::move(p)), view_timeout(timeout) {
    normalise();
  }

  void normalise() {
    std::sort(peers.begin(), peers.end());
    peers.erase(std::unique(peers.begin(), peers.end()), peers.end());
  }
  bool is_peer(const PublicKey& k) const { return std::binary_search(peers.begin(), peers.end(), k); }
  std::size_t n() const { return peers.size(); }
};

struct ConsensusMetrics {
  std::uint64_t dropped = 0;   // malformed, wrongly signed or from outsiders
  std::uint64_t rejected = 0;  // well-formed proposals refused by validate_and_sign
  std::uint64_t proposals = 0;
  std::uint64_t votes_cast = 0;
  std::uint64_t view_changes = 0;
  std::uint64_t deferred_overflow = 0;

  friend bool operator==(const ConsensusMetrics&, const ConsensusMetrics&) = default;
};

struct CommitRecord {
  std::uint64_t height = 0;
  std::uint32_t view = 0;
  Digest block_hash;
  SimTime at = 0;

  friend bool operator==(const CommitRecord&, const CommitRecord&) = default;
};

struct VoteSlot {
  std::uint32_t view = 0;
  Digest block_hash;
  auto operator<=>(const VoteSlot&) const = default;
};

/// Per-peer consensus state. Everything below `chain` and `pool` is scoped to
/// the height currently being decided (chain.height() + 1) and is reset on commit.
struct ConsensusState {
  ConsensusConfig config;
  NodeKeyPair key;
  ChainState chain;
  std::map<Digest, Transaction> pool;  // keyed by transaction hash

  std::uint32_t view = 0;
  // First block voted for at this height. Never replaced by a different block
  // at the same height, across views.
  std::optional<LockedBlock> lock;
  std::optional<Digest> lock_hash;
  std::map<Digest, Block> candidates;  // validated blocks seen at this height
  std::map<VoteSlot, std::map<PublicKey, Vote>> votes;
  std::set<std::uint32_t> proposed_views;
  std::map<std::uint32_t, std::map<PublicKey, ViewChange>> view_changes;
  std::uint32_t view_change_sent = 0;
  std::optional<SimTime> deadline;
  std::vector<ConsensusMessage> deferred;

  std::vector<CommitRecord> commits;
  ConsensusMetrics metrics;

  ConsensusState(ConsensusConfig cfg, NodeKeyPair k, ChainState c = {})
      : config(std::move(cfg)), key(std::move(k)), chain(std::move(c)) {
    config.normalise();
  }

  std::uint64_t working_height() const { return chain.height() + 1; }
  bool is_peer() const { return config.is_peer(key.public_key()); }
  PeerRole role() const { return role_of(config.peers, key.public_key(), working_height(), view); }
  const PublicKey& leader() const { return rotate_leader(config.peers, working_height(), view); }
};

/// Destination class for an outbound message; resolved to concrete nodes by
/// the transport.
enum class Audience {
  Peers,      // every other consensus peer
  Observers,  // non-consensus neighbours
  Everyone,   // both of the above
};

struct Outbound {
  Audience audience = Audience::Peers;
  WireMessage message;
};

struct Transition {
  ConsensusState state;
  std::vector<Outbound> outbound;
};

enum class ProposeRefusal { NotLeader, EmptyPool, AlreadyProposed };
enum class Rejection { WrongLeader, BadBlock, AlreadyVoted, StaleHeight };

inline const char* to_string(Rejection r) {
  switch (r) {
    case Rejection::WrongLeader: return "WrongLeader";
    case Rejection::BadBlock: return "BadBlock";
    case Rejection::AlreadyVoted: return "AlreadyVoted";
    case Rejection::StaleHeight: return "StaleHeight";
  }
  return "?";
}

inline const char* to_string(ProposeRefusal r) {
  switch (r) {
    case ProposeRefusal::NotLeader: return "NotLeader";
    case ProposeRefusal::EmptyPool: return "EmptyPool";
    case ProposeRefusal::AlreadyProposed: return "AlreadyProposed";
  }
  return "?";
}

// Step 1 helpers -----------------------------------------------------------

/// Ascending by (timestamp, transaction hash). Transactions invalid against
/// the chain, and later duplicates of an (author, nonce) pair, are dropped.
inline std::vector<Transaction> order_pool(std::span<const Transaction> pool, const ChainState& chain) {
  std::vector<std::pair<std::pair<std::uint64_t, Digest>, const Transaction*>> keyed;
  keyed.reserve(pool.size());
  for (const auto& tx : pool)
    if (validate_transaction(tx, chain) == TxVerdict::Valid)
      keyed.push_back({{tx.timestamp_ms, transaction_hash(tx)}, &tx});
  std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Transaction> out;
  std::set<std::pair<PublicKey, std::uint64_t>> seen;
  for (const auto& [k, tx] : keyed)
    if (seen.emplace(tx->author, tx->nonce).second) out.push_back(*tx);
  return out;
}

inline std::vector<Transaction> order_pool(const std::map<Digest, Transaction>& pool, const ChainState& chain) {
  std::vector<Transaction> flat;
  flat.reserve(pool.size());
  for (const auto& [h, tx] : pool) flat.push_back(tx);
  return order_pool(flat, chain);
}

/// Block a new leader must carry over from the view-change set: the reported
/// lock with the highest view, then the most reports, then the smallest hash.
inline std::optional<Block> carried_block(const ConsensusState& s) {
  struct Tally {
    std::uint32_t view = 0;
    std::size_t reports = 0;
    const Block* block = nullptr;
  };
  std::map<Digest, Tally> tally;
  auto count = [&](const LockedBlock& lb) {
    auto& t = tally[lb.block.hash()];
    t.view = std::max(t.view, lb.view);
    t.reports += 1;
    t.block = &lb.block;
  };
  if (s.lock) count(*s.lock);
  if (auto it = s.view_changes.find(s.view); it != s.view_changes.end())
    for (const auto& [sender, vc] : it->second)
      if (vc.lock) count(*vc.lock);
  const Tally* best = nullptr;
  for (const auto& [h, t] : tally)  // map order gives the smallest hash on ties
    if (!best || t.view > best->view || (t.view == best->view && t.reports > best->reports)) best = &t;
  if (!best || validate_block(*best->block, s.chain) != BlockVerdict::Valid) return std::nullopt;
  return *best->block;
}

/// Step 1: the leader orders its pool, seals a block and signs the proposal.
inline std::variant<Proposal, ProposeRefusal> propose(const ConsensusState& s, const NodeKeyPair& leader_key,
                                                      SimTime now) {
  const auto height = s.working_height();
  if (!s.config.is_peer(leader_key.public_key()) || rotate_leader(s.config.peers, height, s.view) != leader_key.public_key())
    return ProposeRefusal::NotLeader;
  if (s.proposed_views.count(s.view)) return ProposeRefusal::AlreadyProposed;
  if (auto carried = carried_block(s)) return make_proposal(std::move(*carried), height, s.view, leader_key);
  auto ordered = order_pool(s.pool, s.chain);
  if (ordered.empty()) return ProposeRefusal::EmptyPool;
  auto block = build_block(s.chain, ordered, leader_key, whole_millis(now));
  return make_proposal(std::move(block), height, s.view, leader_key);
}

/// Step 2: verify the proposal against the local chain and sign a vote for it.
inline std::variant<Vote, Rejection> validate_and_sign(const ConsensusState& s, const Proposal& p,
                                                       const NodeKeyPair& my_key) {
  if (p.height <= s.chain.height() || (p.height == s.working_height() && p.view < s.view))
    return Rejection::StaleHeight;
  const auto& leader = rotate_leader(s.config.peers, p.height, p.view);
  if (!verify(leader, proposal_signing_bytes(p), p.leader_signature)) return Rejection::WrongLeader;
  if (p.block.header.height != p.height || validate_block(p.block, s.chain) != BlockVerdict::Valid)
    return Rejection::BadBlock;
  auto h = p.block.hash();
  if (s.lock_hash && *s.lock_hash != h) return Rejection::AlreadyVoted;
  return make_vote(my_key, h, p.height, p.view);
}

namespace detail {

/// Mutable engine behind the pure transition functions.
class ConsensusEngine {
 public:
  static constexpr std::size_t kMaxDeferred = 1024;

  ConsensusEngine(ConsensusState& s, std::vector<Outbound>& out, SimTime now) : s_(s), out_(out), now_(now) {}

  void on_message(const ConsensusMessage& m) {
    std::visit([this](const auto& x) { on(x); }, m);
  }

  void on(const Proposal& p) {
    if (!s_.is_peer()) return;
    const auto working = s_.working_height();
    if (p.height < working || (p.height == working && p.view < s_.view)) {
      ++s_.metrics.rejected;
      return;
    }
    if (p.height > working || p.view > s_.view) return defer(p);

    auto result = validate_and_sign(s_, p, s_.key);
    if (auto* rej = std::get_if<Rejection>(&result)) {
      if (*rej == Rejection::WrongLeader) {
        ++s_.metrics.dropped;
        return;
      }
      ++s_.metrics.rejected;
      if (*rej != Rejection::AlreadyVoted) return;
      // The block is valid, just not ours to vote for; it can still commit
      // if a quorum forms around it.
      auto h = p.block.hash();
      s_.candidates.emplace(h, p.block);
      check_commit({p.view, h});
      return;
    }
    const auto& vote = std::get<Vote>(result);
    s_.candidates.emplace(vote.block_hash, p.block);
    if (!s_.lock) {
      s_.lock = LockedBlock{p.view, p.block};
      s_.lock_hash = vote.block_hash;
    } else {
      s_.lock->view = std::max(s_.lock->view, p.view);
    }
    arm_deadline();
    auto& slot = s_.votes[{vote.view, vote.block_hash}];
    if (slot.count(vote.voter)) return;
    ++s_.metrics.votes_cast;
    out_.push_back({Audience::Peers, vote});
    record_vote(vote);
  }

  void on(const Vote& v) {
    if (!s_.is_peer()) return;
    if (!s_.config.is_peer(v.voter) || !vote_signature_valid(v)) {
      ++s_.metrics.dropped;
      return;
    }
    if (v.height < s_.working_height()) return;
    if (v.height > s_.working_height()) return defer(v);
    record_vote(v);
  }

  void on(const CommitCertificate& c) {
    if (c.height <= s_.chain.height()) return;
    if (c.height > s_.working_height()) return defer(c);
    if (!certificate_valid(c)) {
      ++s_.metrics.dropped;
      return;
    }
    std::map<PublicKey, Vote> votes;
    for (const auto& v : c.votes) votes.emplace(v.voter, v);
    commit(c.block, c.view, votes, /*via_votes=*/false);
  }

  void on(const ViewChange& vc) {
    if (!s_.is_peer()) return;
    if (!s_.config.is_peer(vc.sender) || !view_change_signature_valid(vc)) {
      ++s_.metrics.dropped;
      return;
    }
    if (vc.height < s_.working_height()) return;
    if (vc.height > s_.working_height()) return defer(vc);
    if (vc.new_view <= s_.view) return;
    auto& bucket = s_.view_changes[vc.new_view];
    bucket.insert_or_assign(vc.sender, vc);
    const auto n = s_.config.n();
    if (bucket.size() >= fault_tolerance(n) + 1 && s_.view_change_sent < vc.new_view) send_view_change(vc.new_view);
    if (bucket.size() >= quorum(n)) advance_view(vc.new_view);
  }

  void on_timer() {
    if (!s_.is_peer() || !s_.deadline || now_ < *s_.deadline) return;
    auto target = std::max(s_.view, s_.view_change_sent) + 1;
    s_.deadline = now_ + s_.config.view_timeout;
    send_view_change(target);
    if (s_.view_changes[target].size() >= quorum(s_.config.n())) advance_view(target);
  }

  void submit(const Transaction& tx, bool relay) {
    if (!s_.is_peer()) return;
    auto h = transaction_hash(tx);
    if (s_.pool.count(h)) return;
    if (validate_transaction(tx, s_.chain) != TxVerdict::Valid) {
      ++s_.metrics.rejected;
      return;
    }
    s_.pool.emplace(h, tx);
    if (relay) out_.push_back({Audience::Peers, TxGossip{tx}});
    arm_deadline();
    maybe_propose();
  }

  void maybe_propose() {
    if (!s_.is_peer() || s_.leader() != s_.key.public_key()) return;
    auto result = propose(s_, s_.key, now_);
    auto* p = std::get_if<Proposal>(&result);
    if (!p) return;
    s_.proposed_views.insert(p->view);
    ++s_.metrics.proposals;
    out_.push_back({Audience::Peers, *p});
    on(*p);
  }

 private:
  void defer(ConsensusMessage m) {
    if (s_.deferred.size() >= kMaxDeferred) {
      ++s_.metrics.deferred_overflow;
      return;
    }
    s_.deferred.push_back(std::move(m));
  }

  void replay_deferred() {
    auto pending = std::move(s_.deferred);
    s_.deferred.clear();
    for (const auto& m : pending) on_message(m);
  }

  void arm_deadline() {
    if (!s_.deadline && (!s_.pool.empty() || s_.lock)) s_.deadline = now_ + s_.config.view_timeout;
  }

  void record_vote(const Vote& v) {
    VoteSlot slot{v.view, v.block_hash};
    s_.votes[slot].emplace(v.voter, v);
    check_commit(slot);
  }

  void check_commit(const VoteSlot& slot) {
    auto it = s_.votes.find(slot);
    if (it == s_.votes.end() || it->second.size() < quorum(s_.config.n())) return;
    auto block = s_.candidates.find(slot.block_hash);
    if (block == s_.candidates.end()) return;  // wait for the proposal or a certificate
    auto committed = block->second;
    auto votes = it->second;
    commit(committed, slot.view, votes, /*via_votes=*/true);
  }

  bool certificate_valid(const CommitCertificate& c) const {
    if (c.block.hash() != c.block_hash || c.block.header.height != c.height) return false;
    std::set<PublicKey> voters;
    for (const auto& v : c.votes) {
      if (v.block_hash != c.block_hash || v.height != c.height || v.view != c.view) return false;
      if (!s_.config.is_peer(v.voter) || !vote_signature_valid(v)) return false;
      voters.insert(v.voter);
    }
    if (voters.size() < quorum(s_.config.n())) return false;
    return validate_block(c.block, s_.chain) == BlockVerdict::Valid;
  }

  void commit(const Block& block, std::uint32_t view, const std::map<PublicKey, Vote>& votes, bool via_votes) {
    if (try_append(s_.chain, block) != BlockVerdict::Valid) {
      ++s_.metrics.dropped;
      return;
    }
    CommitCertificate cert{block.hash(), block.header.height, view, {}, block};
    for (const auto& [voter, v] : votes) cert.votes.push_back(v);
    s_.commits.push_back({cert.height, view, cert.block_hash, now_});

    for (auto it = s_.pool.begin(); it != s_.pool.end();) {
      if (validate_transaction(it->second, s_.chain) != TxVerdict::Valid)
        it = s_.pool.erase(it);
      else
        ++it;
    }
    s_.view = 0;
    s_.lock.reset();
    s_.lock_hash.reset();
    s_.candidates.clear();
    s_.votes.clear();
    s_.proposed_views.clear();
    s_.view_changes.clear();
    s_.view_change_sent = 0;
    s_.deadline.reset();

    if (s_.is_peer()) {
      out_.push_back({via_votes ? Audience::Everyone : Audience::Observers, std::move(cert)});
      arm_deadline();
      maybe_propose();
    }
    replay_deferred();
  }

  void send_view_change(std::uint32_t target) {
    auto vc = make_view_change(s_.key, s_.working_height(), target, s_.lock);
    s_.view_change_sent = std::max(s_.view_change_sent, target);
    s_.view_changes[target].insert_or_assign(vc.sender, vc);
    ++s_.metrics.view_changes;
    out_.push_back({Audience::Peers, std::move(vc)});
  }

  void advance_view(std::uint32_t v) {
    if (v <= s_.view) return;
    s_.view = v;
    for (auto it = s_.view_changes.begin(); it != s_.view_changes.end() && it->first < v;)
      it = s_.view_changes.erase(it);
    s_.deadline.reset();
    arm_deadline();
    maybe_propose();
    replay_deferred();
  }

  ConsensusState& s_;
  std::vector<Outbound>& out_;
  SimTime now_;
};

}  // namespace detail

/// Pure transition for one inbound message.
inline Transition handle_message(ConsensusState state, const ConsensusMessage& msg, SimTime now) {
  std::vector<Outbound> out;
  detail::ConsensusEngine(state, out, now).on_message(msg);
  return {std::move(state), std::move(out)};
}

/// Fires the view timer: no commit within the view timeout emits a ViewChange.
inline Transition on_timer(ConsensusState state, SimTime now) {
  std::vector<Outbound> out;
  detail::ConsensusEngine(state, out, now).on_timer();
  return {std::move(state), std::move(out)};
}

/// Adds a transaction to the pool. With relay set, the transaction is
/// gossiped to the other peers.
inline Transition submit_transaction(ConsensusState state, const Transaction& tx, SimTime now, bool relay = true) {
  std::vector<Outbound> out;
  detail::ConsensusEngine(state, out, now).submit(tx, relay);
  return {std::move(state), std::move(out)};
}

struct CommitStep {
  ConsensusState state;
  std::optional<CommitCertificate> certificate;  // set when this vote completed a quorum
};

/// Step 3: record one (already signature-checked) vote and commit on quorum.
inline CommitStep try_commit(ConsensusState state, const Vote& vote, SimTime now = 0) {
  auto before = state.chain.height();
  auto t = handle_message(std::move(state), vote, now);
  CommitStep step{std::move(t.state), std::nullopt};
  if (step.state.chain.height() > before)
    for (auto& o : t.outbound)
      if (auto* c = std::get_if<CommitCertificate>(&o.message)) step.certificate = std::move(*c);
  return step;
}

}  // namespace iotfog

#endif  // IOTFOG_CONSENSUS_HPP
