// Drives the pure consensus transitions of n=4 peers under adversarial
// schedules, without the network simulator, and checks that no two honest
// peers commit different blocks at the same height.
#ifndef IOTFOG_TESTS_SCHEDULE_EXPLORER_HPP
#define IOTFOG_TESTS_SCHEDULE_EXPLORER_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "iotfog/consensus.hpp"

namespace explorer {

using namespace iotfog;

enum class Fault { EquivocatingLeader, CrashedPeer };
enum class Order { Fifo, Lifo };

// rotate_leader(peers, 1, 0) is peers[(1 + 0) % 4].
inline constexpr std::size_t kHeightOneLeader = 1;

struct Envelope {
  std::size_t to;
  WireMessage msg;
};

struct Outcome {
  bool safe = true;
  std::string detail;
  std::size_t steps = 0;
  std::uint64_t max_committed_height = 0;
  std::size_t honest_commits = 0;
};

class Cluster {
 public:
  static constexpr std::size_t kPeers = 4;
  static constexpr SimTime kViewTimeout = 50 * kMicrosPerMilli;
  // Runs stop once this much simulated time has passed; split locks can
  // stall a height forever, which is a liveness loss, not a safety one.
  static constexpr SimTime kHorizon = 12 * kViewTimeout;

  /// `faulty` is a position in the sorted peer list.
  Cluster(Fault fault, std::size_t faulty) : faulty_(faulty) {
    std::vector<NodeKeyPair> keys;
    for (std::uint64_t s = 0; s < kPeers; ++s) keys.push_back(generate_keypair(9000 + s));
    std::sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) { return a.public_key() < b.public_key(); });
    std::vector<PublicKey> ids;
    for (const auto& k : keys) ids.push_back(k.public_key());
    config_ = ConsensusConfig(ids, kViewTimeout);
    keys_ = keys;

    auto client = generate_keypair(777);
    for (std::uint64_t i = 0; i < 3; ++i) txs_.push_back(new_transaction(client, i, 1 + i, to_bytes("tx" + std::to_string(i))));

    states_.resize(kPeers);
    for (std::size_t i = 0; i < kPeers; ++i) {
      if (i == faulty_) continue;
      states_[i] = ConsensusState(config_, keys_[i]);
      for (const auto& tx : txs_) absorb(i, submit_transaction(std::move(*states_[i]), tx, 0, /*relay=*/false));
    }
    if (fault == Fault::EquivocatingLeader) build_adversary();
  }

  std::size_t faulty() const { return faulty_; }
  std::vector<std::size_t> honest() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < kPeers; ++i)
      if (i != faulty_) out.push_back(i);
    return out;
  }
  const std::vector<WireMessage>& adversary_pool() const { return pool_; }
  const Proposal& proposal_a() const { return *prop_a_; }
  const Proposal& proposal_b() const { return *prop_b_; }
  Vote faulty_vote(const Proposal& p) const { return make_vote(keys_[faulty_], p.block.hash(), p.height, p.view); }

  void inject(std::size_t to, WireMessage m) { pending_.push_back({to, std::move(m)}); }
  std::vector<Envelope>& pending() { return pending_; }
  SimTime now() const { return now_; }

  void deliver(Envelope e) {
    if (e.to == faulty_ || !states_[e.to]) return;  // the faulty peer absorbs everything
    auto& s = *states_[e.to];
    Transition t = std::holds_alternative<TxGossip>(e.msg)
                       ? submit_transaction(std::move(s), std::get<TxGossip>(e.msg).tx, now_, false)
                       : handle_message(std::move(s), to_consensus(std::move(e.msg)), now_);
    absorb(e.to, std::move(t));
  }

  /// Fires the earliest pending view timer, advancing the clock to it.
  bool fire_timer() {
    std::optional<std::pair<SimTime, std::size_t>> best;
    for (std::size_t i = 0; i < kPeers; ++i)
      if (states_[i] && states_[i]->deadline)
        if (!best || std::make_pair(*states_[i]->deadline, i) < *best) best = std::make_pair(*states_[i]->deadline, i);
    if (!best) return false;
    now_ = std::max(now_, best->first);
    absorb(best->second, on_timer(std::move(*states_[best->second]), now_));
    return true;
  }

  void fire_timer_of(std::size_t i) {
    if (!states_[i] || !states_[i]->deadline) return;
    now_ = std::max(now_, *states_[i]->deadline);
    absorb(i, on_timer(std::move(*states_[i]), now_));
  }

  /// Every honest peer has committed at least `height`.
  bool all_reached(std::uint64_t height) const {
    for (const auto& s : states_)
      if (s && s->chain.height() < height) return false;
    return true;
  }

  Outcome check() const {
    Outcome o;
    std::map<std::uint64_t, std::set<Digest>> by_height;
    for (const auto& s : states_) {
      if (!s) continue;
      for (const auto& c : s->commits) by_height[c.height].insert(c.block_hash);
      for (std::uint64_t h = 1; h <= s->chain.height(); ++h) by_height[h].insert(s->chain.at(h).hash());
      o.max_committed_height = std::max(o.max_committed_height, s->chain.height());
      o.honest_commits += s->commits.size();
    }
    for (const auto& [h, hashes] : by_height)
      if (hashes.size() > 1) {
        o.safe = false;
        o.detail = "conflicting commits at height " + std::to_string(h);
      }
    return o;
  }

 private:
  static ConsensusMessage to_consensus(WireMessage m) {
    return std::visit(
        [](auto&& x) -> ConsensusMessage {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, TxGossip>) return ConsensusMessage{};  // not reached
          else return std::move(x);
        },
        std::move(m));
  }

  void absorb(std::size_t from, Transition t) {
    states_[from] = std::move(t.state);
    for (auto& o : t.outbound) {
      if (o.audience == Audience::Observers) continue;
      for (std::size_t j = 0; j < kPeers; ++j)
        if (j != from) pending_.push_back({j, o.message});
    }
  }

  void build_adversary() {
    const auto& key = keys_[faulty_];
    ChainState genesis;
    auto block_a = build_block(genesis, std::vector{txs_[0]}, key, 1);
    auto block_b = build_block(genesis, std::vector{txs_[1], txs_[2]}, key, 1);
    prop_a_ = make_proposal(block_a, 1, 0, key);
    prop_b_ = make_proposal(block_b, 1, 0, key);
    std::vector<Block> blocks{block_a, block_b};
    for (std::uint32_t view = 0; view < 6; ++view) {
      bool leads = rotate_leader(config_.peers, 1, view) == key.public_key();
      for (const auto& b : blocks) {
        if (leads)
          pool_.push_back(make_proposal(b, 1, view, key));
        pool_.push_back(make_vote(key, b.hash(), 1, view));
      }
      if (view == 0) continue;
      pool_.push_back(make_view_change(key, 1, view, std::nullopt));
      for (const auto& b : blocks)
        for (std::uint32_t claimed : {0u, view - 1, view + 3})
          pool_.push_back(make_view_change(key, 1, view, LockedBlock{claimed, b}));
    }
  }

  std::size_t faulty_;
  ConsensusConfig config_;
  std::vector<NodeKeyPair> keys_;
  std::vector<Transaction> txs_;
  std::vector<std::optional<ConsensusState>> states_;
  std::vector<Envelope> pending_;
  std::vector<WireMessage> pool_;
  std::optional<Proposal> prop_a_, prop_b_;
  SimTime now_ = 0;
};

/// What the equivocating leader first sends one honest peer at view 0.
enum class Opening { Nothing, A, B, AThenB, BThenA };
inline constexpr int kOpenings = 5;

inline void open_with(Cluster& c, std::size_t peer, Opening o) {
  if (o == Opening::A || o == Opening::AThenB) c.inject(peer, c.proposal_a());
  if (o == Opening::B || o == Opening::AThenB || o == Opening::BThenA) c.inject(peer, c.proposal_b());
  if (o == Opening::BThenA) c.inject(peer, c.proposal_a());
}

/// Random asynchronous schedule: arbitrary delivery order, timers firing at
/// random points and, with an equivocating leader, adversarial injections.
inline Outcome random_schedule(Fault fault, std::uint64_t seed, std::size_t max_steps = 600) {
  std::mt19937_64 rng(seed);
  // An equivocator must lead height 1, view 0; a crashed peer can be anyone.
  std::size_t faulty = fault == Fault::EquivocatingLeader ? kHeightOneLeader : rng() % Cluster::kPeers;
  Cluster c(fault, faulty);
  if (fault == Fault::EquivocatingLeader)
    for (std::size_t j : c.honest()) {
      open_with(c, j, static_cast<Opening>(rng() % kOpenings));
      if (rng() % 2) c.inject(j, c.faulty_vote(c.proposal_a()));
      if (rng() % 2) c.inject(j, c.faulty_vote(c.proposal_b()));
    }
  std::size_t step = 0;
  for (; step < max_steps && c.now() <= Cluster::kHorizon; ++step) {
    auto& q = c.pending();
    auto roll = rng() % 100;
    if (fault == Fault::EquivocatingLeader && roll < 10) {
      const auto& pool = c.adversary_pool();
      c.inject(c.honest()[rng() % c.honest().size()], pool[rng() % pool.size()]);
      continue;
    }
    if (q.empty() || roll < 14) {
      if (!c.fire_timer() && q.empty()) break;
      continue;
    }
    auto idx = rng() % q.size();
    auto e = std::move(q[idx]);
    q.erase(q.begin() + static_cast<long>(idx));
    c.deliver(std::move(e));
    if (!c.check().safe) break;
  }
  auto o = c.check();
  o.steps = step;
  return o;
}

struct ExhaustiveSummary {
  std::size_t runs = 0;
  std::size_t unsafe = 0;
  std::size_t committed_runs = 0;
  std::size_t steps = 0;
  std::string first_failure;
};

/// Every combination of: the opening each honest peer receives from the
/// equivocating leader; whether the leader also votes for both blocks; FIFO
/// or LIFO delivery. Timers fire only when no message is pending. The
/// adversary only holds height-1 material, so a run ends once every honest
/// peer has committed height 1. Without a commit by the second view timeout
/// the locks are split for good, so three timeouts bound a run.
inline ExhaustiveSummary exhaustive_equivocation(SimTime horizon = 3 * Cluster::kViewTimeout,
                                                 std::size_t max_steps = 3000) {
  ExhaustiveSummary sum;
  const int assignments = kOpenings * kOpenings * kOpenings;
  for (int assignment = 0; assignment < assignments; ++assignment)
    for (bool double_vote : {false, true})
      for (auto order : {Order::Fifo, Order::Lifo}) {
        Cluster c(Fault::EquivocatingLeader, kHeightOneLeader);
        int code = assignment;
        for (std::size_t j : c.honest()) {
          open_with(c, j, static_cast<Opening>(code % kOpenings));
          code /= kOpenings;
        }
        if (double_vote)
          for (std::size_t j : c.honest()) {
            c.inject(j, c.faulty_vote(c.proposal_a()));
            c.inject(j, c.faulty_vote(c.proposal_b()));
          }
        std::size_t step = 0;
        for (; step < max_steps && !c.all_reached(1) && c.now() <= horizon; ++step) {
          auto& q = c.pending();
          if (q.empty()) {
            if (!c.fire_timer()) break;
            continue;
          }
          Envelope e = order == Order::Fifo ? std::move(q.front()) : std::move(q.back());
          if (order == Order::Fifo) q.erase(q.begin());
          else q.pop_back();
          c.deliver(std::move(e));
        }
        auto o = c.check();
        ++sum.runs;
        sum.steps += step;
        if (o.max_committed_height > 0) ++sum.committed_runs;
        if (!o.safe) {
          ++sum.unsafe;
          if (sum.first_failure.empty())
            sum.first_failure = "opening " + std::to_string(assignment) + (double_vote ? " with" : " without") +
                                " double vote: " + o.detail;
        }
      }
  return sum;
}

}  // namespace explorer

#endif  // IOTFOG_TESTS_SCHEDULE_EXPLORER_HPP
