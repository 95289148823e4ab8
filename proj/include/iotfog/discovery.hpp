#ifndef IOTFOG_DISCOVERY_HPP
#define IOTFOG_DISCOVERY_HPP

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "iotfog/bytes.hpp"
#include "iotfog/clock.hpp"
#include "iotfog/fognet.hpp"
#include "iotfog/identity.hpp"

namespace iotfog {

enum class DiscoveryTag : std::uint8_t {
  Lookup = 0x20,
  Found = 0x21,
  Challenge = 0x22,
  Response = 0x23,
  Ping = 0x24,
  Pong = 0x25,
};

inline bool is_discovery_tag(std::uint8_t tag) { return tag >= 0x20 && tag <= 0x25; }

struct DiscoveryParams {
  std::uint32_t ttl = 1;
  std::uint32_t retries = 2;  // number of lookup waves before giving up
  SimTime wave_timeout = 0;
};

/// ttl = diameter + 1, retries = 2, wave_timeout = 4 x base latency x diameter.
inline DiscoveryParams default_discovery_params(const SimNetwork& net) {
  const auto d = std::max<std::uint32_t>(net.diameter(), 1);
  DiscoveryParams p;
  p.ttl = net.diameter() + 1;
  p.retries = 2;
  p.wave_timeout = 4 * from_millis(net.config().base_latency_ms) * d;
  return p;
}

struct SearchResult {
  bool found = false;
  std::vector<PublicKey> route;  // requester .. target when found
  SimTime elapsed = 0;
  std::uint32_t waves_used = 0;
};

enum class ExamineOutcome { Verified, BadResponse, NodeOffline };

inline const char* to_string(ExamineOutcome o) {
  switch (o) {
    case ExamineOutcome::Verified: return "Verified";
    case ExamineOutcome::BadResponse: return "BadResponse";
    case ExamineOutcome::NodeOffline: return "NodeOffline";
  }
  return "?";
}

struct ExamineResult {
  ExamineOutcome outcome = ExamineOutcome::NodeOffline;
  std::optional<Digest> head_hash;
  SimTime elapsed = 0;
  std::uint64_t messages_sent = 0;
};

struct SelectResult {
  PublicKey chosen;
  NodeIndex chosen_index = 0;
  std::size_t candidates_considered = 0;
  SimTime elapsed = 0;
  std::map<NodeIndex, SimTime> round_trips;
};

class NoCandidatesError : public std::runtime_error {
 public:
  NoCandidatesError() : std::runtime_error("select: no candidate answered within the timeout") {}
};

/// Bytes a target signs when answering a challenge: nonce (u64 LE) ‖ chain head.
inline Bytes challenge_signing_bytes(std::uint64_t nonce, const Digest& head) {
  return ByteWriter(40).u64(nonce).raw(head.view()).bytes();
}

/// Per-node discovery protocol: answers and relays lookups, challenges and
/// pings for others, and holds the requester-side bookkeeping for the
/// search/examine/select drivers below.
class DiscoveryService {
 public:
  struct Hooks {
    std::function<Digest()> chain_head;
    std::function<bool(const Digest&)> on_chain;
  };

  /// Test hook for misbehaving targets.
  enum class Fault { None, ZeroSignature, ForeignHead, Silent };

  DiscoveryService(NodeIndex self, NodeKeyPair key, Hooks hooks)
      : self_(self), key_(std::move(key)), hooks_(std::move(hooks)) {}

  NodeIndex self() const { return self_; }
  const PublicKey& id() const { return key_.public_key(); }
  void set_fault(Fault f) { fault_ = f; }
  std::uint64_t suppressed_duplicates() const { return suppressed_; }

  void on_message(SimContext& ctx, NodeIndex from, ByteView payload) {
    try {
      ByteReader r(payload);
      switch (static_cast<DiscoveryTag>(r.u8())) {
        case DiscoveryTag::Lookup: return on_lookup(ctx, from, r);
        case DiscoveryTag::Found: return on_found(ctx, r);
        case DiscoveryTag::Challenge: return on_challenge(ctx, r);
        case DiscoveryTag::Response: return on_response(ctx, r);
        case DiscoveryTag::Ping: return on_ping(ctx, from, r);
        case DiscoveryTag::Pong: return on_pong(ctx, from, r);
      }
    } catch (const DecodeError&) {
    }
    ++malformed_;
  }

  // Requester side ---------------------------------------------------------

  void begin_search(const PublicKey& target) {
    search_ = SearchState{target, {}, std::nullopt, {}};
  }

  /// Launches one lookup wave to every neighbour.
  void send_wave(SimNetwork& net, std::uint32_t ttl) {
    auto rid = next_request_++;
    search_->request_ids.insert(rid);
    seen_.insert({id(), rid});
    auto msg = ByteWriter()
                   .u8(static_cast<std::uint8_t>(DiscoveryTag::Lookup))
                   .raw(id().view())
                   .u64(rid)
                   .raw(search_->target.view())
                   .u32(ttl)
                   .bytes();
    for (auto n : net.node(self_).neighbors) net.send(self_, n, msg);
  }

  bool search_done() const { return search_ && search_->found_at.has_value(); }
  const std::optional<SimTime>& found_at() const { return search_->found_at; }
  const std::vector<PublicKey>& found_route() const { return search_->route; }

  void begin_challenge(SimNetwork& net, const std::vector<PublicKey>& route) {
    auto nonce_digest = hash(ByteWriter().raw(id().view()).u64(next_request_++).u8(0xCE).bytes());
    std::uint64_t nonce = 0;
    for (int i = 0; i < 8; ++i) nonce |= static_cast<std::uint64_t>(nonce_digest.bytes[i]) << (8 * i);
    challenge_ = ChallengeState{nonce, route.back(), std::nullopt, {}, {}};
    auto msg = routed(DiscoveryTag::Challenge, nonce, route, 1);
    net.send(self_, *net.index_of(route[1]), std::move(msg));
  }

  bool challenge_done() const { return challenge_ && challenge_->answered_at.has_value(); }
  const std::optional<SimTime>& challenge_answered_at() const { return challenge_->answered_at; }
  ExamineOutcome challenge_verdict() const { return challenge_->verdict; }
  const Digest& challenge_head() const { return challenge_->head; }

  void begin_ping(SimNetwork& net, const std::vector<NodeIndex>& candidates) {
    ping_ = PingState{};
    for (auto c : candidates) {
      auto nonce = next_request_++;
      ping_->sent_at[c] = net.now();
      ping_->nonce[c] = nonce;
      net.send(self_, c, ByteWriter().u8(static_cast<std::uint8_t>(DiscoveryTag::Ping)).raw(id().view()).u64(nonce).bytes());
    }
  }
  bool ping_done() const { return ping_ && ping_->rtt.size() == ping_->sent_at.size(); }
  const std::map<NodeIndex, SimTime>& ping_rtts() const { return ping_->rtt; }

 private:
  struct SearchState {
    PublicKey target;
    std::set<std::uint64_t> request_ids;
    std::optional<SimTime> found_at;
    std::vector<PublicKey> route;
  };
  struct ChallengeState {
    std::uint64_t nonce = 0;
    PublicKey target;
    std::optional<SimTime> answered_at;
    ExamineOutcome verdict = ExamineOutcome::NodeOffline;
    Digest head;
  };
  struct PingState {
    std::map<NodeIndex, SimTime> sent_at;
    std::map<NodeIndex, std::uint64_t> nonce;
    std::map<NodeIndex, SimTime> rtt;
  };

  static Bytes routed(DiscoveryTag tag, std::uint64_t nonce, const std::vector<PublicKey>& route, std::uint32_t hop,
                      const Digest* head = nullptr, const Signature* sig = nullptr) {
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(tag)).u64(nonce);
    if (head) w.raw(head->view()).raw(sig->view());
    w.u32(static_cast<std::uint32_t>(route.size()));
    for (const auto& k : route) w.raw(k.view());
    w.u32(hop);
    return std::move(w).take();
  }

  static std::vector<PublicKey> read_route(ByteReader& r) {
    auto n = r.u32();
    if (n == 0 || n > r.remaining() / 32) throw DecodeError("bad route length");
    std::vector<PublicKey> route(n);
    for (auto& k : route) k = PublicKey{r.fixed<32>()};
    return route;
  }

  void on_lookup(SimContext& ctx, NodeIndex from, ByteReader& r) {
    PublicKey origin{r.fixed<32>()};
    auto rid = r.u64();
    PublicKey target{r.fixed<32>()};
    auto ttl = r.u32();
    r.expect_done();
    if (!seen_.insert({origin, rid}).second) {
      ++suppressed_;
      return;
    }
    predecessor_[{origin, rid}] = from;
    if (target == id()) {
      ByteWriter w;
      w.u8(static_cast<std::uint8_t>(DiscoveryTag::Found)).raw(origin.view()).u64(rid).u32(1).raw(id().view());
      ctx.send(from, std::move(w).take());
      return;
    }
    if (ttl == 0) return;
    auto fwd = ByteWriter()
                   .u8(static_cast<std::uint8_t>(DiscoveryTag::Lookup))
                   .raw(origin.view())
                   .u64(rid)
                   .raw(target.view())
                   .u32(ttl - 1)
                   .bytes();
    ctx.broadcast(fwd, from);
  }

  void on_found(SimContext& ctx, ByteReader& r) {
    PublicKey origin{r.fixed<32>()};
    auto rid = r.u64();
    auto route = read_route(r);
    r.expect_done();
    if (origin == id()) {
      if (search_ && search_->request_ids.count(rid) && !search_->found_at) {
        search_->found_at = ctx.now();
        route.insert(route.begin(), id());
        search_->route = std::move(route);
      }
      return;
    }
    auto pred = predecessor_.find({origin, rid});
    if (pred == predecessor_.end()) return;
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(DiscoveryTag::Found)).raw(origin.view()).u64(rid);
    w.u32(static_cast<std::uint32_t>(route.size() + 1)).raw(id().view());
    for (const auto& k : route) w.raw(k.view());
    ctx.send(pred->second, std::move(w).take());
  }

  void on_challenge(SimContext& ctx, ByteReader& r) {
    auto nonce = r.u64();
    auto route = read_route(r);
    auto hop = r.u32();
    r.expect_done();
    if (hop >= route.size() || route[hop] != id()) return;
    auto next = [&](std::uint32_t h) { return ctx.network().index_of(route[h]); };
    if (hop + 1 < route.size()) {
      if (auto n = next(hop + 1)) ctx.send(*n, routed(DiscoveryTag::Challenge, nonce, route, hop + 1));
      return;
    }
    if (fault_ == Fault::Silent) return;
    Digest head = hooks_.chain_head ? hooks_.chain_head() : Digest{};
    if (fault_ == Fault::ForeignHead) head = hash(ByteWriter().raw(head.view()).u8(0xFF).bytes());
    Signature sig = key_.sign(challenge_signing_bytes(nonce, head));
    if (fault_ == Fault::ZeroSignature) sig = Signature{};
    if (auto n = next(hop - 1)) ctx.send(*n, routed(DiscoveryTag::Response, nonce, route, hop - 1, &head, &sig));
  }

  void on_response(SimContext& ctx, ByteReader& r) {
    auto nonce = r.u64();
    Digest head{r.fixed<32>()};
    Signature sig{r.fixed<64>()};
    auto route = read_route(r);
    auto hop = r.u32();
    r.expect_done();
    if (hop >= route.size() || route[hop] != id()) return;
    if (hop > 0) {
      if (auto n = ctx.network().index_of(route[hop - 1]))
        ctx.send(*n, routed(DiscoveryTag::Response, nonce, route, hop - 1, &head, &sig));
      return;
    }
    if (!challenge_ || challenge_->nonce != nonce || challenge_->answered_at) return;
    challenge_->answered_at = ctx.now();
    challenge_->head = head;
    bool sig_ok = verify(challenge_->target, challenge_signing_bytes(nonce, head), sig);
    bool head_ok = hooks_.on_chain && hooks_.on_chain(head);
    challenge_->verdict = sig_ok && head_ok ? ExamineOutcome::Verified : ExamineOutcome::BadResponse;
  }

  void on_ping(SimContext& ctx, NodeIndex from, ByteReader& r) {
    PublicKey origin{r.fixed<32>()};
    auto nonce = r.u64();
    r.expect_done();
    (void)origin;
    ctx.send(from, ByteWriter().u8(static_cast<std::uint8_t>(DiscoveryTag::Pong)).u64(nonce).bytes());
  }

  void on_pong(SimContext& ctx, NodeIndex from, ByteReader& r) {
    auto nonce = r.u64();
    r.expect_done();
    if (!ping_) return;
    auto it = ping_->nonce.find(from);
    if (it == ping_->nonce.end() || it->second != nonce || ping_->rtt.count(from)) return;
    ping_->rtt[from] = ctx.now() - ping_->sent_at[from];
  }

  NodeIndex self_;
  NodeKeyPair key_;
  Hooks hooks_;
  Fault fault_ = Fault::None;
  std::uint64_t next_request_ = 1;
  std::set<std::pair<PublicKey, std::uint64_t>> seen_;
  std::map<std::pair<PublicKey, std::uint64_t>, NodeIndex> predecessor_;
  std::uint64_t suppressed_ = 0;
  std::uint64_t malformed_ = 0;

  std::optional<SearchState> search_;
  std::optional<ChallengeState> challenge_;
  std::optional<PingState> ping_;
};

/// Upper bound used to let in-flight traffic settle between measurements.
inline constexpr SimTime kDrainLimit = 60 * kMicrosPerSecond;

inline void drain(SimNetwork& net) { net.run(net.now() + kDrainLimit); }

/// Expanding-wave flooding lookup. Elapsed is the time of the first FOUND,
/// or retries x wave_timeout when the target never answers.
inline SearchResult search(SimNetwork& net, DiscoveryService& requester, const PublicKey& target,
                           const DiscoveryParams& params) {
  const auto self = requester.self();
  if (net.node(self).power == Power::Off) throw std::logic_error("search: requester is Off");
  if (target == requester.id()) return SearchResult{true, {target}, 0, 0};

  const auto start = net.now();
  requester.begin_search(target);
  for (std::uint32_t wave = 0; wave < params.retries; ++wave) {
    const auto wave_start = start + params.wave_timeout * wave;
    net.advance_to(wave_start);
    requester.send_wave(net, params.ttl);
    net.run_until([&] { return requester.search_done(); }, wave_start + params.wave_timeout);
    if (requester.search_done()) {
      SearchResult out{true, requester.found_route(), *requester.found_at() - start, wave + 1};
      drain(net);
      return out;
    }
  }
  net.advance_to(start + params.wave_timeout * params.retries);
  SearchResult out{false, {}, net.now() - start, params.retries};
  drain(net);
  return out;
}

/// Signed-nonce challenge along the route found by search. A NotFound search
/// short-circuits to NodeOffline without sending anything.
inline ExamineResult examine(SimNetwork& net, DiscoveryService& requester, const PublicKey& target,
                             const SearchResult& found, SimTime timeout) {
  if (!found.found || found.route.empty() || found.route.back() != target) return {};
  const auto start = net.now();
  const auto sent_before = net.stats().sent;
  if (found.route.size() == 1) return {ExamineOutcome::Verified, std::nullopt, 0, 0};
  requester.begin_challenge(net, found.route);
  net.run_until([&] { return requester.challenge_done(); }, start + timeout);
  ExamineResult out;
  if (requester.challenge_done()) {
    out.outcome = requester.challenge_verdict();
    out.head_hash = requester.challenge_head();
    out.elapsed = *requester.challenge_answered_at() - start;
  } else {
    net.advance_to(start + timeout);
    out.outcome = ExamineOutcome::NodeOffline;
    out.elapsed = net.now() - start;
  }
  out.messages_sent = net.stats().sent - sent_before;
  drain(net);
  return out;
}

/// Pings every candidate (all must be neighbours of the requester) and picks
/// the responder with the lowest round trip, ties broken by node id bytes.
inline SelectResult select(SimNetwork& net, DiscoveryService& requester, std::vector<NodeIndex> candidates,
                           SimTime timeout) {
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  if (candidates.empty()) throw NoCandidatesError();
  for (auto c : candidates)
    if (!net.linked(requester.self(), c)) throw std::invalid_argument("select: candidate is not a neighbour");

  const auto start = net.now();
  requester.begin_ping(net, candidates);
  net.run_until([&] { return requester.ping_done(); }, start + timeout);
  if (!requester.ping_done()) net.advance_to(start + timeout);
  SelectResult out;
  out.elapsed = net.now() - start;
  out.round_trips = requester.ping_rtts();
  if (out.round_trips.empty()) {
    drain(net);
    throw NoCandidatesError();
  }
  std::optional<std::pair<SimTime, PublicKey>> best;
  for (const auto& [idx, rtt] : out.round_trips) {
    std::pair<SimTime, PublicKey> key{rtt, net.node(idx).id};
    if (!best || key < *best) best = key, out.chosen_index = idx;
  }
  out.chosen = best->second;
  out.candidates_considered = out.round_trips.size();
  drain(net);
  return out;
}

}  // namespace iotfog

#endif  // IOTFOG_DISCOVERY_HPP
