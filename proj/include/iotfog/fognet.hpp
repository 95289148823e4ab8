#ifndef IOTFOG_FOGNET_HPP
#define IOTFOG_FOGNET_HPP

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <queue>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "iotfog/bytes.hpp"
#include "iotfog/clock.hpp"
#include "iotfog/identity.hpp"

namespace iotfog {

using NodeIndex = std::uint32_t;

enum class NodeKind { Fog, IoT };
enum class Power { On, Off };
enum class Topology { FullMesh, FogStar };

inline const char* to_string(Power p) { return p == Power::On ? "ON" : "OFF"; }
inline const char* to_string(Topology t) { return t == Topology::FullMesh ? "full_mesh" : "fog_star"; }

struct TopologyConfig {
  std::uint32_t n_total = 1;
  std::uint32_t n_fog = 1;  // fog nodes are indices [0, n_fog) and act as consensus peers
  double base_latency_ms = 5.0;
  double jitter_ms = 0.0;  // per-link, uniform in [0, jitter_ms], drawn once at build time
  // Egress serialisation: each send occupies the sender's uplink for this long
  // before the link latency applies. Zero gives pure per-link latency.
  double per_message_ms = 0.0;
  Topology topology = Topology::FogStar;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_total < 1) throw std::invalid_argument("topology: n_total must be at least 1");
    if (n_fog < 1 || n_fog > n_total) throw std::invalid_argument("topology: n_fog must be in [1, n_total]");
    if (!(base_latency_ms > 0)) throw std::invalid_argument("topology: base latency must be positive");
    if (jitter_ms < 0 || per_message_ms < 0) throw std::invalid_argument("topology: negative jitter or per-message cost");
  }
};

struct SimNode {
  NodeIndex index = 0;
  PublicKey id;
  NodeKind kind = NodeKind::IoT;
  Power power = Power::On;
  std::vector<NodeIndex> neighbors;  // ascending
};

enum class TraceKind { Send, Deliver, Drop, Power };

inline const char* to_string(TraceKind k) {
  switch (k) {
    case TraceKind::Send: return "SEND";
    case TraceKind::Deliver: return "DELIVER";
    case TraceKind::Drop: return "DROP";
    case TraceKind::Power: return "POWER";
  }
  return "?";
}

/// For POWER events from = to = the node and length is 1 for On, 0 for Off.
struct TraceEvent {
  SimTime time = 0;
  TraceKind kind = TraceKind::Send;
  NodeIndex from = 0;
  NodeIndex to = 0;
  std::size_t length = 0;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

/// Milliseconds with microsecond resolution, formatted without floating point.
inline std::string format_millis(SimTime t) {
  std::string sign = t < 0 ? "-" : "";
  if (t < 0) t = -t;
  std::string frac = std::to_string(t % kMicrosPerMilli);
  return sign + std::to_string(t / kMicrosPerMilli) + "." + std::string(3 - frac.size(), '0') + frac;
}

inline void write_trace(std::ostream& os, const std::vector<TraceEvent>& events) {
  for (const auto& e : events)
    os << format_millis(e.time) << '\t' << to_string(e.kind) << '\t' << e.from << '\t' << e.to << '\t' << e.length
       << '\n';
}

struct NetworkStats {
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;

  std::uint64_t in_flight() const { return sent - delivered - dropped; }
  friend bool operator==(const NetworkStats&, const NetworkStats&) = default;
};

enum class RunStatus { ConditionMet, Quiescent, Timeout };

struct RunResult {
  RunStatus status = RunStatus::Quiescent;
  SimTime elapsed = 0;
  NetworkStats stats;
};

struct SendReceipt {
  std::uint64_t sequence = 0;
  SimTime deliver_at = 0;
};

class SimNetwork;

/// Handle a node's handler uses to act on the network during a callback.
class SimContext {
 public:
  SimContext(SimNetwork& net, NodeIndex self) : net_(net), self_(self) {}

  NodeIndex self() const { return self_; }
  SimTime now() const;
  const SimNetwork& network() const { return net_; }
  SendReceipt send(NodeIndex to, Bytes payload);
  /// Sends to every neighbour, optionally skipping one.
  void broadcast(const Bytes& payload, std::optional<NodeIndex> except = std::nullopt);
  void set_timer(SimTime at, std::uint64_t token = 0);

 private:
  SimNetwork& net_;
  NodeIndex self_;
};

class NodeHandler {
 public:
  virtual ~NodeHandler() = default;
  virtual void on_message(SimContext& ctx, NodeIndex from, ByteView payload) = 0;
  virtual void on_timer(SimContext& /*ctx*/, std::uint64_t /*token*/) {}
};

/// Deterministic discrete-event network. Events run in (time, sequence)
/// order; a node that is Off at delivery time loses the message.
class SimNetwork {
 public:
  explicit SimNetwork(const TopologyConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    build();
  }

  const TopologyConfig& config() const { return cfg_; }
  std::size_t size() const { return nodes_.size(); }
  const SimNode& node(NodeIndex i) const { return nodes_.at(i); }
  const std::vector<SimNode>& nodes() const { return nodes_; }
  const NodeKeyPair& keypair(NodeIndex i) const { return keys_.at(i); }
  SimTime now() const { return now_; }
  const NetworkStats& stats() const { return stats_; }

  std::optional<NodeIndex> index_of(const PublicKey& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<SimTime> link_latency(NodeIndex a, NodeIndex b) const {
    const auto& row = links_.at(a);
    auto it = std::lower_bound(row.begin(), row.end(), b, [](const auto& e, NodeIndex v) { return e.first < v; });
    if (it == row.end() || it->first != b) return std::nullopt;
    return it->second;
  }
  bool linked(NodeIndex a, NodeIndex b) const { return link_latency(a, b).has_value(); }

  std::size_t link_count() const {
    std::size_t total = 0;
    for (const auto& row : links_) total += row.size();
    return total / 2;
  }

  /// Mean of all link latencies in ms (base latency when there are no links).
  double mean_link_latency_ms() const {
    SimTime sum = 0;
    std::size_t count = 0;
    for (const auto& row : links_)
      for (const auto& [peer, lat] : row) sum += lat, ++count;
    return count ? to_millis(sum) / static_cast<double>(count) : cfg_.base_latency_ms;
  }

  /// Longest shortest path in hops over the whole topology (0 for one node).
  std::uint32_t diameter() const {
    if (!diameter_) {
      std::uint32_t best = 0;
      for (NodeIndex s = 0; s < nodes_.size(); ++s) {
        std::vector<std::int64_t> dist(nodes_.size(), -1);
        std::deque<NodeIndex> q{s};
        dist[s] = 0;
        while (!q.empty()) {
          auto u = q.front();
          q.pop_front();
          for (auto v : nodes_[u].neighbors)
            if (dist[v] < 0) dist[v] = dist[u] + 1, q.push_back(v);
        }
        for (auto d : dist) best = std::max<std::uint32_t>(best, d < 0 ? 0 : static_cast<std::uint32_t>(d));
      }
      diameter_ = best;
    }
    return *diameter_;
  }

  void set_handler(NodeIndex i, std::shared_ptr<NodeHandler> h) { handlers_.at(i) = std::move(h); }
  NodeHandler* handler(NodeIndex i) const { return handlers_.at(i).get(); }

  void enable_trace(bool on = true) { tracing_ = on; }
  const std::vector<TraceEvent>& trace() const { return trace_; }
  std::string trace_text() const {
    std::ostringstream os;
    write_trace(os, trace_);
    return os.str();
  }

  /// Schedules a point-to-point delivery over an existing link. Whether it is
  /// delivered or dropped is decided by the receiver's power at delivery time.
  SendReceipt send(NodeIndex from, NodeIndex to, Bytes payload) {
    if (nodes_.at(from).power == Power::Off) throw std::logic_error("send from a node that is Off");
    auto lat = link_latency(from, to);
    if (!lat) throw std::logic_error("send over a non-existent link " + std::to_string(from) + "->" + std::to_string(to));
    auto depart = std::max(now_, busy_until_[from]) + per_message_;
    busy_until_[from] = depart;
    auto at = depart + *lat;
    ++stats_.sent;
    record(TraceKind::Send, from, to, payload.size());
    auto seq = next_seq_++;
    queue_.push(Event{at, seq, EventKind::Deliver, from, to, 0, std::move(payload)});
    return {seq, at};
  }

  void set_power(NodeIndex i, Power p) {
    nodes_.at(i).power = p;
    record(TraceKind::Power, i, i, p == Power::On ? 1 : 0);
  }

  void set_timer(NodeIndex i, SimTime at, std::uint64_t token) {
    queue_.push(Event{std::max(at, now_), next_seq_++, EventKind::Timer, i, i, token, {}});
  }

  bool idle() const { return queue_.empty(); }
  std::optional<SimTime> next_event_time() const {
    if (queue_.empty()) return std::nullopt;
    return queue_.top().time;
  }

  /// Processes events in order until `stop` holds (checked after each
  /// event), the queue drains, or the next event lies beyond `limit`; in the
  /// last case the clock is moved to `limit` and the result is Timeout.
  RunResult run_until(const std::function<bool()>& stop, SimTime limit = std::numeric_limits<SimTime>::max()) {
    const auto start = now_;
    auto result = [&](RunStatus s) { return RunResult{s, now_ - start, stats_}; };
    if (stop && stop()) return result(RunStatus::ConditionMet);
    while (!queue_.empty()) {
      if (queue_.top().time > limit) {
        now_ = std::max(now_, limit);
        return result(RunStatus::Timeout);
      }
      step();
      if (stop && stop()) return result(RunStatus::ConditionMet);
    }
    return result(RunStatus::Quiescent);
  }

  RunResult run(SimTime limit = std::numeric_limits<SimTime>::max()) { return run_until({}, limit); }

  /// Processes every event due by `t` and moves the clock to `t`.
  void advance_to(SimTime t) {
    run_until({}, t);
    now_ = std::max(now_, t);
  }

 private:
  enum class EventKind { Deliver, Timer };

  struct Event {
    SimTime time;
    std::uint64_t seq;
    EventKind kind;
    NodeIndex from;
    NodeIndex to;
    std::uint64_t token;
    Bytes payload;
  };

  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  void record(TraceKind k, NodeIndex from, NodeIndex to, std::size_t len) {
    if (tracing_) trace_.push_back({now_, k, from, to, len});
  }

  void step() {
    // priority_queue::top is const; the payload is moved out via const_cast
    // right before pop, which is the only access afterwards.
    Event ev = std::move(const_cast<Event&>(queue_.top()));
    queue_.pop();
    now_ = std::max(now_, ev.time);
    auto& target = nodes_[ev.to];
    if (ev.kind == EventKind::Timer) {
      if (target.power == Power::On && handlers_[ev.to]) {
        SimContext ctx(*this, ev.to);
        handlers_[ev.to]->on_timer(ctx, ev.token);
      }
      return;
    }
    if (target.power == Power::Off) {
      ++stats_.dropped;
      record(TraceKind::Drop, ev.from, ev.to, ev.payload.size());
      return;
    }
    ++stats_.delivered;
    record(TraceKind::Deliver, ev.from, ev.to, ev.payload.size());
    if (handlers_[ev.to]) {
      SimContext ctx(*this, ev.to);
      handlers_[ev.to]->on_message(ctx, ev.from, ev.payload);
    }
  }

  static std::uint64_t node_seed(std::uint64_t seed, NodeIndex i) {
    auto d = hash(ByteWriter(12).u64(seed).u32(i).bytes());
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(d.bytes[b]) << (8 * b);
    return v;
  }

  void add_link(NodeIndex a, NodeIndex b, SimTime lat) {
    links_[a].push_back({b, lat});
    links_[b].push_back({a, lat});
  }

  void build() {
    const auto n = cfg_.n_total;
    nodes_.resize(n);
    links_.resize(n);
    handlers_.resize(n);
    busy_until_.assign(n, 0);
    per_message_ = from_millis(cfg_.per_message_ms);
    keys_.reserve(n);
    for (NodeIndex i = 0; i < n; ++i) {
      keys_.push_back(generate_keypair(node_seed(cfg_.seed, i)));
      nodes_[i].index = i;
      nodes_[i].id = keys_.back().public_key();
      nodes_[i].kind = i < cfg_.n_fog ? NodeKind::Fog : NodeKind::IoT;
      by_id_.emplace(nodes_[i].id, i);
    }

    std::mt19937_64 rng(cfg_.seed);
    const SimTime base = from_millis(cfg_.base_latency_ms);
    const auto jitter_us = static_cast<std::uint64_t>(from_millis(cfg_.jitter_ms));
    auto draw = [&] { return base + static_cast<SimTime>(jitter_us ? rng() % (jitter_us + 1) : 0); };

    if (cfg_.topology == Topology::FullMesh) {
      for (NodeIndex a = 0; a < n; ++a)
        for (NodeIndex b = a + 1; b < n; ++b) add_link(a, b, draw());
    } else {
      for (NodeIndex a = 0; a < cfg_.n_fog; ++a)
        for (NodeIndex b = a + 1; b < cfg_.n_fog; ++b) add_link(a, b, draw());
      // Each IoT device attaches to the fog node with the lowest drawn latency.
      for (NodeIndex d = cfg_.n_fog; d < n; ++d) {
        NodeIndex best = 0;
        SimTime best_lat = std::numeric_limits<SimTime>::max();
        for (NodeIndex f = 0; f < cfg_.n_fog; ++f) {
          auto lat = draw();
          if (lat < best_lat) best = f, best_lat = lat;
        }
        add_link(d, best, best_lat);
      }
    }
    for (NodeIndex i = 0; i < n; ++i) {
      std::sort(links_[i].begin(), links_[i].end());
      for (const auto& [peer, lat] : links_[i]) nodes_[i].neighbors.push_back(peer);
    }
  }

  TopologyConfig cfg_;
  std::vector<SimNode> nodes_;
  std::vector<NodeKeyPair> keys_;
  std::map<PublicKey, NodeIndex> by_id_;
  std::vector<std::vector<std::pair<NodeIndex, SimTime>>> links_;
  std::vector<std::shared_ptr<NodeHandler>> handlers_;
  std::vector<SimTime> busy_until_;
  SimTime per_message_ = 0;
  mutable std::optional<std::uint32_t> diameter_;

  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::uint64_t next_seq_ = 0;
  SimTime now_ = 0;
  NetworkStats stats_;
  bool tracing_ = false;
  std::vector<TraceEvent> trace_;
};

/// Builds the network for a topology configuration; same config, same network.
inline SimNetwork build_topology(const TopologyConfig& cfg) { return SimNetwork(cfg); }

inline SimTime SimContext::now() const { return net_.now(); }
inline SendReceipt SimContext::send(NodeIndex to, Bytes payload) { return net_.send(self_, to, std::move(payload)); }
inline void SimContext::broadcast(const Bytes& payload, std::optional<NodeIndex> except) {
  for (auto n : net_.node(self_).neighbors)
    if (!except || n != *except) net_.send(self_, n, payload);
}
inline void SimContext::set_timer(SimTime at, std::uint64_t token) { net_.set_timer(self_, at, token); }

}  // namespace iotfog

#endif  // IOTFOG_FOGNET_HPP
