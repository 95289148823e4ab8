#ifndef IOTFOG_NODE_HPP
#define IOTFOG_NODE_HPP

#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "iotfog/consensus.hpp"
#include "iotfog/discovery.hpp"
#include "iotfog/fognet.hpp"
#include "iotfog/messages.hpp"

namespace iotfog {

/// Simulated middleware node: a consensus state machine (peer or observer)
/// plus the discovery responder, multiplexed on the message tag.
class MiddlewareNode : public NodeHandler {
 public:
  MiddlewareNode(const SimNetwork& net, NodeIndex self, const ConsensusConfig& cfg)
      : self_(self),
        state_(cfg, net.keypair(self)),
        discovery_(self, net.keypair(self),
                   DiscoveryService::Hooks{[this] { return state_.chain.tip_hash(); },
                                           [this](const Digest& h) { return state_.chain.contains_block(h); }}) {
    for (const auto& k : state_.config.peers)
      if (auto idx = net.index_of(k)) peer_indices_.push_back(*idx);
  }

  MiddlewareNode(const MiddlewareNode&) = delete;
  MiddlewareNode& operator=(const MiddlewareNode&) = delete;

  const ConsensusState& consensus() const { return state_; }
  ConsensusState& consensus() { return state_; }
  DiscoveryService& discovery() { return discovery_; }
  const ChainState& chain() const { return state_.chain; }
  std::uint64_t malformed() const { return malformed_; }

  void on_message(SimContext& ctx, NodeIndex from, ByteView payload) override {
    if (payload.empty()) {
      ++malformed_;
      return;
    }
    if (is_discovery_tag(payload[0])) return discovery_.on_message(ctx, from, payload);
    if (!is_consensus_tag(payload[0])) {
      ++malformed_;
      return;
    }
    auto msg = decode_message(payload);
    if (!msg) {
      ++state_.metrics.dropped;
      return;
    }
    if (auto* g = std::get_if<TxGossip>(&*msg)) {
      bool from_peer = std::find(peer_indices_.begin(), peer_indices_.end(), from) != peer_indices_.end();
      return apply(ctx, submit_transaction(std::move(state_), g->tx, ctx.now(), !from_peer));
    }
    auto cm = std::visit(
        [](auto&& x) -> ConsensusMessage {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, TxGossip>) throw std::logic_error("unreachable");
          else return std::move(x);
        },
        std::move(*msg));
    apply(ctx, handle_message(std::move(state_), cm, ctx.now()));
  }

  void on_timer(SimContext& ctx, std::uint64_t) override {
    armed_.erase(ctx.now());
    apply(ctx, iotfog::on_timer(std::move(state_), ctx.now()));
  }

  /// Injects a transaction as if it had arrived from a local device.
  void submit(SimContext& ctx, const Transaction& tx) { apply(ctx, submit_transaction(std::move(state_), tx, ctx.now())); }

 private:
  void apply(SimContext& ctx, Transition t) {
    state_ = std::move(t.state);
    for (const auto& o : t.outbound) dispatch(ctx, o);
    if (state_.deadline && armed_.insert(*state_.deadline).second) ctx.set_timer(*state_.deadline);
  }

  void dispatch(SimContext& ctx, const Outbound& o) {
    const auto bytes = encode_message(o.message);
    const auto& net = ctx.network();
    if (o.audience != Audience::Observers)
      for (auto p : peer_indices_)
        if (p != self_ && net.node(self_).power == Power::On) ctx.send(p, bytes);
    if (o.audience != Audience::Peers)
      for (auto n : net.node(self_).neighbors)
        if (std::find(peer_indices_.begin(), peer_indices_.end(), n) == peer_indices_.end()) ctx.send(n, bytes);
  }

  NodeIndex self_;
  ConsensusState state_;
  DiscoveryService discovery_;
  std::vector<NodeIndex> peer_indices_;
  std::set<SimTime> armed_;
  std::uint64_t malformed_ = 0;
};

/// Creates one MiddlewareNode per network node, sharing one consensus configuration.
inline std::vector<std::shared_ptr<MiddlewareNode>> attach_middleware(SimNetwork& net, const ConsensusConfig& cfg) {
  std::vector<std::shared_ptr<MiddlewareNode>> out;
  out.reserve(net.size());
  for (NodeIndex i = 0; i < net.size(); ++i) {
    auto node = std::make_shared<MiddlewareNode>(net, i, cfg);
    net.set_handler(i, node);
    out.push_back(std::move(node));
  }
  return out;
}

/// Consensus peers are the fog nodes.
inline ConsensusConfig fog_consensus_config(const SimNetwork& net, std::optional<SimTime> view_timeout = std::nullopt) {
  std::vector<PublicKey> peers;
  for (const auto& n : net.nodes())
    if (n.kind == NodeKind::Fog) peers.push_back(n.id);
  // Default: ten link delays plus two full egress bursts (a leader fans out to every node).
  auto timeout = view_timeout ? *view_timeout
                              : from_millis(10.0 * net.mean_link_latency_ms() +
                                            2.0 * static_cast<double>(net.size()) * net.config().per_message_ms);
  return ConsensusConfig(std::move(peers), timeout);
}

}  // namespace iotfog

#endif  // IOTFOG_NODE_HPP
