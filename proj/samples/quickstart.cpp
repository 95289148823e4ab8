// Builds a small fog network, commits a few sensor readings through
// consensus, then searches for one device with it powered on and off.
#include <iostream>

#include "iotfog/iotfog.hpp"

using namespace iotfog;

int main() {
  TopologyConfig topo;
  topo.n_total = 12;
  topo.n_fog = 4;
  topo.jitter_ms = 1.0;
  topo.seed = 3;
  SimNetwork net(topo);
  auto nodes = attach_middleware(net, fog_consensus_config(net));

  const NodeIndex sensor = 8;
  const NodeIndex gateway = net.node(sensor).neighbors.front();
  for (std::uint64_t i = 0; i < 3; ++i) {
    auto tx = new_transaction(net.keypair(sensor), i, 0, to_bytes("temp=" + std::to_string(20 + i)));
    net.send(sensor, gateway, encode_message(WireMessage{TxGossip{tx}}));
  }
  net.run();

  const auto& chain = nodes[0]->chain();
  std::cout << "height " << chain.height() << ", " << chain.transaction_count() << " transactions, head "
            << chain.tip_hash().short_hex() << ", audit " << (audit_chain(chain) ? "ok" : "FAILED") << "\n";

  const NodeIndex requester = 11;
  auto& disc = nodes[requester]->discovery();
  auto params = default_discovery_params(net);
  const auto& target = net.node(5).id;

  auto on = search(net, disc, target, params);
  auto proof = examine(net, disc, target, on, params.wave_timeout);
  std::cout << "target on:  search " << format_millis(on.elapsed) << " ms, examine " << to_string(proof.outcome)
            << "\n";

  net.set_power(5, Power::Off);
  auto off = search(net, disc, target, params);
  std::cout << "target off: search " << format_millis(off.elapsed) << " ms, found " << (off.found ? "yes" : "no")
            << "\n";
}
