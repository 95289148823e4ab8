#ifndef IOTFOG_HARNESS_HPP
#define IOTFOG_HARNESS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "iotfog/clock.hpp"
#include "iotfog/consensus.hpp"
#include "iotfog/discovery.hpp"
#include "iotfog/fognet.hpp"
#include "iotfog/ledger.hpp"
#include "iotfog/node.hpp"

namespace iotfog {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kMinFogPeers = 4;

struct ScenarioConfig {
  std::vector<std::uint32_t> sizes{10, 50, 100};
  double fog_fraction = 0.1;
  std::vector<std::uint32_t> target_indices{1, 3, 5, 8, 10};
  std::uint64_t seed = 7;
  std::uint32_t tx_load = 20;

  double base_latency_ms = 5.0;
  double jitter_ms = 1.0;
  double per_message_ms = 1.5;
  Topology topology = Topology::FogStar;

  std::optional<std::uint32_t> ttl;  // unset: diameter + 1
  std::uint32_t retries = 2;
  std::optional<double> wave_timeout_ms;  // unset: 4 x base latency x diameter
  std::optional<double> view_timeout_ms;  // unset: ten link delays plus two egress bursts

  std::uint32_t fog_peers_for(std::uint32_t size) const {
    auto scaled = static_cast<std::uint32_t>(std::llround(fog_fraction * size));
    return std::max(kMinFogPeers, scaled);
  }

  void validate() const {
    if (sizes.empty()) throw ConfigError("sizes must not be empty");
    if (!(fog_fraction > 0 && fog_fraction <= 1)) throw ConfigError("fog_fraction must be in (0, 1]");
    if (target_indices.empty()) throw ConfigError("target_indices must not be empty");
    if (!(base_latency_ms > 0)) throw ConfigError("base_latency_ms must be positive");
    if (jitter_ms < 0 || per_message_ms < 0) throw ConfigError("jitter_ms and per_message_ms must be non-negative");
    if (retries == 0) throw ConfigError("retries must be at least 1");
    if (wave_timeout_ms && !(*wave_timeout_ms > 0)) throw ConfigError("wave_timeout_ms must be positive");
    if (view_timeout_ms && !(*view_timeout_ms > 0)) throw ConfigError("view_timeout_ms must be positive");
    for (auto s : sizes) {
      if (s == 0) throw ConfigError("sizes must be positive");
      if (fog_peers_for(s) >= s)
        throw ConfigError("size " + std::to_string(s) + " leaves no IoT devices after " +
                          std::to_string(fog_peers_for(s)) + " fog peers");
      for (auto t : target_indices)
        if (t == 0 || t > s)
          throw ConfigError("target index " + std::to_string(t) + " outside size " + std::to_string(s));
    }
  }
};

// Config text --------------------------------------------------------------

namespace detail {

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T out{};
  if constexpr (std::is_unsigned_v<T>) {
    if (!v.empty() && v[0] == '-') throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  is >> out;
  if (!is || !is.eof()) throw ConfigError(key + ": cannot parse '" + v + "'");
  return out;
}

inline std::vector<std::uint32_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::uint32_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<std::uint32_t>(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

inline std::string join(const std::vector<std::uint32_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

}  // namespace detail

/// Flat `key=value` lines; `#` starts a comment. Unknown keys are errors.
inline ScenarioConfig parse_config(std::string_view text) {
  ScenarioConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash_pos = line.find('#'); hash_pos != std::string::npos) line.erase(hash_pos);
    auto t = detail::trim(line);
    if (t.empty()) continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    auto key = detail::trim(std::string_view(t).substr(0, eq));
    auto val = detail::trim(std::string_view(t).substr(eq + 1));
    using detail::parse_number;
    if (key == "sizes") cfg.sizes = detail::parse_list(key, val);
    else if (key == "fog_fraction") cfg.fog_fraction = parse_number<double>(key, val);
    else if (key == "target_indices") cfg.target_indices = detail::parse_list(key, val);
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, val);
    else if (key == "tx_load") cfg.tx_load = parse_number<std::uint32_t>(key, val);
    else if (key == "base_latency_ms") cfg.base_latency_ms = parse_number<double>(key, val);
    else if (key == "jitter_ms") cfg.jitter_ms = parse_number<double>(key, val);
    else if (key == "per_message_ms") cfg.per_message_ms = parse_number<double>(key, val);
    else if (key == "topology") {
      if (val == "fog_star") cfg.topology = Topology::FogStar;
      else if (val == "full_mesh") cfg.topology = Topology::FullMesh;
      else throw ConfigError("topology: expected fog_star or full_mesh, got '" + val + "'");
    } else if (key == "ttl") {
      cfg.ttl = val == "auto" ? std::nullopt : std::optional(parse_number<std::uint32_t>(key, val));
    } else if (key == "retries") cfg.retries = parse_number<std::uint32_t>(key, val);
    else if (key == "wave_timeout_ms") {
      cfg.wave_timeout_ms = val == "auto" ? std::nullopt : std::optional(parse_number<double>(key, val));
    } else if (key == "view_timeout_ms") {
      cfg.view_timeout_ms = val == "auto" ? std::nullopt : std::optional(parse_number<double>(key, val));
    } else {
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

inline ScenarioConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline std::string to_config_text(const ScenarioConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "sizes=" << detail::join(c.sizes) << "\n"
     << "fog_fraction=" << c.fog_fraction << "\n"
     << "target_indices=" << detail::join(c.target_indices) << "\n"
     << "seed=" << c.seed << "\n"
     << "tx_load=" << c.tx_load << "\n"
     << "base_latency_ms=" << c.base_latency_ms << "\n"
     << "jitter_ms=" << c.jitter_ms << "\n"
     << "per_message_ms=" << c.per_message_ms << "\n"
     << "topology=" << to_string(c.topology) << "\n"
     << "ttl=" << (c.ttl ? std::to_string(*c.ttl) : "auto") << "\n"
     << "retries=" << c.retries << "\n";
  os << "wave_timeout_ms=";
  if (c.wave_timeout_ms) os << *c.wave_timeout_ms; else os << "auto";
  os << "\nview_timeout_ms=";
  if (c.view_timeout_ms) os << *c.view_timeout_ms; else os << "auto";
  os << "\n";
  return os.str();
}

// Report -------------------------------------------------------------------

struct CellReport {
  std::uint32_t target = 0;  // IoT-Node label
  NodeIndex node = 0;
  Power power = Power::On;
  SimTime searching = 0;
  bool found = false;
  std::optional<SimTime> examine;  // absent when the target could not be examined
  ExamineOutcome examine_outcome = ExamineOutcome::NodeOffline;
  SimTime selecting = 0;

  friend bool operator==(const CellReport&, const CellReport&) = default;
};

struct ConsensusStats {
  std::uint64_t blocks_committed = 0;
  std::uint64_t transactions_committed = 0;
  SimTime mean_commit_latency = 0;
  std::uint64_t view_changes = 0;

  friend bool operator==(const ConsensusStats&, const ConsensusStats&) = default;
};

struct SizeReport {
  std::uint32_t size = 0;
  std::uint32_t fog_peers = 0;
  std::uint32_t diameter = 0;
  NodeIndex requester = 0;
  DiscoveryParams params;
  std::vector<CellReport> cells;  // per target: On then Off
  ConsensusStats consensus;
  NetworkStats network;
  bool ledger_consistent = false;
  bool observers_synced = false;
  std::string chain_head;
  std::string trace;  // tab-separated event trace, filled when tracing is on

  const CellReport* cell(std::uint32_t target, Power p) const {
    for (const auto& c : cells)
      if (c.target == target && c.power == p) return &c;
    return nullptr;
  }
};

struct ScenarioReport {
  std::uint64_t seed = 0;
  std::vector<SizeReport> sizes;
};

struct RunOptions {
  bool parallel = false;
  bool trace = false;
};

/// Maps an IoT-Node label (1-based) onto an IoT device, wrapping modulo the
/// device count so that every label up to the network size is valid.
inline NodeIndex device_for_label(std::uint32_t label, std::uint32_t n_fog, std::uint32_t n_total) {
  const auto devices = n_total - n_fog;
  return n_fog + (label - 1) % devices;
}

/// The measuring client: the highest-index IoT device that is not a target,
/// preferring one whose fog cell holds no target so every lookup crosses the
/// fog mesh.
inline NodeIndex requester_for(const SimNetwork& net, const std::set<NodeIndex>& targets) {
  const auto n_total = static_cast<NodeIndex>(net.size());
  auto gateways_of = [&](NodeIndex d) {
    std::set<NodeIndex> g;
    for (auto nb : net.node(d).neighbors)
      if (net.node(nb).kind == NodeKind::Fog) g.insert(nb);
    return g;
  };
  std::set<NodeIndex> target_cells;
  for (auto t : targets)
    for (auto g : gateways_of(t)) target_cells.insert(g);
  std::optional<NodeIndex> fallback;
  for (NodeIndex i = n_total; i-- > 0;) {
    if (net.node(i).kind != NodeKind::IoT || targets.count(i)) continue;
    if (!fallback) fallback = i;
    auto g = gateways_of(i);
    if (std::none_of(g.begin(), g.end(), [&](NodeIndex x) { return target_cells.count(x) > 0; })) return i;
  }
  if (!fallback) throw ConfigError("every IoT device is a target; no device left to act as requester");
  return *fallback;
}

namespace detail {

inline void submit_load(SimNetwork& net, std::uint32_t n_fog, std::uint32_t tx_load) {
  const auto devices = static_cast<std::uint32_t>(net.size()) - n_fog;
  std::map<NodeIndex, std::uint64_t> nonces;
  for (std::uint32_t k = 0; k < tx_load; ++k) {
    NodeIndex dev = n_fog + k % devices;
    auto tx = new_transaction(net.keypair(dev), nonces[dev]++, whole_millis(net.now()),
                              to_bytes("reading:" + std::to_string(k)));
    // A device hands its transaction to the fog node it is attached to.
    NodeIndex gateway = net.node(dev).neighbors.front();
    for (auto nb : net.node(dev).neighbors)
      if (net.node(nb).kind == NodeKind::Fog) {
        gateway = nb;
        break;
      }
    net.send(dev, gateway, encode_message(WireMessage{TxGossip{tx}}));
  }
}

inline SizeReport run_size(const ScenarioConfig& cfg, std::uint32_t size, bool trace) {
  SizeReport rep;
  rep.size = size;
  rep.fog_peers = cfg.fog_peers_for(size);

  TopologyConfig topo;
  topo.n_total = size;
  topo.n_fog = rep.fog_peers;
  topo.base_latency_ms = cfg.base_latency_ms;
  topo.jitter_ms = cfg.jitter_ms;
  topo.per_message_ms = cfg.per_message_ms;
  topo.topology = cfg.topology;
  topo.seed = cfg.seed * 1000003ULL + size;
  SimNetwork net(topo);
  net.enable_trace(trace);
  rep.diameter = net.diameter();

  std::optional<SimTime> view_timeout;
  if (cfg.view_timeout_ms) view_timeout = from_millis(*cfg.view_timeout_ms);
  auto nodes = attach_middleware(net, fog_consensus_config(net, view_timeout));

  // Transactions -> consensus -> quiescence.
  submit_load(net, rep.fog_peers, cfg.tx_load);
  auto settled = net.run(net.now() + 30 * kMicrosPerSecond);
  if (settled.status != RunStatus::Quiescent)
    throw ScenarioError("size " + std::to_string(size) + ": consensus did not settle within 30 s simulated");

  const auto& reference = nodes[0]->chain();
  if (reference.transaction_count() != cfg.tx_load)
    throw ScenarioError("size " + std::to_string(size) + ": committed " +
                        std::to_string(reference.transaction_count()) + " of " + std::to_string(cfg.tx_load) +
                        " transactions");
  rep.ledger_consistent = true;
  rep.observers_synced = true;
  for (NodeIndex i = 0; i < net.size(); ++i) {
    if (net.node(i).power != Power::On) continue;
    bool same = nodes[i]->chain() == reference;
    if (net.node(i).kind == NodeKind::Fog) rep.ledger_consistent &= same;
    else rep.observers_synced &= same;
  }
  rep.chain_head = reference.tip_hash().hex();
  rep.consensus.blocks_committed = reference.height();
  rep.consensus.transactions_committed = reference.transaction_count();
  {
    std::map<std::uint64_t, SimTime> committed_at;
    for (const auto& c : nodes[0]->consensus().commits) committed_at.emplace(c.height, c.at);
    SimTime total = 0;
    for (std::uint64_t h = 1; h <= reference.height(); ++h)
      for (const auto& tx : reference.at(h).transactions)
        total += committed_at[h] - static_cast<SimTime>(tx.timestamp_ms) * kMicrosPerMilli;
    if (reference.transaction_count())
      rep.consensus.mean_commit_latency = total / static_cast<SimTime>(reference.transaction_count());
  }
  for (NodeIndex i = 0; i < rep.fog_peers; ++i) rep.consensus.view_changes += nodes[i]->consensus().metrics.view_changes;

  // Middleware measurements, issued by an IoT device through its fog gateway.
  rep.params = default_discovery_params(net);
  if (cfg.ttl) rep.params.ttl = *cfg.ttl;
  rep.params.retries = cfg.retries;
  if (cfg.wave_timeout_ms) rep.params.wave_timeout = from_millis(*cfg.wave_timeout_ms);

  std::set<NodeIndex> target_nodes;
  for (auto label : cfg.target_indices) target_nodes.insert(device_for_label(label, rep.fog_peers, size));
  const NodeIndex requester = requester_for(net, target_nodes);
  rep.requester = requester;
  auto& disc = nodes[requester]->discovery();
  std::vector<NodeIndex> candidates;
  for (auto nb : net.node(requester).neighbors)
    if (net.node(nb).kind == NodeKind::Fog) candidates.push_back(nb);

  auto measure = [&](std::uint32_t label, NodeIndex target, Power p) {
    CellReport cell;
    cell.target = label;
    cell.node = target;
    cell.power = p;
    const auto& id = net.node(target).id;
    auto s = search(net, disc, id, rep.params);
    cell.searching = s.elapsed;
    cell.found = s.found;
    auto e = examine(net, disc, id, s, rep.params.wave_timeout);
    cell.examine_outcome = e.outcome;
    if (e.outcome != ExamineOutcome::NodeOffline) cell.examine = e.elapsed;
    cell.selecting = select(net, disc, candidates, rep.params.wave_timeout).elapsed;
    return cell;
  };

  for (auto label : cfg.target_indices) {
    auto target = device_for_label(label, rep.fog_peers, size);
    rep.cells.push_back(measure(label, target, Power::On));
    net.set_power(target, Power::Off);
    rep.cells.push_back(measure(label, target, Power::Off));
    net.set_power(target, Power::On);
  }

  rep.network = net.stats();
  if (trace) rep.trace = net.trace_text();
  return rep;
}

}  // namespace detail

/// Runs every configured size end to end: transactions through the fog peers,
/// consensus to quiescence, then On and Off measurements per target.
inline ScenarioReport run_scenario(const ScenarioConfig& cfg, const RunOptions& opts = {}) {
  cfg.validate();
  ScenarioReport report;
  report.seed = cfg.seed;
  report.sizes.resize(cfg.sizes.size());
  if (opts.parallel && cfg.sizes.size() > 1) {
    std::vector<std::exception_ptr> errors(cfg.sizes.size());
    std::vector<std::thread> workers;
    for (std::size_t i = 0; i < cfg.sizes.size(); ++i)
      workers.emplace_back([&, i] {
        try {
          report.sizes[i] = detail::run_size(cfg, cfg.sizes[i], opts.trace);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    for (auto& w : workers) w.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  } else {
    for (std::size_t i = 0; i < cfg.sizes.size(); ++i) report.sizes[i] = detail::run_size(cfg, cfg.sizes[i], opts.trace);
  }
  return report;
}

// Emission -----------------------------------------------------------------

/// Seconds with two decimals, rounding half up on the exact microsecond value.
inline std::string format_seconds(SimTime t) {
  if (t < 0) throw std::invalid_argument("format_seconds: negative time");
  auto cents = (t + 5000) / 10000;
  auto frac = std::to_string(cents % 100);
  return std::to_string(cents / 100) + "." + std::string(2 - frac.size(), '0') + frac;
}

inline std::string format_seconds(double seconds) {
  return format_seconds(static_cast<SimTime>(std::llround(seconds * kMicrosPerSecond)));
}

inline std::vector<std::uint32_t> report_targets(const SizeReport& r) {
  std::vector<std::uint32_t> out;
  for (const auto& c : r.cells)
    if (std::find(out.begin(), out.end(), c.target) == out.end()) out.push_back(c.target);
  return out;
}

inline std::string emit_csv(const SizeReport& r) {
  auto targets = report_targets(r);
  std::ostringstream os;
  os << "metric";
  for (auto t : targets) os << ",node" << t << "_on,node" << t << "_off";
  os << "\n";
  auto row = [&](const char* name, auto value) {
    os << name;
    for (auto t : targets)
      for (auto p : {Power::On, Power::Off}) {
        const auto* c = r.cell(t, p);
        os << "," << (c ? value(*c) : std::string("-"));
      }
    os << "\n";
  };
  row("Searching", [](const CellReport& c) { return format_seconds(c.searching); });
  row("Examine", [](const CellReport& c) { return c.examine ? format_seconds(*c.examine) : std::string("-"); });
  row("Selecting", [](const CellReport& c) { return format_seconds(c.selecting); });
  return os.str();
}

inline nlohmann::json to_json(const ScenarioReport& report) {
  using nlohmann::json;
  auto secs = [](SimTime t) { return to_seconds(t); };
  json j;
  j["seed"] = report.seed;
  j["sizes"] = json::array();
  for (const auto& s : report.sizes) {
    json js;
    js["size"] = s.size;
    js["fog_peers"] = s.fog_peers;
    js["diameter"] = s.diameter;
    js["requester"] = s.requester;
    js["params"] = {{"ttl", s.params.ttl}, {"retries", s.params.retries}, {"wave_timeout_s", secs(s.params.wave_timeout)}};
    js["cells"] = json::array();
    for (const auto& c : s.cells) {
      json jc;
      jc["target"] = c.target;
      jc["node"] = c.node;
      jc["power"] = to_string(c.power);
      jc["searching_s"] = secs(c.searching);
      jc["found"] = c.found;
      jc["examine_s"] = c.examine ? json(secs(*c.examine)) : json(nullptr);
      jc["examine_outcome"] = to_string(c.examine_outcome);
      jc["selecting_s"] = secs(c.selecting);
      js["cells"].push_back(jc);
    }
    js["consensus"] = {{"blocks_committed", s.consensus.blocks_committed},
                       {"transactions_committed", s.consensus.transactions_committed},
                       {"mean_commit_latency_s", secs(s.consensus.mean_commit_latency)},
                       {"view_changes", s.consensus.view_changes}};
    js["network"] = {{"sent", s.network.sent}, {"delivered", s.network.delivered}, {"dropped", s.network.dropped}};
    js["ledger_consistent"] = s.ledger_consistent;
    js["observers_synced"] = s.observers_synced;
    js["chain_head"] = s.chain_head;
    j["sizes"].push_back(js);
  }
  return j;
}

inline std::string emit_json(const ScenarioReport& report) { return to_json(report).dump(2) + "\n"; }

enum class ReportFormat { Csv, Json };

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

/// Writes report_n<size>.csv per size, or a single report.json, into `dir`.
inline std::vector<std::filesystem::path> emit_report(const ScenarioReport& report, ReportFormat fmt,
                                                      const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  if (fmt == ReportFormat::Json) {
    written.push_back(dir / "report.json");
    write_text_file(written.back(), emit_json(report));
  } else {
    for (const auto& s : report.sizes) {
      written.push_back(dir / ("report_n" + std::to_string(s.size) + ".csv"));
      write_text_file(written.back(), emit_csv(s));
    }
  }
  return written;
}

// Loading stored reports ---------------------------------------------------

inline ScenarioReport report_from_json(const nlohmann::json& j) {
  auto us = [](const nlohmann::json& v) { return static_cast<SimTime>(std::llround(v.get<double>() * kMicrosPerSecond)); };
  ScenarioReport r;
  r.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& js : j.at("sizes")) {
    SizeReport s;
    s.size = js.at("size").get<std::uint32_t>();
    s.fog_peers = js.value("fog_peers", 0u);
    s.diameter = js.value("diameter", 0u);
    s.requester = js.value("requester", 0u);
    for (const auto& jc : js.at("cells")) {
      CellReport c;
      c.target = jc.at("target").get<std::uint32_t>();
      c.node = jc.value("node", 0u);
      c.power = jc.at("power").get<std::string>() == "ON" ? Power::On : Power::Off;
      c.searching = us(jc.at("searching_s"));
      c.found = jc.value("found", false);
      if (!jc.at("examine_s").is_null()) c.examine = us(jc.at("examine_s"));
      c.selecting = us(jc.at("selecting_s"));
      s.cells.push_back(c);
    }
    s.ledger_consistent = js.value("ledger_consistent", false);
    s.observers_synced = js.value("observers_synced", false);
    s.chain_head = js.value("chain_head", std::string());
    r.sizes.push_back(std::move(s));
  }
  return r;
}

inline ScenarioReport parse_report_json(std::string_view text) {
  try {
    return report_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed JSON report: ") + e.what());
  }
}

/// Reads one per-size CSV table back into cells (values at CSV precision).
inline SizeReport parse_report_csv(std::string_view text, std::uint32_t size) {
  std::istringstream in{std::string(text)};
  std::string header;
  if (!std::getline(in, header)) throw ConfigError("empty CSV report");
  std::vector<std::string> cols;
  {
    std::stringstream hs(header);
    std::string c;
    while (std::getline(hs, c, ',')) cols.push_back(detail::trim(c));
  }
  if (cols.empty() || cols[0] != "metric") throw ConfigError("CSV report: first column must be 'metric'");
  SizeReport s;
  s.size = size;
  for (std::size_t i = 1; i < cols.size(); ++i) {
    const auto& name = cols[i];
    auto us = name.rfind('_');
    if (name.rfind("node", 0) != 0 || us == std::string::npos) throw ConfigError("CSV report: bad column " + name);
    CellReport c;
    c.target = detail::parse_number<std::uint32_t>(name, name.substr(4, us - 4));
    auto p = name.substr(us + 1);
    if (p != "on" && p != "off") throw ConfigError("CSV report: bad column " + name);
    c.power = p == "on" ? Power::On : Power::Off;
    s.cells.push_back(c);
  }
  std::string line;
  std::set<std::string> seen_rows;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> vals;
    std::stringstream ls(line);
    std::string v;
    while (std::getline(ls, v, ',')) vals.push_back(detail::trim(v));
    if (vals.size() != cols.size()) throw ConfigError("CSV report: row width mismatch in '" + line + "'");
    seen_rows.insert(vals[0]);
    for (std::size_t i = 1; i < vals.size(); ++i) {
      auto& c = s.cells[i - 1];
      std::optional<SimTime> t;
      if (vals[i] != "-")
        t = static_cast<SimTime>(std::llround(detail::parse_number<double>(vals[0], vals[i]) * kMicrosPerSecond));
      if (vals[0] == "Searching") c.searching = t.value_or(0), c.found = c.power == Power::On;
      else if (vals[0] == "Examine") c.examine = t;
      else if (vals[0] == "Selecting") c.selecting = t.value_or(0);
      else throw ConfigError("CSV report: unknown row '" + vals[0] + "'");
    }
  }
  for (const char* row : {"Searching", "Examine", "Selecting"})
    if (!seen_rows.count(row)) throw ConfigError(std::string("CSV report: missing row ") + row);
  return s;
}

/// Loads a stored report: a JSON file, a single CSV table, or a directory of
/// report_n<size>.csv tables.
inline ScenarioReport load_report(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  auto read = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  auto size_from_name = [](const fs::path& p) -> std::uint32_t {
    auto stem = p.stem().string();
    auto pos = stem.find("_n");
    if (pos == std::string::npos) return 0;
    try {
      return static_cast<std::uint32_t>(std::stoul(stem.substr(pos + 2)));
    } catch (...) {
      return 0;
    }
  };
  if (!fs::exists(path)) throw IoError("report not found: " + path.string());
  if (fs::is_directory(path)) {
    ScenarioReport r;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path))
      if (e.path().extension() == ".csv") files.push_back(e.path());
    if (files.empty()) {
      if (fs::exists(path / "report.json")) return parse_report_json(read(path / "report.json"));
      throw IoError("no CSV reports in " + path.string());
    }
    for (const auto& f : files) r.sizes.push_back(parse_report_csv(read(f), size_from_name(f)));
    std::sort(r.sizes.begin(), r.sizes.end(), [](const auto& a, const auto& b) { return a.size < b.size; });
    return r;
  }
  if (path.extension() == ".json") return parse_report_json(read(path));
  ScenarioReport r;
  r.sizes.push_back(parse_report_csv(read(path), size_from_name(path)));
  return r;
}

// Shape checks -------------------------------------------------------------

struct ShapeViolation {
  char expectation = '?';  // 'a'..'d'
  std::string detail;
};

inline constexpr double kSelectingTolerance = 0.25;

/// (a) Off searching exceeds On searching per target; (b) Examine present
/// exactly for On cells; (c) Selecting On and Off within 25% of On;
/// (d) mean searching strictly increases with network size.
inline std::vector<ShapeViolation> check_shape(const ScenarioReport& report) {
  std::vector<ShapeViolation> out;
  auto where = [](const SizeReport& s, std::uint32_t t) {
    return "n=" + std::to_string(s.size) + " node" + std::to_string(t);
  };
  std::vector<std::pair<std::uint32_t, double>> means;
  for (const auto& s : report.sizes) {
    for (const auto& c : s.cells) {
      bool should_have = c.power == Power::On;
      if (c.examine.has_value() != should_have)
        out.push_back({'b', where(s, c.target) + "_" + (should_have ? "on" : "off") +
                                (should_have ? ": examine missing" : ": examine present while Off")});
    }
    for (auto t : report_targets(s)) {
      const auto* on = s.cell(t, Power::On);
      const auto* off = s.cell(t, Power::Off);
      if (!on || !off) {
        out.push_back({'a', where(s, t) + ": missing On or Off cell"});
        continue;
      }
      if (!(off->searching > on->searching))
        out.push_back({'a', where(s, t) + ": searching off " + format_seconds(off->searching) + " <= on " +
                                format_seconds(on->searching)});
      auto diff = std::llabs(on->selecting - off->selecting);
      if (static_cast<double>(diff) > kSelectingTolerance * static_cast<double>(on->selecting))
        out.push_back({'c', where(s, t) + ": selecting on " + format_seconds(on->selecting) + " vs off " +
                                format_seconds(off->selecting)});
    }
    if (!s.cells.empty()) {
      double sum = 0;
      for (const auto& c : s.cells) sum += static_cast<double>(c.searching);
      means.push_back({s.size, sum / static_cast<double>(s.cells.size())});
    }
  }
  std::sort(means.begin(), means.end());
  for (std::size_t i = 1; i < means.size(); ++i)
    if (!(means[i].second > means[i - 1].second))
      out.push_back({'d', "mean searching n=" + std::to_string(means[i].first) + " (" +
                              format_seconds(static_cast<SimTime>(means[i].second)) + ") not above n=" +
                              std::to_string(means[i - 1].first) + " (" +
                              format_seconds(static_cast<SimTime>(means[i - 1].second)) + ")"});
  return out;
}

}  // namespace iotfog

#endif  // IOTFOG_HARNESS_HPP
