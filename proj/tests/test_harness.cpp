#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "iotfog/harness.hpp"

using namespace iotfog;
namespace fs = std::filesystem;

namespace {

ScenarioConfig small_config(std::vector<std::uint32_t> sizes = {10}) {
  ScenarioConfig cfg;
  cfg.sizes = std::move(sizes);
  cfg.seed = 7;
  return cfg;
}

/// A fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("iotfog_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

CellReport cell(std::uint32_t target, Power p, double search_s, std::optional<double> examine_s, double select_s) {
  CellReport c;
  c.target = target;
  c.power = p;
  c.searching = from_millis(search_s * 1000);
  c.found = p == Power::On;
  if (examine_s) c.examine = from_millis(*examine_s * 1000);
  c.selecting = from_millis(select_s * 1000);
  return c;
}

SizeReport size_report(std::uint32_t size, std::vector<CellReport> cells) {
  SizeReport s;
  s.size = size;
  s.cells = std::move(cells);
  return s;
}

bool has_violation(const std::vector<ShapeViolation>& v, char expectation) {
  return std::any_of(v.begin(), v.end(), [&](const auto& x) { return x.expectation == expectation; });
}

const ScenarioReport& seed7_report() {
  static const ScenarioReport report = run_scenario(small_config({10, 50}), RunOptions{false, true});
  return report;
}

}  // namespace

TEST(Config, FogPeersScaleWithFloor) {
  ScenarioConfig cfg;
  EXPECT_EQ(cfg.fog_peers_for(10), 4u);
  EXPECT_EQ(cfg.fog_peers_for(50), 5u);
  EXPECT_EQ(cfg.fog_peers_for(100), 10u);
  EXPECT_EQ(cfg.fog_peers_for(45), 5u);  // 4.5 rounds half away from zero
}

TEST(Config, ParsesKeysCommentsAndAuto) {
  auto cfg = parse_config(R"(# scenario
sizes = 10, 20
fog_fraction=0.2
target_indices=1,2   # trailing comment
seed=42
tx_load=5
base_latency_ms=4
jitter_ms=0.5
per_message_ms=1
topology=full_mesh
ttl=3
retries=1
wave_timeout_ms=auto
view_timeout_ms=80
)");
  EXPECT_EQ(cfg.sizes, (std::vector<std::uint32_t>{10, 20}));
  EXPECT_DOUBLE_EQ(cfg.fog_fraction, 0.2);
  EXPECT_EQ(cfg.target_indices, (std::vector<std::uint32_t>{1, 2}));
  EXPECT_EQ(cfg.seed, 42u);
  EXPECT_EQ(cfg.tx_load, 5u);
  EXPECT_DOUBLE_EQ(cfg.base_latency_ms, 4.0);
  EXPECT_DOUBLE_EQ(cfg.jitter_ms, 0.5);
  EXPECT_DOUBLE_EQ(cfg.per_message_ms, 1.0);
  EXPECT_EQ(cfg.topology, Topology::FullMesh);
  EXPECT_EQ(cfg.ttl, 3u);
  EXPECT_EQ(cfg.retries, 1u);
  EXPECT_FALSE(cfg.wave_timeout_ms);
  EXPECT_EQ(cfg.view_timeout_ms, 80.0);
}

TEST(Config, EmptyTextGivesDefaults) {
  auto cfg = parse_config("");
  ScenarioConfig def;
  EXPECT_EQ(cfg.sizes, def.sizes);
  EXPECT_EQ(cfg.target_indices, def.target_indices);
  EXPECT_EQ(cfg.seed, 7u);
}

TEST(Config, RoundTripsThroughText) {
  auto cfg = parse_config("sizes=12,30\nfog_fraction=0.15\nttl=5\nview_timeout_ms=70.5\n");
  auto again = parse_config(to_config_text(cfg));
  EXPECT_EQ(to_config_text(again), to_config_text(cfg));
  EXPECT_EQ(again.sizes, cfg.sizes);
  EXPECT_EQ(again.ttl, cfg.ttl);
  EXPECT_EQ(again.view_timeout_ms, cfg.view_timeout_ms);
}

TEST(Config, RejectsBadInput) {
  for (const char* text : {"colour=blue", "sizes", "seed=-1", "seed=abc", "tx_load=3x", "topology=ring",
                           "sizes=", "sizes=4", "sizes=10\ntarget_indices=11", "target_indices=0", "retries=0",
                           "fog_fraction=0", "fog_fraction=1.5", "base_latency_ms=0", "jitter_ms=-1",
                           "wave_timeout_ms=0"})
    EXPECT_THROW(parse_config(text), ConfigError) << text;
  EXPECT_THROW(load_config_file("/nonexistent/iotfog.conf"), ConfigError);
}

TEST(Labels, WrapOverDevices) {
  EXPECT_EQ(device_for_label(1, 4, 10), 4u);
  EXPECT_EQ(device_for_label(6, 4, 10), 9u);
  EXPECT_EQ(device_for_label(7, 4, 10), 4u);
  EXPECT_EQ(device_for_label(10, 4, 10), 7u);
  EXPECT_EQ(device_for_label(10, 10, 100), 19u);
}

TEST(Requester, HighestDeviceOutsideTargetCells) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    TopologyConfig t;
    t.n_total = 50;
    t.n_fog = 5;
    t.jitter_ms = 1.0;
    t.seed = seed;
    SimNetwork net(t);
    std::set<NodeIndex> targets;
    for (std::uint32_t label : {1u, 3u, 5u, 8u, 10u}) targets.insert(device_for_label(label, 5, 50));
    std::set<NodeIndex> target_cells;
    for (auto x : targets) target_cells.insert(net.node(x).neighbors[0]);

    // Brute-force expectation.
    std::optional<NodeIndex> expected;
    for (NodeIndex i = 5; i < 50; ++i)
      if (!targets.count(i) && !target_cells.count(net.node(i).neighbors[0])) expected = i;
    if (!expected)
      for (NodeIndex i = 5; i < 50; ++i)
        if (!targets.count(i)) expected = i;

    auto r = requester_for(net, targets);
    EXPECT_EQ(r, *expected) << "seed " << seed;
    EXPECT_EQ(net.node(r).kind, NodeKind::IoT);
    EXPECT_FALSE(targets.count(r));
  }
}

TEST(Requester, NoSpareDeviceIsAnError) {
  TopologyConfig t;
  t.n_total = 6;
  t.n_fog = 4;
  SimNetwork net(t);
  EXPECT_THROW(requester_for(net, {4, 5}), ConfigError);
}

TEST(Format, SecondsRoundHalfUpToCents) {
  EXPECT_EQ(format_seconds(SimTime{0}), "0.00");
  EXPECT_EQ(format_seconds(SimTime{4999}), "0.00");
  EXPECT_EQ(format_seconds(SimTime{5000}), "0.01");
  EXPECT_EQ(format_seconds(SimTime{124999}), "0.12");
  EXPECT_EQ(format_seconds(SimTime{125000}), "0.13");
  EXPECT_EQ(format_seconds(SimTime{1234567}), "1.23");
  EXPECT_EQ(format_seconds(SimTime{4800000}), "4.80");
  EXPECT_EQ(format_seconds(0.125), "0.13");
  EXPECT_THROW(format_seconds(SimTime{-1}), std::invalid_argument);
}

TEST(Scenario, SmallRunIsCompleteAndConsistent) {
  const auto& report = seed7_report();
  ASSERT_EQ(report.sizes.size(), 2u);
  for (const auto& s : report.sizes) {
    EXPECT_EQ(s.cells.size(), 2u * 5);
    EXPECT_TRUE(s.ledger_consistent);
    EXPECT_TRUE(s.observers_synced);
    EXPECT_EQ(s.consensus.transactions_committed, 20u);
    EXPECT_EQ(s.consensus.view_changes, 0u);
    EXPECT_EQ(s.network.sent, s.network.delivered + s.network.dropped);
    for (const auto& c : s.cells) {
      if (c.power == Power::On) {
        EXPECT_TRUE(c.found);
        EXPECT_EQ(c.examine_outcome, ExamineOutcome::Verified);
        ASSERT_TRUE(c.examine);
        EXPECT_LT(c.searching, s.params.wave_timeout);
      } else {
        EXPECT_FALSE(c.found);
        EXPECT_FALSE(c.examine);
        EXPECT_EQ(c.searching, s.params.retries * s.params.wave_timeout);
      }
      EXPECT_GT(c.selecting, 0);
    }
  }
  EXPECT_TRUE(check_shape(report).empty());
}

TEST(Scenario, DeterministicAcrossRunsAndThreads) {
  const auto& a = seed7_report();
  auto b = run_scenario(small_config({10, 50}), RunOptions{true, true});
  ASSERT_EQ(a.sizes.size(), b.sizes.size());
  for (std::size_t i = 0; i < a.sizes.size(); ++i) {
    EXPECT_EQ(emit_csv(a.sizes[i]), emit_csv(b.sizes[i]));
    EXPECT_EQ(a.sizes[i].trace, b.sizes[i].trace);
    EXPECT_FALSE(a.sizes[i].trace.empty());
  }
  EXPECT_EQ(emit_json(a), emit_json(b));
}

TEST(Scenario, SeedChangesTheNetwork) {
  auto cfg = small_config();
  cfg.seed = 8;
  auto other = run_scenario(cfg);
  EXPECT_NE(emit_json(other), emit_json(run_scenario(small_config())));
}

TEST(Report, CsvLayoutAndDashForMissingExamine) {
  const auto& s = seed7_report().sizes[0];
  auto csv = emit_csv(s);
  std::istringstream in(csv);
  std::string header, searching, examine, selecting;
  std::getline(in, header);
  std::getline(in, searching);
  std::getline(in, examine);
  std::getline(in, selecting);
  EXPECT_EQ(header,
            "metric,node1_on,node1_off,node3_on,node3_off,node5_on,node5_off,node8_on,node8_off,node10_on,node10_off");
  EXPECT_EQ(searching.rfind("Searching,", 0), 0u);
  EXPECT_EQ(selecting.rfind("Selecting,", 0), 0u);
  // Examine: a value in every On column and a dash in every Off column.
  std::vector<std::string> vals;
  std::stringstream ls(examine);
  for (std::string v; std::getline(ls, v, ',');) vals.push_back(v);
  ASSERT_EQ(vals.size(), 11u);
  EXPECT_EQ(vals[0], "Examine");
  for (std::size_t i = 1; i < vals.size(); ++i) {
    if (i % 2 == 0) EXPECT_EQ(vals[i], "-");
    else EXPECT_NE(vals[i], "-");
  }
  // The Off searching cells all read retries x wave timeout.
  EXPECT_NE(searching.find(format_seconds(s.params.retries * s.params.wave_timeout)), std::string::npos);
}

TEST(Report, JsonAndCsvCarryTheSameValues) {
  const auto& report = seed7_report();
  auto back = parse_report_json(emit_json(report));
  ASSERT_EQ(back.sizes.size(), report.sizes.size());
  EXPECT_EQ(back.seed, 7u);
  for (std::size_t i = 0; i < report.sizes.size(); ++i) {
    const auto& orig = report.sizes[i];
    const auto& js = back.sizes[i];
    auto csv = parse_report_csv(emit_csv(orig), orig.size);
    ASSERT_EQ(js.cells.size(), orig.cells.size());
    ASSERT_EQ(csv.cells.size(), orig.cells.size());
    for (std::size_t k = 0; k < orig.cells.size(); ++k) {
      EXPECT_EQ(js.cells[k].searching, orig.cells[k].searching);
      EXPECT_EQ(js.cells[k].examine, orig.cells[k].examine);
      EXPECT_EQ(js.cells[k].selecting, orig.cells[k].selecting);
      EXPECT_EQ(format_seconds(csv.cells[k].searching), format_seconds(orig.cells[k].searching));
      EXPECT_EQ(csv.cells[k].examine.has_value(), orig.cells[k].examine.has_value());
      EXPECT_EQ(format_seconds(csv.cells[k].selecting), format_seconds(orig.cells[k].selecting));
    }
    EXPECT_EQ(emit_csv(js), emit_csv(orig));
  }
}

TEST(Report, EmitAndLoadFromDisk) {
  TempDir dir("report_io");
  const auto& report = seed7_report();
  auto csvs = emit_report(report, ReportFormat::Csv, dir.path / "csv");
  ASSERT_EQ(csvs.size(), 2u);
  EXPECT_EQ(csvs[0].filename(), "report_n10.csv");
  auto from_dir = load_report(dir.path / "csv");
  ASSERT_EQ(from_dir.sizes.size(), 2u);
  EXPECT_EQ(from_dir.sizes[0].size, 10u);
  EXPECT_EQ(from_dir.sizes[1].size, 50u);
  EXPECT_EQ(emit_csv(from_dir.sizes[1]), emit_csv(report.sizes[1]));
  auto single = load_report(csvs[1]);
  EXPECT_EQ(single.sizes.at(0).size, 50u);

  auto json = emit_report(report, ReportFormat::Json, dir.path / "json");
  ASSERT_EQ(json.size(), 1u);
  EXPECT_EQ(emit_json(load_report(json[0])), emit_json(parse_report_json(emit_json(report))));
  EXPECT_EQ(load_report(dir.path / "json").sizes.size(), 2u);
}

TEST(Report, LoadErrors) {
  TempDir dir("report_errors");
  EXPECT_THROW(load_report(dir.path / "missing.json"), IoError);
  EXPECT_THROW(load_report(dir.path), IoError);  // empty directory
  std::ofstream(dir.path / "bad.json") << "{not json";
  EXPECT_THROW(load_report(dir.path / "bad.json"), ConfigError);
  std::ofstream(dir.path / "bad_n10.csv") << "metric,node1_up\nSearching,0.1\n";
  EXPECT_THROW(load_report(dir.path / "bad_n10.csv"), ConfigError);
  EXPECT_THROW(parse_report_csv("metric,node1_on\nSearching,0.1\n", 10), ConfigError);  // rows missing
  EXPECT_THROW(parse_report_csv("metric,node1_on\nSearching,0.1,0.2\n", 10), ConfigError);
  EXPECT_THROW(write_text_file(dir.path / "no_such_dir" / "x.csv", "x"), IoError);
}

TEST(Shape, DetectsEachViolation) {
  auto good = [] {
    return std::vector<CellReport>{cell(1, Power::On, 0.05, 0.03, 0.012), cell(1, Power::Off, 0.12, std::nullopt, 0.012)};
  };
  ScenarioReport ok;
  ok.sizes.push_back(size_report(10, good()));
  EXPECT_TRUE(check_shape(ok).empty());  // a single size passes (d) vacuously

  auto a = ok;
  a.sizes[0].cells[1].searching = a.sizes[0].cells[0].searching;
  EXPECT_TRUE(has_violation(check_shape(a), 'a'));

  auto b = ok;
  b.sizes[0].cells[1].examine = from_millis(30);
  EXPECT_TRUE(has_violation(check_shape(b), 'b'));
  auto b2 = ok;
  b2.sizes[0].cells[0].examine.reset();
  EXPECT_TRUE(has_violation(check_shape(b2), 'b'));

  auto c = ok;
  c.sizes[0].cells[1].selecting = from_millis(12 * 1.3);
  EXPECT_TRUE(has_violation(check_shape(c), 'c'));
  auto c_edge = ok;
  c_edge.sizes[0].cells[1].selecting = from_millis(15);  // exactly 25% above
  EXPECT_FALSE(has_violation(check_shape(c_edge), 'c'));

  auto d = ok;
  d.sizes.push_back(size_report(50, good()));  // equal means are not an increase
  EXPECT_TRUE(has_violation(check_shape(d), 'd'));
  auto d_ok = ok;
  auto slower = good();
  slower[0].searching += from_millis(1);
  d_ok.sizes.insert(d_ok.sizes.begin(), size_report(50, slower));  // order in the report does not matter
  EXPECT_TRUE(check_shape(d_ok).empty());

  auto missing = ok;
  missing.sizes[0].cells.pop_back();
  EXPECT_TRUE(has_violation(check_shape(missing), 'a'));
}
