#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "platoon/metrics.hpp"
#include "platoon/runner.hpp"

using namespace platoon;
namespace fs = std::filesystem;

namespace {

ScenarioSpec plain_spec() {
  ScenarioSpec spec;
  spec.scenario = ScenarioKind::Plain;
  spec.spawn.hdv_min = 0;
  spec.spawn.hdv_max = 0;
  spec.validate();
  return spec;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TmpDir {
  fs::path path;
  explicit TmpDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TmpDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config parsing reports field paths") {
  CHECK_THROWS_WITH_AS(parse_spec_json("{\"road\":{\"num_lanes\":\"three\"}}"),
                       doctest::Contains("road.num_lanes"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_spec_json("{\"scenario\":\"maelstrom\"}"),
                       doctest::Contains("scenario"), ConfigError);
  CHECK_THROWS_AS(parse_spec_json("not json"), ConfigError);
  CHECK_THROWS_AS(parse_spec_json("{\"road\":{\"num_lanes\":1}}"), ConfigError);
}

TEST_CASE("resolved config dumps reparse to the same hash") {
  const ScenarioSpec spec = plain_spec();
  const std::string text = dump_spec_json(spec);
  const ScenarioSpec again = parse_spec_json(text);
  CHECK(config_hash(spec) == config_hash(again));
}

TEST_CASE("an empty highway passes cleanly under the stack") {
  const ScenarioSpec spec = plain_spec();
  ScriptedKeepPolicy policy;
  const MetricsRow row = run_episode(spec, 3, policy);
  CHECK(row.collision == 0.0);
  CHECK(row.pass == 1.0);
  CHECK(row.outcome == "passed");
  CHECK(row.s1_fraction > 0.5);  // the lone platoon should settle into gap regulation
  CHECK(row.avg_speed > 20.0);
}

TEST_CASE("a forced-overlap spawn collides immediately") {
  ScenarioSpec spec = plain_spec();
  spec.spawn.platoon_headway = -2.0;  // overlapping bodies at spawn
  ScriptedKeepPolicy policy;
  const MetricsRow row = run_episode(spec, 3, policy);
  CHECK(row.collision == 1.0);
  CHECK(row.outcome == "collided");
  CHECK(row.steps == 1);
}

TEST_CASE("reported metrics equal an independent recomputation from the trace") {
  TmpDir tmp("metrics_recompute");
  ScenarioSpec spec = plain_spec();
  spec.spawn.hdv_min = 4;
  spec.spawn.hdv_max = 4;
  ScriptedKeepPolicy policy;
  EpisodeOptions opts;
  opts.trace_path = (tmp.path / "trace.jsonl").string();
  const MetricsRow row = run_episode(spec, 11, policy, opts);

  const TraceFile trace = read_trace(opts.trace_path);
  std::vector<int> platoon_ids;
  for (const auto& v : trace.steps.front().vehicles)
    if (v.in_platoon) platoon_ids.push_back(v.id);

  MetricsAccumulator acc;
  for (const TraceStep& s : trace.steps) {
    acc.step(s.vehicles, platoon_ids,
             s.strategy == "LQR" ? StrategyTag::Lqr : StrategyTag::DataDriven,
             static_cast<long>(s.substitutions.size()), s.reward.r_global);
  }
  const MetricsRow redo = acc.finalize(trace.steps.back().vehicles, platoon_ids, spec.road);
  CHECK(redo.steps == row.steps);
  CHECK(redo.outcome == row.outcome);
  CHECK(redo.episode_return == row.episode_return);
  CHECK(redo.avg_speed == row.avg_speed);
  CHECK(redo.avg_headway == row.avg_headway);
  CHECK(redo.substitutions == row.substitutions);
  CHECK(redo.s1_fraction == row.s1_fraction);
}

TEST_CASE("repeated seeds give identical rows and the aggregate is the row mean") {
  ScenarioSpec spec = plain_spec();
  spec.spawn.hdv_min = 3;
  spec.spawn.hdv_max = 5;
  ScriptedKeepPolicy policy;
  const MetricsReport report = run_eval(spec, {5, 5, 5}, policy);
  REQUIRE(report.rows.size() == 3);
  for (const auto& r : report.rows) {
    CHECK(r.episode_return == report.rows[0].episode_return);
    CHECK(r.avg_speed == report.rows[0].avg_speed);
    CHECK(r.steps == report.rows[0].steps);
  }
  CHECK(report.aggregate.avg_speed == doctest::Approx(report.rows[0].avg_speed).epsilon(1e-12));
  CHECK(report.aggregate.pass ==
        doctest::Approx((report.rows[0].pass + report.rows[1].pass + report.rows[2].pass) / 3.0)
            .epsilon(1e-12));
}

TEST_CASE("evaluation is deterministic across parallelism levels") {
  TmpDir tmp1("eval_par1");
  TmpDir tmp8("eval_par8");
  ScenarioSpec spec = plain_spec();
  spec.scenario = ScenarioKind::FlowOscillation;
  spec.spawn.hdv_min = 3;
  spec.spawn.hdv_max = 6;
  ScriptedKeepPolicy policy;
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 0; s < 10; ++s) seeds.push_back(s);

  EvalOptions o1;
  o1.jobs = 1;
  o1.trace_dir = tmp1.path.string();
  EvalOptions o8;
  o8.jobs = 8;
  o8.trace_dir = tmp8.path.string();
  const MetricsReport r1 = run_eval(spec, seeds, policy, o1);
  const MetricsReport r8 = run_eval(spec, seeds, policy, o8);

  MetricsReport a = r1, b = r8;
  CHECK(metrics_csv(a) == metrics_csv(b));
  for (const std::uint64_t s : seeds) {
    const std::string name = "trace_" + std::to_string(s) + ".jsonl";
    CHECK(slurp((tmp1.path / name).string()) == slurp((tmp8.path / name).string()));
  }
}

TEST_CASE("fresh traces replay without divergence") {
  TmpDir tmp("replay_fresh");
  ScenarioSpec spec = plain_spec();
  spec.scenario = ScenarioKind::TrafficAccidents;
  spec.safety.horizon = 45;
  spec.fsm.l_safe = 120.0;
  spec.spawn.hdv_min = 2;
  spec.spawn.hdv_max = 4;
  ScriptedKeepPolicy policy;
  EpisodeOptions opts;
  opts.trace_path = (tmp.path / "trace.jsonl").string();
  run_episode(spec, 21, policy, opts);

  const ReplayResult res = replay(opts.trace_path, (tmp.path / "series").string());
  CHECK(res.ok);
  CHECK(res.steps_checked > 0);

  // emitted headway series matches an independent recomputation from the trace
  const TraceFile trace = read_trace(opts.trace_path);
  std::ifstream series((tmp.path / "series" / "series.csv").string());
  std::string header;
  std::getline(series, header);
  CHECK(header == "step,time,id,lane,s,y,v,a,headway");
  long rows = 0;
  std::string line;
  size_t step_idx = 0;
  while (std::getline(series, line) && step_idx < trace.steps.size()) {
    ++rows;
    // rows come in platoon s-order per step: lead first with empty headway
    const size_t per_step = 3;
    const size_t within = static_cast<size_t>((rows - 1) % per_step);
    if (within == 0 && rows > 1) ++step_idx;
    if (step_idx >= trace.steps.size()) break;
    std::vector<const VehicleState*> platoon;
    for (const auto& v : trace.steps[step_idx].vehicles)
      if (v.in_platoon) platoon.push_back(&v);
    std::sort(platoon.begin(), platoon.end(),
              [](const VehicleState* a, const VehicleState* b) { return a->s > b->s; });
    const auto last_comma = line.rfind(',');
    const std::string headway_field = line.substr(last_comma + 1);
    if (within == 0) {
      CHECK(headway_field.empty());
    } else {
      const double expected = bumper_gap(*platoon[within - 1], *platoon[within]);
      CHECK(std::stod(headway_field) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
  CHECK(rows == static_cast<long>(trace.steps.size() * 3));
}

TEST_CASE("a corrupted trace field is pinpointed at its step") {
  TmpDir tmp("replay_corrupt");
  ScenarioSpec spec = plain_spec();
  spec.spawn.hdv_min = 2;
  spec.spawn.hdv_max = 2;
  ScriptedKeepPolicy policy;
  EpisodeOptions opts;
  opts.trace_path = (tmp.path / "trace.jsonl").string();
  run_episode(spec, 9, policy, opts);

  // perturb one position in the middle record
  std::ifstream in(opts.trace_path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  in.close();
  const size_t victim = lines.size() / 2;
  nlohmann::json j = nlohmann::json::parse(lines[victim]);
  const long victim_step = j.at("step").get<long>();
  j["vehicles"][0]["s"] = j["vehicles"][0]["s"].get<double>() + 0.25;
  lines[victim] = j.dump();
  std::ofstream out(opts.trace_path, std::ios::binary);
  for (const auto& l : lines) out << l << "\n";
  out.close();

  const ReplayResult res = replay(opts.trace_path);
  CHECK_FALSE(res.ok);
  CHECK(res.divergence_step == victim_step);
  CHECK(res.divergence_field.find("vehicles[") == 0);
}

TEST_CASE("episode failures become failed rows and the run continues") {
  ScenarioSpec spec = plain_spec();
  spec.lqr.cruise_speed = std::numeric_limits<double>::quiet_NaN();  // poisons the S1 branch
  ScriptedKeepPolicy policy;
  const MetricsReport report = run_eval(spec, {1, 2}, policy);
  CHECK(report.failed_count == 2);
  for (const auto& r : report.rows) {
    CHECK(r.failed);
    CHECK(!r.error.empty());
  }
}

TEST_CASE("the data-driven branch reports mask consultations in the trace") {
  TmpDir tmp("mask_trace");
  ScenarioSpec spec = plain_spec();
  spec.scenario = ScenarioKind::TrafficAccidents;
  spec.safety.horizon = 45;
  spec.fsm.l_safe = 120.0;
  spec.params.wreck_s = 380.0;
  ScriptedKeepPolicy policy;
  EpisodeOptions opts;
  opts.trace_path = (tmp.path / "trace.jsonl").string();
  const MetricsRow row = run_episode(spec, 2, policy, opts);
  CHECK(row.collision == 0.0);

  const TraceFile trace = read_trace(opts.trace_path);
  bool saw_substitution = false;
  for (const TraceStep& s : trace.steps) {
    CHECK((s.strategy == "LQR" || s.strategy == "DataDriven"));
    CHECK(((s.fsm == "S1") == (s.strategy == "LQR")));
    if (!s.substitutions.empty()) {
      saw_substitution = true;
      CHECK(s.strategy == "DataDriven");
    }
  }
  CHECK(saw_substitution);
}
