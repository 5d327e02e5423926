#include "platoon/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

namespace platoon {

JointAction ScriptedKeepPolicy::propose(const Episode& episode,
                                        const ObservationMatrix& /*obs*/) const {
  JointAction ja;
  const World& world = episode.world();
  for (const int id : episode.platoon_ids()) {
    const CavController& ctl = *world.cav[static_cast<size_t>(id)];
    ja.per_vehicle.push_back(ctl.target_speed < cruise_speed_ - 1e-9 ? Action::Faster
                                                                     : Action::Idle);
  }
  ja.index = encode_action(ja.per_vehicle);
  return ja;
}

CheckpointPolicy::CheckpointPolicy(const ScenarioSpec& spec, const std::string& checkpoint_path)
    : path_(checkpoint_path) {
  const int obs_dim = spec.env.max_vehicles * ObservationMatrix::kFeatures;
  net_ = std::make_unique<ActorCritic>(obs_dim, spec.spawn.platoon_n, spec.train, 0);
  net_->load_checkpoint(checkpoint_path);
}

JointAction CheckpointPolicy::propose(const Episode& episode, const ObservationMatrix& obs) const {
  const std::vector<std::uint8_t> full_mask(static_cast<size_t>(net_->act_dim()), 1);
  const MaskedDist dist = net_->distribution(obs.flatten(), full_mask);
  const long index = net_->greedy(dist);
  return decode_action(index, static_cast<int>(episode.platoon_ids().size()));
}

std::unique_ptr<PolicySource> make_policy_source(const ScenarioSpec& spec,
                                                 const std::string& checkpoint_path) {
  if (checkpoint_path.empty())
    return std::make_unique<ScriptedKeepPolicy>(spec.spawn.platoon_speed);
  return std::make_unique<CheckpointPolicy>(spec, checkpoint_path);
}

namespace {

Episode make_episode(const ScenarioSpec& spec, std::uint64_t seed) {
  World world = make_world(spec, seed);
  std::vector<int> ids = platoon_ids_of(world);
  return Episode(std::move(world), std::move(ids), spec.env);
}

}  // namespace

StackRunner::StackRunner(const ScenarioSpec& spec, std::uint64_t seed, const PolicySource& policy)
    : spec_(spec),
      seed_(seed),
      policy_(policy),
      episode_(make_episode(spec, seed)),
      fsm_{},
      lqr_design_(LqrDesign::make(spec.lqr, spec.world.dt)),
      projector_(spec.safety, spec.env) {}

StackStepOutput StackRunner::step() {
  StackStepOutput out;
  World& world = episode_.world();
  const std::vector<int>& platoon = episode_.platoon_ids();

  out.assessment = assess_scene(world, platoon, spec_.fsm.l_safe);
  const auto [next_fsm, tag] = fsm_step(fsm_, out.assessment, world.step_index, spec_.fsm);
  fsm_ = next_fsm;
  out.strategy = tag;

  std::vector<CavCommand> cmds;
  JointAction executed;
  executed.per_vehicle.assign(platoon.size(), Action::Idle);
  std::vector<SubstitutionRecord> subs;

  if (tag == StrategyTag::Lqr) {
    std::vector<VehicleState> ordered;
    for (const int id : platoon) ordered.push_back(world.vehicle(id));
    std::sort(ordered.begin(), ordered.end(),
              [](const VehicleState& a, const VehicleState& b) { return a.s > b.s; });
    const std::vector<double> accels =
        lqr_follow(ordered, lqr_design_, spec_.lqr, world.params.limits);
    for (size_t k = 0; k < ordered.size(); ++k) {
      VehicleState& v = world.vehicle(ordered[k].id);
      auto& ctl = *world.cav[static_cast<size_t>(v.id)];
      ctl.target_lane = v.lane;  // keep targets in sync for a later S2 hand-off
      ctl.target_speed = spec_.lqr.cruise_speed;
      CavCommand c;
      c.id = v.id;
      c.cmd.throttle_accel = accels[k];
      c.cmd.steer = pid_steer(v, world.road, v.lane, world.params.pid, world.params.limits);
      cmds.push_back(c);
    }
    std::sort(cmds.begin(), cmds.end(),
              [](const CavCommand& a, const CavCommand& b) { return a.id < b.id; });
  } else {
    const ObservationMatrix obs = episode_.observe();
    const JointAction proposal = policy_.propose(episode_, obs);
    const ProjectionResult projected = projector_.project(
        world, platoon, proposal, derive_seed(seed_, static_cast<std::uint64_t>(world.step_index)));
    executed = projected.action;
    for (const SafetyAssessment& as : projected.assessments) {
      if (!as.substituted && !as.unsafe_best_effort) continue;
      SubstitutionRecord r;
      r.vehicle_id = as.vehicle_id;
      r.from = static_cast<int>(as.original);
      r.to = static_cast<int>(as.chosen);
      r.margin_from = as.margin_original;
      r.margin_to = as.margin_chosen;
      r.best_effort = as.unsafe_best_effort;
      subs.push_back(r);
    }
    for (size_t k = 0; k < platoon.size(); ++k)
      apply_action(world, platoon[k], executed.per_vehicle[k], spec_.env);
    cmds = episode_.track_commands();
  }

  StepInfo info;
  episode_.step_with_commands(cmds, &info);
  out.reward = info.reward.r_global;

  out.trace.step = episode_.world().step_index;
  out.trace.time = episode_.world().time;
  out.trace.fsm = fsm_mode_name(fsm_.q);
  out.trace.strategy = strategy_name(tag);
  out.trace.same_lane = out.assessment.same_lane;
  out.trace.clear_zone = out.assessment.clear_zone;
  for (const Action a : executed.per_vehicle) out.trace.action.push_back(static_cast<int>(a));
  out.trace.action_index = encode_action(executed.per_vehicle);
  out.trace.substitutions = std::move(subs);
  out.trace.reward = info.reward;
  out.trace.vehicles = episode_.world().vehicles;
  out.trace.events = info.events;
  out.trace.done_reason = info.done_reason;
  return out;
}

MetricsRow run_episode(const ScenarioSpec& spec, std::uint64_t seed, const PolicySource& policy,
                       const EpisodeOptions& options) {
  StackRunner runner(spec, seed, policy);
  std::optional<TraceWriter> trace;
  if (!options.trace_path.empty()) {
    trace.emplace(options.trace_path);
    TraceHeader header;
    header.seed = seed;
    header.config_json = dump_spec_json(spec);
    header.config_hash = config_hash(spec);
    header.policy_type = policy.type();
    header.policy_path = policy.path();
    trace->write_header(header);
  }

  MetricsAccumulator acc;
  while (!runner.episode().done()) {
    const StackStepOutput out = runner.step();
    acc.step(runner.episode().world().vehicles, runner.episode().platoon_ids(), out.strategy,
             static_cast<long>(out.trace.substitutions.size()), out.reward);
    if (trace) trace->write_step(out.trace);
  }
  if (trace) trace->close();

  MetricsRow row = acc.finalize(runner.episode().world().vehicles, runner.episode().platoon_ids(),
                                spec.road);
  row.seed = seed;
  row.scenario = scenario_name(spec.scenario);
  return row;
}

MetricsReport run_eval(const ScenarioSpec& spec, const std::vector<std::uint64_t>& seeds,
                       const PolicySource& policy, const EvalOptions& options) {
  MetricsReport report;
  report.rows.resize(seeds.size());

  if (!options.trace_dir.empty()) std::filesystem::create_directories(options.trace_dir);

  std::atomic<size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= seeds.size()) break;
      EpisodeOptions ep_opts;
      if (!options.trace_dir.empty())
        ep_opts.trace_path =
            options.trace_dir + "/trace_" + std::to_string(seeds[i]) + ".jsonl";
      try {
        report.rows[i] = run_episode(spec, seeds[i], policy, ep_opts);
      } catch (const std::exception& e) {
        MetricsRow row;
        row.seed = seeds[i];
        row.scenario = scenario_name(spec.scenario);
        row.failed = true;
        row.outcome = "failed";
        row.error = e.what();
        report.rows[i] = row;
      }
    }
  };

  const int jobs = std::max(1, options.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (const MetricsRow& r : report.rows)
    if (r.failed) report.failed_count += 1;
  report.aggregate = aggregate_rows(report.rows);
  return report;
}

namespace {

struct FieldDiff {
  bool diverged = false;
  std::string field;
};

FieldDiff compare_step(const TraceStep& expected, const TraceStep& actual) {
  FieldDiff d;
  auto fail = [&](const std::string& f) {
    d.diverged = true;
    d.field = f;
  };
  if (expected.fsm != actual.fsm) {
    fail("fsm");
    return d;
  }
  if (expected.strategy != actual.strategy) {
    fail("strategy");
    return d;
  }
  if (expected.action != actual.action) {
    fail("action");
    return d;
  }
  if (expected.vehicles.size() != actual.vehicles.size()) {
    fail("vehicles.size");
    return d;
  }
  for (size_t i = 0; i < expected.vehicles.size(); ++i) {
    const VehicleState& e = expected.vehicles[i];
    const VehicleState& a = actual.vehicles[i];
    const std::string p = "vehicles[" + std::to_string(e.id) + "].";
    if (e.id != a.id) { fail(p + "id"); return d; }
    if (e.lane != a.lane) { fail(p + "lane"); return d; }
    if (e.s != a.s) { fail(p + "s"); return d; }
    if (e.y != a.y) { fail(p + "y"); return d; }
    if (e.heading != a.heading) { fail(p + "heading"); return d; }
    if (e.v != a.v) { fail(p + "v"); return d; }
    if (e.a != a.a) { fail(p + "a"); return d; }
    if (e.collided != a.collided) { fail(p + "collided"); return d; }
  }
  if (expected.reward.r_global != actual.reward.r_global) {
    fail("reward.r_global");
    return d;
  }
  return d;
}

}  // namespace

ReplayResult replay(const std::string& trace_path, const std::string& series_dir) {
  const TraceFile file = read_trace(trace_path);
  const ScenarioSpec spec = parse_spec_json(file.header.config_json);
  const auto policy = make_policy_source(
      spec, file.header.policy_type == "checkpoint" ? file.header.policy_path : "");

  StackRunner runner(spec, file.header.seed, *policy);
  ReplayResult result;
  result.ok = true;

  for (const TraceStep& expected : file.steps) {
    if (runner.episode().done()) {
      result.ok = false;
      result.divergence_step = expected.step;
      result.divergence_field = "episode ended early";
      break;
    }
    const StackStepOutput out = runner.step();
    const FieldDiff diff = compare_step(expected, out.trace);
    result.steps_checked += 1;
    if (diff.diverged) {
      result.ok = false;
      result.divergence_step = expected.step;
      result.divergence_field = diff.field;
      break;
    }
  }
  if (result.ok && !runner.episode().done()) {
    result.ok = false;
    result.divergence_field = "trace ended before episode";
    result.divergence_step = static_cast<long>(file.steps.size());
  }

  if (!series_dir.empty()) {
    std::filesystem::create_directories(series_dir);
    std::ofstream out(series_dir + "/series.csv", std::ios::binary);
    if (!out) throw ConfigError("replay: cannot open series output");
    out.precision(17);
    out << "step,time,id,lane,s,y,v,a,headway\n";
    for (const TraceStep& s : file.steps) {
      // headway: gap to the nearest platoon vehicle ahead (by s order)
      std::vector<const VehicleState*> platoon;
      for (const auto& v : s.vehicles)
        if (v.in_platoon) platoon.push_back(&v);
      std::sort(platoon.begin(), platoon.end(),
                [](const VehicleState* a, const VehicleState* b) { return a->s > b->s; });
      for (size_t k = 0; k < platoon.size(); ++k) {
        const VehicleState& v = *platoon[k];
        out << s.step << ',' << s.time << ',' << v.id << ',' << v.lane << ',' << v.s << ','
            << v.y << ',' << v.v << ',' << v.a << ',';
        if (k == 0) {
          out << "";
        } else {
          out << bumper_gap(*platoon[k - 1], v);
        }
        out << '\n';
      }
    }
  }
  return result;
}

}  // namespace platoon
