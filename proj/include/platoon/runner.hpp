#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "platoon/config.hpp"
#include "platoon/env.hpp"
#include "platoon/fsm.hpp"
#include "platoon/lqr.hpp"
#include "platoon/metrics.hpp"
#include "platoon/policy.hpp"
#include "platoon/safety.hpp"
#include "platoon/scenario.hpp"
#include "platoon/trace.hpp"

namespace platoon {

// Proposal source for the data-driven branch (FSM state S2).
class PolicySource {
 public:
  virtual ~PolicySource() = default;
  virtual JointAction propose(const Episode& episode, const ObservationMatrix& obs) const = 0;
  virtual std::string type() const = 0;
  virtual std::string path() const { return ""; }
};

// Keep-lane / keep-speed: never proposes a lane change; proposes FASTER while
// a vehicle's speed target sits below the cruise speed, IDLE otherwise.
class ScriptedKeepPolicy : public PolicySource {
 public:
  explicit ScriptedKeepPolicy(double cruise_speed = 28.0) : cruise_speed_(cruise_speed) {}
  JointAction propose(const Episode& episode, const ObservationMatrix& obs) const override;
  std::string type() const override { return "scripted"; }

 private:
  double cruise_speed_;
};

// Greedy proposals from a trained checkpoint.
class CheckpointPolicy : public PolicySource {
 public:
  CheckpointPolicy(const ScenarioSpec& spec, const std::string& checkpoint_path);
  JointAction propose(const Episode& episode, const ObservationMatrix& obs) const override;
  std::string type() const override { return "checkpoint"; }
  std::string path() const override { return path_; }

 private:
  std::string path_;
  std::unique_ptr<ActorCritic> net_;
};

std::unique_ptr<PolicySource> make_policy_source(const ScenarioSpec& spec,
                                                 const std::string& checkpoint_path);

// One full-stack step: scene assessment, FSM dispatch, LQR or
// projected-proposal commands, then the environment step.
struct StackStepOutput {
  TraceStep trace;
  RiskAssessment assessment;
  StrategyTag strategy = StrategyTag::DataDriven;
  double reward = 0.0;
};

class StackRunner {
 public:
  StackRunner(const ScenarioSpec& spec, std::uint64_t seed, const PolicySource& policy);

  Episode& episode() { return episode_; }
  const Episode& episode() const { return episode_; }
  const FsmState& fsm() const { return fsm_; }

  StackStepOutput step();

 private:
  const ScenarioSpec& spec_;
  std::uint64_t seed_;
  const PolicySource& policy_;
  Episode episode_;
  FsmState fsm_;
  LqrDesign lqr_design_;
  TwinWorldProjector projector_;
};

struct EpisodeOptions {
  std::string trace_path;  // empty: no trace
};

MetricsRow run_episode(const ScenarioSpec& spec, std::uint64_t seed, const PolicySource& policy,
                       const EpisodeOptions& options = {});

struct EvalOptions {
  int jobs = 1;
  std::string trace_dir;  // empty: no traces
};

MetricsReport run_eval(const ScenarioSpec& spec, const std::vector<std::uint64_t>& seeds,
                       const PolicySource& policy, const EvalOptions& options = {});

struct ReplayResult {
  bool ok = false;
  long steps_checked = 0;
  long divergence_step = -1;
  std::string divergence_field;
};

// Re-simulates the trace's (config, seed, policy) and verifies the recorded
// action and state streams; optionally emits per-step series tables.
ReplayResult replay(const std::string& trace_path, const std::string& series_dir = "");

}  // namespace platoon
