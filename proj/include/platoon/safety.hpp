#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "platoon/env.hpp"
#include "platoon/world.hpp"

namespace platoon {

struct SafetyConfig {
  long horizon = 15;        // T_n, twin rollout steps
  double buffer = 0.5;      // m added to r_i + r_j for predicted conflicts
  double sigma_scale = 1e-3;  // priority tie-break noise, U(0, sigma_scale)
  double v_floor = 0.1;     // m/s, priority speed clamp
  double headway_floor = 0.01;  // m, keeps the log argument positive
  double brake_decel = 4.0;  // m/s^2 assumed for terminal braking feasibility
  bool hdv_mobil_in_prediction = true;
  bool enabled = true;
};

struct SafetyPriority {
  int vehicle_id = -1;
  double p = 0.0;         // -ln(d_headway / v_t) + sigma
  double d_headway = 0.0;
  double v_t = 0.0;
  double sigma = 0.0;
};

SafetyPriority safety_priority(const World& world, int vehicle_id, double sigma,
                               const SafetyConfig& cfg);

// Predicted positions for every vehicle over the rollout horizon, including
// the starting state at step 0.
struct TwinTrajectories {
  struct Point {
    double s = 0.0;
    double y = 0.0;
    double v = 0.0;
    int lane = 0;
  };
  long horizon = 0;
  int n = 0;
  double dt = kDt;
  std::vector<Point> points;   // step-major, steps 0..horizon
  std::vector<double> radius;  // per vehicle

  const Point& at(long t, int i) const {
    return points[static_cast<size_t>(t * n + i)];
  }
};

// Horizon-minimum circle surface gap between the ego and every other vehicle,
// capped at `cap`.
double min_circle_gap(const TwinTrajectories& traj, int ego_index, double cap);

// Like min_circle_gap, but a pair only counts while the candidate trajectory
// makes it worse than it started (or predicts a true overlap). Standing
// proximity the ego cannot influence does not register.
double conflict_gap(const TwinTrajectories& traj, int ego_index, double cap);

// True when a worsening predicted center distance drops below r_i+r_j+buffer.
bool has_conflict(const TwinTrajectories& traj, int ego_index, double buffer);

// Worst predicted contact discounted by the approach speed at that moment.
// Twin collisions freeze vehicles at first touch, which clips every doomed
// trajectory to a near-zero gap; subtracting the approach speed keeps a
// braked impact distinguishable from a full-speed one.
double impact_severity(const TwinTrajectories& traj, int ego_index, double cap);

// Horizon-minimum headway margin d_sm: per step, the circle surface gap to the
// leader in the ego's current lane, plus the target-lane leader and follower
// while a lane change is in progress (target_lane differing from the ego's
// lane). Same-lane pairs reduce to bumper headways; empty lanes contribute the
// sentinel.
double safety_margin(const TwinTrajectories& traj, int ego_index, int target_lane,
                     double sentinel);

// Terminal braking feasibility: at the last step, for every vehicle still
// ahead in the relevant lanes, the remaining gap minus the distance needed to
// brake off the closing speed. A pursuit that merely outlasts the horizon, or
// a lane whose downstream is stopped behind a rolling masker, scores negative.
double deficit_margin(const TwinTrajectories& traj, int ego_index, int target_lane,
                      double sentinel, double brake_decel);

// One candidate action's verdict in the twin.
struct CandidateEval {
  bool conflict_free = false;
  double margin = 0.0;       // d_sm when conflict-free, else the binding gap
  double conflict = 0.0;     // worsening-filtered global gap
  double deficit = 0.0;      // terminal braking feasibility
  double d_sm = 0.0;         // headway margin
};

CandidateEval evaluate_candidate(const TwinTrajectories& traj, int ego_index, int target_lane,
                                 const SafetyConfig& cfg, double sentinel);

struct SafetyAssessment {
  int vehicle_id = -1;
  double priority = 0.0;
  double sigma = 0.0;
  Action original = Action::Idle;
  Action chosen = Action::Idle;
  bool substituted = false;
  bool unsafe_best_effort = false;
  double margin_original = 0.0;
  double margin_chosen = 0.0;
};

struct ProjectionResult {
  JointAction action;
  std::vector<SafetyAssessment> assessments;  // in priority order
  int substitutions = 0;
  bool any_best_effort = false;
};

// Safety-priority-ordered twin-world verification of a proposed joint action.
// One projector instance serves one episode; rollouts reuse internal buffers.
class TwinWorldProjector {
 public:
  TwinWorldProjector(SafetyConfig cfg, EnvConfig env_cfg)
      : cfg_(cfg), env_cfg_(std::move(env_cfg)) {}

  const SafetyConfig& config() const { return cfg_; }

  // Rolls the twin forward `horizon` steps with the platoon committed to
  // `actions` (applied once, tracked by PID); HDVs follow IDM/MOBIL. The real
  // world is never touched.
  TwinTrajectories rollout(const World& world, const std::vector<int>& platoon_ids,
                           const std::vector<Action>& actions, long horizon) const;

  // Algorithm: sort platoon by descending safety priority; for each vehicle,
  // verify its committed action in the twin; on predicted conflict substitute
  // the admissible action with the maximum horizon-min margin (conflict-free
  // candidates first) and update the committed set.
  ProjectionResult project(const World& world, const std::vector<int>& platoon_ids,
                           const JointAction& proposal, std::uint64_t seed) const;

  // Per-vehicle action admissibility against an all-IDLE baseline of the other
  // members; used as the learner's action mask. A vehicle with no conflict-free
  // action keeps its max-margin action admissible so the set is never empty.
  std::vector<std::array<bool, kActionCount>> per_vehicle_admissible(
      const World& world, const std::vector<int>& platoon_ids) const;

  // AND-product of per-vehicle admissibility over the joint space.
  std::vector<std::uint8_t> joint_mask(
      const std::vector<std::array<bool, kActionCount>>& per_vehicle) const;

 private:
  World& prepare_twin(const World& world) const;

  SafetyConfig cfg_;
  EnvConfig env_cfg_;
  mutable World twin_;  // reused rollout buffer
};

}  // namespace platoon
