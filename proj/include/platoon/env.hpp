#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "platoon/world.hpp"

namespace platoon {

enum class Action : int {
  LaneLeft = 0,
  Idle = 1,
  LaneRight = 2,
  Faster = 3,
  Slower = 4,
};
inline constexpr int kActionCount = 5;
inline const char* action_name(Action a) {
  switch (a) {
    case Action::LaneLeft: return "LANE_LEFT";
    case Action::Idle: return "IDLE";
    case Action::LaneRight: return "LANE_RIGHT";
    case Action::Faster: return "FASTER";
    case Action::Slower: return "SLOWER";
  }
  return "?";
}

struct JointAction {
  std::vector<Action> per_vehicle;
  long index = 0;  // quinary encoding, in [0, 5^N)
};

long joint_action_space(int n);  // 5^n
long encode_action(const std::vector<Action>& tuple);
JointAction decode_action(long index, int n);

struct ObservationMatrix {
  static constexpr int kFeatures = 5;  // [x, y, vx, vy, delta_platoon]
  int max_vehicles = 12;
  std::vector<std::array<double, kFeatures>> rows;
  std::vector<bool> valid;

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(static_cast<size_t>(max_vehicles) * kFeatures);
    for (const auto& r : rows) out.insert(out.end(), r.begin(), r.end());
    return out;
  }
};

// Relative features of all vehicles within d_vision of the platoon lead
// vehicle (the front-most member), nearest first; zero-padded to max_vehicles.
ObservationMatrix build_observation(const World& world, const std::vector<int>& platoon_ids,
                                    double d_vision, int max_vehicles);

struct RewardWeights {
  double w_c = 10.0;
  double w_l = 0.2;
  double w_f = 1.0;
  double w_a = 0.2;
  double w_m = 0.5;
  double w_d = 0.5;
  double w_h = 1.0;
  double w_s = 0.5;

  double lane_center_tol = 0.3;  // m, lane-keeping band
  double v_lo = 20.0;            // speed reward ramp
  double v_hi = 28.0;
  double a_ref = 3.0;            // smoothness normalizer
  double v_max = 28.0;           // progress normalizer
  double h_star = 10.0;          // headway reward peak, m
  double sigma_h = 5.0;          // headway reward width, m
  double v_spread_ref = 5.0;     // speed-alignment normalizer
};

struct RewardBreakdown {
  // per-vehicle terms, aligned with platoon_ids
  std::vector<double> r_c, r_l, r_f, r_a, r_ind;
  // system terms
  double r_m = 0, r_d = 0, r_h = 0, r_s = 0;
  double r_sys = 0;
  double r_global = 0;
};

RewardBreakdown compute_reward(const World& prev_world, const World& world,
                               const std::vector<int>& platoon_ids, const RewardWeights& weights);

struct EnvConfig {
  int max_vehicles = 12;
  double d_vision = 100.0;
  RewardWeights weights;
  long step_cap = 600;
  double speed_delta = 5.0;        // FASTER/SLOWER target increment
  double target_speed_min = 0.0;
  double target_speed_max = 30.0;
  double road_end_margin = 5.0;
};

// Adjusts the CAV's (target_speed, target_lane) per the meta-action.
void apply_action(World& world, int vehicle_id, Action a, const EnvConfig& cfg);

struct StepInfo {
  RewardBreakdown reward;
  std::vector<Event> events;
  std::string done_reason;  // "", "collision", "road_end", "timeout"
};

// One episode over a world: decode -> PID tracking -> world step -> reward.
class Episode {
 public:
  Episode(World world, std::vector<int> platoon_ids, EnvConfig cfg);

  const World& world() const { return world_; }
  World& world() { return world_; }
  const std::vector<int>& platoon_ids() const { return platoon_ids_; }
  const EnvConfig& config() const { return cfg_; }
  bool done() const { return done_; }
  const std::string& done_reason() const { return done_reason_; }
  long steps() const { return steps_; }

  ObservationMatrix observe() const;

  // POMDP-surface step: applies the joint action through the PID layer.
  std::pair<ObservationMatrix, double> step(long action_index, StepInfo* info = nullptr);

  // Stack-surface step: caller supplies prepared CAV commands (already built
  // by LQR or by the PID layer after projection).
  std::pair<ObservationMatrix, double> step_with_commands(const std::vector<CavCommand>& cmds,
                                                          StepInfo* info = nullptr);

  // Builds PID tracking commands toward each CAV's current targets.
  std::vector<CavCommand> track_commands();

 private:
  void finish_step(const World& prev, StepInfo* info, RewardBreakdown* rb);

  World world_;
  std::vector<int> platoon_ids_;
  EnvConfig cfg_;
  bool done_ = false;
  std::string done_reason_;
  long steps_ = 0;
};

}  // namespace platoon
