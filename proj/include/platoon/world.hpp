#pragma once

#include <map>
#include <optional>
#include <vector>

#include "platoon/driver_models.hpp"
#include "platoon/dynamics.hpp"
#include "platoon/rng.hpp"
#include "platoon/types.hpp"

namespace platoon {

struct Malfunction {
  enum class Kind { None, Stall, Brake };
  Kind kind = Kind::None;
  long at_step = 0;
  long duration = 0;    // brake duration in steps
  double decel = 4.0;   // brake strength, m/s^2

  bool pending(long step) const { return kind != Kind::None && step < at_step; }
  bool stalling(long step) const { return kind == Kind::Stall && step >= at_step; }
  bool braking(long step) const {
    return kind == Kind::Brake && step >= at_step && step < at_step + duration;
  }
};

struct Oscillation {
  bool enabled = false;
  double amplitude = 3.0;  // m/s
  double period = 10.0;    // s
  double phase = 0.0;      // rad
};

struct ForcedLaneChange {
  bool pending = false;
  long at_step = 0;
  int to_lane = 0;
};

struct HdvBehavior {
  IdmParams idm;
  MobilParams mobil;
  double desired_speed = 24.0;
  int target_lane = 0;
  long next_mobil_step = 0;
  long cooldown_until = 0;
  bool mobil_enabled = true;
  Malfunction malfunction;
  Oscillation oscillation;
  ForcedLaneChange forced;
  PidState pid;
};

struct CavController {
  double target_speed = 28.0;
  int target_lane = 1;
  PidState pid;
};

// Shared stepping knobs; one instance per world.
struct WorldParams {
  ActuatorLimits limits;
  PidGains pid;
  double dt = kDt;
  double wheelbase_ratio = 0.6;
  double d_vision = 100.0;
  long mobil_period = 15;    // steps between MOBIL evaluations per HDV (1 Hz)
  long mobil_cooldown = 30;  // steps after a change (2 s)
  double lane_settle_tol = 0.3;  // m; MOBIL only re-evaluates once centered
};

struct World {
  RoadSpec road;
  WorldParams params;
  double time = 0.0;
  long step_index = 0;
  std::vector<VehicleState> vehicles;  // vehicles[i].id == i, never removed
  std::vector<std::optional<HdvBehavior>> hdv;      // index-aligned
  std::vector<std::optional<CavController>> cav;    // index-aligned
  Rng rng;
  std::vector<Event> events;  // events emitted by the most recent step

  const VehicleState& vehicle(int id) const;
  VehicleState& vehicle(int id);
  bool has_vehicle(int id) const {
    return id >= 0 && id < static_cast<int>(vehicles.size());
  }

  // A vehicle occupies its physical lane and, while a change is committed,
  // its target lane as well.
  bool occupies_lane(int id, int lane) const;

  // Nearest vehicle strictly ahead of / behind position s occupying the given
  // lane, or nullptr. Ties resolve to the lower id.
  const VehicleState* leader_in_lane(int lane, double s, int skip_id,
                                     double max_dist = 1e18) const;
  const VehicleState* follower_in_lane(int lane, double s, int skip_id,
                                       double max_dist = 1e18) const;

  void add_vehicle(const VehicleState& state, std::optional<HdvBehavior> behavior,
                   std::optional<CavController> controller);
};

struct SpawnConfig {
  int platoon_n = 3;
  double platoon_headway = 10.0;  // bumper-to-bumper, m
  double platoon_speed = 28.0;
  int platoon_lane = 1;
  double platoon_lead_s = 60.0;

  int hdv_min = 4;
  int hdv_max = 10;
  double spawn_s_min = 0.0;
  double spawn_s_max = 280.0;
  double hdv_speed_min = 20.0;
  double hdv_speed_max = 28.0;
  double malfunction_rate = 0.0;

  double vehicle_length = 3.0;
  double vehicle_width = 1.8;

  // style mixture weights (normalized at use)
  double w_neutral = 0.5;
  double w_aggressive = 0.25;
  double w_conservative = 0.25;

  IdmParams idm_neutral{};
  IdmParams idm_aggressive{25.0, 0.8, 2.0, 2.5, 3.0, 4.0};
  IdmParams idm_conservative{25.0, 2.2, 2.5, 1.0, 2.0, 4.0};
  MobilParams mobil_neutral{};
  MobilParams mobil_aggressive{0.05, 5.0, 0.1, 0.0};
  MobilParams mobil_conservative{0.6, 3.0, 0.4, 0.0};
};

// Builds a world with the platoon plus seeded background traffic. Positions
// are rejection-sampled so no pair overlaps (same-lane bumper gaps >= s0,
// cross-lane circle gaps > 0).
World spawn_traffic(const SpawnConfig& cfg, const RoadSpec& road, const WorldParams& params,
                    std::uint64_t seed);

// Spawn building blocks, used by the scenario generators to interleave
// scripted actors between the platoon and the random traffic.
World make_base_world(const RoadSpec& road, const WorldParams& params, std::uint64_t seed);
void add_platoon(World& world, const SpawnConfig& cfg);
void add_random_hdvs(World& world, const SpawnConfig& cfg);
bool placement_clear(const World& world, const VehicleState& candidate, double min_same_lane_gap);

struct CavCommand {
  int id = -1;
  ControlCommand cmd;
};

// Advances the world one tick: HDVs via IDM/MOBIL + lateral PID, CAVs via the
// given commands. Collided vehicles freeze in place. Returns the events of
// this step (also stored in world.events).
const std::vector<Event>& step_world(World& world, const std::vector<CavCommand>& cav_commands);

// All overlapping pairs under the circle model (center distance < r_i + r_j).
std::vector<Event> detect_collisions(const World& world);

// Ids of all other vehicles with |delta s| <= d_vision, nearest first, ties by id.
std::vector<int> neighbors(const World& world, int vehicle_id, double d_vision);

}  // namespace platoon
