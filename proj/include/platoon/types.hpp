#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace platoon {

inline constexpr double kControlHz = 15.0;
inline constexpr double kDt = 1.0 / kControlHz;

// Configuration / input validation problems (bad files, bad field values).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Simulation contract violations (non-finite state, unknown ids, ...).
class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class VehicleKind { CAV, HDV };

struct VehicleState {
  int id = -1;
  int lane = 0;        // 0 = leftmost
  double s = 0.0;      // longitudinal position of the center, m
  double y = 0.0;      // lateral position of the center, m (0 at road left edge)
  double heading = 0.0;  // rad, 0 = along +s, positive toward +y
  double v = 0.0;      // speed, m/s, >= 0
  double a = 0.0;      // realized longitudinal acceleration last step, m/s^2
  double length = 3.0;
  double width = 1.8;
  VehicleKind kind = VehicleKind::HDV;
  bool in_platoon = false;
  bool collided = false;

  // Collision model radius: each vehicle is a circle of half its length.
  double radius() const { return 0.5 * length; }
  double front() const { return s + 0.5 * length; }
  double rear() const { return s - 0.5 * length; }
};

// Bumper-to-bumper longitudinal gap from follower to leader.
inline double bumper_gap(const VehicleState& leader, const VehicleState& follower) {
  return leader.rear() - follower.front();
}

struct ControlCommand {
  double throttle_accel = 0.0;  // m/s^2
  double steer = 0.0;           // rad
};

struct ActuatorLimits {
  double accel_min = -5.0;
  double accel_max = 3.0;
  double steer_max = 0.3;
};

struct RoadSpec {
  int num_lanes = 3;
  double lane_width = 4.0;
  double length = 1000.0;
  double zone_start = 300.0;  // disturbance zone used by the pass-rate metric
  double zone_end = 600.0;

  double width() const { return num_lanes * lane_width; }
  double lane_center(int lane) const { return (lane + 0.5) * lane_width; }
  bool valid_lane(int lane) const { return lane >= 0 && lane < num_lanes; }
  int lane_at(double y) const {
    int lane = static_cast<int>(std::floor(y / lane_width));
    if (lane < 0) lane = 0;
    if (lane >= num_lanes) lane = num_lanes - 1;
    return lane;
  }
  void validate() const {
    if (num_lanes < 2) throw ConfigError("road.num_lanes: must be >= 2");
    if (lane_width <= 0) throw ConfigError("road.lane_width: must be > 0");
    if (zone_end <= zone_start) throw ConfigError("road.zone: zone_end must exceed zone_start");
    if (length <= zone_end - zone_start) throw ConfigError("road.length: must exceed zone extent");
  }
};

struct Event {
  enum class Kind { Collision, ZoneEnter, ZoneExit };
  Kind kind = Kind::Collision;
  long step = 0;
  int a = -1;  // vehicle id
  int b = -1;  // second vehicle id for collisions
};

inline const char* event_kind_name(Event::Kind k) {
  switch (k) {
    case Event::Kind::Collision: return "collision";
    case Event::Kind::ZoneEnter: return "zone_enter";
    case Event::Kind::ZoneExit: return "zone_exit";
  }
  return "unknown";
}

}  // namespace platoon
