#pragma once

#include "platoon/types.hpp"

namespace platoon {

// Wraps an angle to (-pi, pi].
double normalize_angle(double a);

struct PidGains {
  double speed_kp = 0.6;
  double speed_kp_brake = 1.2;  // braking authority exceeds engine authority
  double speed_ki = 0.05;
  double speed_kd = 0.0;
  double lat_kp = 0.9;   // lateral error -> heading setpoint, normalized by speed
  double lat_kd = 0.6;   // heading error -> steer
  double heading_cmd_max = 0.15;  // rad, caps the commanded heading setpoint
  double integral_max = 10.0;
};

struct PidState {
  double speed_integral = 0.0;
  double prev_speed_error = 0.0;
  bool has_prev = false;

  void reset() { *this = PidState{}; }
};

// Exact constant-command integration of the kinematic bicycle over dt.
// Speed is clamped at zero (no reverse); heading advances by curvature times
// arc length, positions follow the exact circular arc.
VehicleState step_kinematics(const VehicleState& state, const ControlCommand& cmd, double dt,
                             const ActuatorLimits& limits, double wheelbase_ratio = 0.6);

// Longitudinal PI(D) on speed error.
double pid_speed(const VehicleState& state, double target_speed, PidState& pid,
                 const PidGains& gains, const ActuatorLimits& limits, double dt);

// Lateral PD: lateral offset drives a heading setpoint, heading error drives steer.
double pid_steer(const VehicleState& state, const RoadSpec& road, int target_lane,
                 const PidGains& gains, const ActuatorLimits& limits);

// Combined tracking command toward (target_speed, target_lane).
ControlCommand pid_track(const VehicleState& state, const RoadSpec& road, double target_speed,
                         int target_lane, PidState& pid, const PidGains& gains,
                         const ActuatorLimits& limits, double dt);

}  // namespace platoon
