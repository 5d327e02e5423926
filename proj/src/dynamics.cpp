#include "platoon/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace platoon {

double normalize_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

VehicleState step_kinematics(const VehicleState& state, const ControlCommand& cmd, double dt,
                             const ActuatorLimits& limits, double wheelbase_ratio) {
  if (!(dt > 0.0)) throw SimError("step_kinematics: dt must be > 0");
  if (!std::isfinite(state.s) || !std::isfinite(state.y) || !std::isfinite(state.heading) ||
      !std::isfinite(state.v) || !std::isfinite(cmd.throttle_accel) || !std::isfinite(cmd.steer)) {
    throw SimError("step_kinematics: non-finite input");
  }

  const double accel = std::clamp(cmd.throttle_accel, limits.accel_min, limits.accel_max);
  const double steer = std::clamp(cmd.steer, -limits.steer_max, limits.steer_max);
  const double wheelbase = wheelbase_ratio * state.length;

  const double v0 = state.v;
  double v1 = v0 + accel * dt;
  double arc;  // distance traveled along the path this step
  if (v1 < 0.0) {
    // comes to rest mid-step; remaining time is spent stopped
    v1 = 0.0;
    arc = (accel < 0.0) ? v0 * v0 / (-2.0 * accel) : 0.0;
  } else {
    arc = 0.5 * (v0 + v1) * dt;
  }

  const double curvature = std::tan(steer) / wheelbase;
  const double psi0 = state.heading;
  const double dpsi = curvature * arc;

  VehicleState out = state;
  if (std::abs(curvature) < 1e-12) {
    out.s = state.s + arc * std::cos(psi0);
    out.y = state.y + arc * std::sin(psi0);
  } else {
    out.s = state.s + (std::sin(psi0 + dpsi) - std::sin(psi0)) / curvature;
    out.y = state.y + (std::cos(psi0) - std::cos(psi0 + dpsi)) / curvature;
  }
  out.heading = normalize_angle(psi0 + dpsi);
  out.v = v1;
  out.a = (v1 - v0) / dt;
  return out;
}

double pid_speed(const VehicleState& state, double target_speed, PidState& pid,
                 const PidGains& gains, const ActuatorLimits& limits, double dt) {
  const double err = target_speed - state.v;
  pid.speed_integral = std::clamp(pid.speed_integral + err * dt, -gains.integral_max, gains.integral_max);
  const double derr = pid.has_prev ? (err - pid.prev_speed_error) / dt : 0.0;
  pid.prev_speed_error = err;
  pid.has_prev = true;
  const double kp = err < 0.0 ? gains.speed_kp_brake : gains.speed_kp;
  const double accel = kp * err + gains.speed_ki * pid.speed_integral + gains.speed_kd * derr;
  return std::clamp(accel, limits.accel_min, limits.accel_max);
}

double pid_steer(const VehicleState& state, const RoadSpec& road, int target_lane,
                 const PidGains& gains, const ActuatorLimits& limits) {
  if (!road.valid_lane(target_lane)) throw SimError("pid_steer: invalid target lane");
  const double lat_err = road.lane_center(target_lane) - state.y;
  const double heading_cmd = std::clamp(gains.lat_kp * lat_err / std::max(state.v, 1.0),
                                        -gains.heading_cmd_max, gains.heading_cmd_max);
  return std::clamp(gains.lat_kd * (heading_cmd - state.heading), -limits.steer_max, limits.steer_max);
}

ControlCommand pid_track(const VehicleState& state, const RoadSpec& road, double target_speed,
                         int target_lane, PidState& pid, const PidGains& gains,
                         const ActuatorLimits& limits, double dt) {
  ControlCommand cmd;
  cmd.throttle_accel = pid_speed(state, target_speed, pid, gains, limits, dt);
  cmd.steer = pid_steer(state, road, target_lane, gains, limits);
  return cmd;
}

}  // namespace platoon
